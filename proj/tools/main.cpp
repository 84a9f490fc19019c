// Command-line front end: synthesize heart-sound data, train, cross-validate,
// evaluate, predict single recordings, and benchmark a saved model.
//
// Exit codes (stable, scripts may rely on them):
//   0 success
//   1 usage error (bad flags or invalid configuration values)
//   2 I/O failure (missing or unwritable files)
//   3 malformed data (unreadable WAV, corrupt model file, bad config syntax)
//   4 model/data mismatch (class sets or shapes disagree)
//   5 numeric failure (non-finite values during training or inference)
//   6 internal error

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cardioxnet/config.hpp"
#include "cardioxnet/metrics.hpp"
#include "cardioxnet/model.hpp"
#include "cardioxnet/pipeline.hpp"
#include "cardioxnet/serialize.hpp"
#include "cardioxnet/synth.hpp"
#include "cardioxnet/train.hpp"
#include "cardioxnet/wav.hpp"

namespace fs = std::filesystem;
using namespace cardioxnet;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing.

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    out << text;
    if (!out) throw IoError("failed while writing \"" + path + "\"");
}

// Model and training settings for one run. The config file is a flat
// key=value list mixing both key sets; anything else is a typo and gets
// rejected so a misspelled knob cannot silently fall back to its default.
struct RunConfig {
    ModelConfig model = ModelConfig::defaults();
    TrainConfig train;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    const auto kv = parse_kv_text(read_text_file(path));

    const auto& model_keys = ModelConfig::known_keys();
    const auto& train_keys = TrainConfig::known_keys();
    std::map<std::string, std::string> model_kv = rc.model.to_kv();
    std::map<std::string, std::string> train_kv;
    for (const auto& [k, v] : kv) {
        const bool is_model = std::find(model_keys.begin(), model_keys.end(), k) != model_keys.end();
        const bool is_train = std::find(train_keys.begin(), train_keys.end(), k) != train_keys.end();
        if (!is_model && !is_train) throw FormatError("config: unknown key \"" + k + "\"");
        if (is_model) model_kv[k] = v;
        if (is_train) train_kv[k] = v;
    }
    rc.model = ModelConfig::from_kv(model_kv, /*strict=*/false);
    rc.train.apply_kv(train_kv);
    return rc;
}

std::size_t model_rate(const ModelConfig& cfg) {
    return static_cast<std::size_t>(std::llround(cfg.sample_rate));
}

void report_dataset(const Dataset& ds) {
    for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "loaded " << ds.size() << " clips";
    if (ds.skipped) std::cout << " (" << ds.skipped << " skipped)";
    std::cout << ":";
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
        std::cout << " " << ds.class_names[c] << "=" << ds.class_counts[c];
    }
    std::cout << "\n";
}

// Training and cross-validation build their model from the run config, so the
// directory layout must carry exactly the configured classes.
void require_same_classes(const std::vector<std::string>& data, const std::vector<std::string>& model) {
    if (data == model) return;
    auto join = [](const std::vector<std::string>& names) {
        std::string s;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) s += ",";
            s += names[i];
        }
        return s;
    };
    throw MismatchError("data classes [" + join(data) + "] do not match configured classes [" +
                        join(model) + "]");
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string out;
    std::size_t per_class = 10;
    std::uint64_t seed = 0;
    std::size_t rate = 8000;
    double duration = 3.0;
};

void run_synth(const SynthArgs& a) {
    std::size_t total = 0;
    for (const std::string& cls : pcg_class_names()) {
        const fs::path dir = fs::path(a.out) / cls;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create directory \"" + dir.string() + "\": " + ec.message());
        for (std::size_t i = 0; i < a.per_class; ++i) {
            const AudioClip clip = synth_pcg(cls, mix_seed(a.seed, i), a.rate, a.duration);
            char name[64];
            std::snprintf(name, sizeof name, "%s_%03zu.wav", cls.c_str(), i);
            save_wav_pcm16(clip, (dir / name).string());
            ++total;
        }
    }
    std::cout << "wrote " << total << " files (" << pcg_class_names().size() << " classes, "
              << a.per_class << " per class) under " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string history;
    double val_frac = 0.1;
};

void run_train(const TrainArgs& a, const RunConfig& rc) {
    const Dataset ds = load_dataset(a.data, model_rate(rc.model), rc.model.input_len);
    report_dataset(ds);
    require_same_classes(ds.class_names, rc.model.class_names);

    const SampleSet all = to_samples(ds);
    const SplitIndices split =
        split_dataset(all.labels, rc.model.class_count(), a.val_frac, 0.0, rc.train.seed);
    SampleSet tr = take(all, split.train);
    SampleSet va = take(all, split.val);
    std::cout << "training on " << tr.size() << " clips, validating on " << va.size() << "\n";

    Model model = build_model(rc.model, mix_seed(rc.train.seed, 0xB007));
    const TrainHistory hist = train(model, tr, va, rc.train);

    save_model(model, a.out);
    const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
    write_text_file(history_path, history_csv(hist));

    const EpochStats& last = hist.epochs.back();
    const EpochStats& best = hist.epochs[hist.best_epoch];
    std::cout << "epochs run: " << hist.epochs.size()
              << (hist.stopped_early ? " (stopped early)" : "") << "\n";
    std::cout << "final train accuracy: " << format_real(last.train_accuracy) << "\n";
    if (!va.labels.empty()) {
        std::cout << "best val accuracy: " << format_real(best.val_accuracy) << " at epoch "
                  << hist.best_epoch << "\n";
    }
    std::cout << "model written to " << a.out << "\n";
    std::cout << "history written to " << history_path << "\n";
}

// ---------------------------------------------------------------------------
// cv

struct CvArgs {
    std::string data;
    std::string config;
    std::string out;
    std::size_t folds = 10;
};

void run_cv(const CvArgs& a, const RunConfig& rc) {
    const Dataset ds = load_dataset(a.data, model_rate(rc.model), rc.model.input_len);
    report_dataset(ds);
    require_same_classes(ds.class_names, rc.model.class_names);

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoError("cannot create directory \"" + a.out + "\": " + ec.message());

    const CvResult cv = cross_validate(to_samples(ds), rc.model, rc.train, a.folds);

    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        const std::string stem = (fs::path(a.out) / ("fold_" + std::to_string(f + 1))).string();
        write_text_file(stem + "_metrics.csv", metrics_csv(cv.folds[f]));
        write_text_file(stem + "_confusion.csv", confusion_csv(cv.folds[f]));
        write_text_file(stem + "_history.csv", history_csv(cv.histories[f]));
        std::cout << "fold " << (f + 1) << ": accuracy " << format_real(cv.folds[f].accuracy)
                  << "\n";
    }

    const CvSummary& s = cv.summary;
    std::string summary = "metric,mean,std\n";
    summary += "accuracy," + format_real(s.mean_accuracy) + "," + format_real(s.std_accuracy) + "\n";
    summary +=
        "macro_precision," + format_real(s.mean_precision) + "," + format_real(s.std_precision) + "\n";
    summary += "macro_recall," + format_real(s.mean_recall) + "," + format_real(s.std_recall) + "\n";
    summary += "macro_f1," + format_real(s.mean_f1) + "," + format_real(s.std_f1) + "\n";
    const std::string summary_path = (fs::path(a.out) / "summary.csv").string();
    write_text_file(summary_path, summary);

    std::cout << "mean accuracy: " << format_real(s.mean_accuracy) << " +/- "
              << format_real(s.std_accuracy) << " over " << a.folds << " folds\n";
    std::cout << "reports written under " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string model;
    std::string data;
    std::string out_prefix;
};

void run_eval(const EvalArgs& a) {
    Model model = load_model(a.model);
    const Dataset ds =
        load_dataset(a.data, model_rate(model.config), model.config.input_len);
    report_dataset(ds);

    const MetricsReport r = evaluate(model, to_samples(ds));

    if (a.out_prefix.empty()) {
        std::cout << confusion_csv(r) << "\n" << metrics_csv(r);
    } else {
        write_text_file(a.out_prefix + "metrics.csv", metrics_csv(r));
        write_text_file(a.out_prefix + "confusion.csv", confusion_csv(r));
        std::cout << "reports written to " << a.out_prefix << "{metrics,confusion}.csv\n";
    }
    std::cout << "accuracy: " << format_real(r.accuracy) << "\n";
    std::cout << "macro f1: " << format_real(r.macro_f1) << "\n";
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
    std::string model;
    std::string wav;
    std::string classes;  // optional expectation, comma-separated
};

void run_predict(const PredictArgs& a) {
    Model model = load_model(a.model);
    if (!a.classes.empty()) {
        std::vector<std::string> want;
        std::string cur;
        for (const char c : a.classes) {
            if (c == ',') {
                want.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        want.push_back(cur);
        require_same_classes(want, model.config.class_names);
    }

    const AudioClip raw = load_wav(a.wav);
    const AudioClip clip = preprocess(raw, model_rate(model.config), model.config.input_len);

    Tensor batch = Tensor::zeros({1, model.config.input_len});
    batch.data = clip.samples;
    // The network's output row is already a softmax distribution.
    const Tensor probs = forward_batch(model, batch, FwdMode::infer);

    std::size_t top = 0;
    for (std::size_t c = 1; c < model.config.class_count(); ++c) {
        if (probs(0, c) > probs(0, top)) top = c;
    }
    std::cout << "prediction: " << model.config.class_names[top] << "\n";
    for (std::size_t c = 0; c < model.config.class_count(); ++c) {
        char line[80];
        std::snprintf(line, sizeof line, "%s %.6f\n", model.config.class_names[c].c_str(),
                      probs(0, c));
        std::cout << line;
    }
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::string model;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
};

void run_bench(const BenchArgs& a) {
    if (a.repeats < 2) {
        throw std::invalid_argument("bench: --repeats must be >= 2 (a std needs two samples)");
    }
    Model model = load_model(a.model);

    std::error_code ec;
    const auto file_bytes = fs::file_size(a.model, ec);
    if (ec) throw IoError("cannot stat \"" + a.model + "\": " + ec.message());

    // One synthetic recording reused across repeats; timing covers the full
    // decode -> resample -> truncate -> normalize -> forward path.
    const double duration =
        static_cast<double>(model.config.input_len) / model.config.sample_rate + 0.05;
    const AudioClip clip = synth_pcg("N", a.seed, 8000, duration);
    const std::string wav_bytes = encode_wav_pcm16(clip);

    std::vector<double> ms(a.repeats);
    double sink = 0.0;
    for (std::size_t r = 0; r < a.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const AudioClip decoded = decode_wav(wav_bytes);
        const AudioClip pre =
            preprocess(decoded, model_rate(model.config), model.config.input_len);
        Tensor batch = Tensor::zeros({1, model.config.input_len});
        batch.data = pre.samples;
        const Tensor probs = forward_batch(model, batch, FwdMode::infer);
        const auto t1 = std::chrono::steady_clock::now();
        sink += probs.data[0];
        ms[r] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    if (!std::isfinite(sink)) throw NumericError("bench: non-finite network output");

    double mean = 0.0;
    for (const double x : ms) mean += x;
    mean /= static_cast<double>(ms.size());
    double ss = 0.0;
    for (const double x : ms) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(ms.size() - 1));

    char line[160];
    std::cout << "parameters: " << count_params(model) << "\n";
    std::cout << "flops_per_forward: " << count_flops(model) << "\n";
    std::cout << "model_file_bytes: " << file_bytes << "\n";
    std::snprintf(line, sizeof line, "latency_ms: %.3f +/- %.3f over %zu repeats\n", mean, sd,
                  a.repeats);
    std::cout << line;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CardioXNet: heart-sound classification from raw audio"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    CLI::App* synth = app.add_subcommand("synth", "Write synthetic labeled WAV recordings");
    synth->add_option("--out", synth_args.out, "Output directory (one subdirectory per class)")
        ->required();
    synth->add_option("--per-class", synth_args.per_class, "Recordings per class");
    synth->add_option("--seed", synth_args.seed, "Generator seed");
    synth->add_option("--rate", synth_args.rate, "Sample rate in Hz");
    synth->add_option("--duration", synth_args.duration, "Recording length in seconds");
    synth->callback([&] { run_synth(synth_args); });

    TrainArgs train_args;
    std::uint64_t seed_flag = 0;
    double lr_flag = 0.0;
    std::size_t epochs_flag = 0, batch_flag = 0, patience_flag = 0;
    CLI::App* tr = app.add_subcommand("train", "Train a model on a directory of labeled WAVs");
    tr->add_option("--data", train_args.data, "Dataset root (class subdirectories)")->required();
    tr->add_option("--config", train_args.config, "key=value run config file");
    tr->add_option("--out", train_args.out, "Output model path")->required();
    tr->add_option("--history", train_args.history, "History CSV path (default <out>.history.csv)");
    tr->add_option("--val-frac", train_args.val_frac, "Validation fraction per class");
    CLI::Option* tr_seed = tr->add_option("--seed", seed_flag, "Overrides the config seed");
    CLI::Option* tr_lr = tr->add_option("--lr", lr_flag, "Overrides the config learning rate");
    CLI::Option* tr_epochs = tr->add_option("--epochs", epochs_flag, "Overrides the config epochs");
    CLI::Option* tr_batch =
        tr->add_option("--batch-size", batch_flag, "Overrides the config batch size");
    CLI::Option* tr_patience =
        tr->add_option("--patience", patience_flag, "Overrides the config patience");
    tr->callback([&] {
        RunConfig rc = load_run_config(train_args.config);
        if (tr_seed->count()) rc.train.seed = seed_flag;
        if (tr_lr->count()) rc.train.learning_rate = lr_flag;
        if (tr_epochs->count()) rc.train.epochs = epochs_flag;
        if (tr_batch->count()) rc.train.batch_size = batch_flag;
        if (tr_patience->count()) rc.train.patience = patience_flag;
        rc.train.validate();
        run_train(train_args, rc);
    });

    CvArgs cv_args;
    CLI::App* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
    cv->add_option("--data", cv_args.data, "Dataset root (class subdirectories)")->required();
    cv->add_option("--config", cv_args.config, "key=value run config file");
    cv->add_option("--out", cv_args.out, "Directory for per-fold and summary CSV reports")
        ->required();
    cv->add_option("--folds", cv_args.folds, "Number of folds");
    CLI::Option* cv_seed = cv->add_option("--seed", seed_flag, "Overrides the config seed");
    CLI::Option* cv_epochs = cv->add_option("--epochs", epochs_flag, "Overrides the config epochs");
    cv->callback([&] {
        RunConfig rc = load_run_config(cv_args.config);
        if (cv_seed->count()) rc.train.seed = seed_flag;
        if (cv_epochs->count()) rc.train.epochs = epochs_flag;
        rc.train.validate();
        run_cv(cv_args, rc);
    });

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a saved model on a labeled dataset");
    ev->add_option("--model", eval_args.model, "Model file")->required();
    ev->add_option("--data", eval_args.data, "Dataset root (class subdirectories)")->required();
    ev->add_option("--out-prefix", eval_args.out_prefix,
                   "Prefix for metrics/confusion CSVs (default: print to stdout)");
    ev->callback([&] { run_eval(eval_args); });

    PredictArgs predict_args;
    CLI::App* pr = app.add_subcommand("predict", "Classify one WAV recording");
    pr->add_option("--model", predict_args.model, "Model file")->required();
    pr->add_option("--wav", predict_args.wav, "Input recording")->required();
    pr->add_option("--classes", predict_args.classes,
                   "Expected comma-separated class list; mismatch is an error");
    pr->callback([&] { run_predict(predict_args); });

    BenchArgs bench_args;
    CLI::App* be = app.add_subcommand("bench", "Report model size, FLOPs, and latency");
    be->add_option("--model", bench_args.model, "Model file")->required();
    be->add_option("--repeats", bench_args.repeats, "Timing repetitions (>= 2)");
    be->add_option("--seed", bench_args.seed, "Seed for the timing clip");
    be->callback([&] { run_bench(bench_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 6;
    }
    return 0;
}
