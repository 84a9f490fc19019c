#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"
#include "cardioxnet/metrics.hpp"
#include "cardioxnet/model.hpp"
#include "cardioxnet/pipeline.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/tensor.hpp"

namespace cardioxnet {

// ---------------------------------------------------------------------------
// Training configuration. Defaults follow the experimental setup this engine
// reproduces: Adam at 1e-5 with batches of 16.

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t batch_size = 16;
    std::size_t epochs = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    std::uint64_t seed = 0;
    std::size_t patience = 20;       // epochs without val improvement before stopping
    bool freeze_batchnorm = false;   // batchnorm uses running stats during training

    void validate() const {
        if (learning_rate < 0.0) throw std::invalid_argument("train config: learning_rate < 0");
        if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0) {
            throw std::invalid_argument("train config: betas must lie in (0, 1)");
        }
        if (epsilon <= 0.0) throw std::invalid_argument("train config: epsilon must be > 0");
    }

    std::map<std::string, std::string> to_kv() const {
        std::map<std::string, std::string> kv;
        char buf[40];
        auto real = [&buf](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf);
        };
        kv["learning_rate"] = real(learning_rate);
        kv["batch_size"] = std::to_string(batch_size);
        kv["epochs"] = std::to_string(epochs);
        kv["beta1"] = real(beta1);
        kv["beta2"] = real(beta2);
        kv["epsilon"] = real(epsilon);
        kv["seed"] = std::to_string(seed);
        kv["patience"] = std::to_string(patience);
        kv["freeze_batchnorm"] = freeze_batchnorm ? "1" : "0";
        return kv;
    }

    static const std::vector<std::string>& known_keys() {
        static const std::vector<std::string> keys = {
            "learning_rate", "batch_size", "epochs",  "beta1",    "beta2",
            "epsilon",       "seed",       "patience", "freeze_batchnorm"};
        return keys;
    }

    // Applies the keys present in kv on top of the current values. Unknown
    // keys are the caller's concern (a run config mixes key sets).
    void apply_kv(const std::map<std::string, std::string>& kv) {
        if (kv.count("learning_rate")) learning_rate = detail::kv_real(kv, "learning_rate");
        if (kv.count("batch_size")) batch_size = detail::kv_size(kv, "batch_size");
        if (kv.count("epochs")) epochs = detail::kv_size(kv, "epochs");
        if (kv.count("beta1")) beta1 = detail::kv_real(kv, "beta1");
        if (kv.count("beta2")) beta2 = detail::kv_real(kv, "beta2");
        if (kv.count("epsilon")) epsilon = detail::kv_real(kv, "epsilon");
        if (kv.count("seed")) seed = detail::kv_size(kv, "seed");
        if (kv.count("patience")) patience = detail::kv_size(kv, "patience");
        if (kv.count("freeze_batchnorm")) {
            freeze_batchnorm = detail::kv_str(kv, "freeze_batchnorm") == "1";
        }
        validate();
    }
};

// ---------------------------------------------------------------------------
// Model-ready data: one row per clip, plus integer labels.

struct SampleSet {
    Tensor x;  // [N x L]
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;

    std::size_t size() const { return labels.size(); }
};

inline SampleSet to_samples(const Dataset& ds) {
    if (ds.clips.empty()) throw DataError("samples: dataset holds no clips");
    const std::size_t len = ds.clips[0].samples.size();
    SampleSet s;
    s.x = Tensor::zeros({ds.clips.size(), len});
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        if (ds.clips[i].samples.size() != len) {
            throw MismatchError("samples: clip " + std::to_string(i) + " has " +
                                std::to_string(ds.clips[i].samples.size()) +
                                " samples, expected " + std::to_string(len));
        }
        for (std::size_t j = 0; j < len; ++j) s.x.data[i * len + j] = ds.clips[i].samples[j];
    }
    s.labels = ds.labels;
    s.class_names = ds.class_names;
    return s;
}

inline SampleSet take(const SampleSet& s, const std::vector<std::size_t>& idx) {
    const std::size_t len = s.x.shape[1];
    SampleSet out;
    out.x = Tensor::zeros({std::max<std::size_t>(idx.size(), 1), len});
    out.class_names = s.class_names;
    out.labels.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::size_t src = idx[i];
        if (src >= s.size()) throw std::invalid_argument("take: index out of range");
        for (std::size_t j = 0; j < len; ++j) out.x.data[i * len + j] = s.x.data[src * len + j];
        out.labels.push_back(s.labels[src]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss and its logit gradient.

inline double sparse_ce_loss(const Tensor& probs, const std::vector<std::size_t>& labels) {
    if (probs.shape.size() != 2 || probs.shape[0] != labels.size()) {
        throw MismatchError("loss: probabilities " + shape_str(probs.shape) + " vs " +
                            std::to_string(labels.size()) + " labels");
    }
    const std::size_t b = probs.shape[0];
    const std::size_t k = probs.shape[1];
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        if (labels[i] >= k) {
            throw std::invalid_argument("loss: label " + std::to_string(labels[i]) +
                                        " out of range for " + std::to_string(k) + " classes");
        }
        sum += std::log(std::max(probs.data[i * k + labels[i]], 1e-12));
    }
    return -sum / static_cast<double>(b);
}

// Gradient of the mean cross-entropy with respect to the logits feeding the
// softmax: (p - one_hot(label)) / B per row.
inline Tensor ce_grad_logits(const Tensor& probs, const std::vector<std::size_t>& labels) {
    const std::size_t b = probs.shape[0];
    const std::size_t k = probs.shape[1];
    Tensor g = probs;
    for (std::size_t i = 0; i < b; ++i) {
        g.data[i * k + labels[i]] -= 1.0;
    }
    for (double& v : g.data) v /= static_cast<double>(b);
    return g;
}

// ---------------------------------------------------------------------------
// Adam. Moments live in two zeroed model copies so the parameter walk stays
// in the one canonical order.

struct AdamState {
    Model m;
    Model v;
    std::size_t t = 0;
};

inline AdamState make_adam_state(const Model& model) {
    return AdamState{make_gradients(model), make_gradients(model), 0};
}

inline void adam_step(Model& model, const Model& grads, AdamState& st, const TrainConfig& cfg) {
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));

    std::vector<Tensor*> ps, ms, vs;
    std::vector<const Tensor*> gs;
    std::vector<std::string> names;
    visit_params(model, [&](const std::string& n, Tensor& t) {
        ps.push_back(&t);
        names.push_back(n);
    });
    visit_params(grads, [&](const std::string&, const Tensor& t) { gs.push_back(&t); });
    visit_params(st.m, [&](const std::string&, Tensor& t) { ms.push_back(&t); });
    visit_params(st.v, [&](const std::string&, Tensor& t) { vs.push_back(&t); });
    if (ps.size() != gs.size() || ps.size() != ms.size() || ps.size() != vs.size()) {
        throw MismatchError("adam: parameter walks disagree (model vs gradients vs state)");
    }

    for (std::size_t i = 0; i < ps.size(); ++i) {
        Tensor& p = *ps[i];
        const Tensor& g = *gs[i];
        Tensor& m = *ms[i];
        Tensor& v = *vs[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double gj = g.data[j];
            if (!std::isfinite(gj)) {
                throw NumericError("adam: non-finite gradient in \"" + names[i] + "\"");
            }
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * gj;
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.data[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Deterministic shuffling and stratified partitioning.

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
}

inline std::vector<std::vector<std::size_t>> indices_by_class(
    const std::vector<std::size_t>& labels, std::size_t class_count) {
    std::vector<std::vector<std::size_t>> by_class(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) {
            throw std::invalid_argument("split: label " + std::to_string(labels[i]) +
                                        " out of range");
        }
        by_class[labels[i]].push_back(i);
    }
    return by_class;
}

}  // namespace detail

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Stratified split. Per class: floor(val_frac * n) to validation,
// floor(test_frac * n) to test, the remainder (rounding included) to train.
inline SplitIndices split_dataset(const std::vector<std::size_t>& labels, std::size_t class_count,
                                  double val_frac, double test_frac, std::uint64_t seed) {
    if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
        throw std::invalid_argument("split: fractions must be nonnegative and sum below 1");
    }
    const auto by_class = detail::indices_by_class(labels, class_count);
    Rng rng(mix_seed(seed, 0x5917));
    SplitIndices out;
    for (std::size_t c = 0; c < class_count; ++c) {
        std::vector<std::size_t> idx = by_class[c];
        if (idx.size() < 3) {
            throw DataError("split: class " + std::to_string(c) + " has " +
                            std::to_string(idx.size()) + " samples; need at least 3");
        }
        detail::shuffle_indices(idx, rng);
        const auto n = static_cast<double>(idx.size());
        const auto n_val = static_cast<std::size_t>(std::floor(val_frac * n));
        const auto n_test = static_cast<std::size_t>(std::floor(test_frac * n));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i < n_val) {
                out.val.push_back(idx[i]);
            } else if (i < n_val + n_test) {
                out.test.push_back(idx[i]);
            } else {
                out.train.push_back(idx[i]);
            }
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> folds;       // sample indices, sorted
    std::vector<std::vector<std::size_t>> histograms;  // [fold][class] counts
};

// Seeded shuffle per class, then round-robin dealing, so per-class counts
// across folds differ by at most one.
inline FoldPlan stratified_kfold(const std::vector<std::size_t>& labels, std::size_t class_count,
                                 std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: need k >= 2");
    const auto by_class = detail::indices_by_class(labels, class_count);
    for (std::size_t c = 0; c < class_count; ++c) {
        if (by_class[c].size() < k) {
            throw DataError("kfold: class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " samples for " +
                            std::to_string(k) + " folds");
        }
    }
    Rng rng(mix_seed(seed, 0xF01D));
    FoldPlan plan;
    plan.k = k;
    plan.folds.assign(k, {});
    plan.histograms.assign(k, std::vector<std::size_t>(class_count, 0));
    for (std::size_t c = 0; c < class_count; ++c) {
        std::vector<std::size_t> idx = by_class[c];
        detail::shuffle_indices(idx, rng);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            plan.folds[i % k].push_back(idx[i]);
            ++plan.histograms[i % k][c];
        }
    }
    for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
    return plan;
}

// ---------------------------------------------------------------------------
// The training loop.

struct EpochStats {
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

inline bool has_batchnorm(const Model& model) {
    bool found = false;
    visit_running_stats(model, [&found](const std::string&, const Tensor&) { found = true; });
    return found;
}

namespace detail {

struct EvalTally {
    double loss = 0.0;  // sample-weighted mean
    double accuracy = 0.0;
    std::vector<std::size_t> predicted;
};

// Inference pass in bounded slices; loss and argmax predictions per sample.
inline EvalTally eval_pass(Model& model, const SampleSet& data, std::size_t batch_size) {
    const std::size_t n = data.size();
    const std::size_t len = data.x.shape[1];
    const std::size_t k = model.config.class_count();
    EvalTally tally;
    tally.predicted.reserve(n);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t b = std::min(batch_size, n - at);
        Tensor batch = Tensor::zeros({b, len});
        std::copy(data.x.data.begin() + static_cast<std::ptrdiff_t>(at * len),
                  data.x.data.begin() + static_cast<std::ptrdiff_t>((at + b) * len),
                  batch.data.begin());
        const Tensor probs = forward_batch(model, batch, FwdMode::infer);
        const std::vector<std::size_t> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(at),
                                              data.labels.begin() +
                                                  static_cast<std::ptrdiff_t>(at + b));
        loss_sum += sparse_ce_loss(probs, labels) * static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < k; ++c) {
                if (probs.data[i * k + c] > probs.data[i * k + arg]) arg = c;
            }
            tally.predicted.push_back(arg);
            if (arg == labels[i]) ++correct;
        }
    }
    tally.loss = loss_sum / static_cast<double>(n);
    tally.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return tally;
}

}  // namespace detail

// Shuffled mini-batch epochs with Adam, per-epoch history, early stopping on
// validation accuracy, and restoration of the best-validation weights. With
// an empty validation set the loop just runs all epochs and keeps the final
// weights. Batchnorm in training mode needs at least two samples per batch,
// so a trailing singleton batch is folded into its predecessor.
inline TrainHistory train(Model& model, const SampleSet& train_set, const SampleSet& val_set,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0) throw DataError("train: empty training set");
    if (train_set.x.shape[1] != model.config.input_len) {
        throw MismatchError("train: samples of length " + std::to_string(train_set.x.shape[1]) +
                            " vs model input " + std::to_string(model.config.input_len));
    }
    for (const std::size_t y : train_set.labels) {
        if (y >= model.config.class_count()) {
            throw std::invalid_argument("train: label " + std::to_string(y) + " out of range");
        }
    }

    const std::size_t n = train_set.size();
    const std::size_t len = train_set.x.shape[1];
    const std::size_t k = model.config.class_count();
    const bool fold_singletons = has_batchnorm(model) && !cfg.freeze_batchnorm;
    const FwdMode mode = cfg.freeze_batchnorm ? FwdMode::train_frozen_bn : FwdMode::train;
    if (fold_singletons && n == 1) {
        throw DataError("train: batchnorm needs at least 2 training samples");
    }

    Rng shuffle_rng(mix_seed(cfg.seed, 0x0DD5));
    AdamState adam = make_adam_state(model);
    Model grads = make_gradients(model);
    Model best_model = model;
    double best_val = -1.0;

    TrainHistory history;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::shuffle_indices(order, shuffle_rng);

        // Batch boundaries for this epoch, with a trailing singleton merged
        // into the previous batch where batchnorm statistics need it.
        std::vector<std::pair<std::size_t, std::size_t>> batches;  // [from, to)
        for (std::size_t at = 0; at < n; at += cfg.batch_size) {
            batches.emplace_back(at, std::min(at + cfg.batch_size, n));
        }
        if (fold_singletons && batches.size() > 1 &&
            batches.back().second - batches.back().first == 1) {
            batches[batches.size() - 2].second = n;
            batches.pop_back();
        }

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto [from, to] = batches[bi];
            const std::size_t b = to - from;
            Tensor batch = Tensor::zeros({b, len});
            std::vector<std::size_t> labels(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[from + i];
                labels[i] = train_set.labels[src];
                std::copy(train_set.x.data.begin() + static_cast<std::ptrdiff_t>(src * len),
                          train_set.x.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * len),
                          batch.data.begin() + static_cast<std::ptrdiff_t>(i * len));
            }

            const std::uint64_t dropout_seed =
                mix_seed(mix_seed(cfg.seed, 0xD809), (epoch << 20) | bi);
            ModelTrace trace;
            const Tensor probs = forward_batch(model, batch, mode, dropout_seed, &trace);
            const double loss = sparse_ce_loss(probs, labels);
            if (!std::isfinite(loss)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi));
            }
            loss_sum += loss * static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
                std::size_t arg = 0;
                for (std::size_t c = 1; c < k; ++c) {
                    if (probs.data[i * k + c] > probs.data[i * k + arg]) arg = c;
                }
                if (arg == labels[i]) ++correct;
            }

            visit_params(grads, [](const std::string&, Tensor& t) {
                for (double& v : t.data) v = 0.0;
            });
            backward_batch(model, trace, ce_grad_logits(probs, labels), grads);
            adam_step(model, grads, adam, cfg);
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(n);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        if (val_set.size() > 0) {
            const detail::EvalTally val = detail::eval_pass(model, val_set, cfg.batch_size);
            stats.val_loss = val.loss;
            stats.val_accuracy = val.accuracy;
        } else {
            stats.val_loss = std::nan("");
            stats.val_accuracy = std::nan("");
        }
        history.epochs.push_back(stats);

        if (val_set.size() > 0) {
            if (stats.val_accuracy > best_val) {
                best_val = stats.val_accuracy;
                best_model = model;
                history.best_epoch = epoch;
            } else if (epoch - history.best_epoch >= cfg.patience) {
                history.stopped_early = true;
                break;
            }
        } else {
            history.best_epoch = epoch;
        }
    }

    if (val_set.size() > 0) model = best_model;
    return history;
}

inline MetricsReport evaluate(Model& model, const SampleSet& data) {
    if (data.size() == 0) throw DataError("evaluate: empty set");
    if (!data.class_names.empty() && data.class_names != model.config.class_names) {
        throw MismatchError("evaluate: data classes do not match the model's classes");
    }
    const detail::EvalTally tally = detail::eval_pass(model, data, 64);
    return compute_metrics(data.labels, tally.predicted, model.config.class_names);
}

// ---------------------------------------------------------------------------
// k-fold cross-validation: each fold serves as the test set once; the
// remainder is split into train and validation at the 70:10 proportions of
// the original protocol (one eighth of the remainder validates). Each fold
// trains a fresh model.

struct CvSummary {
    double mean_accuracy = 0.0, std_accuracy = 0.0;
    double mean_precision = 0.0, std_precision = 0.0;
    double mean_recall = 0.0, std_recall = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
};

struct CvResult {
    std::vector<MetricsReport> folds;
    std::vector<TrainHistory> histories;
    CvSummary summary;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (const double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    sd = xs.size() < 2 ? 0.0 : std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

inline CvResult cross_validate(const SampleSet& data, const ModelConfig& model_cfg,
                               const TrainConfig& train_cfg, std::size_t k) {
    if (!data.class_names.empty() && data.class_names != model_cfg.class_names) {
        throw MismatchError("cv: data classes do not match the model config's classes");
    }
    const FoldPlan plan =
        stratified_kfold(data.labels, model_cfg.class_count(), k, train_cfg.seed);

    CvResult result;
    std::vector<double> acc, prec, rec, f1;
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<std::size_t> remainder;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == f) continue;
            remainder.insert(remainder.end(), plan.folds[o].begin(), plan.folds[o].end());
        }
        std::sort(remainder.begin(), remainder.end());

        std::vector<std::size_t> rem_labels(remainder.size());
        for (std::size_t i = 0; i < remainder.size(); ++i) {
            rem_labels[i] = data.labels[remainder[i]];
        }
        const SplitIndices sub = split_dataset(rem_labels, model_cfg.class_count(), 0.125, 0.0,
                                               mix_seed(train_cfg.seed, 100 + f));
        std::vector<std::size_t> train_idx, val_idx;
        for (const std::size_t i : sub.train) train_idx.push_back(remainder[i]);
        for (const std::size_t i : sub.val) val_idx.push_back(remainder[i]);

        Model model = build_model(model_cfg, mix_seed(train_cfg.seed, 1000 + f));
        const SampleSet tr = take(data, train_idx);
        const SampleSet va = take(data, val_idx);
        const SampleSet te = take(data, plan.folds[f]);
        result.histories.push_back(train(model, tr, va, train_cfg));
        result.folds.push_back(evaluate(model, te));

        const MetricsReport& r = result.folds.back();
        acc.push_back(r.accuracy);
        prec.push_back(r.macro_precision);
        rec.push_back(r.macro_recall);
        f1.push_back(r.macro_f1);
    }

    detail::mean_std(acc, result.summary.mean_accuracy, result.summary.std_accuracy);
    detail::mean_std(prec, result.summary.mean_precision, result.summary.std_precision);
    detail::mean_std(rec, result.summary.mean_recall, result.summary.std_recall);
    detail::mean_std(f1, result.summary.mean_f1, result.summary.std_f1);
    return result;
}

// ---------------------------------------------------------------------------
// History CSV: one row per epoch, %.17g reals, empty cells for missing
// validation numbers. Parsing inverts writing exactly.

inline std::string history_csv(const TrainHistory& h) {
    std::string out = "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    for (std::size_t e = 0; e < h.epochs.size(); ++e) {
        const EpochStats& s = h.epochs[e];
        out += std::to_string(e) + "," + detail::csv_real(s.train_loss) + "," +
               detail::csv_real(s.train_accuracy) + ",";
        out += std::isnan(s.val_loss) ? "" : detail::csv_real(s.val_loss);
        out += ",";
        out += std::isnan(s.val_accuracy) ? "" : detail::csv_real(s.val_accuracy);
        out += "\n";
    }
    return out;
}

inline std::vector<EpochStats> history_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) ||
        detail::csv_fields(line) !=
            std::vector<std::string>{"epoch", "train_loss", "train_accuracy", "val_loss",
                                     "val_accuracy"}) {
        throw FormatError("history csv: bad header");
    }
    std::vector<EpochStats> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::csv_fields(line);
        if (f.size() != 5) throw FormatError("history csv: bad row \"" + line + "\"");
        EpochStats s;
        s.train_loss = std::stod(f[1]);
        s.train_accuracy = std::stod(f[2]);
        s.val_loss = f[3].empty() ? std::nan("") : std::stod(f[3]);
        s.val_accuracy = f[4].empty() ? std::nan("") : std::stod(f[4]);
        out.push_back(s);
    }
    return out;
}

}  // namespace cardioxnet
