#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"
#include "cardioxnet/ops.hpp"

namespace cardioxnet {

// ---------------------------------------------------------------------------
// key=value text codec shared by config files and the model-file header.
// Lines: `key=value`, `#` comments, blank lines ignored. Keys are unique.

inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        std::string body = line.substr(first, last - first + 1);
        if (body.empty() || body[0] == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw FormatError("config line " + std::to_string(lineno) +
                              ": expected key=value, got \"" + body + "\"");
        }
        std::string key = body.substr(0, eq);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = body.substr(eq + 1);
        const auto vfirst = value.find_first_not_of(" \t");
        value = vfirst == std::string::npos ? "" : value.substr(vfirst);
        if (kv.count(key)) {
            throw FormatError("config line " + std::to_string(lineno) + ": duplicate key \"" + key +
                              "\"");
        }
        kv[key] = value;
    }
    return kv;
}

inline std::string serialize_kv_text(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::size_t kv_size(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config: missing key \"" + key + "\"");
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(it->second, &pos);
    } catch (const std::exception&) {
        throw FormatError("config: key \"" + key + "\" wants an integer, got \"" + it->second + "\"");
    }
    if (pos != it->second.size()) {
        throw FormatError("config: key \"" + key + "\" wants an integer, got \"" + it->second + "\"");
    }
    return static_cast<std::size_t>(v);
}

inline double kv_real(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config: missing key \"" + key + "\"");
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &pos);
    } catch (const std::exception&) {
        throw FormatError("config: key \"" + key + "\" wants a number, got \"" + it->second + "\"");
    }
    if (pos != it->second.size()) {
        throw FormatError("config: key \"" + key + "\" wants a number, got \"" + it->second + "\"");
    }
    return v;
}

inline std::string kv_str(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("config: missing key \"" + key + "\"");
    return it->second;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Branch stage plans. A branch is a `|`-separated pipeline of stages, e.g.
//   conv(k=3,s=1,c=32,p=same)|relu|pool(w=2,s=2,p=same)
// 1D stages: conv(k,s,c,p), relu, pool(w,s,p).
// 2D stages: conv(kh,kw,s,c,p), bn, relu, pool(w,s,p), fire(s,e1,e3).
// p is `valid` or `same`; conv stride defaults to 1, pool stride to its window.

enum class StageKind { conv, bn, relu, pool, fire };

struct Stage {
    StageKind kind = StageKind::relu;
    // conv
    std::size_t kernel = 0, kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1;
    std::size_t channels = 0;
    Padding padding = Padding::valid;
    // pool
    std::size_t window = 0;
    // fire
    std::size_t squeeze = 0, expand1 = 0, expand3 = 0;
};

namespace detail {

inline std::map<std::string, std::string> parse_stage_args(const std::string& token,
                                                           const std::string& inner) {
    std::map<std::string, std::string> args;
    if (inner.empty()) return args;
    for (const std::string& part : split(inner, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw FormatError("stage \"" + token + "\": malformed argument \"" + part + "\"");
        }
        args[part.substr(0, eq)] = part.substr(eq + 1);
    }
    return args;
}

inline std::size_t stage_arg(const std::map<std::string, std::string>& args,
                             const std::string& token, const std::string& key) {
    const auto it = args.find(key);
    if (it == args.end()) {
        throw FormatError("stage \"" + token + "\": missing argument \"" + key + "\"");
    }
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw FormatError("stage \"" + token + "\": argument \"" + key + "\" wants an integer");
    }
}

inline std::size_t stage_arg_or(const std::map<std::string, std::string>& args,
                                const std::string& token, const std::string& key,
                                std::size_t fallback) {
    return args.count(key) ? stage_arg(args, token, key) : fallback;
}

inline Padding stage_padding(const std::map<std::string, std::string>& args,
                             const std::string& token) {
    const auto it = args.find("p");
    if (it == args.end()) return Padding::valid;
    if (it->second == "valid") return Padding::valid;
    if (it->second == "same") return Padding::same;
    throw FormatError("stage \"" + token + "\": padding must be valid or same, got \"" + it->second +
                      "\"");
}

inline void check_known_args(const std::map<std::string, std::string>& args,
                             const std::string& token, const std::vector<std::string>& known) {
    for (const auto& [k, v] : args) {
        bool ok = false;
        for (const std::string& name : known) ok |= (k == name);
        if (!ok) throw FormatError("stage \"" + token + "\": unknown argument \"" + k + "\"");
    }
}

}  // namespace detail

inline std::vector<Stage> parse_stages(const std::string& plan, bool two_d) {
    std::vector<Stage> stages;
    for (const std::string& token : detail::split(plan, '|')) {
        if (token.empty()) throw FormatError("branch plan: empty stage in \"" + plan + "\"");
        std::string name = token;
        std::string inner;
        const auto open = token.find('(');
        if (open != std::string::npos) {
            if (token.back() != ')') {
                throw FormatError("stage \"" + token + "\": missing closing parenthesis");
            }
            name = token.substr(0, open);
            inner = token.substr(open + 1, token.size() - open - 2);
        }
        const auto args = detail::parse_stage_args(token, inner);

        Stage st;
        if (name == "conv") {
            st.kind = StageKind::conv;
            if (two_d) {
                detail::check_known_args(args, token, {"kh", "kw", "s", "c", "p"});
                st.kernel_h = detail::stage_arg(args, token, "kh");
                st.kernel_w = detail::stage_arg(args, token, "kw");
            } else {
                detail::check_known_args(args, token, {"k", "s", "c", "p"});
                st.kernel = detail::stage_arg(args, token, "k");
            }
            st.stride = detail::stage_arg_or(args, token, "s", 1);
            st.channels = detail::stage_arg(args, token, "c");
            st.padding = detail::stage_padding(args, token);
        } else if (name == "relu") {
            detail::check_known_args(args, token, {});
            st.kind = StageKind::relu;
        } else if (name == "pool") {
            detail::check_known_args(args, token, {"w", "s", "p"});
            st.kind = StageKind::pool;
            st.window = detail::stage_arg(args, token, "w");
            st.stride = detail::stage_arg_or(args, token, "s", st.window);
            st.padding = detail::stage_padding(args, token);
        } else if (name == "bn" && two_d) {
            detail::check_known_args(args, token, {});
            st.kind = StageKind::bn;
        } else if (name == "fire" && two_d) {
            detail::check_known_args(args, token, {"s", "e1", "e3"});
            st.kind = StageKind::fire;
            st.squeeze = detail::stage_arg(args, token, "s");
            st.expand1 = detail::stage_arg(args, token, "e1");
            st.expand3 = detail::stage_arg(args, token, "e3");
        } else {
            throw FormatError("branch plan: unknown stage \"" + name + "\" in \"" + plan + "\"");
        }
        stages.push_back(st);
    }
    return stages;
}

inline std::string stage_to_string(const Stage& st, bool two_d) {
    const auto pad = [](Padding p) { return p == Padding::same ? "same" : "valid"; };
    switch (st.kind) {
        case StageKind::conv:
            if (two_d) {
                return "conv(kh=" + std::to_string(st.kernel_h) + ",kw=" +
                       std::to_string(st.kernel_w) + ",s=" + std::to_string(st.stride) + ",c=" +
                       std::to_string(st.channels) + ",p=" + pad(st.padding) + ")";
            }
            return "conv(k=" + std::to_string(st.kernel) + ",s=" + std::to_string(st.stride) +
                   ",c=" + std::to_string(st.channels) + ",p=" + pad(st.padding) + ")";
        case StageKind::bn:
            return "bn";
        case StageKind::relu:
            return "relu";
        case StageKind::pool:
            return "pool(w=" + std::to_string(st.window) + ",s=" + std::to_string(st.stride) +
                   ",p=" + pad(st.padding) + ")";
        case StageKind::fire:
            return "fire(s=" + std::to_string(st.squeeze) + ",e1=" + std::to_string(st.expand1) +
                   ",e3=" + std::to_string(st.expand3) + ")";
    }
    return "";
}

inline std::string stages_to_string(const std::vector<Stage>& stages, bool two_d) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) out += '|';
        out += stage_to_string(stages[i], two_d);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct ModelConfig {
    double sample_rate = 2000.0;
    std::size_t input_len = 2250;
    std::vector<std::string> class_names = {"AS", "MR", "MS", "MVP", "N"};

    std::string ffe_plan;
    std::string pe_plan;
    std::size_t afe_rows = 45;
    std::size_t afe_cols = 50;
    std::string afe_plan;

    std::size_t seq_steps = 8;      // T
    std::size_t seq_features = 40;  // D
    std::size_t lstm_hidden = 64;   // H per direction
    std::size_t lstm_layers = 2;
    bool lstm_peepholes = false;
    double dropout_rate = 0.3;
    std::size_t skip_width = 128;  // must equal 2H

    std::size_t class_count() const { return class_names.size(); }

    static ModelConfig defaults() {
        ModelConfig c;
        c.ffe_plan =
            "conv(k=2250,s=1000,c=16,p=same)|relu|pool(w=2,s=2,p=same)|"
            "conv(k=3,s=1,c=32,p=same)|relu|conv(k=3,s=1,c=32,p=same)|relu|"
            "conv(k=3,s=1,c=32,p=same)|relu|pool(w=2,s=2,p=same)";
        c.pe_plan =
            "conv(k=1000,s=125,c=16,p=same)|relu|pool(w=2,s=2,p=same)|"
            "conv(k=5,s=1,c=32,p=same)|relu|conv(k=5,s=1,c=32,p=same)|relu|"
            "conv(k=5,s=1,c=32,p=same)|relu|pool(w=2,s=2,p=same)";
        c.afe_plan =
            "conv(kh=3,kw=3,s=1,c=8,p=same)|bn|relu|pool(w=2,s=2,p=same)|"
            "fire(s=8,e1=32,e3=32)|pool(w=2,s=2,p=same)|fire(s=16,e1=64,e3=64)";
        return c;
    }

    void validate() const {
        if (sample_rate <= 0.0) throw std::invalid_argument("config: sample_rate must be > 0");
        if (input_len == 0) throw std::invalid_argument("config: input_len must be > 0");
        if (class_names.size() < 2) {
            throw std::invalid_argument("config: at least 2 classes required, got " +
                                        std::to_string(class_names.size()));
        }
        for (const std::string& name : class_names) {
            if (name.empty() || name.find(',') != std::string::npos) {
                throw std::invalid_argument("config: class names must be non-empty and comma-free");
            }
        }
        if (afe_rows * afe_cols != input_len) {
            throw std::invalid_argument("config: afe_rows*afe_cols = " +
                                        std::to_string(afe_rows * afe_cols) +
                                        " must equal input_len = " + std::to_string(input_len));
        }
        if (seq_steps == 0 || seq_features == 0) {
            throw std::invalid_argument("config: sequence reshape extents must be >= 1");
        }
        if (lstm_hidden == 0 || lstm_layers == 0) {
            throw std::invalid_argument("config: lstm_hidden and lstm_layers must be >= 1");
        }
        if (skip_width != 2 * lstm_hidden) {
            throw std::invalid_argument("config: skip_width = " + std::to_string(skip_width) +
                                        " must equal 2*lstm_hidden = " +
                                        std::to_string(2 * lstm_hidden));
        }
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw std::invalid_argument("config: dropout_rate must lie in [0, 1)");
        }
        parse_stages(ffe_plan, false);
        parse_stages(pe_plan, false);
        parse_stages(afe_plan, true);
    }

    std::map<std::string, std::string> to_kv() const {
        std::map<std::string, std::string> kv;
        std::ostringstream rate;
        rate.precision(17);
        rate << sample_rate;
        kv["sample_rate"] = rate.str();
        kv["input_len"] = std::to_string(input_len);
        std::string names;
        for (std::size_t i = 0; i < class_names.size(); ++i) {
            if (i) names += ',';
            names += class_names[i];
        }
        kv["class_names"] = names;
        kv["ffe"] = ffe_plan;
        kv["pe"] = pe_plan;
        kv["afe_rows"] = std::to_string(afe_rows);
        kv["afe_cols"] = std::to_string(afe_cols);
        kv["afe"] = afe_plan;
        kv["seq_steps"] = std::to_string(seq_steps);
        kv["seq_features"] = std::to_string(seq_features);
        kv["lstm_hidden"] = std::to_string(lstm_hidden);
        kv["lstm_layers"] = std::to_string(lstm_layers);
        kv["lstm_peepholes"] = lstm_peepholes ? "1" : "0";
        std::ostringstream drop;
        drop.precision(17);
        drop << dropout_rate;
        kv["dropout_rate"] = drop.str();
        kv["skip_width"] = std::to_string(skip_width);
        return kv;
    }

    static const std::vector<std::string>& known_keys() {
        static const std::vector<std::string> keys = {
            "sample_rate", "input_len",  "class_names",  "ffe",         "pe",
            "afe_rows",    "afe_cols",   "afe",          "seq_steps",   "seq_features",
            "lstm_hidden", "lstm_layers", "lstm_peepholes", "dropout_rate", "skip_width"};
        return keys;
    }

    // `strict` additionally rejects unknown keys; the CLI passes false so a
    // combined run-config file can carry training keys too.
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv, bool strict = true) {
        if (strict) {
            for (const auto& [k, v] : kv) {
                bool known = false;
                for (const std::string& name : known_keys()) known |= (k == name);
                if (!known) throw FormatError("config: unknown key \"" + k + "\"");
            }
        }
        ModelConfig c;
        c.sample_rate = detail::kv_real(kv, "sample_rate");
        c.input_len = detail::kv_size(kv, "input_len");
        c.class_names = detail::split(detail::kv_str(kv, "class_names"), ',');
        c.ffe_plan = detail::kv_str(kv, "ffe");
        c.pe_plan = detail::kv_str(kv, "pe");
        c.afe_rows = detail::kv_size(kv, "afe_rows");
        c.afe_cols = detail::kv_size(kv, "afe_cols");
        c.afe_plan = detail::kv_str(kv, "afe");
        c.seq_steps = detail::kv_size(kv, "seq_steps");
        c.seq_features = detail::kv_size(kv, "seq_features");
        c.lstm_hidden = detail::kv_size(kv, "lstm_hidden");
        c.lstm_layers = detail::kv_size(kv, "lstm_layers");
        c.lstm_peepholes = detail::kv_size(kv, "lstm_peepholes") != 0;
        c.dropout_rate = detail::kv_real(kv, "dropout_rate");
        c.skip_width = detail::kv_size(kv, "skip_width");
        c.validate();
        return c;
    }
};

}  // namespace cardioxnet
