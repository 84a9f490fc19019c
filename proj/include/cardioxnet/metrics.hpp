#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"

namespace cardioxnet {

// Classification scoring: a confusion matrix plus the one-vs-rest counts
// and rates derived from it. Rows of the matrix are the true class, columns
// the predicted class.

struct ClassStats {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    // A class nobody predicted has TP+FP = 0; its precision is reported as
    // zero with this flag raised rather than as NaN. Same scheme for a class
    // absent from the truth set and its recall.
    bool precision_undefined = false;
    bool recall_undefined = false;
};

struct MetricsReport {
    std::vector<std::string> class_names;
    std::vector<std::size_t> confusion;  // K*K row-major, [truth * K + predicted]
    std::vector<ClassStats> per_class;
    double accuracy = 0.0;  // multiclass: trace / total
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::size_t total = 0;

    std::size_t k() const { return class_names.size(); }
    std::size_t at(std::size_t truth, std::size_t pred) const {
        return confusion[truth * k() + pred];
    }
};

// Fills in everything derived from an already-tallied confusion matrix.
inline void finish_metrics(MetricsReport& r) {
    const std::size_t k = r.k();
    r.total = 0;
    for (const std::size_t c : r.confusion) r.total += c;
    if (r.total == 0) throw DataError("metrics: no samples");

    r.per_class.assign(k, ClassStats{});
    std::size_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) {
        ClassStats& s = r.per_class[c];
        s.tp = r.at(c, c);
        trace += s.tp;
        for (std::size_t o = 0; o < k; ++o) {
            if (o == c) continue;
            s.fn += r.at(c, o);
            s.fp += r.at(o, c);
        }
        s.tn = r.total - s.tp - s.fp - s.fn;

        if (s.tp + s.fp == 0) {
            s.precision_undefined = true;
        } else {
            s.precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
        }
        if (s.tp + s.fn == 0) {
            s.recall_undefined = true;
        } else {
            s.recall = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
        }
        const std::size_t f1_den = 2 * s.tp + s.fp + s.fn;
        s.f1 = f1_den == 0 ? 0.0 : 2.0 * static_cast<double>(s.tp) / static_cast<double>(f1_den);
        s.accuracy = static_cast<double>(s.tp + s.tn) / static_cast<double>(r.total);
    }
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);

    r.macro_precision = r.macro_recall = r.macro_f1 = 0.0;
    for (const ClassStats& s : r.per_class) {
        r.macro_precision += s.precision;
        r.macro_recall += s.recall;
        r.macro_f1 += s.f1;
    }
    r.macro_precision /= static_cast<double>(k);
    r.macro_recall /= static_cast<double>(k);
    r.macro_f1 /= static_cast<double>(k);
}

inline MetricsReport compute_metrics(const std::vector<std::size_t>& truth,
                                     const std::vector<std::size_t>& predicted,
                                     const std::vector<std::string>& class_names) {
    if (truth.size() != predicted.size()) {
        throw MismatchError("metrics: " + std::to_string(truth.size()) + " truth labels vs " +
                            std::to_string(predicted.size()) + " predictions");
    }
    if (truth.empty()) throw DataError("metrics: no samples");
    const std::size_t k = class_names.size();
    MetricsReport r;
    r.class_names = class_names;
    r.confusion.assign(k * k, 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || predicted[i] >= k) {
            throw std::invalid_argument("metrics: label out of range at sample " +
                                        std::to_string(i));
        }
        ++r.confusion[truth[i] * k + predicted[i]];
    }
    finish_metrics(r);
    return r;
}

// ---------------------------------------------------------------------------
// CSV forms. Numbers are printed with %.17g so doubles survive the round
// trip bit for bit; the parser rebuilds derived fields from the counts, so
// a parsed report is field-for-field equal to the one that was written.

namespace detail {

inline std::string csv_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// Header row names the classes; each following row is one truth class.
inline std::string confusion_csv(const MetricsReport& r) {
    std::string out = "truth";
    for (const std::string& name : r.class_names) out += "," + name;
    out += "\n";
    for (std::size_t t = 0; t < r.k(); ++t) {
        out += r.class_names[t];
        for (std::size_t p = 0; p < r.k(); ++p) out += "," + std::to_string(r.at(t, p));
        out += "\n";
    }
    return out;
}

// Per-class rows plus macro and overall summary rows:
//   class,tp,fp,tn,fn,precision,recall,f1,accuracy,precision_undefined,recall_undefined
inline std::string metrics_csv(const MetricsReport& r) {
    std::string out =
        "class,tp,fp,tn,fn,precision,recall,f1,accuracy,precision_undefined,recall_undefined\n";
    for (std::size_t c = 0; c < r.k(); ++c) {
        const ClassStats& s = r.per_class[c];
        out += r.class_names[c] + "," + std::to_string(s.tp) + "," + std::to_string(s.fp) + "," +
               std::to_string(s.tn) + "," + std::to_string(s.fn) + "," +
               detail::csv_real(s.precision) + "," + detail::csv_real(s.recall) + "," +
               detail::csv_real(s.f1) + "," + detail::csv_real(s.accuracy) + "," +
               (s.precision_undefined ? "1" : "0") + "," + (s.recall_undefined ? "1" : "0") + "\n";
    }
    out += "macro,,,,," + detail::csv_real(r.macro_precision) + "," +
           detail::csv_real(r.macro_recall) + "," + detail::csv_real(r.macro_f1) + ",,,\n";
    out += "overall,,,,,,,," + detail::csv_real(r.accuracy) + ",,\n";
    return out;
}

// Rebuilds a full report from its confusion CSV. Derived fields are
// recomputed, which reproduces them exactly.
inline MetricsReport metrics_from_confusion_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("confusion csv: empty input");
    std::vector<std::string> header = detail::csv_fields(line);
    if (header.size() < 2 || header[0] != "truth") {
        throw FormatError("confusion csv: bad header");
    }
    MetricsReport r;
    r.class_names.assign(header.begin() + 1, header.end());
    const std::size_t k = r.class_names.size();
    r.confusion.assign(k * k, 0);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= k) throw FormatError("confusion csv: more rows than classes");
        const std::vector<std::string> f = detail::csv_fields(line);
        if (f.size() != k + 1 || f[0] != r.class_names[row]) {
            throw FormatError("confusion csv: bad row for class " + r.class_names[row]);
        }
        for (std::size_t p = 0; p < k; ++p) {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(f[p + 1], &pos);
            if (pos != f[p + 1].size()) {
                throw FormatError("confusion csv: bad count \"" + f[p + 1] + "\"");
            }
            r.confusion[row * k + p] = static_cast<std::size_t>(v);
        }
        ++row;
    }
    if (row != k) throw FormatError("confusion csv: fewer rows than classes");
    finish_metrics(r);
    return r;
}

}  // namespace cardioxnet
