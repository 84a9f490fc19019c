#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cardioxnet/audio.hpp"
#include "cardioxnet/errors.hpp"
#include "cardioxnet/resample.hpp"
#include "cardioxnet/wav.hpp"

namespace cardioxnet {

// Preprocessing steps between raw audio and the network input, plus the
// labeled-directory dataset loader that composes them.

// Keeps the first floor(duration * rate) samples. Clips shorter than that
// are a data error rather than something to pad silently.
inline AudioClip truncate_to(const AudioClip& clip, std::size_t sample_count) {
    if (sample_count == 0) throw std::invalid_argument("truncate: target of zero samples");
    if (clip.samples.size() < sample_count) {
        throw DataError("truncate: clip shorter than target duration (" +
                        std::to_string(clip.samples.size()) + " < " +
                        std::to_string(sample_count) + " samples)");
    }
    AudioClip out = clip;
    out.samples.resize(sample_count);
    return out;
}

inline AudioClip truncate(const AudioClip& clip, double duration_seconds) {
    if (duration_seconds <= 0.0) throw std::invalid_argument("truncate: duration must be > 0");
    if (clip.sample_rate == 0) throw std::invalid_argument("truncate: clip has no sample rate");
    const double want = std::floor(duration_seconds * static_cast<double>(clip.sample_rate));
    return truncate_to(clip, static_cast<std::size_t>(want));
}

// Peak normalization: divide by max |sample| so acquisition gain cancels.
// An all-zero clip has no peak to scale by; it comes back unchanged with
// the silent flag raised instead of becoming NaN.
inline AudioClip normalize_amplitude(const AudioClip& clip) {
    double peak = 0.0;
    for (const double x : clip.samples) peak = std::max(peak, std::fabs(x));
    AudioClip out = clip;
    if (peak == 0.0) {
        out.silent = true;
        return out;
    }
    for (double& x : out.samples) x /= peak;
    return out;
}

// Full chain: resample -> truncate -> normalize. Output always has exactly
// target_len samples at target_rate with max |sample| = 1 (or silent set).
inline AudioClip preprocess(const AudioClip& clip, std::size_t target_rate,
                            std::size_t target_len) {
    AudioClip out = resample(clip, target_rate);
    out = truncate_to(out, target_len);
    return normalize_amplitude(out);
}

struct Dataset {
    std::vector<AudioClip> clips;
    std::vector<std::size_t> labels;        // index into class_names, parallel to clips
    std::vector<std::string> class_names;   // sorted lexicographically
    std::vector<std::size_t> class_counts;  // parallel to class_names
    std::vector<std::string> warnings;      // skipped files, empty classes
    std::size_t skipped = 0;

    std::size_t size() const { return clips.size(); }
    std::size_t class_count() const { return class_names.size(); }
};

// Loads <root>/<class>/*.wav, running every file through the preprocessing
// chain. Class names come from the subdirectory names, sorted; when
// expected_classes is given it fixes the label set instead and any other
// subdirectory is an error. Files are visited in sorted order, so the
// result is a pure function of the directory contents. Unreadable or
// undecodable files are skipped with a warning, not a crash.
inline Dataset load_dataset(const std::string& root_dir, std::size_t target_rate,
                            std::size_t target_len,
                            const std::vector<std::string>& expected_classes = {}) {
    namespace fs = std::filesystem;
    const fs::path root(root_dir);
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
        throw IoError("dataset: cannot open directory \"" + root_dir + "\"");
    }

    std::vector<std::string> found;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) found.push_back(entry.path().filename().string());
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
        throw DataError("dataset: no class directories under \"" + root_dir + "\"");
    }

    Dataset ds;
    if (expected_classes.empty()) {
        ds.class_names = found;
    } else {
        ds.class_names = expected_classes;
        std::sort(ds.class_names.begin(), ds.class_names.end());
        for (const std::string& name : found) {
            if (!std::binary_search(ds.class_names.begin(), ds.class_names.end(), name)) {
                throw DataError("dataset: unknown class directory \"" + name + "\"");
            }
        }
    }
    ds.class_counts.assign(ds.class_names.size(), 0);

    for (std::size_t ci = 0; ci < ds.class_names.size(); ++ci) {
        const fs::path class_dir = root / ds.class_names[ci];
        std::vector<std::string> files;
        if (fs::is_directory(class_dir, ec)) {
            for (const auto& entry : fs::directory_iterator(class_dir)) {
                if (entry.is_regular_file() && entry.path().extension() == ".wav") {
                    files.push_back(entry.path().string());
                }
            }
        }
        std::sort(files.begin(), files.end());
        for (const std::string& path : files) {
            try {
                AudioClip clip = load_wav(path);
                clip = preprocess(clip, target_rate, target_len);
                clip.label = ds.class_names[ci];
                ds.clips.push_back(std::move(clip));
                ds.labels.push_back(ci);
                ++ds.class_counts[ci];
            } catch (const std::exception& e) {
                ds.warnings.push_back("skipped \"" + path + "\": " + e.what());
                ++ds.skipped;
            }
        }
        if (ds.class_counts[ci] == 0) {
            ds.warnings.push_back("class \"" + ds.class_names[ci] + "\" has no clips");
        }
    }
    return ds;
}

}  // namespace cardioxnet
