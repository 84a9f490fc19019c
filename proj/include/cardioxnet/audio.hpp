#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cardioxnet {

// One mono recording. Decoding and preprocessing keep samples inside [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    std::size_t sample_rate = 0;  // Hz; > 0 for any usable clip
    std::string label;            // class name, empty when unlabeled
    std::string source_id;        // provenance: file path or generator tag
    bool silent = false;          // set when normalization sees an all-zero clip

    double duration_seconds() const {
        if (sample_rate == 0) return 0.0;
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

}  // namespace cardioxnet
