#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "cardioxnet/audio.hpp"
#include "cardioxnet/errors.hpp"

namespace cardioxnet {

// Rational-ratio sample-rate conversion by polyphase windowed-sinc
// interpolation. The clip is conceptually upsampled by L (zero insertion),
// filtered by a Kaiser-windowed sinc lowpass, and decimated by M, where
// L/M = target/source in lowest terms. The lowpass cuts at pi/max(L, M) so
// one prototype serves both interpolation imaging and decimation aliasing,
// and its gain is L to undo the zero-insertion amplitude loss.

namespace detail {

// Zeroth-order modified Bessel function of the first kind, by power series.
// Converges in well under 64 terms for Kaiser-window arguments.
inline double bessel_i0(double x) {
    const double half = x / 2.0;
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 64; ++k) {
        const double f = half / static_cast<double>(k);
        term *= f * f;
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

struct SincFilter {
    std::size_t up = 1;          // L
    std::size_t down = 1;        // M
    std::size_t center = 0;      // (taps.size()-1)/2, in high-rate samples
    std::vector<double> taps;    // odd length, symmetric, DC gain ~ L
};

inline constexpr std::size_t kResampleTapsPerPhase = 64;
inline constexpr double kResampleKaiserBeta = 8.6;
inline constexpr double kPi = 3.14159265358979323846;

inline SincFilter design_resample_filter(std::size_t up, std::size_t down) {
    SincFilter f;
    f.up = up;
    f.down = down;
    const std::size_t len = kResampleTapsPerPhase * up + 1;
    f.center = (len - 1) / 2;
    f.taps.resize(len);

    const double stretch = static_cast<double>(std::max(up, down));
    const double gain = static_cast<double>(up) / stretch;
    const double i0_beta = bessel_i0(kResampleKaiserBeta);
    const double c = static_cast<double>(f.center);
    for (std::size_t k = 0; k < len; ++k) {
        const double n = static_cast<double>(k) - c;
        const double t = n / stretch;          // sinc argument, cutoff pi/stretch
        const double u = n / c;                // window argument in [-1, 1]
        const double sinc =
            n == 0.0 ? 1.0 : std::sin(kPi * t) / (kPi * t);
        const double window =
            bessel_i0(kResampleKaiserBeta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0_beta;
        f.taps[k] = gain * sinc * window;
    }
    return f;
}

}  // namespace detail

inline AudioClip resample(const AudioClip& clip, std::size_t target_rate) {
    if (target_rate == 0) throw std::invalid_argument("resample: target rate must be > 0");
    if (clip.sample_rate == 0) throw std::invalid_argument("resample: clip has no sample rate");
    if (clip.samples.empty()) throw DataError("resample: clip holds no samples");
    if (target_rate == clip.sample_rate) return clip;

    const std::size_t g = std::gcd(clip.sample_rate, target_rate);
    const std::size_t up = target_rate / g;           // L
    const std::size_t down = clip.sample_rate / g;    // M
    const detail::SincFilter f = detail::design_resample_filter(up, down);

    const std::size_t n = clip.samples.size();
    // Output length rounds len * target / source to the nearest integer.
    const std::size_t scaled = n * up;
    const std::size_t n_out = scaled / down + (2 * (scaled % down) >= down ? 1 : 0);

    AudioClip out;
    out.sample_rate = target_rate;
    out.label = clip.label;
    out.source_id = clip.source_id;
    out.samples.resize(n_out);

    // Output j sits at high-rate position j*M; adding the filter center keeps
    // the result linear-phase. Tap k = phase + t*L multiplies input a/L - t;
    // indices outside the clip act as zeros.
    const std::vector<double>& x = clip.samples;
    for (std::size_t j = 0; j < n_out; ++j) {
        const std::size_t a = j * down + f.center;
        const std::size_t phase = a % up;
        const std::size_t i0 = a / up;
        double acc = 0.0;
        for (std::size_t k = phase, t = 0; k < f.taps.size(); k += up, ++t) {
            if (t > i0) break;
            const std::size_t idx = i0 - t;
            if (idx < n) acc += f.taps[k] * x[idx];
        }
        out.samples[j] = acc;
    }
    return out;
}

}  // namespace cardioxnet
