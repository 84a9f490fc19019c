#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cardioxnet/audio.hpp"
#include "cardioxnet/errors.hpp"
#include "cardioxnet/rng.hpp"

namespace cardioxnet {

// Synthetic phonocardiograms for self-contained experiments. Every clip is
// a metronomic sequence of S1 and S2 tone bursts with a class-specific
// murmur laid between them, plus broadband noise at 20 dB SNR. The point
// is not physiological realism; it is five deterministic, cleanly
// separable waveform families that exercise the whole pipeline.

inline const std::vector<std::string>& pcg_class_names() {
    static const std::vector<std::string> names = {"AS", "MR", "MS", "MVP", "N"};
    return names;
}

inline std::size_t pcg_class_index(const std::string& name) {
    const auto& names = pcg_class_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return i;
    }
    throw std::invalid_argument("synth: unknown class \"" + name + "\"");
}

// Timing and tone parameters drawn for one clip; exposed so tests can
// window their spectral measurements precisely.
struct SynthInfo {
    double period = 0.0;    // seconds per beat
    double f_s1 = 0.0;      // Hz
    double f_s2 = 0.0;      // Hz
    double s1_dur = 0.0;    // seconds
    double s2_dur = 0.0;    // seconds
    double s2_onset = 0.0;  // seconds after beat start
    std::size_t beats = 0;
};

namespace detail {

// Hann-windowed tone burst added onto x over [start, start + dur) seconds.
inline void add_burst(std::vector<double>& x, std::size_t rate, double start, double dur,
                      double freq, double phase, double amp) {
    constexpr double kTau = 6.28318530717958647692;
    const double r = static_cast<double>(rate);
    const std::size_t i0 = static_cast<std::size_t>(std::ceil(start * r));
    const std::size_t i1 =
        std::min(x.size(), static_cast<std::size_t>(std::ceil((start + dur) * r)));
    for (std::size_t i = i0; i < i1; ++i) {
        const double t = static_cast<double>(i) / r - start;
        const double u = t / dur;
        const double hann = 0.5 * (1.0 - std::cos(kTau * u));
        x[i] += amp * hann * std::sin(kTau * freq * t + phase);
    }
}

// Sum of fixed-frequency sinusoids shaped by an envelope over a window.
// env_kind: 0 diamond, 1 trapezoid (10% ramps), 2 decrescendo, 3 crescendo.
inline void add_band_murmur(std::vector<double>& x, std::size_t rate, double start, double dur,
                            const std::vector<double>& freqs, const std::vector<double>& phases,
                            double amp, int env_kind) {
    constexpr double kTau = 6.28318530717958647692;
    if (dur <= 0.0) return;
    const double r = static_cast<double>(rate);
    const double scale = amp / std::sqrt(static_cast<double>(freqs.size()));
    const std::size_t i0 = static_cast<std::size_t>(std::ceil(start * r));
    const std::size_t i1 =
        std::min(x.size(), static_cast<std::size_t>(std::ceil((start + dur) * r)));
    for (std::size_t i = i0; i < i1; ++i) {
        const double t = static_cast<double>(i) / r - start;
        const double u = t / dur;
        double env = 0.0;
        switch (env_kind) {
            case 0: env = 1.0 - std::fabs(2.0 * u - 1.0); break;
            case 1: env = std::min({1.0, u / 0.1, (1.0 - u) / 0.1}); break;
            case 2: env = 1.0 - 0.7 * u; break;
            default: env = 0.3 + 0.7 * u; break;
        }
        if (env <= 0.0) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < freqs.size(); ++k) {
            acc += std::sin(kTau * freqs[k] * t + phases[k]);
        }
        x[i] += scale * env * acc;
    }
}

inline void draw_band(Rng& rng, std::size_t count, double lo, double hi,
                      std::vector<double>& freqs, std::vector<double>& phases) {
    constexpr double kTau = 6.28318530717958647692;
    freqs.resize(count);
    phases.resize(count);
    for (std::size_t k = 0; k < count; ++k) freqs[k] = rng.uniform(lo, hi);
    for (std::size_t k = 0; k < count; ++k) phases[k] = rng.uniform(0.0, kTau);
}

}  // namespace detail

// Deterministic per (class, seed): the generator state is mixed from both,
// so neighboring seeds and neighboring classes share nothing.
inline AudioClip synth_pcg(const std::string& class_name, std::uint64_t seed, std::size_t rate,
                           double duration_seconds, SynthInfo* info = nullptr) {
    const std::size_t cls = pcg_class_index(class_name);
    if (rate == 0) throw std::invalid_argument("synth: rate must be > 0");
    if (duration_seconds <= 0.0) throw std::invalid_argument("synth: duration must be > 0");
    const std::size_t n = static_cast<std::size_t>(
        std::llround(duration_seconds * static_cast<double>(rate)));
    if (n == 0) throw std::invalid_argument("synth: duration shorter than one sample");

    Rng rng(mix_seed(seed, cls + 1));
    SynthInfo si;
    si.period = rng.uniform(0.6, 1.0);
    si.f_s1 = rng.uniform(30.0, 45.0);
    si.f_s2 = rng.uniform(50.0, 70.0);
    si.s1_dur = 0.11;
    si.s2_dur = 0.09;
    si.s2_onset = 0.38 * si.period;

    // Murmur character is drawn once per clip and repeats every beat.
    std::vector<double> freqs, phases;
    double click_freq = 0.0, click_phase = 0.0;
    constexpr double kTau = 6.28318530717958647692;
    if (class_name == "AS") {
        detail::draw_band(rng, 24, 120.0, 400.0, freqs, phases);
    } else if (class_name == "MR") {
        detail::draw_band(rng, 24, 100.0, 350.0, freqs, phases);
    } else if (class_name == "MS") {
        detail::draw_band(rng, 24, 45.0, 130.0, freqs, phases);
    } else if (class_name == "MVP") {
        click_freq = rng.uniform(280.0, 380.0);
        click_phase = rng.uniform(0.0, kTau);
        detail::draw_band(rng, 16, 150.0, 400.0, freqs, phases);
    }

    std::vector<double> x(n, 0.0);
    const double total = duration_seconds;
    for (double t0 = 0.0; t0 < total; t0 += si.period) {
        ++si.beats;
        const double phi1 = rng.uniform(0.0, kTau);
        const double phi2 = rng.uniform(0.0, kTau);
        detail::add_burst(x, rate, t0, si.s1_dur, si.f_s1, phi1, 1.0);
        detail::add_burst(x, rate, t0 + si.s2_onset, si.s2_dur, si.f_s2, phi2, 0.8);

        const double sys_start = t0 + si.s1_dur;
        const double sys_len = si.s2_onset - si.s1_dur;
        const double dia_start = t0 + si.s2_onset + si.s2_dur;
        const double dia_len = 0.96 * si.period - (si.s2_onset + si.s2_dur);
        if (class_name == "AS") {
            detail::add_band_murmur(x, rate, sys_start, sys_len, freqs, phases, 0.8, 0);
        } else if (class_name == "MR") {
            detail::add_band_murmur(x, rate, sys_start, sys_len, freqs, phases, 0.6, 1);
        } else if (class_name == "MS") {
            detail::add_band_murmur(x, rate, dia_start, dia_len, freqs, phases, 0.7, 2);
        } else if (class_name == "MVP") {
            const double click_t = sys_start + 0.45 * sys_len;
            detail::add_burst(x, rate, click_t, 0.02, click_freq, click_phase, 0.9);
            detail::add_band_murmur(x, rate, sys_start + 0.55 * sys_len, 0.45 * sys_len, freqs,
                                    phases, 0.6, 3);
        }
    }

    // Additive noise at 20 dB SNR relative to the composed signal power.
    double power = 0.0;
    for (const double v : x) power += v * v;
    power /= static_cast<double>(n);
    const double sigma = std::sqrt(power / 100.0);
    for (double& v : x) v += sigma * rng.gaussian();

    // Peak at 0.9 leaves headroom for 16-bit encoding.
    double peak = 0.0;
    for (const double v : x) peak = std::max(peak, std::fabs(v));
    if (peak > 0.0) {
        const double s = 0.9 / peak;
        for (double& v : x) v *= s;
    }

    AudioClip clip;
    clip.samples = std::move(x);
    clip.sample_rate = rate;
    clip.label = class_name;
    clip.source_id = "synth:" + class_name + ":" + std::to_string(seed);
    if (info) *info = si;
    return clip;
}

}  // namespace cardioxnet
