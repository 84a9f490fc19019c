#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "cardioxnet/pipeline.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/synth.hpp"
#include "oracles.hpp"

using namespace cardioxnet;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double kTau = 6.28318530717958647692;

// Hand-built RIFF bytes so the decoder is tested against raw layout, not
// against the encoder.
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                      std::uint16_t bits, const std::string& payload) {
    std::string out;
    auto u16 = [&out](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
    auto u32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
    out.append("RIFF", 4);
    u32(static_cast<std::uint32_t>(36 + payload.size()));
    out.append("WAVE", 4);
    out.append("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(rate);
    u32(rate * channels * (bits / 8));
    u16(static_cast<std::uint16_t>(channels * (bits / 8)));
    u16(bits);
    out.append("data", 4);
    u32(static_cast<std::uint32_t>(payload.size()));
    out += payload;
    return out;
}

std::string pcm16_payload(const std::vector<std::int16_t>& samples) {
    std::string out;
    for (const std::int16_t s : samples) out.append(reinterpret_cast<const char*>(&s), 2);
    return out;
}

std::string float32_payload(const std::vector<float>& samples) {
    std::string out;
    for (const float s : samples) out.append(reinterpret_cast<const char*>(&s), 4);
    return out;
}

AudioClip sine_clip(double freq, std::size_t rate, double seconds, double amp = 1.0) {
    AudioClip clip;
    clip.sample_rate = rate;
    const auto n = static_cast<std::size_t>(seconds * static_cast<double>(rate));
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] = amp * std::sin(kTau * freq * static_cast<double>(i) /
                                         static_cast<double>(rate));
    }
    return clip;
}

std::vector<double> slice(const std::vector<double>& x, std::size_t from, std::size_t count) {
    return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(from),
                               x.begin() + static_cast<std::ptrdiff_t>(from + count));
}

}  // namespace

TEST_CASE("pcm16 decoding maps integers onto [-1, 1)") {
    const std::string bytes = wav_bytes(1, 1, 8000, 16, pcm16_payload({16384, -32768, 32767, 0}));
    const AudioClip clip = decode_wav(bytes);
    REQUIRE(clip.sample_rate == 8000);
    REQUIRE(clip.samples.size() == 4);
    REQUIRE(clip.samples[0] == 0.5);
    REQUIRE(clip.samples[1] == -1.0);
    REQUIRE(clip.samples[2] == 32767.0 / 32768.0);
    REQUIRE(clip.samples[3] == 0.0);
}

TEST_CASE("multichannel frames are averaged to mono") {
    const std::string bytes = wav_bytes(3, 2, 2000, 32, float32_payload({0.2f, 0.4f, -0.5f, 0.5f}));
    const AudioClip clip = decode_wav(bytes);
    REQUIRE(clip.samples.size() == 2);
    REQUIRE_THAT(clip.samples[0], WithinAbs(0.3, 1e-7));
    REQUIRE_THAT(clip.samples[1], WithinAbs(0.0, 1e-7));
}

TEST_CASE("sample rate is echoed from the header") {
    for (const std::uint32_t rate : {8000u, 2000u, 44100u}) {
        const std::string bytes = wav_bytes(1, 1, rate, 16, pcm16_payload({1, 2, 3}));
        REQUIRE(decode_wav(bytes).sample_rate == rate);
    }
}

TEST_CASE("unknown chunks are skipped, including odd-sized ones") {
    // Splice a 3-byte junk chunk (with pad byte) between fmt and data.
    const std::string plain = wav_bytes(1, 1, 8000, 16, pcm16_payload({100, -100}));
    std::string spliced = plain.substr(0, 36);
    spliced.append("junk", 4);
    const std::uint32_t len = 3;
    spliced.append(reinterpret_cast<const char*>(&len), 4);
    spliced.append("abc", 3);
    spliced.push_back('\0');  // word-alignment pad
    spliced += plain.substr(36);
    const AudioClip clip = decode_wav(spliced);
    REQUIRE(clip.samples.size() == 2);
    REQUIRE(clip.samples[0] == 100.0 / 32768.0);
}

TEST_CASE("malformed wav inputs are rejected with distinct diagnostics") {
    const std::string good = wav_bytes(1, 1, 8000, 16, pcm16_payload({1, 2, 3, 4}));

    SECTION("not a RIFF container") {
        std::string bad = good;
        bad[0] = 'X';
        REQUIRE_THROWS_WITH(decode_wav(bad), ContainsSubstring("not a RIFF/WAVE file"));
    }
    SECTION("unsupported codec tag") {
        REQUIRE_THROWS_WITH(decode_wav(wav_bytes(2, 1, 8000, 16, pcm16_payload({1}))),
                            ContainsSubstring("unsupported codec"));
    }
    SECTION("unsupported pcm depth") {
        REQUIRE_THROWS_WITH(decode_wav(wav_bytes(1, 1, 8000, 8, std::string(4, '\0'))),
                            ContainsSubstring("8-bit PCM"));
    }
    SECTION("unsupported float depth") {
        REQUIRE_THROWS_WITH(decode_wav(wav_bytes(3, 1, 8000, 64, std::string(8, '\0'))),
                            ContainsSubstring("64-bit float"));
    }
    SECTION("zero-length data chunk") {
        REQUIRE_THROWS_AS(decode_wav(wav_bytes(1, 1, 8000, 16, "")), DataError);
        REQUIRE_THROWS_WITH(decode_wav(wav_bytes(1, 1, 8000, 16, "")),
                            ContainsSubstring("holds no samples"));
    }
    SECTION("missing data chunk") {
        REQUIRE_THROWS_WITH(decode_wav(good.substr(0, 36)), ContainsSubstring("missing data chunk"));
    }
    SECTION("truncated payload") {
        REQUIRE_THROWS_WITH(decode_wav(good.substr(0, good.size() - 2)),
                            ContainsSubstring("truncated"));
    }
    SECTION("ragged frame") {
        REQUIRE_THROWS_WITH(decode_wav(wav_bytes(1, 2, 8000, 16, pcm16_payload({1, 2, 3}))),
                            ContainsSubstring("whole number of frames"));
    }
}

TEST_CASE("pcm16 encode then decode inverts exactly on the quantization grid") {
    AudioClip clip;
    clip.sample_rate = 4000;
    Rng rng(99);
    clip.samples.resize(257);
    for (double& x : clip.samples) {
        x = static_cast<double>(static_cast<long long>(rng.below(65536)) - 32768) / 32768.0;
    }
    const AudioClip back = decode_wav(encode_wav_pcm16(clip));
    REQUIRE(back.sample_rate == 4000);
    REQUIRE(back.samples == clip.samples);
}

TEST_CASE("resampling at the source rate is the identity") {
    const AudioClip clip = sine_clip(100.0, 8000, 0.25);
    const AudioClip out = resample(clip, 8000);
    REQUIRE(out.samples == clip.samples);
    REQUIRE(out.sample_rate == 8000);
}

TEST_CASE("resampled length rounds len times target over source") {
    AudioClip clip;
    clip.sample_rate = 8000;
    clip.samples.assign(9000, 0.0);
    REQUIRE(resample(clip, 2000).samples.size() == 2250);

    clip.sample_rate = 44100;
    clip.samples.assign(3, 0.0);
    REQUIRE(resample(clip, 48000).samples.size() == 3);  // round(3.265...)

    clip.samples.assign(1000, 0.0);
    REQUIRE(resample(clip, 48000).samples.size() == 1088);  // round(1088.4...)
}

TEST_CASE("resampling an empty clip is rejected") {
    AudioClip clip;
    clip.sample_rate = 8000;
    REQUIRE_THROWS_AS(resample(clip, 2000), DataError);
    clip.samples.assign(10, 0.0);
    REQUIRE_THROWS_AS(resample(clip, 0), std::invalid_argument);
}

TEST_CASE("downsampling preserves an in-band tone") {
    // 2 s of 100 Hz at 8 kHz down to 2 kHz. The interior 1 s window holds
    // exactly 100 cycles, so the tone lands on one DFT bin.
    const AudioClip clip = sine_clip(100.0, 8000, 2.0);
    const AudioClip out = resample(clip, 2000);
    REQUIRE(out.samples.size() == 4000);
    const std::vector<double> mid = slice(out.samples, 500, 2000);
    REQUIRE_THAT(oracle::tone_amplitude(mid, 2000.0, 100.0), WithinAbs(1.0, 0.01));
    REQUIRE_THAT(oracle::dominant_bin_freq(mid, 2000.0), WithinAbs(100.0, 0.5));
}

TEST_CASE("upsampling preserves an in-band tone") {
    const AudioClip clip = sine_clip(250.0, 2000, 1.0);
    const AudioClip out = resample(clip, 8000);
    REQUIRE(out.samples.size() == 8000);
    const std::vector<double> mid = slice(out.samples, 2000, 4000);
    REQUIRE_THAT(oracle::tone_amplitude(mid, 8000.0, 250.0), WithinAbs(1.0, 0.01));
    REQUIRE_THAT(oracle::dominant_bin_freq(mid, 8000.0), WithinAbs(250.0, 1.0));
}

TEST_CASE("downsampling rejects out-of-band content instead of aliasing it") {
    // 2.5 kHz at 8 kHz would fold to 500 Hz at 2 kHz without the lowpass.
    const AudioClip clip = sine_clip(2500.0, 8000, 2.0);
    const AudioClip out = resample(clip, 2000);
    const std::vector<double> mid = slice(out.samples, 500, 2000);
    REQUIRE(oracle::tone_amplitude(mid, 2000.0, 500.0) < 1e-3);
}

TEST_CASE("resampling is linear-phase on dc") {
    AudioClip clip;
    clip.sample_rate = 6000;
    clip.samples.assign(3000, 0.5);
    const AudioClip out = resample(clip, 2000);
    for (std::size_t i = 100; i + 100 < out.samples.size(); ++i) {
        REQUIRE_THAT(out.samples[i], WithinAbs(0.5, 1e-3));
    }
}

TEST_CASE("truncation keeps the first floor(duration * rate) samples") {
    const AudioClip clip = sine_clip(40.0, 2000, 3.0);
    const AudioClip cut = truncate(clip, 1.125);
    REQUIRE(cut.samples.size() == 2250);
    REQUIRE(cut.samples == slice(clip.samples, 0, 2250));

    const AudioClip exact = truncate(sine_clip(40.0, 2000, 1.125), 1.125);
    REQUIRE(exact.samples.size() == 2250);
}

TEST_CASE("truncation rejects clips shorter than the target duration") {
    const AudioClip clip = sine_clip(40.0, 2000, 1.0);
    REQUIRE_THROWS_WITH(truncate(clip, 1.125),
                        ContainsSubstring("clip shorter than target duration"));
    REQUIRE_THROWS_AS(truncate(clip, 1.125), DataError);
}

TEST_CASE("peak normalization follows its definition") {
    AudioClip clip;
    clip.sample_rate = 10;
    clip.samples = {2.0, -4.0, 1.0};
    const AudioClip out = normalize_amplitude(clip);
    REQUIRE(out.samples == std::vector<double>{0.5, -1.0, 0.25});
    REQUIRE_FALSE(out.silent);
}

TEST_CASE("normalization is idempotent at peak one") {
    AudioClip clip;
    clip.sample_rate = 10;
    clip.samples = {0.25, -1.0, 0.75};
    const AudioClip out = normalize_amplitude(clip);
    REQUIRE(out.samples == clip.samples);
}

TEST_CASE("normalization cancels acquisition gain") {
    AudioClip clip = sine_clip(50.0, 1000, 0.5, 0.37);
    AudioClip scaled = clip;
    for (double& x : scaled.samples) x *= 3.7;

    const AudioClip a = normalize_amplitude(clip);
    const AudioClip b = normalize_amplitude(scaled);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        // Scaling by 3.7 re-rounds every sample, so the quotients may differ
        // in the last bit or two; they are identical at any physical scale.
        REQUIRE_THAT(a.samples[i], WithinAbs(b.samples[i], 1e-12));
    }

    // A power-of-two gain scales exactly, so the outputs match bitwise.
    AudioClip pow2 = clip;
    for (double& x : pow2.samples) x *= 4.0;
    REQUIRE(normalize_amplitude(pow2).samples == a.samples);
}

TEST_CASE("all-zero clips come back flagged instead of divided by zero") {
    AudioClip clip;
    clip.sample_rate = 100;
    clip.samples.assign(50, 0.0);
    const AudioClip out = normalize_amplitude(clip);
    REQUIRE(out.silent);
    REQUIRE(out.samples == clip.samples);
}

TEST_CASE("the preprocessing chain always lands on the network input contract") {
    struct Case {
        double freq;
        std::size_t rate;
        double seconds;
    };
    for (const Case c : {Case{100.0, 8000, 1.2}, Case{60.0, 4000, 3.0}, Case{35.0, 22050, 1.5}}) {
        const AudioClip clip = sine_clip(c.freq, c.rate, c.seconds, 0.3);
        const AudioClip out = preprocess(clip, 2000, 2250);
        REQUIRE(out.samples.size() == 2250);
        REQUIRE(out.sample_rate == 2000);
        double peak = 0.0;
        for (const double x : out.samples) {
            REQUIRE(std::fabs(x) <= 1.0);
            peak = std::max(peak, std::fabs(x));
        }
        REQUIRE(peak == 1.0);
    }
}

TEST_CASE("preprocessing is deterministic") {
    const AudioClip clip = sine_clip(80.0, 8000, 2.0, 0.4);
    const AudioClip a = preprocess(clip, 2000, 2250);
    const AudioClip b = preprocess(clip, 2000, 2250);
    REQUIRE(a.samples == b.samples);
}

TEST_CASE("synthetic clips are deterministic per class and seed") {
    const AudioClip a = synth_pcg("AS", 42, 4000, 1.5);
    const AudioClip b = synth_pcg("AS", 42, 4000, 1.5);
    REQUIRE(a.samples == b.samples);
    REQUIRE(a.label == "AS");
    REQUIRE(a.sample_rate == 4000);
    REQUIRE(a.samples.size() == 6000);

    const AudioClip c = synth_pcg("AS", 43, 4000, 1.5);
    REQUIRE(a.samples != c.samples);
    const AudioClip d = synth_pcg("MR", 42, 4000, 1.5);
    REQUIRE(a.samples != d.samples);
}

TEST_CASE("synthetic clips peak at 0.9") {
    for (const char* cls : {"AS", "MR", "MS", "MVP", "N"}) {
        const AudioClip clip = synth_pcg(cls, 7, 4000, 2.0);
        double peak = 0.0;
        for (const double x : clip.samples) peak = std::max(peak, std::fabs(x));
        REQUIRE_THAT(peak, WithinAbs(0.9, 1e-12));
    }
}

TEST_CASE("unknown synthetic class is rejected") {
    REQUIRE_THROWS_WITH(synth_pcg("AV", 1, 4000, 2.0), ContainsSubstring("unknown class"));
}

TEST_CASE("normal clips carry no murmur-band energy during systole") {
    for (const std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SynthInfo si;
        const AudioClip clip = synth_pcg("N", seed, 8000, 3.0, &si);
        const double r = 8000.0;

        // Second beat, to stay away from any clip-edge effects.
        const double t0 = si.period;
        const auto s1_at = static_cast<std::size_t>(t0 * r);
        const auto s1_n = static_cast<std::size_t>(si.s1_dur * r);
        const double s1_band =
            oracle::band_energy(slice(clip.samples, s1_at, s1_n), r, 25.0, 50.0);

        const double sys_from = t0 + si.s1_dur + 0.01;
        const double sys_len = si.s2_onset - si.s1_dur - 0.02;
        const auto sys_at = static_cast<std::size_t>(sys_from * r);
        const auto sys_n = static_cast<std::size_t>(sys_len * r);
        const double murmur_band =
            oracle::band_energy(slice(clip.samples, sys_at, sys_n), r, 100.0, 400.0);

        REQUIRE(murmur_band < 0.1 * s1_band);
    }
}

TEST_CASE("a threshold on systolic band energy separates AS from N") {
    // Feature: murmur-band energy between S1 and S2 of the second beat.
    auto feature = [](const std::string& cls, std::uint64_t seed) {
        SynthInfo si;
        const AudioClip clip = synth_pcg(cls, seed, 4000, 2.0, &si);
        const double r = 4000.0;
        const double from = si.period + si.s1_dur + 0.01;
        const double len = si.s2_onset - si.s1_dur - 0.02;
        const auto at = static_cast<std::size_t>(from * r);
        const auto n = static_cast<std::size_t>(len * r);
        return oracle::band_energy(slice(clip.samples, at, n), r, 100.0, 400.0);
    };

    std::vector<std::pair<double, int>> points;  // (feature, is_AS)
    for (std::uint64_t s = 0; s < 200; ++s) {
        points.emplace_back(feature("AS", s), 1);
        points.emplace_back(feature("N", s), 0);
    }
    std::sort(points.begin(), points.end());

    // Best single-threshold split, either orientation.
    std::size_t best = 0;
    const std::size_t total = points.size();
    std::size_t as_below = 0, as_total = 400 / 2;
    for (std::size_t cut = 0; cut <= total; ++cut) {
        if (cut > 0 && points[cut - 1].second == 1) ++as_below;
        const std::size_t n_below = cut;
        // Orientation A: predict N below the cut, AS above.
        const std::size_t correct_a = (n_below - as_below) + (as_total - as_below);
        // Orientation B: the reverse.
        const std::size_t correct_b = total - correct_a;
        best = std::max({best, correct_a, correct_b});
    }
    const double accuracy = static_cast<double>(best) / static_cast<double>(total);
    INFO("stump accuracy " << accuracy);
    REQUIRE(accuracy > 0.90);
}

TEST_CASE("synthetic clips survive the wav and preprocessing round trip") {
    const AudioClip clip = synth_pcg("MVP", 11, 8000, 2.0);
    const AudioClip back = decode_wav(encode_wav_pcm16(clip));
    REQUIRE(back.samples.size() == clip.samples.size());
    for (std::size_t i = 0; i < back.samples.size(); ++i) {
        REQUIRE_THAT(back.samples[i], WithinAbs(clip.samples[i], 1.0 / 32768.0));
    }
    const AudioClip ready = preprocess(back, 2000, 2250);
    REQUIRE(ready.samples.size() == 2250);
}

TEST_CASE("dataset loading walks sorted classes and files") {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "cxn_ds_test";
    fs::remove_all(root);
    fs::create_directories(root / "zz");
    fs::create_directories(root / "aa");

    // Three readable clips, one corrupt file, one empty extra class.
    save_wav_pcm16(synth_pcg("N", 1, 4000, 1.5), (root / "aa" / "n_0.wav").string());
    save_wav_pcm16(synth_pcg("N", 2, 4000, 1.5), (root / "aa" / "n_1.wav").string());
    save_wav_pcm16(synth_pcg("AS", 1, 4000, 1.5), (root / "zz" / "a_0.wav").string());
    {
        std::ofstream bad(root / "zz" / "broken.wav", std::ios::binary);
        bad << "this is not audio";
    }

    const Dataset ds = load_dataset(root.string(), 2000, 2250);
    REQUIRE(ds.class_names == std::vector<std::string>{"aa", "zz"});
    REQUIRE(ds.class_counts == std::vector<std::size_t>{2, 1});
    REQUIRE(ds.labels == std::vector<std::size_t>{0, 0, 1});
    REQUIRE(ds.size() == 3);
    REQUIRE(ds.skipped == 1);
    REQUIRE(ds.warnings.size() == 1);
    REQUIRE_THAT(ds.warnings[0], ContainsSubstring("broken.wav"));
    for (const AudioClip& clip : ds.clips) REQUIRE(clip.samples.size() == 2250);
    REQUIRE(ds.clips[0].label == "aa");
    REQUIRE(ds.clips[2].label == "zz");

    // Loading twice gives the same clip order.
    const Dataset again = load_dataset(root.string(), 2000, 2250);
    REQUIRE(again.clips.size() == ds.clips.size());
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        REQUIRE(again.clips[i].source_id == ds.clips[i].source_id);
    }

    fs::remove_all(root);
}

TEST_CASE("dataset loading enforces the expected class list") {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "cxn_ds_expected";
    fs::remove_all(root);
    fs::create_directories(root / "N");
    save_wav_pcm16(synth_pcg("N", 3, 4000, 1.5), (root / "N" / "n_0.wav").string());

    SECTION("subset of expected classes loads, missing class warns") {
        const Dataset ds = load_dataset(root.string(), 2000, 2250, {"N", "AS"});
        REQUIRE(ds.class_names == std::vector<std::string>{"AS", "N"});
        REQUIRE(ds.class_counts == std::vector<std::size_t>{0, 1});
        REQUIRE_FALSE(ds.warnings.empty());
    }
    SECTION("unknown directory is an error") {
        fs::create_directories(root / "XX");
        REQUIRE_THROWS_WITH(load_dataset(root.string(), 2000, 2250, {"N", "AS"}),
                            ContainsSubstring("unknown class directory"));
    }
    fs::remove_all(root);
}

TEST_CASE("dataset loading rejects a missing root") {
    REQUIRE_THROWS_AS(load_dataset("/nonexistent/cxn/root", 2000, 2250), IoError);
}
