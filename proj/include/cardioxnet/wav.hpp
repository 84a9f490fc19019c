#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cardioxnet/audio.hpp"
#include "cardioxnet/errors.hpp"

namespace cardioxnet {

// RIFF/WAVE ingestion and emission. Decoding accepts PCM 16-bit and IEEE
// float 32-bit payloads with any channel count (channels are averaged down
// to mono). Encoding always writes mono PCM 16-bit.

namespace detail {

inline std::uint16_t wav_u16(const std::string& b, std::size_t at) {
    std::uint16_t v;
    std::memcpy(&v, b.data() + at, 2);
    return v;
}

inline std::uint32_t wav_u32(const std::string& b, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, b.data() + at, 4);
    return v;
}

inline void wav_need(const std::string& b, std::size_t at, std::size_t n, const char* what) {
    if (at + n > b.size()) {
        throw FormatError(std::string("wav: truncated while reading ") + what);
    }
}

}  // namespace detail

// RIFF format tags this decoder understands.
inline constexpr std::uint16_t kWavTagPcm = 1;
inline constexpr std::uint16_t kWavTagFloat = 3;

inline AudioClip decode_wav(const std::string& bytes, const std::string& source_id = "") {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("wav: not a RIFF/WAVE file");
    }

    // Chunk scan. Only "fmt " and "data" matter; anything else is skipped.
    // Chunk bodies are word-aligned, so odd sizes carry one pad byte.
    bool have_fmt = false;
    std::uint16_t format_tag = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    std::size_t data_at = 0;
    std::size_t data_len = 0;
    bool have_data = false;

    std::size_t at = 12;
    while (at + 8 <= bytes.size()) {
        const char* id = bytes.data() + at;
        const std::uint32_t len = detail::wav_u32(bytes, at + 4);
        at += 8;
        detail::wav_need(bytes, at, len, "chunk body");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw FormatError("wav: fmt chunk shorter than 16 bytes");
            format_tag = detail::wav_u16(bytes, at);
            channels = detail::wav_u16(bytes, at + 2);
            sample_rate = detail::wav_u32(bytes, at + 4);
            bits = detail::wav_u16(bytes, at + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_at = at;
            data_len = len;
            have_data = true;
        }
        at += len + (len % 2);
    }

    if (!have_fmt) throw FormatError("wav: missing fmt chunk");
    if (!have_data) throw FormatError("wav: missing data chunk");
    if (format_tag != kWavTagPcm && format_tag != kWavTagFloat) {
        throw FormatError("wav: unsupported codec tag " + std::to_string(format_tag) +
                          " (PCM 16-bit and IEEE float 32-bit only)");
    }
    if (format_tag == kWavTagPcm && bits != 16) {
        throw FormatError("wav: " + std::to_string(bits) + "-bit PCM is not supported (16-bit only)");
    }
    if (format_tag == kWavTagFloat && bits != 32) {
        throw FormatError("wav: " + std::to_string(bits) +
                          "-bit float is not supported (32-bit only)");
    }
    if (channels == 0) throw FormatError("wav: zero channels");
    if (sample_rate == 0) throw FormatError("wav: zero sample rate");
    if (data_len == 0) throw DataError("wav: data chunk holds no samples");

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_size = bytes_per_sample * channels;
    if (data_len % frame_size != 0) {
        throw FormatError("wav: data size " + std::to_string(data_len) +
                          " is not a whole number of frames");
    }
    const std::size_t frames = data_len / frame_size;

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.source_id = source_id;
    clip.samples.resize(frames);
    const char* p = bytes.data() + data_at;
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            if (format_tag == kWavTagPcm) {
                std::int16_t s;
                std::memcpy(&s, p, 2);
                acc += static_cast<double>(s) / 32768.0;
            } else {
                float s;
                std::memcpy(&s, p, 4);
                acc += static_cast<double>(s);
            }
            p += bytes_per_sample;
        }
        clip.samples[f] = acc / static_cast<double>(channels);
    }
    return clip;
}

inline AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes, path);
}

// Mono PCM 16-bit encoding. Samples are clamped to [-1, 1) at the integer
// boundary, so 0.5 maps to 16384 and the decode scaling inverts exactly.
inline std::string encode_wav_pcm16(const AudioClip& clip) {
    if (clip.sample_rate == 0) throw std::invalid_argument("wav: sample rate must be > 0");
    if (clip.samples.empty()) throw std::invalid_argument("wav: refusing to write an empty clip");

    const std::uint32_t rate = static_cast<std::uint32_t>(clip.sample_rate);
    const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 2);

    std::string out;
    out.reserve(44 + data_len);
    auto u16 = [&out](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
    auto u32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };

    out.append("RIFF", 4);
    u32(36 + data_len);
    out.append("WAVE", 4);
    out.append("fmt ", 4);
    u32(16);
    u16(kWavTagPcm);
    u16(1);  // mono
    u32(rate);
    u32(rate * 2);  // byte rate
    u16(2);         // block align
    u16(16);        // bits per sample
    out.append("data", 4);
    u32(data_len);
    for (const double x : clip.samples) {
        const double scaled = std::rint(x * 32768.0);
        const std::int16_t s =
            static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        out.append(reinterpret_cast<const char*>(&s), 2);
    }
    return out;
}

inline void save_wav_pcm16(const AudioClip& clip, const std::string& path) {
    const std::string bytes = encode_wav_pcm16(clip);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to \"" + path + "\"");
}

}  // namespace cardioxnet
