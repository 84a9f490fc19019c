#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cardioxnet/config.hpp"
#include "cardioxnet/errors.hpp"
#include "cardioxnet/model.hpp"

namespace cardioxnet {

// CRC-32 (IEEE 802.3, reflected, polynomial 0xEDB88320). crc32("123456789")
// must equal 0xCBF43926.
inline std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t seed = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = ~seed;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

enum class WeightDtype : std::uint8_t { f64 = 0, f32 = 1 };

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

inline void put_u32(std::string& out, std::uint32_t v) { put_bytes(out, &v, 4); }
inline void put_u64(std::string& out, std::uint64_t v) { put_bytes(out, &v, 8); }

struct ByteReader {
    const std::string& buf;
    std::size_t at = 0;

    void need(std::size_t n, const char* what) const {
        if (at + n > buf.size()) {
            throw FormatError(std::string("model file: truncated while reading ") + what);
        }
    }
    void read(void* p, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(p, buf.data() + at, n);
        at += n;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read(&v, 4, what);
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t v;
        read(&v, 8, what);
        return v;
    }
    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        read(&v, 1, what);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(buf.data() + at, n);
        at += n;
        return s;
    }
};

inline void put_tensor(std::string& out, const std::string& name, const Tensor& t,
                       WeightDtype dtype) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    const std::uint8_t tag = static_cast<std::uint8_t>(dtype);
    put_bytes(out, &tag, 1);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put_u64(out, d);
    if (dtype == WeightDtype::f64) {
        put_bytes(out, t.data.data(), t.data.size() * sizeof(double));
    } else {
        std::vector<float> f(t.data.size());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(t.data[i]);
        put_bytes(out, f.data(), f.size() * sizeof(float));
    }
}

}  // namespace detail

inline constexpr char kModelMagic[4] = {'C', 'X', 'N', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline std::string save_model_bytes(const Model& model, WeightDtype dtype = WeightDtype::f64) {
    std::string out;
    detail::put_bytes(out, kModelMagic, 4);
    detail::put_u32(out, kModelFormatVersion);

    const std::string config_text = serialize_kv_text(model.config.to_kv());
    detail::put_u32(out, static_cast<std::uint32_t>(config_text.size()));
    detail::put_bytes(out, config_text.data(), config_text.size());

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    visit_params(model, [&](const std::string& name, const Tensor& t) {
        tensors.emplace_back(name, &t);
    });
    visit_running_stats(model, [&](const std::string& name, const Tensor& t) {
        tensors.emplace_back(name, &t);
    });

    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) detail::put_tensor(out, name, *t, dtype);

    detail::put_u32(out, crc32(out.data(), out.size()));
    return out;
}

inline Model load_model_bytes(const std::string& buf) {
    if (buf.size() < 8) throw FormatError("model file: truncated header");
    if (std::memcmp(buf.data(), kModelMagic, 4) != 0) {
        throw FormatError("model file: bad magic (not a model file)");
    }
    // Everything up to the trailing CRC is covered by it.
    if (buf.size() < 12) throw FormatError("model file: truncated before checksum");
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    const std::uint32_t actual_crc = crc32(buf.data(), buf.size() - 4);
    if (stored_crc != actual_crc) {
        throw FormatError("model file: checksum mismatch (file corrupt)");
    }

    detail::ByteReader r{buf, 4};
    const std::uint32_t version = r.u32("format version");
    if (version != kModelFormatVersion) {
        throw FormatError("model file: unsupported format version " + std::to_string(version));
    }
    const std::uint32_t config_len = r.u32("config length");
    const std::string config_text = r.str(config_len, "config block");
    const ModelConfig config = ModelConfig::from_kv(parse_kv_text(config_text));

    Model model = build_model(config, 0);
    std::map<std::string, Tensor*> expected;
    visit_params(model, [&](const std::string& name, Tensor& t) { expected[name] = &t; });
    visit_running_stats(model, [&](const std::string& name, Tensor& t) { expected[name] = &t; });

    const std::uint32_t count = r.u32("tensor count");
    if (count != expected.size()) {
        throw FormatError("model file: holds " + std::to_string(count) + " tensors, config wants " +
                          std::to_string(expected.size()));
    }
    std::map<std::string, bool> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("tensor name length");
        const std::string name = r.str(name_len, "tensor name");
        const auto it = expected.find(name);
        if (it == expected.end()) {
            throw FormatError("model file: unexpected tensor \"" + name + "\"");
        }
        if (seen[name]) throw FormatError("model file: duplicate tensor \"" + name + "\"");
        seen[name] = true;

        const std::uint8_t tag = r.u8("dtype tag");
        if (tag > 1) {
            throw FormatError("model file: unknown dtype tag " + std::to_string(tag) +
                              " for tensor \"" + name + "\"");
        }
        const std::uint32_t rank = r.u32("tensor rank");
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::size_t>(r.u64("tensor extent"));
        }
        Tensor* dst = it->second;
        if (shape != dst->shape) {
            throw FormatError("model file: tensor \"" + name + "\" has shape " + shape_str(shape) +
                              ", config wants " + shape_str(dst->shape));
        }
        if (tag == static_cast<std::uint8_t>(WeightDtype::f64)) {
            r.read(dst->data.data(), dst->data.size() * sizeof(double), name.c_str());
        } else {
            std::vector<float> f(dst->data.size());
            r.read(f.data(), f.size() * sizeof(float), name.c_str());
            for (std::size_t k = 0; k < f.size(); ++k) dst->data[k] = static_cast<double>(f[k]);
        }
    }
    if (r.at != buf.size() - 4) {
        throw FormatError("model file: trailing bytes after tensor data");
    }
    return model;
}

inline void save_model(const Model& model, const std::string& path,
                       WeightDtype dtype = WeightDtype::f64) {
    const std::string bytes = save_model_bytes(model, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to \"" + path + "\"");
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model_bytes(bytes);
}

}  // namespace cardioxnet
