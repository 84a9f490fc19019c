#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"

namespace cardioxnet {

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " x ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense row-major n-d array of doubles. Tensors are plain values: copyable,
// movable, no views, no aliasing.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape));
            n *= e;
        }
        if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
        if (n != data.size()) {
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " wants " +
                                        std::to_string(n) + " elements, got " + std::to_string(data.size()));
        }
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> s, double v) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor vec(std::initializer_list<double> v) {
        return Tensor({v.size()}, std::vector<double>(v));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

inline void check_finite(const Tensor& t, const std::string& what) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw NumericError("non-finite value in " + what + " at flat index " + std::to_string(i));
        }
    }
}

}  // namespace cardioxnet
