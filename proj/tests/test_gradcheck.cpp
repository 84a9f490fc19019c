#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cardioxnet/gradcheck.hpp"
#include "cardioxnet/ops.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/tensor.hpp"

using cardioxnet::grad_check;
using cardioxnet::GradCheckParam;
using cardioxnet::GradCheckReport;
using cardioxnet::Rng;
using cardioxnet::Tensor;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.gaussian();
    return t;
}

// Scalar objective used throughout: sum of squared outputs, so the upstream
// gradient is 2*y and every output element contributes.
double sq_sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v * v;
    return s;
}

Tensor two_y(const Tensor& y) {
    Tensor g = y;
    for (double& v : g.data) v *= 2.0;
    return g;
}

}  // namespace

TEST_CASE("affine backward survives finite-difference checking") {
    Rng rng(2024);
    Tensor x = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);

    const auto loss = [&] { return sq_sum(cardioxnet::affine(x, w, b)); };
    const Tensor y = cardioxnet::affine(x, w, b);
    const auto g = cardioxnet::affine_backward(x, w, two_y(y));

    const GradCheckReport rep = grad_check(
        {
            {"x", x.data.data(), g.d_input.data.data(), x.numel()},
            {"w", w.data.data(), g.d_weights.data.data(), w.numel()},
            {"b", b.data.data(), g.d_bias.data.data(), b.numel()},
        },
        loss, 1e-6);
    INFO(rep.describe());
    REQUIRE(rep.ok);
    REQUIRE(rep.checked == 4 + 12 + 3);
}

TEST_CASE("conv1d backward survives finite-difference checking") {
    Rng rng(2025);
    for (const cardioxnet::Padding p : {cardioxnet::Padding::valid, cardioxnet::Padding::same}) {
        Tensor x = random_tensor({2, 9}, rng);
        Tensor w = random_tensor({3, 2, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        const cardioxnet::Conv1dSpec spec{.kernel_len = 3, .stride = 2, .padding = p,
                                          .in_channels = 2, .out_channels = 3};

        const auto loss = [&] { return sq_sum(cardioxnet::conv1d(x, spec, w, b)); };
        const Tensor y = cardioxnet::conv1d(x, spec, w, b);
        const auto g = cardioxnet::conv1d_backward(x, spec, w, two_y(y));

        const GradCheckReport rep = grad_check(
            {
                {"x", x.data.data(), g.d_input.data.data(), x.numel()},
                {"w", w.data.data(), g.d_weights.data.data(), w.numel()},
                {"b", b.data.data(), g.d_bias.data.data(), b.numel()},
            },
            loss, 1e-4);
        INFO(rep.describe());
        REQUIRE(rep.ok);
    }
}

TEST_CASE("conv2d backward survives finite-difference checking") {
    Rng rng(2026);
    Tensor x = random_tensor({2, 5, 6}, rng);
    Tensor w = random_tensor({2, 2, 3, 3}, rng);
    Tensor b = random_tensor({2}, rng);
    const cardioxnet::Conv2dSpec spec{.kernel_h = 3, .kernel_w = 3, .stride = 2,
                                      .padding = cardioxnet::Padding::same,
                                      .in_channels = 2, .out_channels = 2};

    const auto loss = [&] { return sq_sum(cardioxnet::conv2d(x, spec, w, b)); };
    const Tensor y = cardioxnet::conv2d(x, spec, w, b);
    const auto g = cardioxnet::conv2d_backward(x, spec, w, two_y(y));

    const GradCheckReport rep = grad_check(
        {
            {"x", x.data.data(), g.d_input.data.data(), x.numel()},
            {"w", w.data.data(), g.d_weights.data.data(), w.numel()},
            {"b", b.data.data(), g.d_bias.data.data(), b.numel()},
        },
        loss, 1e-4);
    INFO(rep.describe());
    REQUIRE(rep.ok);
}

TEST_CASE("relu gradient checks away from the kink") {
    Rng rng(55);
    Tensor x = Tensor::zeros({20});
    // Keep every coordinate at least 0.1 away from zero so the finite
    // difference never straddles the nondifferentiable point.
    for (double& v : x.data) {
        do {
            v = rng.gaussian();
        } while (std::fabs(v) <= 0.1);
    }

    const auto loss = [&] {
        double s = 0.0;
        for (double v : x.data) s += std::max(0.0, v) * std::max(0.0, v);
        return s;
    };
    Tensor grad = Tensor::zeros({20});
    for (std::size_t i = 0; i < 20; ++i) {
        grad.data[i] = x.data[i] > 0.0 ? 2.0 * x.data[i] : 0.0;
    }

    const GradCheckReport rep =
        grad_check({{"x", x.data.data(), grad.data.data(), x.numel()}}, loss, 1e-6);
    INFO(rep.describe());
    REQUIRE(rep.ok);
}

TEST_CASE("a corrupted backward pass is rejected") {
    Rng rng(77);
    Tensor x = random_tensor({4}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);

    const auto loss = [&] { return sq_sum(cardioxnet::affine(x, w, b)); };
    const Tensor y = cardioxnet::affine(x, w, b);
    auto g = cardioxnet::affine_backward(x, w, two_y(y));
    // Gradient deliberately doubled: the checker must notice.
    for (double& v : g.d_weights.data) v *= 2.0;

    const GradCheckReport rep = grad_check(
        {
            {"w", w.data.data(), g.d_weights.data.data(), w.numel()},
        },
        loss, 1e-4);
    REQUIRE_FALSE(rep.ok);
    REQUIRE(rep.worst.name == "w");
}

TEST_CASE("non-finite analytic gradients abort with a location") {
    Tensor x({2}, {1.0, 2.0});
    Tensor grad({2}, {1.0, std::nan("")});
    const auto loss = [&] { return x.data[0] + x.data[1]; };
    REQUIRE_THROWS_AS(
        grad_check({{"x", x.data.data(), grad.data.data(), 2}}, loss, 1e-4),
        cardioxnet::NumericError);
}
