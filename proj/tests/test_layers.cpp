#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cardioxnet/gradcheck.hpp"
#include "cardioxnet/layers.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/tensor.hpp"
#include "oracles.hpp"

using namespace cardioxnet;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = rng.gaussian() * scale;
    return t;
}

void randomize_lstm(LstmParams& p, Rng& rng, double scale = 0.5) {
    for (Tensor* t : {&p.w_xi, &p.w_xf, &p.w_xo, &p.w_xg, &p.w_hi, &p.w_hf, &p.w_ho, &p.w_hg,
                      &p.b_i, &p.b_f, &p.b_o, &p.b_g}) {
        for (double& v : t->data) v = rng.gaussian() * scale;
    }
    if (p.peepholes) {
        for (Tensor* t : {&p.p_i, &p.p_f, &p.p_o}) {
            for (double& v : t->data) v = rng.gaussian() * scale;
        }
    }
}

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

// Re-derivation of the cell update, one scalar at a time, kept deliberately
// separate from the library's vectorized path.
LstmState scalar_lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& p) {
    const std::size_t H = p.hidden_size;
    const std::size_t D = p.input_size;
    LstmState next = make_lstm_state(H);
    std::vector<double> o_pre(H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
        double zi = p.b_i(k), zf = p.b_f(k), zo = p.b_o(k), zg = p.b_g(k);
        for (std::size_t d = 0; d < D; ++d) {
            zi += p.w_xi(k, d) * x(d);
            zf += p.w_xf(k, d) * x(d);
            zo += p.w_xo(k, d) * x(d);
            zg += p.w_xg(k, d) * x(d);
        }
        for (std::size_t j = 0; j < H; ++j) {
            zi += p.w_hi(k, j) * prev.h(j);
            zf += p.w_hf(k, j) * prev.h(j);
            zo += p.w_ho(k, j) * prev.h(j);
            zg += p.w_hg(k, j) * prev.h(j);
        }
        if (p.peepholes) {
            zi += p.p_i(k) * prev.c(k);
            zf += p.p_f(k) * prev.c(k);
        }
        const double i = 1.0 / (1.0 + std::exp(-zi));
        const double f = 1.0 / (1.0 + std::exp(-zf));
        const double g = std::tanh(zg);
        next.c(k) = f * prev.c(k) + i * g;
        o_pre[k] = zo;
    }
    for (std::size_t k = 0; k < H; ++k) {
        double zo = o_pre[k];
        if (p.peepholes) zo += p.p_o(k) * next.c(k);
        const double o = 1.0 / (1.0 + std::exp(-zo));
        next.h(k) = o * std::tanh(next.c(k));
    }
    return next;
}

}  // namespace

TEST_CASE("relu clamps negatives") {
    const Tensor x({3}, {-1.0, 0.0, 2.0});
    REQUIRE(relu(x).data == std::vector<double>{0.0, 0.0, 2.0});
    const Tensor neg = Tensor::full({7}, -3.5);
    for (double v : relu(neg).data) REQUIRE(v == 0.0);
}

TEST_CASE("relu(x) + relu(-x) reconstructs |x|") {
    Rng rng(3);
    Tensor x = random_tensor({50}, rng);
    Tensor nx = x;
    for (double& v : nx.data) v = -v;
    const Tensor a = relu(x), b = relu(nx);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        REQUIRE(a.data[i] + b.data[i] == std::fabs(x.data[i]));
    }
}

TEST_CASE("softmax symmetry, hand values, and shift invariance") {
    const Tensor uniform = Tensor::full({5}, 1.3);
    for (double v : softmax(uniform).data) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.2, 1e-15));

    const Tensor two({2}, {0.0, std::log(2.0)});
    const Tensor p = softmax(two);
    REQUIRE_THAT(p.data[0], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
    REQUIRE_THAT(p.data[1], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));

    Rng rng(4);
    Tensor z = random_tensor({6}, rng);
    const Tensor base = softmax(z);
    for (double& v : z.data) v += 123.456;
    const Tensor shifted = softmax(z);
    for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE_THAT(shifted.data[i], Catch::Matchers::WithinAbs(base.data[i], 1e-12));
    }
}

TEST_CASE("softmax output lies on the probability simplex") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor z = random_tensor({5}, rng, 10.0);
        const Tensor p = softmax(z);
        double sum = 0.0;
        for (double v : p.data) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("batchnorm train mode standardizes each channel") {
    Rng rng(20);
    Tensor x = random_tensor({8, 3, 4}, rng, 2.5);
    BatchNormParams bn = make_batchnorm(3);
    const Tensor y = batchnorm_forward(x, bn, true);

    const std::size_t B = 8, C = 3, S = 4;
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < S; ++i) mean += y(b, c, i);
        mean /= B * S;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < S; ++i) var += (y(b, c, i) - mean) * (y(b, c, i) - mean);
        var /= B * S;
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-9));
        // Output variance is v/(v+eps), i.e. 1 up to the epsilon regularizer.
        REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-4));
    }
}

TEST_CASE("batchnorm applies gamma and beta after standardizing") {
    Rng rng(21);
    Tensor x = random_tensor({16, 2}, rng);
    BatchNormParams bn = make_batchnorm(2);
    bn.gamma = Tensor::full({2}, 2.0);
    bn.beta = Tensor::full({2}, 3.0);
    const Tensor y = batchnorm_forward(x, bn, true);

    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t b = 0; b < 16; ++b) mean += y(b, c);
        mean /= 16;
        for (std::size_t b = 0; b < 16; ++b) var += (y(b, c) - mean) * (y(b, c) - mean);
        var /= 16;
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(3.0, 1e-9));
        REQUIRE_THAT(std::sqrt(var), Catch::Matchers::WithinAbs(2.0, 1e-3));
    }
}

TEST_CASE("batchnorm infer mode evaluates the closed form on running stats") {
    BatchNormParams bn = make_batchnorm(1);
    bn.running_mean(0) = 1.5;
    bn.running_var(0) = 4.0;
    bn.gamma(0) = 3.0;
    bn.beta(0) = -1.0;

    const Tensor x({2, 1}, {5.5, 1.5});
    const Tensor y = batchnorm_forward(x, bn, false);
    const double inv = 1.0 / std::sqrt(4.0 + bn.epsilon);
    REQUIRE_THAT(y(0, 0), Catch::Matchers::WithinAbs((5.5 - 1.5) * inv * 3.0 - 1.0, 1e-12));
    REQUIRE_THAT(y(1, 0), Catch::Matchers::WithinAbs(-1.0, 1e-12));
}

TEST_CASE("batchnorm rejects train mode on a batch of one") {
    Tensor x = Tensor::zeros({1, 3});
    BatchNormParams bn = make_batchnorm(3);
    REQUIRE_THROWS_AS(batchnorm_forward(x, bn, true), std::invalid_argument);
    REQUIRE_NOTHROW(batchnorm_forward(x, bn, false));
}

TEST_CASE("batchnorm updates running statistics with momentum") {
    Rng rng(22);
    Tensor x = random_tensor({32, 1}, rng);
    double mean = 0.0, var = 0.0;
    for (double v : x.data) mean += v;
    mean /= 32;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= 32;

    BatchNormParams bn = make_batchnorm(1);
    batchnorm_forward(x, bn, true);
    REQUIRE_THAT(bn.running_mean(0), Catch::Matchers::WithinAbs(0.1 * mean, 1e-12));
    REQUIRE_THAT(bn.running_var(0), Catch::Matchers::WithinAbs(0.9 + 0.1 * var, 1e-12));
}

TEST_CASE("batchnorm train backward survives finite differences") {
    Rng rng(23);
    Tensor x = random_tensor({4, 2, 3}, rng);
    BatchNormParams bn = make_batchnorm(2);
    bn.gamma(0) = 1.3;
    bn.gamma(1) = 0.7;
    bn.beta(0) = -0.2;

    const auto loss = [&] {
        BatchNormParams copy = bn;
        return sq_sum(batchnorm_forward(x, copy, true));
    };
    BatchNormCache cache;
    BatchNormParams work = bn;
    const Tensor y = batchnorm_forward(x, work, true, &cache);
    const BatchNormGrads g = batchnorm_backward(bn, cache, two_y(y));

    const GradCheckReport rep = grad_check(
        {
            {"x", x.data.data(), g.d_input.data.data(), x.numel()},
            {"gamma", bn.gamma.data.data(), g.d_gamma.data.data(), 2},
            {"beta", bn.beta.data.data(), g.d_beta.data.data(), 2},
        },
        loss, 1e-4);
    INFO(rep.describe());
    REQUIRE(rep.ok);
}

TEST_CASE("dropout identity cases") {
    Rng rng(30);
    Tensor x = random_tensor({40}, rng);
    Rng d1(1);
    REQUIRE(dropout_forward(x, 0.0, true, d1).data == x.data);
    Rng d2(2);
    REQUIRE(dropout_forward(x, 0.9, false, d2).data == x.data);
    Rng d3(3);
    REQUIRE_THROWS_AS(dropout_forward(x, 1.0, true, d3), std::invalid_argument);
}

TEST_CASE("dropout preserves the mean at rate one half") {
    const Tensor ones = Tensor::full({100000}, 1.0);
    Rng rng(31);
    const Tensor y = dropout_forward(ones, 0.5, true, rng);
    double mean = 0.0;
    for (double v : y.data) mean += v;
    mean /= static_cast<double>(y.numel());
    REQUIRE(mean >= 0.98);
    REQUIRE(mean <= 1.02);
}

TEST_CASE("dropout backward follows the frozen mask") {
    Rng rng(32);
    Tensor x = random_tensor({64}, rng);
    std::vector<bool> mask;
    Rng drop(99);
    dropout_forward(x, 0.4, true, drop, &mask);

    const double scale = 1.0 / 0.6;
    const auto loss = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double v = mask[i] ? x.data[i] * scale : 0.0;
            s += v * v;
        }
        return s;
    };
    Tensor masked = Tensor::zeros({64});
    for (std::size_t i = 0; i < 64; ++i) masked.data[i] = mask[i] ? x.data[i] * scale : 0.0;
    const Tensor analytic = dropout_backward(two_y(masked), mask, 0.4);

    const GradCheckReport rep =
        grad_check({{"x", x.data.data(), analytic.data.data(), x.numel()}}, loss, 1e-6);
    INFO(rep.describe());
    REQUIRE(rep.ok);
}

TEST_CASE("lstm_step with all-zero parameters yields zero state") {
    LstmParams p = make_lstm(3, 4);
    const Tensor x({3}, {1.0, -2.0, 0.5});
    const LstmState next = lstm_step(x, make_lstm_state(4), p);
    for (double v : next.c.data) REQUIRE(v == 0.0);
    for (double v : next.h.data) REQUIRE(v == 0.0);
}

TEST_CASE("lstm_step carries the cell when the forget gate saturates") {
    LstmParams p = make_lstm(2, 3);
    p.b_f = Tensor::full({3}, 20.0);
    // Input gate stays at sigmoid(-20) ~ 0, so c_t ~ f * c_prev ~ c_prev.
    p.b_i = Tensor::full({3}, -20.0);
    LstmState prev = make_lstm_state(3);
    prev.c = Tensor({3}, {0.3, -0.7, 1.1});
    const Tensor x({2}, {5.0, -5.0});
    const LstmState next = lstm_step(x, prev, p);
    for (std::size_t k = 0; k < 3; ++k) {
        REQUIRE_THAT(next.c(k), Catch::Matchers::WithinAbs(prev.c(k), 1e-8));
    }
}

TEST_CASE("lstm_step matches a scalar re-derivation") {
    for (const bool peep : {false, true}) {
        Rng rng(peep ? 41 : 40);
        LstmParams p = make_lstm(2, 3, peep);
        randomize_lstm(p, rng);
        LstmState prev = make_lstm_state(3);
        prev.c = random_tensor({3}, rng);
        prev.h = random_tensor({3}, rng, 0.5);
        const Tensor x = random_tensor({2}, rng);

        const LstmState got = lstm_step(x, prev, p);
        const LstmState want = scalar_lstm_step(x, prev, p);
        for (std::size_t k = 0; k < 3; ++k) {
            REQUIRE_THAT(got.c(k), Catch::Matchers::WithinAbs(want.c(k), 1e-15));
            REQUIRE_THAT(got.h(k), Catch::Matchers::WithinAbs(want.h(k), 1e-15));
        }
    }
}

TEST_CASE("lstm hidden output is bounded by the gate structure") {
    Rng rng(42);
    LstmParams p = make_lstm(4, 5);
    randomize_lstm(p, rng, 2.0);
    LstmState s = make_lstm_state(5);
    for (int t = 0; t < 10; ++t) {
        const Tensor x = random_tensor({4}, rng, 3.0);
        const LstmState prev = s;
        s = lstm_step(x, prev, p);
        for (std::size_t k = 0; k < 5; ++k) {
            REQUIRE(std::fabs(s.h(k)) <= 1.0);
            REQUIRE(std::fabs(s.c(k)) <= std::fabs(prev.c(k)) + 1.0 + 1e-12);
        }
    }
}

TEST_CASE("bilstm on a single step is the concatenation of two lstm steps") {
    Rng rng(50);
    LstmParams fwd = make_lstm(3, 2), bwd = make_lstm(3, 2);
    randomize_lstm(fwd, rng);
    randomize_lstm(bwd, rng);
    const Tensor seq = random_tensor({1, 3}, rng);
    Tensor x = Tensor::zeros({3});
    for (std::size_t d = 0; d < 3; ++d) x(d) = seq(0, d);

    const Tensor out = bilstm_forward(seq, fwd, bwd);
    const LstmState sf = lstm_step(x, make_lstm_state(2), fwd);
    const LstmState sb = lstm_step(x, make_lstm_state(2), bwd);
    REQUIRE(out.shape == std::vector<std::size_t>{1, 4});
    REQUIRE(out(0, 0) == sf.h(0));
    REQUIRE(out(0, 1) == sf.h(1));
    REQUIRE(out(0, 2) == sb.h(0));
    REQUIRE(out(0, 3) == sb.h(1));
}

TEST_CASE("bilstm halves mirror each other on palindromic input") {
    Rng rng(51);
    LstmParams p = make_lstm(2, 3);
    randomize_lstm(p, rng);
    const std::size_t T = 5;
    Tensor seq = Tensor::zeros({T, 2});
    for (std::size_t t = 0; t <= T / 2; ++t) {
        for (std::size_t d = 0; d < 2; ++d) {
            const double v = rng.gaussian();
            seq(t, d) = v;
            seq(T - 1 - t, d) = v;
        }
    }
    const Tensor out = bilstm_forward(seq, p, p);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            REQUIRE(out(t, 3 + k) == out(T - 1 - t, k));
        }
    }
}

TEST_CASE("bilstm of a reversed sequence swaps directions exactly") {
    Rng rng(52);
    LstmParams fwd = make_lstm(2, 3), bwd = make_lstm(2, 3);
    randomize_lstm(fwd, rng);
    randomize_lstm(bwd, rng);
    const std::size_t T = 6;
    const Tensor seq = random_tensor({T, 2}, rng);
    Tensor rev = Tensor::zeros({T, 2});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t d = 0; d < 2; ++d) rev(t, d) = seq(T - 1 - t, d);

    const Tensor a = bilstm_forward(seq, fwd, bwd);
    const Tensor b = bilstm_forward(rev, bwd, fwd);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            REQUIRE(a(t, k) == b(T - 1 - t, 3 + k));
            REQUIRE(a(t, 3 + k) == b(T - 1 - t, k));
        }
    }
}

TEST_CASE("bilstm with zero parameters emits zeros and rejects empty input") {
    LstmParams z = make_lstm(2, 2);
    const Tensor seq = Tensor::full({4, 2}, 3.0);
    for (double v : bilstm_forward(seq, z, z).data) REQUIRE(v == 0.0);
    REQUIRE_THROWS_AS(bilstm_forward(Tensor::zeros({2, 3}), z, z), std::invalid_argument);
}

TEST_CASE("bilstm backward survives finite differences") {
    for (const bool peep : {false, true}) {
        Rng rng(peep ? 61 : 60);
        LstmParams fwd = make_lstm(2, 3, peep), bwd = make_lstm(2, 3, peep);
        randomize_lstm(fwd, rng);
        randomize_lstm(bwd, rng);
        Tensor seq = random_tensor({4, 2}, rng);

        const auto loss = [&] { return sq_sum(bilstm_forward(seq, fwd, bwd)); };
        BilstmCache cache;
        const Tensor y = bilstm_forward(seq, fwd, bwd, &cache);
        const BilstmGrads g = bilstm_backward(fwd, bwd, cache, two_y(y));

        std::vector<GradCheckParam> params = {
            {"seq", seq.data.data(), g.d_seq.data.data(), seq.numel()},
            {"fwd.w_xi", fwd.w_xi.data.data(), g.fwd.w_xi.data.data(), fwd.w_xi.numel()},
            {"fwd.w_hf", fwd.w_hf.data.data(), g.fwd.w_hf.data.data(), fwd.w_hf.numel()},
            {"fwd.w_ho", fwd.w_ho.data.data(), g.fwd.w_ho.data.data(), fwd.w_ho.numel()},
            {"fwd.w_xg", fwd.w_xg.data.data(), g.fwd.w_xg.data.data(), fwd.w_xg.numel()},
            {"fwd.b_f", fwd.b_f.data.data(), g.fwd.b_f.data.data(), fwd.b_f.numel()},
            {"bwd.w_hi", bwd.w_hi.data.data(), g.bwd.w_hi.data.data(), bwd.w_hi.numel()},
            {"bwd.w_xo", bwd.w_xo.data.data(), g.bwd.w_xo.data.data(), bwd.w_xo.numel()},
            {"bwd.b_g", bwd.b_g.data.data(), g.bwd.b_g.data.data(), bwd.b_g.numel()},
        };
        if (peep) {
            params.push_back({"fwd.p_i", fwd.p_i.data.data(), g.fwd.p_i.data.data(), 3});
            params.push_back({"fwd.p_f", fwd.p_f.data.data(), g.fwd.p_f.data.data(), 3});
            params.push_back({"fwd.p_o", fwd.p_o.data.data(), g.fwd.p_o.data.data(), 3});
            params.push_back({"bwd.p_o", bwd.p_o.data.data(), g.bwd.p_o.data.data(), 3});
        }
        const GradCheckReport rep = grad_check(params, loss, 1e-4);
        INFO("peepholes=" << peep << " " << rep.describe());
        REQUIRE(rep.ok);
    }
}

TEST_CASE("fire module squeeze ratio and shape") {
    FireParams p = make_fire(4, 16, 64, 64);
    REQUIRE_THAT(fire_squeeze_ratio(p), Catch::Matchers::WithinAbs(0.125, 1e-15));

    Rng rng(70);
    FireParams small = make_fire(2, 2, 3, 3);
    for (Tensor* t : {&small.squeeze_w, &small.expand1_w, &small.expand3_w}) {
        for (double& v : t->data) v = rng.gaussian();
    }
    const Tensor x = random_tensor({2, 4, 5}, rng);
    const Tensor y = fire_forward(x, small);
    REQUIRE(y.shape == std::vector<std::size_t>{6, 4, 5});
}

TEST_CASE("fire module with zero 3x3 weights leaves those channels silent") {
    Rng rng(71);
    FireParams p = make_fire(2, 2, 2, 3);
    for (double& v : p.squeeze_w.data) v = rng.gaussian();
    for (double& v : p.expand1_w.data) v = rng.gaussian();
    // expand3 weights and bias stay zero.
    const Tensor x = random_tensor({2, 3, 3}, rng);
    const Tensor y = fire_forward(x, p);
    for (std::size_t c = 2; c < 5; ++c) {
        for (std::size_t h = 0; h < 3; ++h) {
            for (std::size_t w = 0; w < 3; ++w) REQUIRE(y(c, h, w) == 0.0);
        }
    }
}

TEST_CASE("fire module equals a composition of convolution oracle calls") {
    Rng rng(72);
    FireParams p = make_fire(2, 2, 2, 2);
    for (Tensor* t : {&p.squeeze_w, &p.squeeze_b, &p.expand1_w, &p.expand1_b, &p.expand3_w,
                      &p.expand3_b}) {
        for (double& v : t->data) v = rng.gaussian();
    }
    const Tensor x = random_tensor({2, 4, 4}, rng);
    const Tensor got = fire_forward(x, p);

    Tensor sq = oracle::conv2d(x, p.squeeze_w, p.squeeze_b, 1, false);
    for (double& v : sq.data) v = std::max(0.0, v);
    Tensor e1 = oracle::conv2d(sq, p.expand1_w, p.expand1_b, 1, false);
    Tensor e3 = oracle::conv2d(sq, p.expand3_w, p.expand3_b, 1, true);
    for (double& v : e1.data) v = std::max(0.0, v);
    for (double& v : e3.data) v = std::max(0.0, v);

    for (std::size_t i = 0; i < e1.numel(); ++i) REQUIRE(got.data[i] == e1.data[i]);
    for (std::size_t i = 0; i < e3.numel(); ++i) REQUIRE(got.data[e1.numel() + i] == e3.data[i]);
}

TEST_CASE("fire parameter tensors match the closed-form count") {
    const std::size_t C = 3, s = 2, e1 = 4, e3 = 5;
    const FireParams p = make_fire(C, s, e1, e3);
    const std::size_t total = p.squeeze_w.numel() + p.squeeze_b.numel() + p.expand1_w.numel() +
                              p.expand1_b.numel() + p.expand3_w.numel() + p.expand3_b.numel();
    REQUIRE(total == C * s + s + s * e1 + e1 + 9 * s * e3 + e3);
}

TEST_CASE("fire backward survives finite differences") {
    Rng rng(73);
    FireParams p = make_fire(2, 2, 2, 2);
    for (Tensor* t : {&p.squeeze_w, &p.squeeze_b, &p.expand1_w, &p.expand1_b, &p.expand3_w,
                      &p.expand3_b}) {
        for (double& v : t->data) v = rng.gaussian();
    }
    Tensor x = random_tensor({2, 3, 4}, rng);

    const auto loss = [&] { return sq_sum(fire_forward(x, p)); };
    FireCache cache;
    const Tensor y = fire_forward(x, p, &cache);
    const FireGrads g = fire_backward(p, cache, two_y(y));

    const GradCheckReport rep = grad_check(
        {
            {"x", x.data.data(), g.d_input.data.data(), x.numel()},
            {"squeeze_w", p.squeeze_w.data.data(), g.squeeze_w.data.data(), p.squeeze_w.numel()},
            {"squeeze_b", p.squeeze_b.data.data(), g.squeeze_b.data.data(), p.squeeze_b.numel()},
            {"expand1_w", p.expand1_w.data.data(), g.expand1_w.data.data(), p.expand1_w.numel()},
            {"expand3_w", p.expand3_w.data.data(), g.expand3_w.data.data(), p.expand3_w.numel()},
            {"expand3_b", p.expand3_b.data.data(), g.expand3_b.data.data(), p.expand3_b.numel()},
        },
        loss, 1e-4);
    INFO(rep.describe());
    REQUIRE(rep.ok);
}

TEST_CASE("global spatial max pooling and its backward routing") {
    const Tensor x({2, 2, 2}, {1.0, 7.0, 3.0, 2.0, -1.0, -9.0, -2.0, -5.0});
    std::vector<std::size_t> argmax;
    const Tensor y = global_maxpool2d(x, &argmax);
    REQUIRE(y.data == std::vector<double>{7.0, -1.0});

    const Tensor gy({2}, {10.0, 4.0});
    const Tensor gx = global_maxpool2d_backward(x, gy, argmax);
    REQUIRE(gx.data == std::vector<double>{0.0, 10.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0});
}
