#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cardioxnet/errors.hpp"
#include "cardioxnet/ops.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/tensor.hpp"

namespace cardioxnet {

inline Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

// Subgradient 0 at exactly 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (x.data[i] <= 0.0) g.data[i] = 0.0;
    }
    return g;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Max-subtracted softmax; safe for arbitrarily large logits.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.shape[0] < 2) {
        throw std::invalid_argument("softmax: wants a vector of at least 2 logits, got " +
                                    shape_str(logits.shape));
    }
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    Tensor p = logits;
    double sum = 0.0;
    for (double& v : p.data) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : p.data) v /= sum;
    return p;
}

// ---------------------------------------------------------------------------
// Batch normalization over [B x C x spatial...]; statistics are per channel
// across the batch and all spatial positions.

struct BatchNormParams {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.9;
    double epsilon = 1e-5;
};

inline BatchNormParams make_batchnorm(std::size_t channels) {
    BatchNormParams p{Tensor::full({channels}, 1.0), Tensor::zeros({channels}),
                      Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
    return p;
}

struct BatchNormCache {
    Tensor x_hat;       // normalized input, same shape as x
    Tensor inv_std;     // per channel
    bool train = true;
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t spatial = 0;
};

namespace detail {

inline void check_bn_input(const Tensor& x, const BatchNormParams& p) {
    if (x.rank() < 2) {
        throw std::invalid_argument("batchnorm: input shape " + shape_str(x.shape) +
                                    " wants at least [batch x channels]");
    }
    if (x.shape[1] != p.gamma.shape[0]) {
        throw std::invalid_argument("batchnorm: input has " + std::to_string(x.shape[1]) +
                                    " channels, params have " + std::to_string(p.gamma.shape[0]));
    }
}

}  // namespace detail

// Train mode normalizes with biased batch statistics and folds them into the
// running estimates: running = momentum * running + (1 - momentum) * batch.
// Infer mode normalizes with the running estimates and leaves them untouched.
inline Tensor batchnorm_forward(const Tensor& x, BatchNormParams& params, bool train,
                                BatchNormCache* cache = nullptr) {
    detail::check_bn_input(x, params);
    const std::size_t B = x.shape[0];
    const std::size_t C = x.shape[1];
    const std::size_t spatial = x.numel() / (B * C);
    if (train && B < 2) {
        throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2, got " +
                                    std::to_string(B));
    }

    Tensor mean = Tensor::zeros({C});
    Tensor var = Tensor::zeros({C});
    if (train) {
        const double n = static_cast<double>(B * spatial);
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t base = (b * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) s += x.data[base + i];
            }
            mean(c) = s / n;
            double sq = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t base = (b * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const double d = x.data[base + i] - mean(c);
                    sq += d * d;
                }
            }
            var(c) = sq / n;
            params.running_mean(c) =
                params.momentum * params.running_mean(c) + (1.0 - params.momentum) * mean(c);
            params.running_var(c) =
                params.momentum * params.running_var(c) + (1.0 - params.momentum) * var(c);
        }
    } else {
        mean = params.running_mean;
        var = params.running_var;
    }

    Tensor inv_std = Tensor::zeros({C});
    for (std::size_t c = 0; c < C; ++c) inv_std(c) = 1.0 / std::sqrt(var(c) + params.epsilon);

    Tensor y = Tensor::zeros(x.shape);
    Tensor x_hat = Tensor::zeros(x.shape);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t base = (b * C + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                const double xh = (x.data[base + i] - mean(c)) * inv_std(c);
                x_hat.data[base + i] = xh;
                y.data[base + i] = params.gamma(c) * xh + params.beta(c);
            }
        }
    }
    if (cache) *cache = {std::move(x_hat), std::move(inv_std), train, B, C, spatial};
    return y;
}

struct BatchNormGrads {
    Tensor d_input;
    Tensor d_gamma;
    Tensor d_beta;
};

inline BatchNormGrads batchnorm_backward(const BatchNormParams& params, const BatchNormCache& cache,
                                         const Tensor& grad_out) {
    const std::size_t B = cache.batch;
    const std::size_t C = cache.channels;
    const std::size_t spatial = cache.spatial;
    const double n = static_cast<double>(B * spatial);

    BatchNormGrads g{Tensor::zeros(grad_out.shape), Tensor::zeros({C}), Tensor::zeros({C})};
    for (std::size_t c = 0; c < C; ++c) {
        double sum_gy = 0.0;
        double sum_gy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                sum_gy += grad_out.data[base + i];
                sum_gy_xhat += grad_out.data[base + i] * cache.x_hat.data[base + i];
            }
        }
        g.d_gamma(c) = sum_gy_xhat;
        g.d_beta(c) = sum_gy;

        const double scale = params.gamma(c) * cache.inv_std(c);
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                if (cache.train) {
                    // d/dx of ((x - mean)/std): the mean and variance both
                    // depend on x, hence the two correction terms.
                    g.d_input.data[base + i] =
                        scale / n *
                        (n * grad_out.data[base + i] - sum_gy -
                         cache.x_hat.data[base + i] * sum_gy_xhat);
                } else {
                    g.d_input.data[base + i] = scale * grad_out.data[base + i];
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
// inference is the identity.

inline Tensor dropout_forward(const Tensor& x, double rate, bool train, Rng& rng,
                              std::vector<bool>* mask_out = nullptr) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) {
        if (mask_out) mask_out->assign(x.numel(), true);
        return x;
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor y = x;
    if (mask_out) mask_out->assign(x.numel(), true);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        if (rng.uniform() < rate) {
            y.data[i] = 0.0;
            if (mask_out) (*mask_out)[i] = false;
        } else {
            y.data[i] *= scale;
        }
    }
    return y;
}

inline Tensor dropout_backward(const Tensor& grad_out, const std::vector<bool>& mask, double rate) {
    const double scale = 1.0 / (1.0 - rate);
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        g.data[i] = mask[i] ? g.data[i] * scale : 0.0;
    }
    return g;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gates i, f, o are sigmoids, candidate g is tanh:
//   c_t = f (.) c_{t-1} + i (.) g,   h_t = o (.) tanh(c_t).
// Optional diagonal peephole terms feed c_{t-1} into i and f and c_t into o;
// they are off by default.

struct LstmParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    bool peepholes = false;
    Tensor w_xi, w_xf, w_xo, w_xg;  // [H x D]
    Tensor w_hi, w_hf, w_ho, w_hg;  // [H x H]
    Tensor b_i, b_f, b_o, b_g;      // [H]
    Tensor p_i, p_f, p_o;           // [H]; read only when peepholes is set
};

inline LstmParams make_lstm(std::size_t input_size, std::size_t hidden_size, bool peepholes = false) {
    if (input_size == 0 || hidden_size == 0) {
        throw std::invalid_argument("make_lstm: sizes must be >= 1");
    }
    LstmParams p;
    p.input_size = input_size;
    p.hidden_size = hidden_size;
    p.peepholes = peepholes;
    const std::vector<std::size_t> xd = {hidden_size, input_size};
    const std::vector<std::size_t> hd = {hidden_size, hidden_size};
    p.w_xi = Tensor::zeros(xd); p.w_xf = Tensor::zeros(xd);
    p.w_xo = Tensor::zeros(xd); p.w_xg = Tensor::zeros(xd);
    p.w_hi = Tensor::zeros(hd); p.w_hf = Tensor::zeros(hd);
    p.w_ho = Tensor::zeros(hd); p.w_hg = Tensor::zeros(hd);
    p.b_i = Tensor::zeros({hidden_size}); p.b_f = Tensor::zeros({hidden_size});
    p.b_o = Tensor::zeros({hidden_size}); p.b_g = Tensor::zeros({hidden_size});
    p.p_i = Tensor::zeros({hidden_size}); p.p_f = Tensor::zeros({hidden_size});
    p.p_o = Tensor::zeros({hidden_size});
    return p;
}

struct LstmState {
    Tensor c;
    Tensor h;
};

inline LstmState make_lstm_state(std::size_t hidden_size) {
    return {Tensor::zeros({hidden_size}), Tensor::zeros({hidden_size})};
}

namespace detail {

// out += W * v, plain row-major matvec.
inline void matvec_acc(const Tensor& w, const Tensor& v, Tensor& out) {
    const std::size_t rows = w.shape[0];
    const std::size_t cols = w.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = out(r);
        for (std::size_t c = 0; c < cols; ++c) acc += w(r, c) * v(c);
        out(r) = acc;
    }
}

// out += W^T * g.
inline void matvec_t_acc(const Tensor& w, const Tensor& g, Tensor& out) {
    const std::size_t rows = w.shape[0];
    const std::size_t cols = w.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g(r);
        for (std::size_t c = 0; c < cols; ++c) out(c) += w(r, c) * gr;
    }
}

// dW += g (outer) v.
inline void outer_acc(const Tensor& g, const Tensor& v, Tensor& dw) {
    const std::size_t rows = dw.shape[0];
    const std::size_t cols = dw.shape[1];
    for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g(r);
        for (std::size_t c = 0; c < cols; ++c) dw(r, c) += gr * v(c);
    }
}

}  // namespace detail

struct LstmStepCache {
    Tensor x, h_prev, c_prev;
    Tensor i, f, o, g;
    Tensor c, tanh_c;
};

inline LstmState lstm_step(const Tensor& x, const LstmState& prev, const LstmParams& params,
                           LstmStepCache* cache = nullptr) {
    const std::size_t H = params.hidden_size;
    if (x.rank() != 1 || x.shape[0] != params.input_size || prev.h.shape[0] != H ||
        prev.c.shape[0] != H) {
        throw std::invalid_argument("lstm_step: input " + shape_str(x.shape) + " / state [" +
                                    std::to_string(prev.h.shape[0]) + "] do not match params (D=" +
                                    std::to_string(params.input_size) + ", H=" + std::to_string(H) +
                                    ")");
    }

    Tensor pre_i = params.b_i, pre_f = params.b_f, pre_o = params.b_o, pre_g = params.b_g;
    detail::matvec_acc(params.w_xi, x, pre_i);
    detail::matvec_acc(params.w_xf, x, pre_f);
    detail::matvec_acc(params.w_xo, x, pre_o);
    detail::matvec_acc(params.w_xg, x, pre_g);
    detail::matvec_acc(params.w_hi, prev.h, pre_i);
    detail::matvec_acc(params.w_hf, prev.h, pre_f);
    detail::matvec_acc(params.w_ho, prev.h, pre_o);
    detail::matvec_acc(params.w_hg, prev.h, pre_g);
    if (params.peepholes) {
        for (std::size_t k = 0; k < H; ++k) {
            pre_i(k) += params.p_i(k) * prev.c(k);
            pre_f(k) += params.p_f(k) * prev.c(k);
        }
    }

    Tensor i = Tensor::zeros({H}), f = Tensor::zeros({H}), g = Tensor::zeros({H});
    Tensor c = Tensor::zeros({H});
    for (std::size_t k = 0; k < H; ++k) {
        i(k) = sigmoid(pre_i(k));
        f(k) = sigmoid(pre_f(k));
        g(k) = std::tanh(pre_g(k));
        c(k) = f(k) * prev.c(k) + i(k) * g(k);
    }
    if (params.peepholes) {
        // The output gate peeks at the freshly updated cell.
        for (std::size_t k = 0; k < H; ++k) pre_o(k) += params.p_o(k) * c(k);
    }
    Tensor o = Tensor::zeros({H}), tanh_c = Tensor::zeros({H}), h = Tensor::zeros({H});
    for (std::size_t k = 0; k < H; ++k) {
        o(k) = sigmoid(pre_o(k));
        tanh_c(k) = std::tanh(c(k));
        h(k) = o(k) * tanh_c(k);
    }

    if (cache) *cache = {x, prev.h, prev.c, i, f, o, g, c, tanh_c};
    return {std::move(c), std::move(h)};
}

struct LstmGrads {
    Tensor w_xi, w_xf, w_xo, w_xg;
    Tensor w_hi, w_hf, w_ho, w_hg;
    Tensor b_i, b_f, b_o, b_g;
    Tensor p_i, p_f, p_o;
};

inline LstmGrads make_lstm_grads(const LstmParams& p) {
    LstmGrads g;
    g.w_xi = Tensor::zeros(p.w_xi.shape); g.w_xf = Tensor::zeros(p.w_xf.shape);
    g.w_xo = Tensor::zeros(p.w_xo.shape); g.w_xg = Tensor::zeros(p.w_xg.shape);
    g.w_hi = Tensor::zeros(p.w_hi.shape); g.w_hf = Tensor::zeros(p.w_hf.shape);
    g.w_ho = Tensor::zeros(p.w_ho.shape); g.w_hg = Tensor::zeros(p.w_hg.shape);
    g.b_i = Tensor::zeros(p.b_i.shape); g.b_f = Tensor::zeros(p.b_f.shape);
    g.b_o = Tensor::zeros(p.b_o.shape); g.b_g = Tensor::zeros(p.b_g.shape);
    g.p_i = Tensor::zeros(p.p_i.shape); g.p_f = Tensor::zeros(p.p_f.shape);
    g.p_o = Tensor::zeros(p.p_o.shape);
    return g;
}

// One direction over a [T x D] sequence; `reverse` scans t = T-1 .. 0 but the
// output row for time t is always stored at row t. Initial states are zero.
inline Tensor lstm_seq_forward(const Tensor& seq, const LstmParams& params, bool reverse,
                               std::vector<LstmStepCache>* caches = nullptr) {
    if (seq.rank() != 2 || seq.shape[1] != params.input_size) {
        throw std::invalid_argument("lstm_seq_forward: sequence " + shape_str(seq.shape) +
                                    " wants [T x " + std::to_string(params.input_size) + "]");
    }
    const std::size_t T = seq.shape[0];
    const std::size_t D = params.input_size;
    const std::size_t H = params.hidden_size;

    Tensor out = Tensor::zeros({T, H});
    if (caches) caches->assign(T, LstmStepCache{});
    LstmState state = make_lstm_state(H);
    for (std::size_t step = 0; step < T; ++step) {
        const std::size_t t = reverse ? T - 1 - step : step;
        Tensor x = Tensor::zeros({D});
        for (std::size_t d = 0; d < D; ++d) x(d) = seq(t, d);
        LstmStepCache cache;
        state = lstm_step(x, state, params, caches ? &cache : nullptr);
        if (caches) (*caches)[step] = std::move(cache);
        for (std::size_t k = 0; k < H; ++k) out(t, k) = state.h(k);
    }
    return out;
}

// BPTT for one direction. `grad_out` is [T x H] aligned to sequence rows;
// caches must come from lstm_seq_forward with the same `reverse` flag.
// Returns d_seq [T x D] and accumulates parameter grads into `grads`.
inline Tensor lstm_seq_backward(const LstmParams& params, const std::vector<LstmStepCache>& caches,
                                const Tensor& grad_out, bool reverse, LstmGrads& grads) {
    const std::size_t T = caches.size();
    const std::size_t D = params.input_size;
    const std::size_t H = params.hidden_size;

    Tensor d_seq = Tensor::zeros({T, D});
    Tensor dh_next = Tensor::zeros({H});
    Tensor dc_next = Tensor::zeros({H});
    for (std::size_t back = 0; back < T; ++back) {
        const std::size_t step = T - 1 - back;
        const std::size_t t = reverse ? T - 1 - step : step;
        const LstmStepCache& cc = caches[step];

        Tensor dh = dh_next;
        for (std::size_t k = 0; k < H; ++k) dh(k) += grad_out(t, k);

        Tensor dpre_o = Tensor::zeros({H});
        Tensor dc = dc_next;
        for (std::size_t k = 0; k < H; ++k) {
            const double do_k = dh(k) * cc.tanh_c(k);
            dpre_o(k) = do_k * cc.o(k) * (1.0 - cc.o(k));
            dc(k) += dh(k) * cc.o(k) * (1.0 - cc.tanh_c(k) * cc.tanh_c(k));
        }
        if (params.peepholes) {
            for (std::size_t k = 0; k < H; ++k) {
                dc(k) += params.p_o(k) * dpre_o(k);
                grads.p_o(k) += dpre_o(k) * cc.c(k);
            }
        }

        Tensor dpre_i = Tensor::zeros({H}), dpre_f = Tensor::zeros({H}), dpre_g = Tensor::zeros({H});
        Tensor dc_prev = Tensor::zeros({H});
        for (std::size_t k = 0; k < H; ++k) {
            const double di = dc(k) * cc.g(k);
            const double df = dc(k) * cc.c_prev(k);
            const double dg = dc(k) * cc.i(k);
            dpre_i(k) = di * cc.i(k) * (1.0 - cc.i(k));
            dpre_f(k) = df * cc.f(k) * (1.0 - cc.f(k));
            dpre_g(k) = dg * (1.0 - cc.g(k) * cc.g(k));
            dc_prev(k) = dc(k) * cc.f(k);
        }
        if (params.peepholes) {
            for (std::size_t k = 0; k < H; ++k) {
                dc_prev(k) += params.p_i(k) * dpre_i(k) + params.p_f(k) * dpre_f(k);
                grads.p_i(k) += dpre_i(k) * cc.c_prev(k);
                grads.p_f(k) += dpre_f(k) * cc.c_prev(k);
            }
        }

        detail::outer_acc(dpre_i, cc.x, grads.w_xi);
        detail::outer_acc(dpre_f, cc.x, grads.w_xf);
        detail::outer_acc(dpre_o, cc.x, grads.w_xo);
        detail::outer_acc(dpre_g, cc.x, grads.w_xg);
        detail::outer_acc(dpre_i, cc.h_prev, grads.w_hi);
        detail::outer_acc(dpre_f, cc.h_prev, grads.w_hf);
        detail::outer_acc(dpre_o, cc.h_prev, grads.w_ho);
        detail::outer_acc(dpre_g, cc.h_prev, grads.w_hg);
        for (std::size_t k = 0; k < H; ++k) {
            grads.b_i(k) += dpre_i(k);
            grads.b_f(k) += dpre_f(k);
            grads.b_o(k) += dpre_o(k);
            grads.b_g(k) += dpre_g(k);
        }

        Tensor dx = Tensor::zeros({D});
        detail::matvec_t_acc(params.w_xi, dpre_i, dx);
        detail::matvec_t_acc(params.w_xf, dpre_f, dx);
        detail::matvec_t_acc(params.w_xo, dpre_o, dx);
        detail::matvec_t_acc(params.w_xg, dpre_g, dx);
        for (std::size_t d = 0; d < D; ++d) d_seq(t, d) += dx(d);

        dh_next = Tensor::zeros({H});
        detail::matvec_t_acc(params.w_hi, dpre_i, dh_next);
        detail::matvec_t_acc(params.w_hf, dpre_f, dh_next);
        detail::matvec_t_acc(params.w_ho, dpre_o, dh_next);
        detail::matvec_t_acc(params.w_hg, dpre_g, dh_next);
        dc_next = std::move(dc_prev);
    }
    return d_seq;
}

struct BilstmCache {
    std::vector<LstmStepCache> fwd;
    std::vector<LstmStepCache> bwd;
};

// Output row t is [h_forward_t || h_backward_t], width 2H.
inline Tensor bilstm_forward(const Tensor& seq, const LstmParams& fwd, const LstmParams& bwd,
                             BilstmCache* cache = nullptr) {
    if (seq.rank() != 2 || seq.shape[0] == 0) {
        throw std::invalid_argument("bilstm_forward: wants a non-empty [T x D] sequence, got " +
                                    shape_str(seq.shape));
    }
    if (fwd.hidden_size != bwd.hidden_size || fwd.input_size != bwd.input_size) {
        throw std::invalid_argument("bilstm_forward: direction params disagree");
    }
    const std::size_t T = seq.shape[0];
    const std::size_t H = fwd.hidden_size;

    const Tensor hf = lstm_seq_forward(seq, fwd, false, cache ? &cache->fwd : nullptr);
    const Tensor hb = lstm_seq_forward(seq, bwd, true, cache ? &cache->bwd : nullptr);

    Tensor out = Tensor::zeros({T, 2 * H});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < H; ++k) {
            out(t, k) = hf(t, k);
            out(t, H + k) = hb(t, k);
        }
    }
    return out;
}

struct BilstmGrads {
    LstmGrads fwd;
    LstmGrads bwd;
    Tensor d_seq;
};

inline BilstmGrads bilstm_backward(const LstmParams& fwd, const LstmParams& bwd,
                                   const BilstmCache& cache, const Tensor& grad_out) {
    const std::size_t T = cache.fwd.size();
    const std::size_t H = fwd.hidden_size;
    if (grad_out.shape != std::vector<std::size_t>{T, 2 * H}) {
        throw std::invalid_argument("bilstm_backward: grad shape " + shape_str(grad_out.shape) +
                                    " wants [" + std::to_string(T) + " x " + std::to_string(2 * H) +
                                    "]");
    }
    Tensor gf = Tensor::zeros({T, H});
    Tensor gb = Tensor::zeros({T, H});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < H; ++k) {
            gf(t, k) = grad_out(t, k);
            gb(t, k) = grad_out(t, H + k);
        }
    }

    BilstmGrads g{make_lstm_grads(fwd), make_lstm_grads(bwd), Tensor::zeros({T, fwd.input_size})};
    const Tensor df = lstm_seq_backward(fwd, cache.fwd, gf, false, g.fwd);
    const Tensor db = lstm_seq_backward(bwd, cache.bwd, gb, true, g.bwd);
    for (std::size_t i = 0; i < g.d_seq.numel(); ++i) g.d_seq.data[i] = df.data[i] + db.data[i];
    return g;
}

// ---------------------------------------------------------------------------
// Fire module: a 1x1 squeeze conv (s channels, ReLU) followed by parallel
// 1x1 and 3x3 same-padding expand convs (e1, e3 channels, ReLU each),
// concatenated along channels. Squeeze ratio SR = s / (e1 + e3).

struct FireParams {
    std::size_t in_channels = 0;
    std::size_t squeeze = 0;
    std::size_t expand1 = 0;
    std::size_t expand3 = 0;
    Tensor squeeze_w, squeeze_b;    // [s x C x 1 x 1], [s]
    Tensor expand1_w, expand1_b;    // [e1 x s x 1 x 1], [e1]
    Tensor expand3_w, expand3_b;    // [e3 x s x 3 x 3], [e3]
};

inline FireParams make_fire(std::size_t in_channels, std::size_t squeeze, std::size_t expand1,
                            std::size_t expand3) {
    if (in_channels == 0 || squeeze == 0 || expand1 == 0 || expand3 == 0) {
        throw std::invalid_argument("make_fire: channel counts must be >= 1");
    }
    FireParams p;
    p.in_channels = in_channels;
    p.squeeze = squeeze;
    p.expand1 = expand1;
    p.expand3 = expand3;
    p.squeeze_w = Tensor::zeros({squeeze, in_channels, 1, 1});
    p.squeeze_b = Tensor::zeros({squeeze});
    p.expand1_w = Tensor::zeros({expand1, squeeze, 1, 1});
    p.expand1_b = Tensor::zeros({expand1});
    p.expand3_w = Tensor::zeros({expand3, squeeze, 3, 3});
    p.expand3_b = Tensor::zeros({expand3});
    return p;
}

inline double fire_squeeze_ratio(const FireParams& p) {
    return static_cast<double>(p.squeeze) / static_cast<double>(p.expand1 + p.expand3);
}

struct FireCache {
    Tensor x;
    Tensor squeeze_pre, squeeze_act;
    Tensor expand1_pre, expand3_pre;
};

inline Tensor fire_forward(const Tensor& x, const FireParams& p, FireCache* cache = nullptr) {
    if (x.rank() != 3 || x.shape[0] != p.in_channels) {
        throw std::invalid_argument("fire_forward: input " + shape_str(x.shape) + " wants [" +
                                    std::to_string(p.in_channels) + " x H x W]");
    }
    const std::size_t H = x.shape[1];
    const std::size_t W = x.shape[2];

    const Conv2dSpec sq{.kernel_h = 1, .kernel_w = 1, .stride = 1, .padding = Padding::valid,
                        .in_channels = p.in_channels, .out_channels = p.squeeze};
    const Conv2dSpec e1{.kernel_h = 1, .kernel_w = 1, .stride = 1, .padding = Padding::valid,
                        .in_channels = p.squeeze, .out_channels = p.expand1};
    const Conv2dSpec e3{.kernel_h = 3, .kernel_w = 3, .stride = 1, .padding = Padding::same,
                        .in_channels = p.squeeze, .out_channels = p.expand3};

    Tensor squeeze_pre = conv2d(x, sq, p.squeeze_w, p.squeeze_b);
    Tensor squeeze_act = relu(squeeze_pre);
    Tensor e1_pre = conv2d(squeeze_act, e1, p.expand1_w, p.expand1_b);
    Tensor e3_pre = conv2d(squeeze_act, e3, p.expand3_w, p.expand3_b);

    Tensor out = Tensor::zeros({p.expand1 + p.expand3, H, W});
    const std::size_t plane = H * W;
    for (std::size_t i = 0; i < p.expand1 * plane; ++i) {
        out.data[i] = std::max(0.0, e1_pre.data[i]);
    }
    for (std::size_t i = 0; i < p.expand3 * plane; ++i) {
        out.data[p.expand1 * plane + i] = std::max(0.0, e3_pre.data[i]);
    }
    if (cache) {
        *cache = {x, std::move(squeeze_pre), std::move(squeeze_act), std::move(e1_pre),
                  std::move(e3_pre)};
    }
    return out;
}

struct FireGrads {
    Tensor d_input;
    Tensor squeeze_w, squeeze_b;
    Tensor expand1_w, expand1_b;
    Tensor expand3_w, expand3_b;
};

inline FireGrads fire_backward(const FireParams& p, const FireCache& cache, const Tensor& grad_out) {
    const std::size_t H = cache.x.shape[1];
    const std::size_t W = cache.x.shape[2];
    const std::size_t plane = H * W;
    if (grad_out.shape != std::vector<std::size_t>{p.expand1 + p.expand3, H, W}) {
        throw std::invalid_argument("fire_backward: unexpected grad shape " +
                                    shape_str(grad_out.shape));
    }

    Tensor g_e1 = Tensor::zeros({p.expand1, H, W});
    Tensor g_e3 = Tensor::zeros({p.expand3, H, W});
    for (std::size_t i = 0; i < p.expand1 * plane; ++i) {
        g_e1.data[i] = cache.expand1_pre.data[i] > 0.0 ? grad_out.data[i] : 0.0;
    }
    for (std::size_t i = 0; i < p.expand3 * plane; ++i) {
        g_e3.data[i] =
            cache.expand3_pre.data[i] > 0.0 ? grad_out.data[p.expand1 * plane + i] : 0.0;
    }

    const Conv2dSpec sq{.kernel_h = 1, .kernel_w = 1, .stride = 1, .padding = Padding::valid,
                        .in_channels = p.in_channels, .out_channels = p.squeeze};
    const Conv2dSpec e1{.kernel_h = 1, .kernel_w = 1, .stride = 1, .padding = Padding::valid,
                        .in_channels = p.squeeze, .out_channels = p.expand1};
    const Conv2dSpec e3{.kernel_h = 3, .kernel_w = 3, .stride = 1, .padding = Padding::same,
                        .in_channels = p.squeeze, .out_channels = p.expand3};

    const Conv2dGrads ge1 = conv2d_backward(cache.squeeze_act, e1, p.expand1_w, g_e1);
    const Conv2dGrads ge3 = conv2d_backward(cache.squeeze_act, e3, p.expand3_w, g_e3);

    Tensor g_squeeze_act = Tensor::zeros(cache.squeeze_act.shape);
    for (std::size_t i = 0; i < g_squeeze_act.numel(); ++i) {
        g_squeeze_act.data[i] = ge1.d_input.data[i] + ge3.d_input.data[i];
    }
    Tensor g_squeeze_pre = relu_backward(cache.squeeze_pre, g_squeeze_act);
    const Conv2dGrads gsq = conv2d_backward(cache.x, sq, p.squeeze_w, g_squeeze_pre);

    return {gsq.d_input, gsq.d_weights, gsq.d_bias, ge1.d_weights, ge1.d_bias,
            ge3.d_weights, ge3.d_bias};
}

// Spatial global max over [C x H x W] -> [C], with argmax cache for backward.
inline Tensor global_maxpool2d(const Tensor& x, std::vector<std::size_t>* argmax = nullptr) {
    if (x.rank() != 3) {
        throw std::invalid_argument("global_maxpool2d: input " + shape_str(x.shape) +
                                    " wants rank 3");
    }
    const std::size_t C = x.shape[0];
    const std::size_t plane = x.shape[1] * x.shape[2];
    Tensor out = Tensor::zeros({C});
    if (argmax) argmax->assign(C, 0);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = c * plane;
        for (std::size_t i = 1; i < plane; ++i) {
            if (x.data[c * plane + i] > x.data[best]) best = c * plane + i;
        }
        out(c) = x.data[best];
        if (argmax) (*argmax)[c] = best;
    }
    return out;
}

inline Tensor global_maxpool2d_backward(const Tensor& x, const Tensor& grad_out,
                                        const std::vector<std::size_t>& argmax) {
    Tensor g = Tensor::zeros(x.shape);
    for (std::size_t c = 0; c < argmax.size(); ++c) g.data[argmax[c]] += grad_out(c);
    return g;
}

}  // namespace cardioxnet
