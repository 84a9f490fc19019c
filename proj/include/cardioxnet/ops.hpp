#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cardioxnet/tensor.hpp"

namespace cardioxnet {

enum class Padding { valid, same };

inline const char* padding_name(Padding p) { return p == Padding::valid ? "valid" : "same"; }

// Output length of a strided window scan.
//   valid: floor((L - k) / stride) + 1, requires k <= L
//   same:  ceil(L / stride); total zero padding (out-1)*stride + k - L is
//          split left-floor/right-ceil (the extra sample goes to the right)
inline std::size_t window_out_len(std::size_t len, std::size_t k, std::size_t stride, Padding pad,
                                  const char* what) {
    if (k == 0) throw std::invalid_argument(std::string(what) + ": zero window");
    if (stride == 0) throw std::invalid_argument(std::string(what) + ": zero stride");
    if (pad == Padding::valid) {
        if (k > len) {
            throw std::invalid_argument(std::string(what) + ": window " + std::to_string(k) +
                                        " exceeds input length " + std::to_string(len) +
                                        " under valid padding");
        }
        return (len - k) / stride + 1;
    }
    return (len + stride - 1) / stride;
}

inline std::size_t same_pad_left(std::size_t len, std::size_t k, std::size_t stride) {
    const std::size_t out = (len + stride - 1) / stride;
    const std::size_t span = (out - 1) * stride + k;
    const std::size_t total = span > len ? span - len : 0;
    return total / 2;
}

struct Conv1dSpec {
    std::size_t kernel_len = 1;
    std::size_t stride = 1;
    Padding padding = Padding::valid;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
};

struct Conv2dSpec {
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    Padding padding = Padding::valid;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
};

namespace detail {

inline void check_conv1d_shapes(const Tensor& input, const Conv1dSpec& spec, const Tensor& weights,
                                const Tensor& bias) {
    if (spec.kernel_len == 0 || spec.stride == 0 || spec.in_channels == 0 || spec.out_channels == 0) {
        throw std::invalid_argument("conv1d: spec extents must be >= 1");
    }
    if (input.rank() != 2 || input.shape[0] != spec.in_channels) {
        throw std::invalid_argument("conv1d: input shape " + shape_str(input.shape) +
                                    " does not match spec in_channels " + std::to_string(spec.in_channels));
    }
    const std::vector<std::size_t> want_w = {spec.out_channels, spec.in_channels, spec.kernel_len};
    if (weights.shape != want_w) {
        throw std::invalid_argument("conv1d: weight shape " + shape_str(weights.shape) +
                                    " does not match spec " + shape_str(want_w));
    }
    if (bias.rank() != 1 || bias.shape[0] != spec.out_channels) {
        throw std::invalid_argument("conv1d: bias shape " + shape_str(bias.shape) + " wants [" +
                                    std::to_string(spec.out_channels) + "]");
    }
}

inline void check_conv2d_shapes(const Tensor& input, const Conv2dSpec& spec, const Tensor& weights,
                                const Tensor& bias) {
    if (spec.kernel_h == 0 || spec.kernel_w == 0 || spec.stride == 0 || spec.in_channels == 0 ||
        spec.out_channels == 0) {
        throw std::invalid_argument("conv2d: spec extents must be >= 1");
    }
    if (input.rank() != 3 || input.shape[0] != spec.in_channels) {
        throw std::invalid_argument("conv2d: input shape " + shape_str(input.shape) +
                                    " does not match spec in_channels " + std::to_string(spec.in_channels));
    }
    const std::vector<std::size_t> want_w = {spec.out_channels, spec.in_channels, spec.kernel_h,
                                             spec.kernel_w};
    if (weights.shape != want_w) {
        throw std::invalid_argument("conv2d: weight shape " + shape_str(weights.shape) +
                                    " does not match spec " + shape_str(want_w));
    }
    if (bias.rank() != 1 || bias.shape[0] != spec.out_channels) {
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape) + " wants [" +
                                    std::to_string(spec.out_channels) + "]");
    }
}

}  // namespace detail

// 1D cross-correlation (no kernel flip) over [C_in x L] -> [C_out x L_out].
// Accumulation order is pinned so independent re-implementations can compare
// bitwise: start from the bias, then taps in (in-channel, position) order.
// Zero-padded positions are skipped, which is exact.
inline Tensor conv1d(const Tensor& input, const Conv1dSpec& spec, const Tensor& weights,
                     const Tensor& bias) {
    detail::check_conv1d_shapes(input, spec, weights, bias);
    const std::size_t L = input.shape[1];
    const std::size_t m = spec.kernel_len;
    const std::size_t L_out = window_out_len(L, m, spec.stride, spec.padding, "conv1d");
    const std::size_t pad_left = spec.padding == Padding::same ? same_pad_left(L, m, spec.stride) : 0;

    Tensor out = Tensor::zeros({spec.out_channels, L_out});
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
        for (std::size_t o = 0; o < L_out; ++o) {
            double acc = bias(co);
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * spec.stride) -
                                         static_cast<std::ptrdiff_t>(pad_left);
            for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
                for (std::size_t k = 0; k < m; ++k) {
                    const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
                    if (i < 0 || i >= static_cast<std::ptrdiff_t>(L)) continue;
                    acc += input(ci, static_cast<std::size_t>(i)) * weights(co, ci, k);
                }
            }
            out(co, o) = acc;
        }
    }
    return out;
}

struct Conv1dGrads {
    Tensor d_input;
    Tensor d_weights;
    Tensor d_bias;
};

inline Conv1dGrads conv1d_backward(const Tensor& input, const Conv1dSpec& spec, const Tensor& weights,
                                   const Tensor& grad_out) {
    const std::size_t L = input.shape[1];
    const std::size_t m = spec.kernel_len;
    const std::size_t L_out = window_out_len(L, m, spec.stride, spec.padding, "conv1d");
    const std::size_t pad_left = spec.padding == Padding::same ? same_pad_left(L, m, spec.stride) : 0;
    if (grad_out.shape != std::vector<std::size_t>{spec.out_channels, L_out}) {
        throw std::invalid_argument("conv1d_backward: grad shape " + shape_str(grad_out.shape) +
                                    " wants [" + std::to_string(spec.out_channels) + " x " +
                                    std::to_string(L_out) + "]");
    }

    Conv1dGrads g{Tensor::zeros(input.shape), Tensor::zeros(weights.shape),
                  Tensor::zeros({spec.out_channels})};
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
        for (std::size_t o = 0; o < L_out; ++o) {
            const double gy = grad_out(co, o);
            g.d_bias(co) += gy;
            if (gy == 0.0) continue;
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * spec.stride) -
                                         static_cast<std::ptrdiff_t>(pad_left);
            for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
                for (std::size_t k = 0; k < m; ++k) {
                    const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
                    if (i < 0 || i >= static_cast<std::ptrdiff_t>(L)) continue;
                    g.d_input(ci, static_cast<std::size_t>(i)) += weights(co, ci, k) * gy;
                    g.d_weights(co, ci, k) += input(ci, static_cast<std::size_t>(i)) * gy;
                }
            }
        }
    }
    return g;
}

// 2D cross-correlation over [C_in x H x W] -> [C_out x H_out x W_out].
// Same accumulation-order contract as conv1d: bias, then (in-channel, kh, kw).
inline Tensor conv2d(const Tensor& input, const Conv2dSpec& spec, const Tensor& weights,
                     const Tensor& bias) {
    detail::check_conv2d_shapes(input, spec, weights, bias);
    const std::size_t H = input.shape[1];
    const std::size_t W = input.shape[2];
    const std::size_t H_out = window_out_len(H, spec.kernel_h, spec.stride, spec.padding, "conv2d");
    const std::size_t W_out = window_out_len(W, spec.kernel_w, spec.stride, spec.padding, "conv2d");
    const std::size_t pad_top =
        spec.padding == Padding::same ? same_pad_left(H, spec.kernel_h, spec.stride) : 0;
    const std::size_t pad_lft =
        spec.padding == Padding::same ? same_pad_left(W, spec.kernel_w, spec.stride) : 0;

    Tensor out = Tensor::zeros({spec.out_channels, H_out, W_out});
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
        for (std::size_t ho = 0; ho < H_out; ++ho) {
            const std::ptrdiff_t h0 = static_cast<std::ptrdiff_t>(ho * spec.stride) -
                                      static_cast<std::ptrdiff_t>(pad_top);
            for (std::size_t wo = 0; wo < W_out; ++wo) {
                const std::ptrdiff_t w0 = static_cast<std::ptrdiff_t>(wo * spec.stride) -
                                          static_cast<std::ptrdiff_t>(pad_lft);
                double acc = bias(co);
                for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
                    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                        const std::ptrdiff_t hi = h0 + static_cast<std::ptrdiff_t>(kh);
                        if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                            const std::ptrdiff_t wi = w0 + static_cast<std::ptrdiff_t>(kw);
                            if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += input(ci, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi)) *
                                   weights(co, ci, kh, kw);
                        }
                    }
                }
                out(co, ho, wo) = acc;
            }
        }
    }
    return out;
}

struct Conv2dGrads {
    Tensor d_input;
    Tensor d_weights;
    Tensor d_bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& input, const Conv2dSpec& spec, const Tensor& weights,
                                   const Tensor& grad_out) {
    const std::size_t H = input.shape[1];
    const std::size_t W = input.shape[2];
    const std::size_t H_out = window_out_len(H, spec.kernel_h, spec.stride, spec.padding, "conv2d");
    const std::size_t W_out = window_out_len(W, spec.kernel_w, spec.stride, spec.padding, "conv2d");
    const std::size_t pad_top =
        spec.padding == Padding::same ? same_pad_left(H, spec.kernel_h, spec.stride) : 0;
    const std::size_t pad_lft =
        spec.padding == Padding::same ? same_pad_left(W, spec.kernel_w, spec.stride) : 0;
    if (grad_out.shape != std::vector<std::size_t>{spec.out_channels, H_out, W_out}) {
        throw std::invalid_argument("conv2d_backward: unexpected grad shape " + shape_str(grad_out.shape));
    }

    Conv2dGrads g{Tensor::zeros(input.shape), Tensor::zeros(weights.shape),
                  Tensor::zeros({spec.out_channels})};
    for (std::size_t co = 0; co < spec.out_channels; ++co) {
        for (std::size_t ho = 0; ho < H_out; ++ho) {
            const std::ptrdiff_t h0 = static_cast<std::ptrdiff_t>(ho * spec.stride) -
                                      static_cast<std::ptrdiff_t>(pad_top);
            for (std::size_t wo = 0; wo < W_out; ++wo) {
                const std::ptrdiff_t w0 = static_cast<std::ptrdiff_t>(wo * spec.stride) -
                                          static_cast<std::ptrdiff_t>(pad_lft);
                const double gy = grad_out(co, ho, wo);
                g.d_bias(co) += gy;
                if (gy == 0.0) continue;
                for (std::size_t ci = 0; ci < spec.in_channels; ++ci) {
                    for (std::size_t kh = 0; kh < spec.kernel_h; ++kh) {
                        const std::ptrdiff_t hi = h0 + static_cast<std::ptrdiff_t>(kh);
                        if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kw = 0; kw < spec.kernel_w; ++kw) {
                            const std::ptrdiff_t wi = w0 + static_cast<std::ptrdiff_t>(kw);
                            if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(W)) continue;
                            const std::size_t h = static_cast<std::size_t>(hi);
                            const std::size_t w = static_cast<std::size_t>(wi);
                            g.d_input(ci, h, w) += weights(co, ci, kh, kw) * gy;
                            g.d_weights(co, ci, kh, kw) += input(ci, h, w) * gy;
                        }
                    }
                }
            }
        }
    }
    return g;
}

// Max pooling over [C x L]. Padded positions are excluded from the max, never
// treated as zero. `argmax`, when given, receives the flat input index of the
// winning sample per output element (first maximum wins on ties).
inline Tensor maxpool1d(const Tensor& input, std::size_t window, std::size_t stride, Padding padding,
                        std::vector<std::size_t>* argmax = nullptr) {
    if (input.rank() != 2) {
        throw std::invalid_argument("maxpool1d: input shape " + shape_str(input.shape) + " wants rank 2");
    }
    const std::size_t C = input.shape[0];
    const std::size_t L = input.shape[1];
    const std::size_t L_out = window_out_len(L, window, stride, padding, "maxpool1d");
    const std::size_t pad_left = padding == Padding::same ? same_pad_left(L, window, stride) : 0;

    Tensor out = Tensor::zeros({C, L_out});
    if (argmax) argmax->assign(C * L_out, 0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t o = 0; o < L_out; ++o) {
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) -
                                         static_cast<std::ptrdiff_t>(pad_left);
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_i = 0;
            bool seen = false;
            for (std::size_t k = 0; k < window; ++k) {
                const std::ptrdiff_t i = start + static_cast<std::ptrdiff_t>(k);
                if (i < 0 || i >= static_cast<std::ptrdiff_t>(L)) continue;
                const double v = input(c, static_cast<std::size_t>(i));
                if (!seen || v > best) {
                    best = v;
                    best_i = static_cast<std::size_t>(i);
                    seen = true;
                }
            }
            if (!seen) throw std::invalid_argument("maxpool1d: window covers no input samples");
            out(c, o) = best;
            if (argmax) (*argmax)[c * L_out + o] = c * L + best_i;
        }
    }
    return out;
}

inline Tensor maxpool1d_backward(const Tensor& input, const Tensor& grad_out,
                                 const std::vector<std::size_t>& argmax) {
    Tensor d_input = Tensor::zeros(input.shape);
    if (argmax.size() != grad_out.numel()) {
        throw std::invalid_argument("maxpool1d_backward: argmax cache does not match grad");
    }
    for (std::size_t i = 0; i < argmax.size(); ++i) d_input.data[argmax[i]] += grad_out.data[i];
    return d_input;
}

// Max pooling over [C x H x W]; same padding/exclusion rules as maxpool1d.
inline Tensor maxpool2d(const Tensor& input, std::size_t win_h, std::size_t win_w, std::size_t stride_h,
                        std::size_t stride_w, Padding padding, std::vector<std::size_t>* argmax = nullptr) {
    if (input.rank() != 3) {
        throw std::invalid_argument("maxpool2d: input shape " + shape_str(input.shape) + " wants rank 3");
    }
    const std::size_t C = input.shape[0];
    const std::size_t H = input.shape[1];
    const std::size_t W = input.shape[2];
    const std::size_t H_out = window_out_len(H, win_h, stride_h, padding, "maxpool2d");
    const std::size_t W_out = window_out_len(W, win_w, stride_w, padding, "maxpool2d");
    const std::size_t pad_top = padding == Padding::same ? same_pad_left(H, win_h, stride_h) : 0;
    const std::size_t pad_lft = padding == Padding::same ? same_pad_left(W, win_w, stride_w) : 0;

    Tensor out = Tensor::zeros({C, H_out, W_out});
    if (argmax) argmax->assign(C * H_out * W_out, 0);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ho = 0; ho < H_out; ++ho) {
            const std::ptrdiff_t h0 = static_cast<std::ptrdiff_t>(ho * stride_h) -
                                      static_cast<std::ptrdiff_t>(pad_top);
            for (std::size_t wo = 0; wo < W_out; ++wo) {
                const std::ptrdiff_t w0 = static_cast<std::ptrdiff_t>(wo * stride_w) -
                                          static_cast<std::ptrdiff_t>(pad_lft);
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_i = 0;
                bool seen = false;
                for (std::size_t kh = 0; kh < win_h; ++kh) {
                    const std::ptrdiff_t hi = h0 + static_cast<std::ptrdiff_t>(kh);
                    if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kw = 0; kw < win_w; ++kw) {
                        const std::ptrdiff_t wi = w0 + static_cast<std::ptrdiff_t>(kw);
                        if (wi < 0 || wi >= static_cast<std::ptrdiff_t>(W)) continue;
                        const double v =
                            input(c, static_cast<std::size_t>(hi), static_cast<std::size_t>(wi));
                        if (!seen || v > best) {
                            best = v;
                            best_i = (c * H + static_cast<std::size_t>(hi)) * W +
                                     static_cast<std::size_t>(wi);
                            seen = true;
                        }
                    }
                }
                if (!seen) throw std::invalid_argument("maxpool2d: window covers no input samples");
                out(c, ho, wo) = best;
                if (argmax) (*argmax)[(c * H_out + ho) * W_out + wo] = best_i;
            }
        }
    }
    return out;
}

inline Tensor maxpool2d_backward(const Tensor& input, const Tensor& grad_out,
                                 const std::vector<std::size_t>& argmax) {
    Tensor d_input = Tensor::zeros(input.shape);
    if (argmax.size() != grad_out.numel()) {
        throw std::invalid_argument("maxpool2d_backward: argmax cache does not match grad");
    }
    for (std::size_t i = 0; i < argmax.size(); ++i) d_input.data[argmax[i]] += grad_out.data[i];
    return d_input;
}

// Dense layer: out_k = sum_d w[k][d] * x[d] + b[k].
inline Tensor affine(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 1 || weights.rank() != 2 || bias.rank() != 1 ||
        weights.shape[1] != input.shape[0] || weights.shape[0] != bias.shape[0]) {
        throw std::invalid_argument("affine: shapes " + shape_str(input.shape) + ", " +
                                    shape_str(weights.shape) + ", " + shape_str(bias.shape) +
                                    " do not agree");
    }
    const std::size_t K = weights.shape[0];
    const std::size_t D = weights.shape[1];
    Tensor out = Tensor::zeros({K});
    for (std::size_t k = 0; k < K; ++k) {
        double acc = bias(k);
        for (std::size_t d = 0; d < D; ++d) acc += weights(k, d) * input(d);
        out(k) = acc;
    }
    return out;
}

struct AffineGrads {
    Tensor d_input;
    Tensor d_weights;
    Tensor d_bias;
};

inline AffineGrads affine_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out) {
    const std::size_t K = weights.shape[0];
    const std::size_t D = weights.shape[1];
    AffineGrads g{Tensor::zeros({D}), Tensor::zeros(weights.shape), Tensor::zeros({K})};
    for (std::size_t k = 0; k < K; ++k) {
        const double gy = grad_out(k);
        g.d_bias(k) = gy;
        for (std::size_t d = 0; d < D; ++d) {
            g.d_weights(k, d) = input(d) * gy;
            g.d_input(d) += weights(k, d) * gy;
        }
    }
    return g;
}

}  // namespace cardioxnet
