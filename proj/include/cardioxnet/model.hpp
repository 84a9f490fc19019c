#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cardioxnet/config.hpp"
#include "cardioxnet/errors.hpp"
#include "cardioxnet/layers.hpp"
#include "cardioxnet/ops.hpp"
#include "cardioxnet/rng.hpp"
#include "cardioxnet/tensor.hpp"

namespace cardioxnet {

struct Conv1dLayer {
    Conv1dSpec spec;
    Tensor w, b;
};

struct Conv2dLayer {
    Conv2dSpec spec;
    Tensor w, b;
};

struct Branch1d {
    std::vector<Stage> plan;
    std::vector<Conv1dLayer> convs;     // one per conv stage, in stage order
    std::size_t out_width = 0;          // flattened output size
};

struct Branch2d {
    std::vector<Stage> plan;
    std::vector<Conv2dLayer> convs;
    std::vector<BatchNormParams> bns;   // one per bn stage, in stage order
    std::vector<FireParams> fires;      // one per fire stage, in stage order
    std::size_t out_width = 0;          // channels surviving the global max
};

struct BiLstmLayer {
    LstmParams fwd, bwd;
};

struct AffineLayer {
    Tensor w, b;
};

// The assembled network: three parallel feature branches over the raw signal,
// their concatenation reshaped into a sequence, a bi-LSTM stack whose final
// step is fused with a dense skip projection of the concatenated features,
// then dropout and the prediction head.
struct Model {
    ModelConfig config;
    Branch1d ffe, pe;
    Branch2d afe;
    std::vector<BiLstmLayer> lstm;
    AffineLayer skip;   // concat width -> 2H
    AffineLayer head;   // 2H -> K
    std::size_t concat_width = 0;
};

// ---------------------------------------------------------------------------
// Shape walking. Errors name the branch and stage so config mistakes are
// attributable.

struct Shape1d {
    std::size_t channels = 1;
    std::size_t len = 0;
};

struct Shape2d {
    std::size_t channels = 1;
    std::size_t h = 0, w = 0;
};

inline Shape1d walk_branch1d(const std::vector<Stage>& plan, std::size_t input_len,
                             const std::string& branch) {
    Shape1d s{1, input_len};
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const Stage& st = plan[i];
        const std::string where = branch + " stage " + std::to_string(i + 1);
        switch (st.kind) {
            case StageKind::conv:
                s.len = window_out_len(s.len, st.kernel, st.stride, st.padding, where.c_str());
                s.channels = st.channels;
                break;
            case StageKind::relu:
                break;
            case StageKind::pool:
                s.len = window_out_len(s.len, st.window, st.stride, st.padding, where.c_str());
                break;
            default:
                throw std::invalid_argument(where + ": stage kind not valid in a 1D branch");
        }
    }
    return s;
}

inline Shape2d walk_branch2d(const std::vector<Stage>& plan, std::size_t rows, std::size_t cols,
                             const std::string& branch) {
    Shape2d s{1, rows, cols};
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const Stage& st = plan[i];
        const std::string where = branch + " stage " + std::to_string(i + 1);
        switch (st.kind) {
            case StageKind::conv:
                s.h = window_out_len(s.h, st.kernel_h, st.stride, st.padding, where.c_str());
                s.w = window_out_len(s.w, st.kernel_w, st.stride, st.padding, where.c_str());
                s.channels = st.channels;
                break;
            case StageKind::bn:
            case StageKind::relu:
                break;
            case StageKind::pool:
                s.h = window_out_len(s.h, st.window, st.stride, st.padding, where.c_str());
                s.w = window_out_len(s.w, st.window, st.stride, st.padding, where.c_str());
                break;
            case StageKind::fire:
                s.channels = st.expand1 + st.expand3;
                break;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Canonical parameter enumeration. Everything that orders parameters (init,
// optimizer state, serialization, gradient containers) goes through this one
// walk, so the order can never drift between them.

template <typename ModelT, typename F>
void visit_params(ModelT& m, F&& f) {
    const auto branch1d = [&](auto& br, const std::string& prefix) {
        for (std::size_t i = 0; i < br.convs.size(); ++i) {
            const std::string base = prefix + ".conv" + std::to_string(i + 1);
            f(base + ".weight", br.convs[i].w);
            f(base + ".bias", br.convs[i].b);
        }
    };
    branch1d(m.ffe, "ffe");
    branch1d(m.pe, "pe");

    {
        std::size_t ci = 0, bi = 0, fi = 0;
        for (const Stage& st : m.afe.plan) {
            if (st.kind == StageKind::conv) {
                const std::string base = "afe.conv" + std::to_string(++ci);
                f(base + ".weight", m.afe.convs[ci - 1].w);
                f(base + ".bias", m.afe.convs[ci - 1].b);
            } else if (st.kind == StageKind::bn) {
                const std::string base = "afe.bn" + std::to_string(++bi);
                f(base + ".gamma", m.afe.bns[bi - 1].gamma);
                f(base + ".beta", m.afe.bns[bi - 1].beta);
            } else if (st.kind == StageKind::fire) {
                const std::string base = "afe.fire" + std::to_string(++fi);
                auto& fire = m.afe.fires[fi - 1];
                f(base + ".squeeze.weight", fire.squeeze_w);
                f(base + ".squeeze.bias", fire.squeeze_b);
                f(base + ".expand1x1.weight", fire.expand1_w);
                f(base + ".expand1x1.bias", fire.expand1_b);
                f(base + ".expand3x3.weight", fire.expand3_w);
                f(base + ".expand3x3.bias", fire.expand3_b);
            }
        }
    }

    for (std::size_t l = 0; l < m.lstm.size(); ++l) {
        for (const char* dir : {"fwd", "bwd"}) {
            auto& p = std::string(dir) == "fwd" ? m.lstm[l].fwd : m.lstm[l].bwd;
            const std::string base = "lstm" + std::to_string(l + 1) + "." + dir + ".";
            f(base + "w_xi", p.w_xi); f(base + "w_xf", p.w_xf);
            f(base + "w_xo", p.w_xo); f(base + "w_xg", p.w_xg);
            f(base + "w_hi", p.w_hi); f(base + "w_hf", p.w_hf);
            f(base + "w_ho", p.w_ho); f(base + "w_hg", p.w_hg);
            f(base + "b_i", p.b_i); f(base + "b_f", p.b_f);
            f(base + "b_o", p.b_o); f(base + "b_g", p.b_g);
            if (m.config.lstm_peepholes) {
                f(base + "p_i", p.p_i); f(base + "p_f", p.p_f); f(base + "p_o", p.p_o);
            }
        }
    }

    f("skip.weight", m.skip.w);
    f("skip.bias", m.skip.b);
    f("head.weight", m.head.w);
    f("head.bias", m.head.b);
}

// Batchnorm running statistics: serialized with the model, never trained.
template <typename ModelT, typename F>
void visit_running_stats(ModelT& m, F&& f) {
    for (std::size_t i = 0; i < m.afe.bns.size(); ++i) {
        const std::string base = "afe.bn" + std::to_string(i + 1);
        f(base + ".running_mean", m.afe.bns[i].running_mean);
        f(base + ".running_var", m.afe.bns[i].running_var);
    }
}

inline std::size_t count_params(const Model& m) {
    std::size_t total = 0;
    visit_params(m, [&](const std::string&, const Tensor& t) { total += t.numel(); });
    return total;
}

// ---------------------------------------------------------------------------

inline Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;

    const auto build1d = [&](const std::string& plan_text, const std::string& branch) {
        Branch1d br;
        br.plan = parse_stages(plan_text, false);
        Shape1d shape{1, config.input_len};
        for (std::size_t i = 0; i < br.plan.size(); ++i) {
            const Stage& st = br.plan[i];
            const std::string where = branch + " stage " + std::to_string(i + 1);
            if (st.kind == StageKind::conv) {
                Conv1dLayer layer;
                layer.spec = {st.kernel, st.stride, st.padding, shape.channels, st.channels};
                layer.w = Tensor::zeros({st.channels, shape.channels, st.kernel});
                layer.b = Tensor::zeros({st.channels});
                br.convs.push_back(std::move(layer));
                shape.len = window_out_len(shape.len, st.kernel, st.stride, st.padding, where.c_str());
                shape.channels = st.channels;
            } else if (st.kind == StageKind::pool) {
                shape.len = window_out_len(shape.len, st.window, st.stride, st.padding, where.c_str());
            } else if (st.kind != StageKind::relu) {
                throw std::invalid_argument(where + ": stage kind not valid in a 1D branch");
            }
        }
        br.out_width = shape.channels * shape.len;
        return br;
    };
    m.ffe = build1d(config.ffe_plan, "ffe");
    m.pe = build1d(config.pe_plan, "pe");

    {
        Branch2d br;
        br.plan = parse_stages(config.afe_plan, true);
        Shape2d shape{1, config.afe_rows, config.afe_cols};
        for (std::size_t i = 0; i < br.plan.size(); ++i) {
            const Stage& st = br.plan[i];
            const std::string where = "afe stage " + std::to_string(i + 1);
            if (st.kind == StageKind::conv) {
                Conv2dLayer layer;
                layer.spec = {st.kernel_h, st.kernel_w, st.stride, st.padding, shape.channels,
                              st.channels};
                layer.w = Tensor::zeros({st.channels, shape.channels, st.kernel_h, st.kernel_w});
                layer.b = Tensor::zeros({st.channels});
                br.convs.push_back(std::move(layer));
                shape.h = window_out_len(shape.h, st.kernel_h, st.stride, st.padding, where.c_str());
                shape.w = window_out_len(shape.w, st.kernel_w, st.stride, st.padding, where.c_str());
                shape.channels = st.channels;
            } else if (st.kind == StageKind::bn) {
                br.bns.push_back(make_batchnorm(shape.channels));
            } else if (st.kind == StageKind::pool) {
                shape.h = window_out_len(shape.h, st.window, st.stride, st.padding, where.c_str());
                shape.w = window_out_len(shape.w, st.window, st.stride, st.padding, where.c_str());
            } else if (st.kind == StageKind::fire) {
                br.fires.push_back(make_fire(shape.channels, st.squeeze, st.expand1, st.expand3));
                shape.channels = st.expand1 + st.expand3;
            }
        }
        br.out_width = shape.channels;
        m.afe = br;
    }

    m.concat_width = m.afe.out_width + m.ffe.out_width + m.pe.out_width;
    if (config.seq_steps * config.seq_features < m.concat_width) {
        throw std::invalid_argument(
            "config: seq_steps*seq_features = " +
            std::to_string(config.seq_steps * config.seq_features) +
            " cannot hold the concatenated feature width " + std::to_string(m.concat_width));
    }

    const std::size_t H = config.lstm_hidden;
    for (std::size_t l = 0; l < config.lstm_layers; ++l) {
        const std::size_t in = l == 0 ? config.seq_features : 2 * H;
        m.lstm.push_back({make_lstm(in, H, config.lstm_peepholes),
                          make_lstm(in, H, config.lstm_peepholes)});
    }
    m.skip.w = Tensor::zeros({2 * H, m.concat_width});
    m.skip.b = Tensor::zeros({2 * H});
    m.head.w = Tensor::zeros({config.class_count(), 2 * H});
    m.head.b = Tensor::zeros({config.class_count()});

    // Deterministic init: one generator consumed in canonical parameter
    // order. Weight tensors get fan-balanced uniform draws; biases stay zero
    // except forget gates, which start at 1 so early cells remember.
    Rng rng(mix_seed(seed));
    const auto fill_uniform = [&](Tensor& t, double limit) {
        for (double& v : t.data) v = rng.uniform(-limit, limit);
    };
    visit_params(m, [&](const std::string& name, Tensor& t) {
        const auto ends_with = [&](const char* suffix) {
            const std::string s(suffix);
            return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with(".bias") || ends_with(".gamma") || ends_with(".beta") ||
            name.find(".b_") != std::string::npos || name.find(".p_") != std::string::npos) {
            if (ends_with(".gamma")) {
                for (double& v : t.data) v = 1.0;
            } else if (ends_with(".b_f")) {
                for (double& v : t.data) v = 1.0;
            } else {
                for (double& v : t.data) v = 0.0;
            }
            return;
        }
        // Remaining tensors are 2D (dense, recurrent) or 3D/4D (conv) weights.
        std::size_t fan_in = 1, fan_out = 1;
        if (t.rank() == 2) {
            fan_in = t.shape[1];
            fan_out = t.shape[0];
        } else {
            std::size_t receptive = 1;
            for (std::size_t d = 2; d < t.rank(); ++d) receptive *= t.shape[d];
            fan_in = t.shape[1] * receptive;
            fan_out = t.shape[0] * receptive;
        }
        fill_uniform(t, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
    });
    return m;
}

// Gradient container: the same structure with every parameter zeroed.
inline Model make_gradients(const Model& m) {
    Model g = m;
    visit_params(g, [](const std::string&, Tensor& t) {
        for (double& v : t.data) v = 0.0;
    });
    visit_running_stats(g, [](const std::string&, Tensor& t) {
        for (double& v : t.data) v = 0.0;
    });
    return g;
}

// ---------------------------------------------------------------------------
// FLOP accounting for one single-sample inference pass. Conventions, applied
// uniformly (documented in the README):
//   multiply-accumulate = 2, bias add = 1, comparison = 1, activation
//   evaluation (sigmoid/tanh/exp/relu) = 1, division = 1; dropout and
//   reshape/concat are free; batchnorm costs 2 per element (fused scale+shift
//   at inference).

inline std::size_t count_flops(const Model& m) {
    std::size_t total = 0;

    const auto flops1d = [&](const Branch1d& br) {
        Shape1d s{1, m.config.input_len};
        for (const Stage& st : br.plan) {
            if (st.kind == StageKind::conv) {
                const std::size_t L_out = window_out_len(s.len, st.kernel, st.stride, st.padding, "f");
                total += L_out * st.channels * (2 * s.channels * st.kernel + 1);
                s.len = L_out;
                s.channels = st.channels;
            } else if (st.kind == StageKind::relu) {
                total += s.channels * s.len;
            } else if (st.kind == StageKind::pool) {
                const std::size_t L_out = window_out_len(s.len, st.window, st.stride, st.padding, "f");
                total += s.channels * L_out * (st.window - 1);
                s.len = L_out;
            }
        }
    };
    flops1d(m.ffe);
    flops1d(m.pe);

    {
        Shape2d s{1, m.config.afe_rows, m.config.afe_cols};
        for (const Stage& st : m.afe.plan) {
            if (st.kind == StageKind::conv) {
                const std::size_t H_out = window_out_len(s.h, st.kernel_h, st.stride, st.padding, "f");
                const std::size_t W_out = window_out_len(s.w, st.kernel_w, st.stride, st.padding, "f");
                total += H_out * W_out * st.channels * (2 * s.channels * st.kernel_h * st.kernel_w + 1);
                s.h = H_out; s.w = W_out; s.channels = st.channels;
            } else if (st.kind == StageKind::bn) {
                total += 2 * s.channels * s.h * s.w;
            } else if (st.kind == StageKind::relu) {
                total += s.channels * s.h * s.w;
            } else if (st.kind == StageKind::pool) {
                const std::size_t H_out = window_out_len(s.h, st.window, st.stride, st.padding, "f");
                const std::size_t W_out = window_out_len(s.w, st.window, st.stride, st.padding, "f");
                total += s.channels * H_out * W_out * (st.window * st.window - 1);
                s.h = H_out; s.w = W_out;
            } else if (st.kind == StageKind::fire) {
                const std::size_t plane = s.h * s.w;
                total += plane * st.squeeze * (2 * s.channels + 1);       // 1x1 squeeze
                total += st.squeeze * plane;                              // relu
                total += plane * st.expand1 * (2 * st.squeeze + 1);       // 1x1 expand
                total += plane * st.expand3 * (2 * st.squeeze * 9 + 1);   // 3x3 expand
                total += (st.expand1 + st.expand3) * plane;               // relu
                s.channels = st.expand1 + st.expand3;
            }
        }
        total += s.channels * (s.h * s.w - 1);  // global spatial max
    }

    const std::size_t T = m.config.seq_steps;
    const std::size_t H = m.config.lstm_hidden;
    for (std::size_t l = 0; l < m.lstm.size(); ++l) {
        const std::size_t D = l == 0 ? m.config.seq_features : 2 * H;
        // Per step and direction: four gate matvecs (8H(D+H)) plus 13H
        // pointwise work (4 bias adds, 4 activations, 3 cell-update ops,
        // tanh(c), and the output product, per hidden unit).
        total += 2 * T * (8 * H * (D + H) + 13 * H);
    }

    total += 2 * (2 * H) * m.concat_width + 2 * H;  // skip projection
    total += 2 * H;                                 // fusion add
    const std::size_t K = m.config.class_count();
    total += 2 * K * (2 * H) + K;                   // prediction head
    total += 4 * K;                                 // softmax
    return total;
}

// ---------------------------------------------------------------------------
// Forward and backward.

enum class FwdMode {
    infer,            // running stats, no dropout
    train,            // batch stats + running-stat update, dropout active
    train_frozen_bn,  // dropout active but batchnorm behaves as at inference
};

struct Branch1dTrace {
    std::vector<std::vector<Tensor>> stage_io;                    // [S+1][B]
    std::vector<std::vector<std::vector<std::size_t>>> pool_arg;  // [S][B]
};

struct Branch2dTrace {
    std::vector<std::vector<Tensor>> stage_io;
    std::vector<std::vector<std::vector<std::size_t>>> pool_arg;
    std::vector<BatchNormCache> bn_cache;        // [S], filled at bn stages
    std::vector<std::vector<FireCache>> fire_cache;  // [S][B]
    std::vector<std::vector<std::size_t>> gmax_arg;  // [B]
};

struct ModelTrace {
    std::size_t batch = 0;
    FwdMode mode = FwdMode::infer;
    Branch1dTrace ffe, pe;
    Branch2dTrace afe;
    std::vector<Tensor> concat;                        // [B] of [W]
    std::vector<std::vector<Tensor>> lstm_inputs;      // [B][layers] each [T x D_l]
    std::vector<std::vector<BilstmCache>> lstm_cache;  // [B][layers]
    std::vector<Tensor> last_step;                     // [B] of [2H]
    std::vector<Tensor> fused;                         // [B] of [2H]
    std::vector<std::vector<bool>> drop_mask;          // [B]
    std::vector<Tensor> dropped;                       // [B] of [2H]
    Tensor probs;                                      // [B x K]
};

namespace detail {

inline void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

inline Tensor pack_batch(const std::vector<Tensor>& feats) {
    std::vector<std::size_t> shape = {feats.size()};
    for (std::size_t d : feats[0].shape) shape.push_back(d);
    Tensor packed = Tensor::zeros(shape);
    const std::size_t per = feats[0].numel();
    for (std::size_t b = 0; b < feats.size(); ++b) {
        for (std::size_t i = 0; i < per; ++i) packed.data[b * per + i] = feats[b].data[i];
    }
    return packed;
}

inline void unpack_batch(const Tensor& packed, std::vector<Tensor>& feats) {
    const std::size_t per = feats[0].numel();
    for (std::size_t b = 0; b < feats.size(); ++b) {
        for (std::size_t i = 0; i < per; ++i) feats[b].data[i] = packed.data[b * per + i];
    }
}

}  // namespace detail

// Batched forward pass. `batch` is [B x L]; the result is [B x K] with each
// row on the probability simplex. Train modes draw the dropout mask from
// `dropout_seed`, so a fixed (input, seed) pair is exactly reproducible.
inline Tensor forward_batch(Model& model, const Tensor& batch, FwdMode mode,
                            std::uint64_t dropout_seed = 0, ModelTrace* trace = nullptr) {
    const ModelConfig& cfg = model.config;
    if (batch.rank() != 2 || batch.shape[1] != cfg.input_len) {
        throw MismatchError("forward: batch shape " + shape_str(batch.shape) + " wants [B x " +
                            std::to_string(cfg.input_len) + "]");
    }
    const std::size_t B = batch.shape[0];
    const std::size_t T = cfg.seq_steps;
    const std::size_t D = cfg.seq_features;
    const std::size_t H = cfg.lstm_hidden;
    const std::size_t K = cfg.class_count();
    const bool train = mode != FwdMode::infer;
    const bool bn_train = mode == FwdMode::train;

    if (trace) {
        *trace = ModelTrace{};
        trace->batch = B;
        trace->mode = mode;
    }

    // --- 1D branches.
    const auto run1d = [&](const Branch1d& br, Branch1dTrace* btr) {
        std::vector<Tensor> feats(B, Tensor::zeros({1, cfg.input_len}));
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t i = 0; i < cfg.input_len; ++i) feats[b](0, i) = batch(b, i);
        }
        const std::size_t S = br.plan.size();
        if (btr) {
            btr->stage_io.assign(S + 1, {});
            btr->pool_arg.assign(S, std::vector<std::vector<std::size_t>>(B));
        }
        std::size_t conv_i = 0;
        for (std::size_t s = 0; s < S; ++s) {
            if (btr) btr->stage_io[s] = feats;
            const Stage& st = br.plan[s];
            if (st.kind == StageKind::conv) {
                const Conv1dLayer& layer = br.convs[conv_i++];
                for (std::size_t b = 0; b < B; ++b) {
                    feats[b] = conv1d(feats[b], layer.spec, layer.w, layer.b);
                }
            } else if (st.kind == StageKind::relu) {
                for (std::size_t b = 0; b < B; ++b) feats[b] = relu(feats[b]);
            } else {
                for (std::size_t b = 0; b < B; ++b) {
                    feats[b] = maxpool1d(feats[b], st.window, st.stride, st.padding,
                                         btr ? &btr->pool_arg[s][b] : nullptr);
                }
            }
        }
        if (btr) btr->stage_io[S] = feats;
        return feats;
    };
    const std::vector<Tensor> ffe_out = run1d(model.ffe, trace ? &trace->ffe : nullptr);
    const std::vector<Tensor> pe_out = run1d(model.pe, trace ? &trace->pe : nullptr);

    // --- 2D branch; batchnorm stages act on the whole batch at once.
    std::vector<Tensor> afe_out(B, Tensor::zeros({model.afe.out_width}));
    {
        Branch2dTrace* btr = trace ? &trace->afe : nullptr;
        std::vector<Tensor> feats(B, Tensor::zeros({1, cfg.afe_rows, cfg.afe_cols}));
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t i = 0; i < cfg.input_len; ++i) feats[b].data[i] = batch(b, i);
        }
        const std::size_t S = model.afe.plan.size();
        if (btr) {
            btr->stage_io.assign(S + 1, {});
            btr->pool_arg.assign(S, std::vector<std::vector<std::size_t>>(B));
            btr->bn_cache.assign(S, BatchNormCache{});
            btr->fire_cache.assign(S, std::vector<FireCache>(B));
            btr->gmax_arg.assign(B, {});
        }
        std::size_t conv_i = 0, bn_i = 0, fire_i = 0;
        for (std::size_t s = 0; s < S; ++s) {
            if (btr) btr->stage_io[s] = feats;
            const Stage& st = model.afe.plan[s];
            if (st.kind == StageKind::conv) {
                const Conv2dLayer& layer = model.afe.convs[conv_i++];
                for (std::size_t b = 0; b < B; ++b) {
                    feats[b] = conv2d(feats[b], layer.spec, layer.w, layer.b);
                }
            } else if (st.kind == StageKind::bn) {
                BatchNormParams& bn = model.afe.bns[bn_i++];
                const Tensor packed = detail::pack_batch(feats);
                const Tensor normed =
                    batchnorm_forward(packed, bn, bn_train, btr ? &btr->bn_cache[s] : nullptr);
                detail::unpack_batch(normed, feats);
            } else if (st.kind == StageKind::relu) {
                for (std::size_t b = 0; b < B; ++b) feats[b] = relu(feats[b]);
            } else if (st.kind == StageKind::pool) {
                for (std::size_t b = 0; b < B; ++b) {
                    feats[b] = maxpool2d(feats[b], st.window, st.window, st.stride, st.stride,
                                         st.padding, btr ? &btr->pool_arg[s][b] : nullptr);
                }
            } else {
                const FireParams& fire = model.afe.fires[fire_i++];
                for (std::size_t b = 0; b < B; ++b) {
                    feats[b] = fire_forward(feats[b], fire, btr ? &btr->fire_cache[s][b] : nullptr);
                }
            }
        }
        if (btr) btr->stage_io[S] = feats;
        for (std::size_t b = 0; b < B; ++b) {
            afe_out[b] = global_maxpool2d(feats[b], btr ? &btr->gmax_arg[b] : nullptr);
        }
    }

    // --- concatenate [afe || ffe || pe], reshape to sequence, LSTM stack.
    Rng drop_rng(dropout_seed);
    Tensor probs = Tensor::zeros({B, K});
    if (trace) {
        trace->concat.assign(B, Tensor::zeros({model.concat_width}));
        trace->lstm_inputs.assign(B, {});
        trace->lstm_cache.assign(B, {});
        trace->last_step.assign(B, Tensor::zeros({2 * H}));
        trace->fused.assign(B, Tensor::zeros({2 * H}));
        trace->drop_mask.assign(B, {});
        trace->dropped.assign(B, Tensor::zeros({2 * H}));
    }
    for (std::size_t b = 0; b < B; ++b) {
        Tensor concat = Tensor::zeros({model.concat_width});
        std::size_t at = 0;
        const std::array<const Tensor*, 3> parts = {&afe_out[b], &ffe_out[b], &pe_out[b]};
        for (const Tensor* part : parts) {
            for (double v : part->data) concat.data[at++] = v;
        }
        if (trace) trace->concat[b] = concat;

        Tensor seq = Tensor::zeros({T, D});
        for (std::size_t i = 0; i < model.concat_width; ++i) seq.data[i] = concat.data[i];

        Tensor cur = seq;
        for (std::size_t l = 0; l < model.lstm.size(); ++l) {
            if (trace) trace->lstm_inputs[b].push_back(cur);
            BilstmCache cache;
            Tensor next = bilstm_forward(cur, model.lstm[l].fwd, model.lstm[l].bwd,
                                         trace ? &cache : nullptr);
            if (trace) trace->lstm_cache[b].push_back(std::move(cache));
            cur = std::move(next);
        }
        Tensor last = Tensor::zeros({2 * H});
        for (std::size_t k = 0; k < 2 * H; ++k) last(k) = cur(T - 1, k);
        if (trace) trace->last_step[b] = last;

        Tensor fused = affine(concat, model.skip.w, model.skip.b);
        detail::add_into(fused, last);
        if (trace) trace->fused[b] = fused;

        std::vector<bool> mask;
        const Tensor dropped = dropout_forward(fused, cfg.dropout_rate, train, drop_rng,
                                               trace ? &mask : nullptr);
        if (trace) {
            trace->drop_mask[b] = std::move(mask);
            trace->dropped[b] = dropped;
        }

        const Tensor logits = affine(dropped, model.head.w, model.head.b);
        const Tensor p = softmax(logits);
        for (std::size_t k = 0; k < K; ++k) probs(b, k) = p(k);
    }
    if (trace) trace->probs = probs;
    return probs;
}

// Backward pass for a traced forward. `grad_probs_logits` is the gradient of
// the loss w.r.t. the LOGITS (for cross-entropy on softmax output that is
// (p - onehot)/B, which is why no softmax backward appears here). Gradients
// accumulate into `grads`, a container from make_gradients.
inline void backward_batch(const Model& model, const ModelTrace& trace,
                           const Tensor& grad_logits, Model& grads) {
    const ModelConfig& cfg = model.config;
    const std::size_t B = trace.batch;
    const std::size_t T = cfg.seq_steps;
    const std::size_t H = cfg.lstm_hidden;
    const std::size_t K = cfg.class_count();
    if (grad_logits.shape != std::vector<std::size_t>{B, K}) {
        throw std::invalid_argument("backward: grad shape " + shape_str(grad_logits.shape) +
                                    " wants [" + std::to_string(B) + " x " + std::to_string(K) + "]");
    }
    const bool train = trace.mode != FwdMode::infer;

    std::vector<Tensor> d_concat(B, Tensor::zeros({model.concat_width}));
    for (std::size_t b = 0; b < B; ++b) {
        Tensor gl = Tensor::zeros({K});
        for (std::size_t k = 0; k < K; ++k) gl(k) = grad_logits(b, k);

        const AffineGrads gh = affine_backward(trace.dropped[b], model.head.w, gl);
        detail::add_into(grads.head.w, gh.d_weights);
        detail::add_into(grads.head.b, gh.d_bias);

        Tensor d_fused = train && cfg.dropout_rate > 0.0
                             ? dropout_backward(gh.d_input, trace.drop_mask[b], cfg.dropout_rate)
                             : gh.d_input;

        // The fusion is an elementwise add, so the gradient fans out intact
        // to both the skip projection and the last sequence step.
        const AffineGrads gs = affine_backward(trace.concat[b], model.skip.w, d_fused);
        detail::add_into(grads.skip.w, gs.d_weights);
        detail::add_into(grads.skip.b, gs.d_bias);
        detail::add_into(d_concat[b], gs.d_input);

        Tensor g_seq = Tensor::zeros({T, 2 * H});
        for (std::size_t k = 0; k < 2 * H; ++k) g_seq(T - 1, k) = d_fused(k);
        for (std::size_t l = model.lstm.size(); l-- > 0;) {
            BilstmGrads bg = bilstm_backward(model.lstm[l].fwd, model.lstm[l].bwd,
                                             trace.lstm_cache[b][l], g_seq);
            detail::add_into(grads.lstm[l].fwd.w_xi, bg.fwd.w_xi);
            detail::add_into(grads.lstm[l].fwd.w_xf, bg.fwd.w_xf);
            detail::add_into(grads.lstm[l].fwd.w_xo, bg.fwd.w_xo);
            detail::add_into(grads.lstm[l].fwd.w_xg, bg.fwd.w_xg);
            detail::add_into(grads.lstm[l].fwd.w_hi, bg.fwd.w_hi);
            detail::add_into(grads.lstm[l].fwd.w_hf, bg.fwd.w_hf);
            detail::add_into(grads.lstm[l].fwd.w_ho, bg.fwd.w_ho);
            detail::add_into(grads.lstm[l].fwd.w_hg, bg.fwd.w_hg);
            detail::add_into(grads.lstm[l].fwd.b_i, bg.fwd.b_i);
            detail::add_into(grads.lstm[l].fwd.b_f, bg.fwd.b_f);
            detail::add_into(grads.lstm[l].fwd.b_o, bg.fwd.b_o);
            detail::add_into(grads.lstm[l].fwd.b_g, bg.fwd.b_g);
            detail::add_into(grads.lstm[l].bwd.w_xi, bg.bwd.w_xi);
            detail::add_into(grads.lstm[l].bwd.w_xf, bg.bwd.w_xf);
            detail::add_into(grads.lstm[l].bwd.w_xo, bg.bwd.w_xo);
            detail::add_into(grads.lstm[l].bwd.w_xg, bg.bwd.w_xg);
            detail::add_into(grads.lstm[l].bwd.w_hi, bg.bwd.w_hi);
            detail::add_into(grads.lstm[l].bwd.w_hf, bg.bwd.w_hf);
            detail::add_into(grads.lstm[l].bwd.w_ho, bg.bwd.w_ho);
            detail::add_into(grads.lstm[l].bwd.w_hg, bg.bwd.w_hg);
            detail::add_into(grads.lstm[l].bwd.b_i, bg.bwd.b_i);
            detail::add_into(grads.lstm[l].bwd.b_f, bg.bwd.b_f);
            detail::add_into(grads.lstm[l].bwd.b_o, bg.bwd.b_o);
            detail::add_into(grads.lstm[l].bwd.b_g, bg.bwd.b_g);
            if (cfg.lstm_peepholes) {
                detail::add_into(grads.lstm[l].fwd.p_i, bg.fwd.p_i);
                detail::add_into(grads.lstm[l].fwd.p_f, bg.fwd.p_f);
                detail::add_into(grads.lstm[l].fwd.p_o, bg.fwd.p_o);
                detail::add_into(grads.lstm[l].bwd.p_i, bg.bwd.p_i);
                detail::add_into(grads.lstm[l].bwd.p_f, bg.bwd.p_f);
                detail::add_into(grads.lstm[l].bwd.p_o, bg.bwd.p_o);
            }
            g_seq = std::move(bg.d_seq);
        }
        // g_seq is now [T x D]; only the first concat_width flattened entries
        // map back to real features, the rest was zero padding.
        for (std::size_t i = 0; i < model.concat_width; ++i) d_concat[b].data[i] += g_seq.data[i];
    }

    // Split the concat gradient back into branch gradients.
    std::vector<Tensor> d_afe(B, Tensor::zeros({model.afe.out_width}));
    std::vector<Tensor> d_ffe(B), d_pe(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t at = 0;
        for (std::size_t i = 0; i < model.afe.out_width; ++i) d_afe[b](i) = d_concat[b].data[at++];
        d_ffe[b] = Tensor::zeros(trace.ffe.stage_io.back()[b].shape);
        for (std::size_t i = 0; i < model.ffe.out_width; ++i) d_ffe[b].data[i] = d_concat[b].data[at++];
        d_pe[b] = Tensor::zeros(trace.pe.stage_io.back()[b].shape);
        for (std::size_t i = 0; i < model.pe.out_width; ++i) d_pe[b].data[i] = d_concat[b].data[at++];
    }

    const auto back1d = [&](const Branch1d& br, Branch1d& gbr, const Branch1dTrace& btr,
                            std::vector<Tensor>& g) {
        std::size_t conv_i = br.convs.size();
        for (std::size_t s = br.plan.size(); s-- > 0;) {
            const Stage& st = br.plan[s];
            if (st.kind == StageKind::conv) {
                --conv_i;
                const Conv1dLayer& layer = br.convs[conv_i];
                for (std::size_t b = 0; b < B; ++b) {
                    const Conv1dGrads cg =
                        conv1d_backward(btr.stage_io[s][b], layer.spec, layer.w, g[b]);
                    detail::add_into(gbr.convs[conv_i].w, cg.d_weights);
                    detail::add_into(gbr.convs[conv_i].b, cg.d_bias);
                    g[b] = cg.d_input;
                }
            } else if (st.kind == StageKind::relu) {
                for (std::size_t b = 0; b < B; ++b) g[b] = relu_backward(btr.stage_io[s][b], g[b]);
            } else {
                for (std::size_t b = 0; b < B; ++b) {
                    g[b] = maxpool1d_backward(btr.stage_io[s][b], g[b], btr.pool_arg[s][b]);
                }
            }
        }
    };
    back1d(model.ffe, grads.ffe, trace.ffe, d_ffe);
    back1d(model.pe, grads.pe, trace.pe, d_pe);

    {
        const Branch2dTrace& btr = trace.afe;
        std::vector<Tensor> g(B);
        for (std::size_t b = 0; b < B; ++b) {
            g[b] = global_maxpool2d_backward(btr.stage_io.back()[b], d_afe[b], btr.gmax_arg[b]);
        }
        std::size_t conv_i = model.afe.convs.size();
        std::size_t bn_i = model.afe.bns.size();
        std::size_t fire_i = model.afe.fires.size();
        for (std::size_t s = model.afe.plan.size(); s-- > 0;) {
            const Stage& st = model.afe.plan[s];
            if (st.kind == StageKind::conv) {
                --conv_i;
                const Conv2dLayer& layer = model.afe.convs[conv_i];
                for (std::size_t b = 0; b < B; ++b) {
                    const Conv2dGrads cg =
                        conv2d_backward(btr.stage_io[s][b], layer.spec, layer.w, g[b]);
                    detail::add_into(grads.afe.convs[conv_i].w, cg.d_weights);
                    detail::add_into(grads.afe.convs[conv_i].b, cg.d_bias);
                    g[b] = cg.d_input;
                }
            } else if (st.kind == StageKind::bn) {
                --bn_i;
                const Tensor packed = detail::pack_batch(g);
                const BatchNormGrads bg =
                    batchnorm_backward(model.afe.bns[bn_i], btr.bn_cache[s], packed);
                detail::add_into(grads.afe.bns[bn_i].gamma, bg.d_gamma);
                detail::add_into(grads.afe.bns[bn_i].beta, bg.d_beta);
                detail::unpack_batch(bg.d_input, g);
            } else if (st.kind == StageKind::relu) {
                for (std::size_t b = 0; b < B; ++b) g[b] = relu_backward(btr.stage_io[s][b], g[b]);
            } else if (st.kind == StageKind::pool) {
                for (std::size_t b = 0; b < B; ++b) {
                    g[b] = maxpool2d_backward(btr.stage_io[s][b], g[b], btr.pool_arg[s][b]);
                }
            } else {
                --fire_i;
                for (std::size_t b = 0; b < B; ++b) {
                    const FireGrads fg =
                        fire_backward(model.afe.fires[fire_i], btr.fire_cache[s][b], g[b]);
                    detail::add_into(grads.afe.fires[fire_i].squeeze_w, fg.squeeze_w);
                    detail::add_into(grads.afe.fires[fire_i].squeeze_b, fg.squeeze_b);
                    detail::add_into(grads.afe.fires[fire_i].expand1_w, fg.expand1_w);
                    detail::add_into(grads.afe.fires[fire_i].expand1_b, fg.expand1_b);
                    detail::add_into(grads.afe.fires[fire_i].expand3_w, fg.expand3_w);
                    detail::add_into(grads.afe.fires[fire_i].expand3_b, fg.expand3_b);
                    g[b] = fg.d_input;
                }
            }
        }
    }
}

}  // namespace cardioxnet
