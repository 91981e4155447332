#pragma once

#include "slotbert/autodiff.hpp"
#include "slotbert/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace slotbert::nn {

using ag::Mat;
using ag::Var;

enum class Init { zeros, ones, xavier_uniform, gaussian };

// Named registry of trainable parameters. Modules register into one store so
// the optimizer and checkpoints see a flat (name, tensor) list.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed) : rng_(Rng::derive(seed, 0x7061726dULL)) {}

    Var add(const std::string& name, long rows, long cols, Init init, double scale = 1.0);

    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    std::vector<Var> vars() const;
    Var find(const std::string& name) const; // nullptr when absent

private:
    std::vector<std::pair<std::string, Var>> items_;
    Rng rng_;
};

struct Linear {
    Var w; // in x out
    Var b; // 1 x out (null when bias disabled)

    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, long in, long out, bool bias = true);
    Var operator()(const Var& x) const;
};

struct LayerNorm {
    Var gain, bias;

    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& prefix, long dim);
    Var operator()(const Var& x) const { return ag::layer_norm_rows(x, gain, bias); }
};

// hidden layers share one activation; output layer is linear
struct Mlp {
    enum class Act { relu, gelu };
    std::vector<Linear> layers;
    Act act = Act::relu;

    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& prefix, long in, const std::vector<long>& hidden,
        long out, Act act);
    Var operator()(Var x) const;
};

struct GruCell {
    Linear w_ir, w_iz, w_in; // input projections
    Linear w_hr, w_hz, w_hn; // state projections

    GruCell() = default;
    GruCell(ParamStore& ps, const std::string& prefix, long input_dim, long hidden_dim);
    // x: M x input_dim, h: M x hidden_dim -> M x hidden_dim (rows independent)
    Var operator()(const Var& x, const Var& h) const;
};

// scaled-dot multi-head attention; query and context token sets may differ
Var multihead_attention(const Var& queries, const Var& context, const Linear& wq,
                        const Linear& wk, const Linear& wv, const Linear& wo, int n_heads);

// pre-norm self-attention block with GELU feed-forward
struct TransformerBlock {
    LayerNorm ln_attn, ln_ff;
    Linear wq, wk, wv, wo;
    Linear ff_in, ff_out;
    int n_heads = 1;

    TransformerBlock() = default;
    TransformerBlock(ParamStore& ps, const std::string& prefix, long d_model, int n_heads,
                     long ffn_hidden);
    Var operator()(const Var& tokens) const;
};

// pre-norm cross-attention block: queries attend to a separate context set
struct CrossAttentionBlock {
    LayerNorm ln_q, ln_ctx, ln_ff;
    Linear wq, wk, wv, wo;
    Linear ff_in, ff_out;
    int n_heads = 1;

    CrossAttentionBlock() = default;
    CrossAttentionBlock(ParamStore& ps, const std::string& prefix, long d_model, int n_heads,
                        long ffn_hidden);
    Var operator()(const Var& queries, const Var& context) const;
};

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;

    explicit Adam(std::vector<Var> params, double lr = 1e-4, double weight_decay = 0.0);
    void step(double lr_scale = 1.0);
    void zero_grad();
    // scales all gradients so their global L2 norm is at most max_norm
    double clip_global_norm(double max_norm);

private:
    std::vector<Var> params_;
    std::vector<Mat> m_, v_;
    long t_ = 0;
};

} // namespace slotbert::nn
