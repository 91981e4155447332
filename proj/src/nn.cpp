#include "slotbert/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace slotbert::nn {

Var ParamStore::add(const std::string& name, long rows, long cols, Init init, double scale) {
    for (const auto& [n, v] : items_)
        if (n == name) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    Mat m(rows, cols);
    switch (init) {
        case Init::zeros: m.setZero(); break;
        case Init::ones: m.setOnes(); break;
        case Init::xavier_uniform: {
            double a = std::sqrt(6.0 / static_cast<double>(rows + cols)) * scale;
            for (long i = 0; i < rows; ++i)
                for (long j = 0; j < cols; ++j) m(i, j) = rng_.uniform(-a, a);
            break;
        }
        case Init::gaussian:
            for (long i = 0; i < rows; ++i)
                for (long j = 0; j < cols; ++j) m(i, j) = rng_.gaussian() * scale;
            break;
    }
    Var v = ag::param(std::move(m));
    items_.emplace_back(name, v);
    return v;
}

std::vector<Var> ParamStore::vars() const {
    std::vector<Var> out;
    out.reserve(items_.size());
    for (const auto& [n, v] : items_) out.push_back(v);
    return out;
}

Var ParamStore::find(const std::string& name) const {
    for (const auto& [n, v] : items_)
        if (n == name) return v;
    return nullptr;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, long in, long out, bool bias) {
    w = ps.add(prefix + ".weight", in, out, Init::xavier_uniform);
    if (bias) b = ps.add(prefix + ".bias", 1, out, Init::zeros);
}

Var Linear::operator()(const Var& x) const {
    Var y = ag::matmul(x, w);
    if (b) y = ag::add_row_broadcast(y, b);
    return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, long dim) {
    gain = ps.add(prefix + ".gain", 1, dim, Init::ones);
    bias = ps.add(prefix + ".bias", 1, dim, Init::zeros);
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, long in, const std::vector<long>& hidden,
         long out, Act act_)
    : act(act_) {
    long d = in;
    for (size_t i = 0; i < hidden.size(); ++i) {
        layers.emplace_back(ps, prefix + ".fc" + std::to_string(i), d, hidden[i]);
        d = hidden[i];
    }
    layers.emplace_back(ps, prefix + ".out", d, out);
}

Var Mlp::operator()(Var x) const {
    for (size_t i = 0; i + 1 < layers.size(); ++i) {
        x = layers[i](x);
        x = act == Act::relu ? ag::relu(x) : ag::gelu(x);
    }
    return layers.back()(x);
}

GruCell::GruCell(ParamStore& ps, const std::string& prefix, long input_dim, long hidden_dim)
    : w_ir(ps, prefix + ".w_ir", input_dim, hidden_dim),
      w_iz(ps, prefix + ".w_iz", input_dim, hidden_dim),
      w_in(ps, prefix + ".w_in", input_dim, hidden_dim),
      w_hr(ps, prefix + ".w_hr", hidden_dim, hidden_dim),
      w_hz(ps, prefix + ".w_hz", hidden_dim, hidden_dim),
      w_hn(ps, prefix + ".w_hn", hidden_dim, hidden_dim) {}

Var GruCell::operator()(const Var& x, const Var& h) const {
    Var r = ag::sigmoid(ag::add(w_ir(x), w_hr(h)));
    Var z = ag::sigmoid(ag::add(w_iz(x), w_hz(h)));
    Var n = ag::tanh(ag::add(w_in(x), ag::mul(r, w_hn(h))));
    // h' = (1 - z) * n + z * h
    Var one_minus_z = ag::add_scalar(ag::neg(z), 1.0);
    return ag::add(ag::mul(one_minus_z, n), ag::mul(z, h));
}

Var multihead_attention(const Var& queries, const Var& context, const Linear& wq,
                        const Linear& wk, const Linear& wv, const Linear& wo, int n_heads) {
    long d = wq.w->cols();
    if (d % n_heads != 0)
        throw std::invalid_argument("multihead_attention: model dim " + std::to_string(d) +
                                    " not divisible by " + std::to_string(n_heads) + " heads");
    long dh = d / n_heads;
    Var q = wq(queries), k = wk(context), v = wv(context);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    heads.reserve(n_heads);
    for (int h = 0; h < n_heads; ++h) {
        Var qh = ag::slice_cols(q, h * dh, dh);
        Var kh = ag::slice_cols(k, h * dh, dh);
        Var vh = ag::slice_cols(v, h * dh, dh);
        Var attn = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt));
        heads.push_back(ag::matmul(attn, vh));
    }
    return wo(heads.size() == 1 ? heads[0] : ag::concat_cols(heads));
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& prefix, long d_model,
                                   int n_heads_, long ffn_hidden)
    : ln_attn(ps, prefix + ".ln_attn", d_model),
      ln_ff(ps, prefix + ".ln_ff", d_model),
      wq(ps, prefix + ".wq", d_model, d_model),
      wk(ps, prefix + ".wk", d_model, d_model),
      wv(ps, prefix + ".wv", d_model, d_model),
      wo(ps, prefix + ".wo", d_model, d_model),
      ff_in(ps, prefix + ".ff_in", d_model, ffn_hidden),
      ff_out(ps, prefix + ".ff_out", ffn_hidden, d_model),
      n_heads(n_heads_) {}

Var TransformerBlock::operator()(const Var& tokens) const {
    Var normed = ln_attn(tokens);
    Var x = ag::add(tokens, multihead_attention(normed, normed, wq, wk, wv, wo, n_heads));
    Var y = ff_out(ag::gelu(ff_in(ln_ff(x))));
    return ag::add(x, y);
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& prefix, long d_model,
                                         int n_heads_, long ffn_hidden)
    : ln_q(ps, prefix + ".ln_q", d_model),
      ln_ctx(ps, prefix + ".ln_ctx", d_model),
      ln_ff(ps, prefix + ".ln_ff", d_model),
      wq(ps, prefix + ".wq", d_model, d_model),
      wk(ps, prefix + ".wk", d_model, d_model),
      wv(ps, prefix + ".wv", d_model, d_model),
      wo(ps, prefix + ".wo", d_model, d_model),
      ff_in(ps, prefix + ".ff_in", d_model, ffn_hidden),
      ff_out(ps, prefix + ".ff_out", ffn_hidden, d_model),
      n_heads(n_heads_) {}

Var CrossAttentionBlock::operator()(const Var& queries, const Var& context) const {
    Var x = ag::add(queries,
                    multihead_attention(ln_q(queries), ln_ctx(context), wq, wk, wv, wo, n_heads));
    Var y = ff_out(ag::gelu(ff_in(ln_ff(x))));
    return ag::add(x, y);
}

Adam::Adam(std::vector<Var> params, double lr_, double weight_decay_)
    : lr(lr_), weight_decay(weight_decay_), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Mat::Zero(p->rows(), p->cols()));
        v_.emplace_back(Mat::Zero(p->rows(), p->cols()));
    }
}

void Adam::step(double lr_scale) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        Mat g = p->grad.size() ? p->grad : Mat::Zero(p->rows(), p->cols());
        if (weight_decay != 0.0) g += weight_decay * p->val;
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseProduct(g);
        Mat mhat = m_[i] / bc1;
        Mat vhat = v_[i] / bc2;
        p->val -= (lr * lr_scale) * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
}

double Adam::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_)
        if (p->grad.size()) sq += p->grad.squaredNorm();
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        for (auto& p : params_)
            if (p->grad.size()) p->grad *= scale;
    }
    return norm;
}

void Adam::zero_grad() { ag::zero_grad(params_); }

} // namespace slotbert::nn
