#include "slotbert/decoders.hpp"

#include <cmath>
#include <stdexcept>

namespace slotbert {

std::vector<int> hard_labels(const Mat& soft_masks) {
    std::vector<int> labels(soft_masks.cols());
    for (long n = 0; n < soft_masks.cols(); ++n) {
        int best = 0;
        double best_val = soft_masks(0, n);
        for (long k = 1; k < soft_masks.rows(); ++k)
            if (soft_masks(k, n) > best_val) { // strict: ties resolve to lowest index
                best_val = soft_masks(k, n);
                best = static_cast<int>(k);
            }
        labels[n] = best;
    }
    return labels;
}

std::vector<int32_t> upsample_labels(const std::vector<int>& patch_labels, int grid_h, int grid_w,
                                     int patch_size) {
    if (patch_labels.size() != static_cast<size_t>(grid_h) * grid_w)
        throw std::invalid_argument("upsample_labels: label count does not match grid");
    int h = grid_h * patch_size, w = grid_w * patch_size;
    std::vector<int32_t> out(static_cast<size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            out[static_cast<size_t>(r) * w + c] =
                patch_labels[static_cast<size_t>(r / patch_size) * grid_w + c / patch_size];
    return out;
}

MlpBroadcastDecoder::MlpBroadcastDecoder(nn::ParamStore& ps, const std::string& prefix,
                                         const MlpDecoderConfig& cfg)
    : cfg_(cfg),
      mlp_(ps, prefix + ".mlp", cfg.d_slot,
           std::vector<long>(cfg.n_hidden_layers, cfg.hidden), cfg.d_feature + 1,
           nn::Mlp::Act::relu) {
    // spatial embeddings start at unit-ish scale so the alpha masks can
    // localize from the first steps
    pos_table_ = ps.add(prefix + ".pos_table", cfg.n_positions, cfg.d_slot, nn::Init::gaussian,
                        0.5);
}

DecodedFrame MlpBroadcastDecoder::decode(const Var& slots) const {
    const long k = slots->rows();
    const long n = cfg_.n_positions;
    const long d_feat = cfg_.d_feature;
    if (slots->cols() != cfg_.d_slot)
        throw std::invalid_argument("mlp_broadcast_decode: slot width mismatch");

    // (K*N) x d tokens: slot k tiled over positions with additive pos encoding
    Var tokens = ag::broadcast_rows_add(slots, n, pos_table_);
    Var out = mlp_(tokens);                           // (K*N) x (D+1)
    Var feats = ag::slice_cols(out, 0, d_feat);       // per-slot reconstructions
    Var alpha = ag::slice_cols(out, d_feat, 1);       // (K*N) x 1 logits

    // alpha column -> K x N, then softmax over slots per position
    std::vector<Var> alpha_rows;
    alpha_rows.reserve(k);
    for (long i = 0; i < k; ++i)
        alpha_rows.push_back(ag::transpose(ag::slice_rows(alpha, i * n, n)));
    Var masks = ag::softmax_cols(ag::concat_rows(alpha_rows)); // K x N

    Var recon; // sum_k m_k * x_hat_k
    for (long i = 0; i < k; ++i) {
        Var xk = ag::slice_rows(feats, i * n, n);                  // N x D
        Var mk = ag::transpose(ag::slice_rows(masks, i, 1));       // N x 1
        Var weighted = ag::mul_col_broadcast(xk, mk);
        recon = recon ? ag::add(recon, weighted) : weighted;
    }

    DecodedFrame frame;
    frame.x_recon = recon;
    frame.soft_masks = masks;
    frame.labels = hard_labels(masks->val);
    return frame;
}

SlotMixerDecoder::SlotMixerDecoder(nn::ParamStore& ps, const std::string& prefix,
                                   const MixerDecoderConfig& cfg)
    : cfg_(cfg),
      ln_mix_q_(ps, prefix + ".ln_mix_q", cfg.d_slot),
      ln_mix_k_(ps, prefix + ".ln_mix_k", cfg.d_slot),
      mix_q_(ps, prefix + ".mix_q", cfg.d_slot, cfg.d_slot, /*bias=*/false),
      mix_k_(ps, prefix + ".mix_k", cfg.d_slot, cfg.d_slot, /*bias=*/false),
      render_mlp_(ps, prefix + ".render", cfg.d_slot, {cfg.render_hidden, cfg.render_hidden},
                  cfg.d_feature, nn::Mlp::Act::relu) {
    pos_queries_ = ps.add(prefix + ".pos_queries", cfg.n_positions, cfg.d_slot,
                          nn::Init::gaussian, 0.5);
    blocks_.reserve(cfg.n_blocks);
    for (int i = 0; i < cfg.n_blocks; ++i)
        blocks_.emplace_back(ps, prefix + ".alloc" + std::to_string(i), cfg.d_slot, cfg.n_heads,
                             4L * cfg.d_slot);
}

Var SlotMixerDecoder::allocate(const Var& slots) const {
    if (slots->cols() != cfg_.d_slot)
        throw std::invalid_argument("mixer_allocate: slot width mismatch");
    Var f = pos_queries_;
    for (const auto& block : blocks_) f = block(f, slots);
    return f;
}

std::pair<Var, Var> SlotMixerDecoder::mix(const Var& f, const Var& slots) const {
    if (f->cols() != cfg_.d_slot || f->rows() != cfg_.n_positions)
        throw std::invalid_argument("mixer_mix: embedding shape mismatch");
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d_slot));
    Var q = mix_q_(ln_mix_q_(f));      // N x d
    Var k = mix_k_(ln_mix_k_(slots));  // K x d
    Var a_mix = ag::softmax_rows(ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d)); // N x K
    // mix raw slots per position: m[n,:] = sum_k A_mix[n,k] * slots[k,:]
    Var m = ag::matmul(a_mix, slots);
    return {m, a_mix};
}

Var SlotMixerDecoder::render(const Var& m) const {
    if (m->rows() != cfg_.n_positions || m->cols() != cfg_.d_slot)
        throw std::invalid_argument("mixer_render: mix shape mismatch");
    // position embedding shared with the allocation queries
    return render_mlp_(ag::add(m, pos_queries_));
}

DecodedFrame SlotMixerDecoder::decode(const Var& slots) const {
    Var f = allocate(slots);
    auto [m, a_mix] = mix(f, slots);
    DecodedFrame frame;
    frame.x_recon = render(m);
    frame.soft_masks = ag::transpose(a_mix); // K channel segmentation masks
    frame.labels = hard_labels(frame.soft_masks->val);
    return frame;
}

} // namespace slotbert
