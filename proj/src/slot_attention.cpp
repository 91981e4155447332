#include "slotbert/slot_attention.hpp"

#include <cmath>
#include <stdexcept>

namespace slotbert {

namespace {
constexpr double kDeadRowEps = 1e-12;
}

SlotAttention::SlotAttention(nn::ParamStore& ps, const std::string& prefix, long d_feature,
                             const SlotAttentionConfig& cfg)
    : cfg_(cfg),
      ln_input_(ps, prefix + ".ln_input", d_feature),
      ln_slots_(ps, prefix + ".ln_slots", cfg.d_slot),
      ln_mlp_(ps, prefix + ".ln_mlp", cfg.d_slot),
      input_proj_(ps, prefix + ".input_proj", d_feature, cfg.d_slot),
      w_q_(ps, prefix + ".w_q", cfg.d_slot, cfg.d_slot, /*bias=*/false),
      w_k_(ps, prefix + ".w_k", cfg.d_slot, cfg.d_slot, /*bias=*/false),
      w_v_(ps, prefix + ".w_v", cfg.d_slot, cfg.d_slot, /*bias=*/false),
      gru_(ps, prefix + ".gru", cfg.d_slot, cfg.d_slot),
      mlp_(ps, prefix + ".mlp", cfg.d_slot, {cfg.mlp_hidden}, cfg.d_slot, nn::Mlp::Act::relu) {
    if (cfg.k < 1) throw std::invalid_argument("SlotAttention: K must be >= 1");
    if (cfg.d_slot < 1) throw std::invalid_argument("SlotAttention: d_slot must be >= 1");
    if (cfg.init_mode == "learned_gaussian") {
        init_mu_ = ps.add(prefix + ".init_mu", 1, cfg.d_slot, nn::Init::zeros);
        init_log_sigma_ = ps.add(prefix + ".init_log_sigma", 1, cfg.d_slot, nn::Init::zeros);
    } else if (cfg.init_mode != "standard_gaussian") {
        throw std::invalid_argument("SlotAttention: unknown init mode '" + cfg.init_mode + "'");
    }
    if (cfg.refine_cell != "gru_mlp" && cfg.refine_cell != "none")
        throw std::invalid_argument("SlotAttention: unknown refine cell '" + cfg.refine_cell + "'");
    if (cfg.grid_h > 0 && cfg.grid_w > 0) {
        // soft position embedding over the patch grid (border distances)
        pos_proj_ = nn::Linear(ps, prefix + ".pos_proj", 4, cfg.d_slot);
        Mat coords(cfg.grid_h * cfg.grid_w, 4);
        for (int r = 0; r < cfg.grid_h; ++r) {
            for (int c = 0; c < cfg.grid_w; ++c) {
                double y = cfg.grid_h > 1 ? static_cast<double>(r) / (cfg.grid_h - 1) : 0.5;
                double x = cfg.grid_w > 1 ? static_cast<double>(c) / (cfg.grid_w - 1) : 0.5;
                coords.row(r * cfg.grid_w + c) << x, y, 1.0 - x, 1.0 - y;
            }
        }
        pos_coords_ = ag::constant(std::move(coords));
    }
}

Var SlotAttention::init_slots(int k, Rng& rng) const {
    if (k < 1) throw std::invalid_argument("init_slots: K must be >= 1");
    Mat noise(k, cfg_.d_slot);
    for (long i = 0; i < noise.rows(); ++i)
        for (long j = 0; j < noise.cols(); ++j) noise(i, j) = rng.gaussian();
    if (cfg_.init_mode == "standard_gaussian") return ag::constant(std::move(noise));
    // reparameterized N(mu, exp(log_sigma)) with shared learnable statistics
    Var eps = ag::constant(std::move(noise));
    Var sigma = ag::exp(init_log_sigma_);
    Var scaled = ag::mul(eps, ag::concat_rows(std::vector<Var>(k, sigma)));
    return ag::add(scaled, ag::concat_rows(std::vector<Var>(k, init_mu_)));
}

Var SlotAttention::condition(const Var& x) const {
    Var h = input_proj_(ln_input_(x));
    if (pos_coords_) {
        if (x->rows() != pos_coords_->rows())
            throw std::invalid_argument("slot attention: feature count " +
                                        std::to_string(x->rows()) +
                                        " does not match the configured grid");
        h = ag::add(h, pos_proj_(pos_coords_));
    }
    return h;
}

std::pair<Var, AttentionRecord> SlotAttention::step(const Var& x, const Var& slots) const {
    Var h = condition(x);           // N x d
    Var k = w_k_(h);                // N x d
    Var v = w_v_(h);                // N x d
    Var q = w_q_(ln_slots_(slots)); // K x d

    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg_.d_slot));
    Var logits = ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d); // K x N
    Var a = ag::softmax_cols(logits);           // normalized over slots: competition
    Var a_hat = ag::normalize_rows_guarded(a, kDeadRowEps);
    Var readout = ag::matmul(a_hat, v);         // K x d

    if (!readout->val.allFinite())
        throw std::runtime_error("slot_attention_step: non-finite attention readout");

    Var updated;
    if (cfg_.refine_cell == "none") {
        updated = readout;
    } else {
        Var gru_out = gru_(readout, slots);
        updated = ag::add(gru_out, mlp_(ln_mlp_(gru_out)));
    }
    return {updated, AttentionRecord{a, a_hat}};
}

std::pair<Var, AttentionRecord> SlotAttention::run(const Var& x, const Var& slots_init,
                                                   int n_iters) const {
    if (n_iters < 1) throw std::invalid_argument("run_slot_attention: n_iters must be >= 1");
    Var slots = slots_init;
    AttentionRecord rec;
    for (int i = 0; i < n_iters; ++i) {
        try {
            auto [next, r] = step(x, slots);
            slots = next;
            rec = r;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " (iteration " + std::to_string(i) +
                                     " of " + std::to_string(n_iters) + ")");
        }
    }
    return {slots, rec};
}

std::pair<SlotSequence, std::vector<AttentionRecord>> SlotAttention::run_video(
    const FeatureSequence& x, Rng& rng) const {
    SlotSequence seq;
    seq.stage = SlotStage::initial;
    std::vector<AttentionRecord> records;
    Var slots;
    for (int ti = 0; ti < x.frames(); ++ti) {
        Var features = ag::constant(x.data[ti]);
        if (ti == 0) {
            auto [s, rec] = run(features, init_slots(cfg_.k, rng), cfg_.n_first);
            slots = s;
            records.push_back(rec);
        } else {
            auto [s, rec] = run(features, slots, cfg_.n_later);
            slots = s;
            records.push_back(rec);
        }
        seq.frames.push_back(slots);
    }
    return {seq, records};
}

} // namespace slotbert
