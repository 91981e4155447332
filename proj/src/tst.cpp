#include "slotbert/tst.hpp"

#include <cmath>
#include <stdexcept>

namespace slotbert {

TemporalMask sample_frame_mask(int t, double gamma, Rng& rng) {
    if (t < 1) throw std::invalid_argument("sample_frame_mask: T must be >= 1");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("sample_frame_mask: masking ratio must be in [0, 1)");
    int n_masked = static_cast<int>(std::lround(gamma * t));
    if (n_masked > t - 1) n_masked = t - 1; // always keep at least one frame
    TemporalMask m;
    m.ratio = gamma;
    m.kept.assign(t, true);
    // partial Fisher-Yates over frame indices
    std::vector<int> idx(t);
    for (int i = 0; i < t; ++i) idx[i] = i;
    for (int i = 0; i < n_masked; ++i) {
        int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(t - i)));
        std::swap(idx[i], idx[j]);
        m.kept[idx[i]] = false;
    }
    return m;
}

TemporalSlotTransformer::TemporalSlotTransformer(nn::ParamStore& ps, const std::string& prefix,
                                                 const TstConfig& cfg)
    : cfg_(cfg), ln_final_(ps, prefix + ".ln_final", cfg.d_slot) {
    if (cfg.d_slot % cfg.n_heads != 0)
        throw std::invalid_argument("TST: d_slot=" + std::to_string(cfg.d_slot) +
                                    " not divisible by n_heads=" + std::to_string(cfg.n_heads));
    pos_table_ = ps.add(prefix + ".pos_table", cfg.max_t, cfg.d_slot, nn::Init::gaussian, 0.02);
    blocks_.reserve(cfg.n_layers);
    for (int i = 0; i < cfg.n_layers; ++i)
        blocks_.emplace_back(ps, prefix + ".block" + std::to_string(i), cfg.d_slot, cfg.n_heads,
                             static_cast<long>(cfg.ffn_multiplier) * cfg.d_slot);
}

SlotSequence TemporalSlotTransformer::add_temporal_pos(const SlotSequence& s) const {
    if (s.stage != SlotStage::initial)
        throw std::invalid_argument("add_temporal_pos: expects slots at stage 'initial'");
    if (s.t() > cfg_.max_t)
        throw std::invalid_argument("add_temporal_pos: sequence length " + std::to_string(s.t()) +
                                    " exceeds max_T=" + std::to_string(cfg_.max_t));
    SlotSequence out;
    out.stage = SlotStage::positioned;
    out.frames.reserve(s.t());
    for (int ti = 0; ti < s.t(); ++ti) {
        Var pos_row = ag::slice_rows(pos_table_, ti, 1); // same embedding for all K slots at t
        out.frames.push_back(ag::add_row_broadcast(s.frames[ti], pos_row));
    }
    return out;
}

SlotSequence TemporalSlotTransformer::apply_mask(const SlotSequence& s_pos,
                                                 const TemporalMask& m) const {
    if (s_pos.stage != SlotStage::positioned)
        throw std::invalid_argument("apply_mask: expects slots at stage 'positioned'");
    if (m.t() != s_pos.t())
        throw std::invalid_argument("apply_mask: mask length " + std::to_string(m.t()) +
                                    " does not match sequence length " + std::to_string(s_pos.t()));
    SlotSequence out;
    out.stage = SlotStage::masked;
    out.frames.reserve(s_pos.t());
    for (int ti = 0; ti < s_pos.t(); ++ti) {
        if (m.kept[ti])
            out.frames.push_back(s_pos.frames[ti]); // bit-identical pass-through
        else
            out.frames.push_back(ag::constant(Mat::Zero(s_pos.k(), s_pos.d())));
    }
    return out;
}

SlotSequence TemporalSlotTransformer::forward(const SlotSequence& s_masked,
                                              const TemporalMask& m) const {
    if (s_masked.stage != SlotStage::masked)
        throw std::invalid_argument("tst_forward: expects slots at stage 'masked'");
    if (m.t() != s_masked.t())
        throw std::invalid_argument("tst_forward: mask/sequence length mismatch");
    if (s_masked.d() != cfg_.d_slot)
        throw std::invalid_argument("tst_forward: slot width " + std::to_string(s_masked.d()) +
                                    " differs from configured d_slot " + std::to_string(cfg_.d_slot));

    const int t = s_masked.t(), k = s_masked.k();
    // attention is full over all K*T tokens; the mask only selected which
    // tokens were zeroed, so masked positions can gather bidirectional context
    Var tokens = ag::concat_rows(s_masked.frames);
    for (const auto& block : blocks_) tokens = block(tokens);
    tokens = ln_final_(tokens);

    SlotSequence out;
    out.stage = SlotStage::fused;
    out.frames.reserve(t);
    for (int ti = 0; ti < t; ++ti) out.frames.push_back(ag::slice_rows(tokens, ti * k, k));
    return out;
}

Var TemporalSlotTransformer::predict_next_slot(const SlotSequence& history) const {
    const int t = history.t();
    if (t < 1) throw std::invalid_argument("predict_next_slot: history must hold >= 1 frame");
    if (t + 1 > cfg_.max_t)
        throw std::invalid_argument("predict_next_slot: extending to " + std::to_string(t + 1) +
                                    " frames exceeds max_T=" + std::to_string(cfg_.max_t));

    SlotSequence extended;
    extended.stage = SlotStage::initial;
    extended.frames = history.frames;
    extended.frames.push_back(ag::constant(Mat::Zero(history.k(), history.d())));

    TemporalMask m;
    m.kept.assign(t + 1, true);
    m.kept[t] = false; // mask fixed at the last position only
    m.ratio = 1.0 / static_cast<double>(t + 1);

    SlotSequence fused = forward(apply_mask(add_temporal_pos(extended), m), m);
    return fused.frames[t];
}

} // namespace slotbert
