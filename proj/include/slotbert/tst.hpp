#pragma once

#include "slotbert/nn.hpp"
#include "slotbert/rng.hpp"
#include "slotbert/slot_attention.hpp"

#include <string>
#include <vector>

namespace slotbert {

struct TemporalMask {
    std::vector<bool> kept; // true = frame visible
    double ratio = 0.0;

    int t() const { return static_cast<int>(kept.size()); }
    int masked_count() const {
        int m = 0;
        for (bool k : kept)
            if (!k) ++m;
        return m;
    }
};

struct TstConfig {
    int n_layers = 3;
    int n_heads = 8;
    int ffn_multiplier = 4;
    int d_slot = 64;
    int max_t = 32;
};

// picks exactly min(round(gamma*T), T-1) frames uniformly without replacement
TemporalMask sample_frame_mask(int t, double gamma, Rng& rng);

// Bidirectional transformer over the K*T slot tokens. Only temporal position
// is encoded; slot order stays anonymous, so the module is equivariant to a
// consistent permutation of slot indices.
class TemporalSlotTransformer {
public:
    TemporalSlotTransformer() = default;
    TemporalSlotTransformer(nn::ParamStore& ps, const std::string& prefix, const TstConfig& cfg);

    SlotSequence add_temporal_pos(const SlotSequence& s) const; // initial -> positioned
    SlotSequence apply_mask(const SlotSequence& s_pos, const TemporalMask& m) const; // -> masked
    SlotSequence forward(const SlotSequence& s_masked, const TemporalMask& m) const; // -> fused
    // Supp-style next-slot initialization: zero slot set appended at position
    // history.t(), mask fixed there, weights shared with forward().
    Var predict_next_slot(const SlotSequence& history) const; // K x d_slot

    const TstConfig& config() const { return cfg_; }

private:
    TstConfig cfg_;
    Var pos_table_; // max_t x d_slot learnable
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm ln_final_;
};

} // namespace slotbert
