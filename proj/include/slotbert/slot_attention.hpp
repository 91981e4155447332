#pragma once

#include "slotbert/autodiff.hpp"
#include "slotbert/features.hpp"
#include "slotbert/nn.hpp"
#include "slotbert/rng.hpp"

#include <string>
#include <vector>

namespace slotbert {

using ag::Var;

// Slots for one frame plus the attention maps of the last refinement step.
struct AttentionRecord {
    Var a;     // K x N, softmax-normalized over slots (columns sum to 1)
    Var a_hat; // K x N, rows renormalized over features (dead rows stay zero)
};

enum class SlotStage { initial, positioned, masked, fused };

struct SlotSequence {
    std::vector<Var> frames; // per frame: K x d_slot
    SlotStage stage = SlotStage::initial;

    int t() const { return static_cast<int>(frames.size()); }
    int k() const { return frames.empty() ? 0 : static_cast<int>(frames[0]->rows()); }
    int d() const { return frames.empty() ? 0 : static_cast<int>(frames[0]->cols()); }
};

struct SlotAttentionConfig {
    int k = 7;
    int d_slot = 64;
    int n_first = 3;      // iterations on the first frame
    int n_later = 2;      // iterations on warm-started frames
    std::string refine_cell = "gru_mlp"; // gru_mlp | none
    std::string init_mode = "standard_gaussian"; // standard_gaussian | learned_gaussian
    int mlp_hidden = 128; // residual refinement MLP width
    // patch grid for the soft position embedding added to the conditioned
    // features; 0 disables it (raw feature tokens carry no location, so the
    // grid must be set whenever the encoder features are position-free)
    int grid_h = 0, grid_w = 0;
};

// Iterative competitive attention over per-frame features, with RNN-style
// warm starting of each frame's slots from the previous frame's result.
class SlotAttention {
public:
    SlotAttention() = default;
    SlotAttention(nn::ParamStore& ps, const std::string& prefix, long d_feature,
                  const SlotAttentionConfig& cfg);

    Var init_slots(int k, Rng& rng) const; // K x d_slot
    // x: N x D_feature raw features; one attention + refinement iteration
    std::pair<Var, AttentionRecord> step(const Var& x, const Var& slots) const;
    std::pair<Var, AttentionRecord> run(const Var& x, const Var& slots_init, int n_iters) const;
    // full clip: frame 0 from init_slots, frame t>0 warm-started from t-1
    std::pair<SlotSequence, std::vector<AttentionRecord>> run_video(const FeatureSequence& x,
                                                                    Rng& rng) const;

    const SlotAttentionConfig& config() const { return cfg_; }

private:
    Var condition(const Var& x) const; // layer norm + linear on input features

    SlotAttentionConfig cfg_;
    nn::LayerNorm ln_input_, ln_slots_, ln_mlp_;
    nn::Linear input_proj_, w_q_, w_k_, w_v_;
    nn::GruCell gru_;
    nn::Mlp mlp_;
    Var init_mu_, init_log_sigma_; // learned_gaussian mode
    nn::Linear pos_proj_;          // (x, y, 1-x, 1-y) -> d_slot
    Var pos_coords_;               // constant N x 4 grid coordinates
};

} // namespace slotbert
