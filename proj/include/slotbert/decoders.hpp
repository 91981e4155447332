#pragma once

#include "slotbert/nn.hpp"
#include "slotbert/slot_attention.hpp"

#include <string>
#include <vector>

namespace slotbert {

// Per-frame decoding result. soft_masks rows live on a K-way simplex at each
// of the N patch positions; labels are the per-position argmax (ties -> lowest
// slot index).
struct DecodedFrame {
    Var x_recon;               // N x D_feature
    Var soft_masks;            // K x N
    std::vector<int> labels;   // length N, values in [0, K)
};

std::vector<int> hard_labels(const Mat& soft_masks); // argmax over K, tie -> lowest index

// Per-frame, per-slot masks for a whole clip, both at patch grid and pixel
// resolution (nearest-neighbor patch upsampling).
struct MaskSet {
    int t = 0, k = 0;
    int grid_h = 0, grid_w = 0;       // patch grid
    int h = 0, w = 0;                 // pixel resolution after upsampling
    std::vector<Mat> soft;            // per frame K x N (patch grid)
    std::vector<std::vector<int32_t>> labels_pixel; // per frame h*w hard labels in [0, K)
};

struct MlpDecoderConfig {
    int n_positions = 0; // N, fixed at construction
    int d_slot = 64;
    int d_feature = 0;
    int hidden = 512;
    int n_hidden_layers = 4;
};

// Eq.-7-style broadcast decoder: every slot is tiled over the N positions,
// a shared MLP emits per-token features and an alpha logit, and the slot-axis
// softmax of the alphas composites the final reconstruction.
class MlpBroadcastDecoder {
public:
    MlpBroadcastDecoder() = default;
    MlpBroadcastDecoder(nn::ParamStore& ps, const std::string& prefix,
                        const MlpDecoderConfig& cfg);
    DecodedFrame decode(const Var& slots) const;
    const MlpDecoderConfig& config() const { return cfg_; }

private:
    MlpDecoderConfig cfg_;
    Var pos_table_; // N x d_slot
    nn::Mlp mlp_;   // d_slot -> hidden^L -> D_feature + 1
};

struct MixerDecoderConfig {
    int n_positions = 0;
    int d_slot = 64;
    int d_feature = 0;
    int n_blocks = 2;    // allocation cross-attention depth
    int n_heads = 4;
    int render_hidden = 512;
};

// Three-step SlotMixer decoder: position queries attend to slots
// (allocation), a single-head attention mixes raw slots per position, and a
// shared MLP renders features once per position.
class SlotMixerDecoder {
public:
    SlotMixerDecoder() = default;
    SlotMixerDecoder(nn::ParamStore& ps, const std::string& prefix,
                     const MixerDecoderConfig& cfg);

    Var allocate(const Var& slots) const;                    // N x d_slot
    std::pair<Var, Var> mix(const Var& f, const Var& slots) const; // (m: N x d, a_mix: N x K)
    Var render(const Var& m) const;                          // N x D_feature
    DecodedFrame decode(const Var& slots) const;
    const MixerDecoderConfig& config() const { return cfg_; }

private:
    MixerDecoderConfig cfg_;
    Var pos_queries_; // N x d_slot, shared with the render step
    std::vector<nn::CrossAttentionBlock> blocks_;
    nn::LayerNorm ln_mix_q_, ln_mix_k_;
    nn::Linear mix_q_, mix_k_;
    nn::Mlp render_mlp_;
};

// nearest-neighbor patch-to-pixel label upsampling
std::vector<int32_t> upsample_labels(const std::vector<int>& patch_labels, int grid_h, int grid_w,
                                     int patch_size);

} // namespace slotbert
