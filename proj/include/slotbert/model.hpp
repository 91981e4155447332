#pragma once

#include "slotbert/config.hpp"
#include "slotbert/decoders.hpp"
#include "slotbert/losses.hpp"
#include "slotbert/slot_attention.hpp"
#include "slotbert/tst.hpp"

#include <memory>
#include <optional>
#include <string>

namespace slotbert {

// image/feature geometry the model is built for
struct ModelDims {
    int d_feature = 0;
    int grid_h = 0, grid_w = 0;
    int image_h = 0, image_w = 0, channels = 3;
    int n() const { return grid_h * grid_w; }
};

struct ForwardOptions {
    double gamma = 0.0;              // masking ratio; 0 disables masking
    std::string mask_mode = "slots"; // slots | features | none (features handled by caller)
    Rng* mask_rng = nullptr;         // required when gamma > 0 and mask_mode == slots
};

struct ForwardResult {
    SlotSequence s_initial;
    SlotSequence s_pos;    // empty when the TST is disabled
    SlotSequence s_fused;  // == s_initial frames when the TST is disabled
    TemporalMask mask;
    std::vector<DecodedFrame> decoded; // per frame
};

class SlotBertModel {
public:
    SlotBertModel(const RunConfig& cfg, const ModelDims& dims, uint64_t param_seed);

    ForwardResult forward(const FeatureSequence& x, Rng& slot_rng,
                          const ForwardOptions& opts) const;
    std::vector<DecodedFrame> decode_frames(const SlotSequence& s) const;
    DecodedFrame decode_single(const Var& slots) const;

    MaskSet masks_from_decoded(const std::vector<DecodedFrame>& decoded) const;

    const RunConfig& config() const { return cfg_; }
    const ModelDims& dims() const { return dims_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const SlotAttention& slot_attention() const { return slot_attn_; }
    const TemporalSlotTransformer& tst() const {
        if (!tst_) throw std::runtime_error("model: TST is disabled in this configuration");
        return *tst_;
    }
    bool has_tst() const { return tst_ != nullptr; }

    void save_checkpoint(const std::string& path, int64_t step, uint64_t rng_state,
                         const std::string& metrics_json = "{}") const;

    struct Loaded {
        std::unique_ptr<SlotBertModel> model;
        int64_t step = 0;
        uint64_t rng_state = 0;
        std::string metrics_json;
    };
    static Loaded load_checkpoint(const std::string& path);

private:
    RunConfig cfg_;
    ModelDims dims_;
    nn::ParamStore params_;
    SlotAttention slot_attn_;
    std::unique_ptr<TemporalSlotTransformer> tst_;
    std::unique_ptr<MlpBroadcastDecoder> mlp_decoder_;
    std::unique_ptr<SlotMixerDecoder> mixer_decoder_;
};

} // namespace slotbert
