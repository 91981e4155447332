#pragma once

#include "slotbert/model.hpp"
#include "slotbert/metrics.hpp"
#include "slotbert/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace slotbert {

struct TrainResult {
    std::string checkpoint_path;
    double first_total = 0.0;
    double final_total = 0.0;
    int steps = 0;
    nlohmann::json final_report; // eval on the held-out split, empty if none
};

// Runs the full training loop: encode -> recurrent slots -> (TST with frame
// masking) -> decode -> losses -> Adam. Writes checkpoints, a JSONL loss log
// and a final evaluation report under out_dir.
TrainResult train(const RunConfig& cfg, const std::string& out_dir);

struct EvalOverrides {
    int repeats = -1;            // -1: keep config value
    std::string matching;        // empty: keep config value
    int limit_frames = 0;        // 0: evaluate full clips
    std::string init_mode;       // empty: keep config value
    uint64_t seed_base = 0x5eedULL;
};

// Repeat-averaged evaluation over the dataset's eval split (all clips when no
// split is present). Clips without ground truth are skipped; if none carry
// ground truth the report only records exported mask locations.
nlohmann::json evaluate_model(const SlotBertModel& model, const DatasetHandle& ds,
                              const EvalOverrides& overrides = {});
nlohmann::json evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_path,
                                   const EvalOverrides& overrides = {});

struct InferResult {
    MaskSet masks;
    std::vector<Mat> fused_slots;   // per frame K x d_slot, stitched
    std::vector<int> source_window; // window index each frame was taken from
};

// Sliding-window inference over a clip longer than the trained window.
// Window position advances by stride; each frame's output comes from the
// window where it sits most centrally (ties -> earlier window).
InferResult infer_long(const SlotBertModel& model, const VideoClip& clip, int window, int stride,
                       const std::string& init_mode, uint64_t seed, int limit_frames = 0);

void export_masks(const MaskSet& masks, const std::string& out_dir, const std::string& clip_id,
                  const nlohmann::json& window_cfg, bool export_soft = false);
// reads hard labels back from an export directory (round-trip checks)
std::vector<std::vector<int32_t>> read_exported_labels(const std::string& out_dir);

// named ablation variants from the paper grid
RunConfig apply_variant(const RunConfig& base, const std::string& variant);
nlohmann::json ablate(const RunConfig& base, const std::vector<std::string>& variants,
                      const std::string& out_dir);

// helpers shared by evaluation paths
LabelMaskVideo gt_label_video(const VideoClip& clip, int limit_frames = 0);
LabelMaskVideo pred_label_video(const MaskSet& masks);

} // namespace slotbert
