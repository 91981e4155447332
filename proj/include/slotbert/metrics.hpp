#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slotbert {

// Integer label maps for T frames. For ground truth, background carries the
// designated label (default 0) and is excluded from instances. Predictions
// have no background id: every distinct label is a candidate instance.
struct LabelMaskVideo {
    int t = 0, h = 0, w = 0;
    std::vector<int32_t> labels; // t*h*w row-major
    bool has_background = true;
    int32_t background_label = 0;

    int32_t at(int ti, int r, int c) const {
        return labels[(static_cast<size_t>(ti) * h + r) * w + c];
    }
    size_t size() const { return labels.size(); }
};

enum class MboLevel { video, frame };
enum class Matching { best_overlap, hungarian };

struct ClipMetrics {
    std::optional<double> fg_ari;
    std::optional<double> mbo_v;
    std::optional<double> mbo_f;
    std::optional<double> mbhd;
    std::optional<double> corloc;
    bool fg_ari_degenerate = false; // empty foreground: neutral 1.0 was returned
};

struct MetricsConfig {
    Matching matching = Matching::best_overlap;
    bool fg_ari_per_frame = false; // average per-frame ARIs instead of pooling pixels
};

// Adjusted Rand index over ground-truth foreground pixels pooled across the
// whole video. Empty foreground returns neutral 1.0 and sets the flag.
double fg_ari(const LabelMaskVideo& pred, const LabelMaskVideo& gt, bool* degenerate = nullptr,
              bool per_frame_average = false);

// |a & b| / |a | b|; both empty -> 1.0, exactly one empty -> 0.0
double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

std::optional<double> mbo(const LabelMaskVideo& pred, const LabelMaskVideo& gt, MboLevel level,
                          Matching matching);

std::optional<double> mbhd(const LabelMaskVideo& pred, const LabelMaskVideo& gt,
                           Matching matching);

struct Box {
    int32_t id;
    int min_row, min_col, max_row, max_col; // inclusive
};

// tight axis-aligned boxes per instance id on one frame's label map
std::vector<Box> masks_to_boxes(const int32_t* labels, int h, int w, bool has_background,
                                int32_t background_label);

double box_iou(const Box& a, const Box& b);

// fraction of gt boxes (per frame) localized by some predicted box with
// IoU strictly greater than 0.5
std::optional<double> corloc(const LabelMaskVideo& pred, const LabelMaskVideo& gt);

ClipMetrics evaluate_clip_metrics(const LabelMaskVideo& pred, const LabelMaskVideo& gt,
                                  const MetricsConfig& cfg);

// -- building blocks exposed for tests -------------------------------------

// maximum-weight one-to-one assignment; returns for each row the matched
// column (-1 when unmatched). weights: n_rows x n_cols row-major.
std::vector<int> hungarian_max_assignment(const std::vector<double>& weights, int n_rows,
                                          int n_cols);

// 4-connectivity inner boundary (out-of-image counts as background)
std::vector<uint8_t> mask_boundary(const std::vector<uint8_t>& mask, int h, int w);

// symmetric Hausdorff distance between the boundary point sets of two masks
// under Euclidean pixel distance; empty boundary handling is the caller's job
double hausdorff_boundary_distance(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                                   int h, int w);

// exact squared Euclidean distance transform to the nearest "on" pixel
std::vector<double> squared_edt(const std::vector<uint8_t>& on, int h, int w);

} // namespace slotbert
