#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace slotbert {

using Mat = Eigen::MatrixXd;

// Frame sequence with optional ground-truth instance masks; the unit of
// training and evaluation. Pixels are stored as 8-bit and exposed in [0,1].
struct VideoClip {
    int t = 0, h = 0, w = 0, c = 0;
    std::vector<uint8_t> frames;   // t*h*w*c row-major
    std::optional<double> frame_rate_hint;
    std::vector<int32_t> gt_masks; // t*h*w, empty when absent; 0 = background
    std::string clip_id;

    bool has_gt() const { return !gt_masks.empty(); }
    uint8_t pixel(int ti, int r, int col, int ch) const {
        return frames[static_cast<size_t>(((ti * h + r) * w + col) * c + ch)];
    }
    int32_t gt(int ti, int r, int col) const {
        return gt_masks[static_cast<size_t>((ti * h + r) * w + col)];
    }
    void validate(int patch_size) const; // throws on invariant violation
};

enum class FeatureSource { pixel_patch, external };

struct FeatureSequence {
    std::vector<Mat> data; // per frame: N x D
    int grid_h = 0, grid_w = 0;
    FeatureSource source = FeatureSource::pixel_patch;

    int frames() const { return static_cast<int>(data.size()); }
    int n() const { return grid_h * grid_w; }
    int d() const { return data.empty() ? 0 : static_cast<int>(data[0].cols()); }
};

struct EncoderConfig {
    std::string mode = "pixel_patch"; // pixel_patch | external
    int patch_size = 8;
    int projection_dim = 0;       // >0: frozen random linear projection to this size
    uint64_t projection_seed = 7; // fixed; projection is not trained
    std::string external_path;    // .sbft file for mode=external
};

// Splits a frame into non-overlapping P x P patches in row-major raster order;
// each patch row is flattened (row, column, channel).
// frame: (H*W) x C matrix view is avoided; input is raw interleaved bytes scaled to [0,1].
Mat patchify(const Mat& frame_hw_by_c, int h, int w, int c, int patch_size);
// exact inverse of patchify
Mat unpatchify(const Mat& patches, int h, int w, int c, int patch_size);

// frame_matrix: (H*W) x C in [0,1] from a clip, helper for callers
Mat clip_frame_matrix(const VideoClip& clip, int frame_index);

FeatureSequence encode_frames(const VideoClip& clip, const EncoderConfig& cfg);

// Binary feature container ("SBFT"): 32-byte header + row-major float32 data,
// plus a JSON sidecar carrying the clip id.
void write_external_features(const std::string& path, const FeatureSequence& feats,
                             const std::string& clip_id);
FeatureSequence load_external_features(const std::string& path, int expected_t, int expected_n,
                                       int expected_d);
// reads T/N/D from the header without shape expectations
FeatureSequence load_external_features(const std::string& path);
std::string external_features_clip_id(const std::string& path); // from sidecar

} // namespace slotbert
