#pragma once

#include "slotbert/features.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace slotbert {

struct SpriteSpec {
    int num_videos = 550;
    int eval_videos = 50; // the last eval_videos clips form the eval split
    int frames_per_clip = 5;
    int h = 64, w = 64;
    int sprite_min = 2, sprite_max = 3;
    std::vector<std::string> shapes = {"square", "circle", "triangle", "bar"};
    double size_min = 16.0, size_max = 28.0;  // pixels
    double speed_min = 0.5, speed_max = 2.5;  // pixels per frame
    std::vector<std::array<uint8_t, 3>> palette = {
        {230, 60, 60}, {60, 200, 80}, {70, 110, 235}, {235, 200, 50},
        {200, 70, 220}, {60, 210, 210}, {245, 140, 40}, {240, 240, 240}};
    std::string background = "solid"; // solid | drifting_gradient
    std::array<uint8_t, 3> background_color = {24, 24, 24};
    std::array<uint8_t, 3> background_color2 = {64, 40, 80}; // gradient far end
    double background_drift = 1.5; // gradient pixels per frame
    bool occlusion = true;
    bool enter_exit = false;
    uint64_t seed = 1;

    void validate() const;
};

SpriteSpec sprite_spec_from_json(const std::string& json_text);
std::string sprite_spec_to_json(const SpriteSpec& spec);

// canonical desk-scale specs used by tests and docs
SpriteSpec default_sprite_spec();
SpriteSpec hard_sprite_spec(); // drifting background, occlusion, enter/exit events

// deterministic in (spec.seed, clip_index); gt ids are stable per sprite
VideoClip generate_clip(const SpriteSpec& spec, int clip_index);

struct DatasetHandle {
    std::string dir;
    SpriteSpec spec;
    std::vector<std::string> clip_ids;
    std::vector<int> train_indices, eval_indices;
    int t = 0, h = 0, w = 0, c = 3;
};

void write_dataset(const SpriteSpec& spec, const std::string& out_dir);
DatasetHandle read_dataset(const std::string& dir);
// loads frames + masks, verifying per-file checksums from the manifest
VideoClip load_clip(const DatasetHandle& ds, int index);

} // namespace slotbert
