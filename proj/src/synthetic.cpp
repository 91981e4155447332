#include "slotbert/synthetic.hpp"

#include "slotbert/image.hpp"
#include "slotbert/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbert {

void SpriteSpec::validate() const {
    if (num_videos < 1) throw std::invalid_argument("SpriteSpec: num_videos must be >= 1");
    if (eval_videos < 0 || eval_videos >= num_videos)
        throw std::invalid_argument("SpriteSpec: eval_videos must be in [0, num_videos)");
    if (frames_per_clip < 1) throw std::invalid_argument("SpriteSpec: frames_per_clip must be >= 1");
    if (h < 8 || w < 8) throw std::invalid_argument("SpriteSpec: image too small");
    if (sprite_min < 1 || sprite_max < sprite_min)
        throw std::invalid_argument("SpriteSpec: invalid sprite count range");
    if (shapes.empty()) throw std::invalid_argument("SpriteSpec: shapes must be non-empty");
    for (const auto& s : shapes)
        if (s != "square" && s != "circle" && s != "triangle" && s != "bar")
            throw std::invalid_argument("SpriteSpec: unknown shape '" + s + "'");
    if (size_min <= 1.0 || size_max < size_min)
        throw std::invalid_argument("SpriteSpec: invalid size range");
    if (size_max >= std::min(h, w) / 2.0)
        throw std::invalid_argument("SpriteSpec: sprite sizes must stay below min(H,W)/2");
    if (speed_min < 0.0 || speed_max < speed_min)
        throw std::invalid_argument("SpriteSpec: invalid velocity range");
    if (palette.empty()) throw std::invalid_argument("SpriteSpec: palette must be non-empty");
    if (background != "solid" && background != "drifting_gradient")
        throw std::invalid_argument("SpriteSpec: unknown background '" + background + "'");
}

namespace {

struct Sprite {
    int shape; // index into spec.shapes
    double size;
    int color;
    double x, y;   // center
    double vx, vy; // pixels per frame
};

bool sprite_covers(const std::string& shape, const Sprite& s, double px, double py) {
    double dx = px - s.x, dy = py - s.y;
    double half = s.size * 0.5;
    if (shape == "square") return std::abs(dx) <= half && std::abs(dy) <= half;
    if (shape == "circle") return dx * dx + dy * dy <= half * half;
    if (shape == "bar") {
        double thick = std::max(2.0, s.size * 0.3);
        return std::abs(dx) <= half && std::abs(dy) <= thick * 0.5;
    }
    // upward triangle inscribed in the size box
    if (dy < -half || dy > half) return false;
    double frac = (dy + half) / s.size; // 0 at apex, 1 at base
    return std::abs(dx) <= half * frac;
}

// conservative bounding radius used for the no-overlap rejection test
double bounding_radius(const std::string& shape, double size) {
    if (shape == "circle") return size * 0.5;
    return size * 0.7072; // half diagonal of the size box
}

std::vector<Sprite> sample_sprites(const SpriteSpec& spec, Rng& rng) {
    int count = spec.sprite_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<uint64_t>(spec.sprite_max - spec.sprite_min + 1)));
    auto sample_one = [&](Rng& r, int color) {
        Sprite s;
        s.shape = static_cast<int>(r.uniform_int(spec.shapes.size()));
        s.size = r.uniform(spec.size_min, spec.size_max);
        s.color = color;
        double margin = spec.enter_exit ? -s.size * 0.5 : s.size * 0.5 + 1.0;
        s.x = r.uniform(margin, spec.w - margin);
        s.y = r.uniform(margin, spec.h - margin);
        double speed = r.uniform(spec.speed_min, spec.speed_max);
        double angle = r.uniform(0.0, 2.0 * M_PI);
        s.vx = speed * std::cos(angle);
        s.vy = speed * std::sin(angle);
        return s;
    };

    auto advance = [&](Sprite s, int steps) {
        for (int i = 0; i < steps; ++i) {
            s.x += s.vx;
            s.y += s.vy;
            if (!spec.enter_exit) {
                double half = s.size * 0.5;
                if (s.x < half || s.x > spec.w - half) s.vx = -s.vx;
                if (s.y < half || s.y > spec.h - half) s.vy = -s.vy;
            }
        }
        return s;
    };

    for (int attempt = 0; attempt < 200; ++attempt) {
        // colors drawn without replacement so sprites stay distinguishable
        std::vector<int> colors(spec.palette.size());
        for (size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(i);
        for (size_t i = colors.size(); i > 1; --i)
            std::swap(colors[i - 1], colors[rng.uniform_int(i)]);
        std::vector<Sprite> sprites;
        for (int i = 0; i < count; ++i)
            sprites.push_back(sample_one(rng, colors[i % colors.size()]));
        if (spec.occlusion) return sprites;
        // without occlusion the trajectories must stay pairwise clear
        bool clear = true;
        for (int ti = 0; ti < spec.frames_per_clip && clear; ++ti) {
            for (size_t i = 0; i < sprites.size() && clear; ++i) {
                Sprite a = advance(sprites[i], ti);
                for (size_t j = i + 1; j < sprites.size(); ++j) {
                    Sprite b = advance(sprites[j], ti);
                    double need = bounding_radius(spec.shapes[a.shape], a.size) +
                                  bounding_radius(spec.shapes[b.shape], b.size) + 1.0;
                    double dx = a.x - b.x, dy = a.y - b.y;
                    if (dx * dx + dy * dy < need * need) {
                        clear = false;
                        break;
                    }
                }
            }
        }
        if (clear) return sprites;
    }
    throw std::runtime_error("sample_sprites: could not place non-overlapping sprites; "
                             "reduce sprite count/size or allow occlusion");
}

void paint_background(const SpriteSpec& spec, int frame, uint8_t* rgb) {
    if (spec.background == "solid") {
        for (int i = 0; i < spec.h * spec.w; ++i)
            for (int ch = 0; ch < 3; ++ch) rgb[i * 3 + ch] = spec.background_color[ch];
        return;
    }
    // horizontal gradient whose phase drifts over time
    for (int r = 0; r < spec.h; ++r) {
        for (int c = 0; c < spec.w; ++c) {
            double phase = (c + spec.background_drift * frame) / spec.w;
            phase -= std::floor(phase);
            double mix = 0.5 - 0.5 * std::cos(2.0 * M_PI * phase); // smooth wrap
            for (int ch = 0; ch < 3; ++ch) {
                double v = (1.0 - mix) * spec.background_color[ch] +
                           mix * spec.background_color2[ch];
                rgb[(r * spec.w + c) * 3 + ch] = static_cast<uint8_t>(std::lround(v));
            }
        }
    }
}

} // namespace

VideoClip generate_clip(const SpriteSpec& spec, int clip_index) {
    spec.validate();
    Rng rng = Rng::derive(spec.seed, 0xc11bULL + static_cast<uint64_t>(clip_index));
    std::vector<Sprite> sprites = sample_sprites(spec, rng);

    VideoClip clip;
    clip.t = spec.frames_per_clip;
    clip.h = spec.h;
    clip.w = spec.w;
    clip.c = 3;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%05d", clip_index);
    clip.clip_id = buf;
    clip.frames.resize(static_cast<size_t>(clip.t) * clip.h * clip.w * 3);
    clip.gt_masks.assign(static_cast<size_t>(clip.t) * clip.h * clip.w, 0);

    for (int ti = 0; ti < clip.t; ++ti) {
        uint8_t* frame = clip.frames.data() + static_cast<size_t>(ti) * clip.h * clip.w * 3;
        int32_t* mask = clip.gt_masks.data() + static_cast<size_t>(ti) * clip.h * clip.w;
        paint_background(spec, ti, frame);
        // z-order fixed per clip: later sprites draw on top
        for (size_t si = 0; si < sprites.size(); ++si) {
            const Sprite& s = sprites[si];
            const auto& color = spec.palette[s.color];
            double reach = bounding_radius(spec.shapes[s.shape], s.size) + 1.0;
            int r0 = std::max(0, static_cast<int>(std::floor(s.y - reach)));
            int r1 = std::min(spec.h - 1, static_cast<int>(std::ceil(s.y + reach)));
            int c0 = std::max(0, static_cast<int>(std::floor(s.x - reach)));
            int c1 = std::min(spec.w - 1, static_cast<int>(std::ceil(s.x + reach)));
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    if (!sprite_covers(spec.shapes[s.shape], s, c + 0.5, r + 0.5)) continue;
                    for (int ch = 0; ch < 3; ++ch) frame[(r * spec.w + c) * 3 + ch] = color[ch];
                    mask[r * spec.w + c] = static_cast<int32_t>(si) + 1;
                }
            }
        }
        // advance motion with border bounce (skipped when sprites may exit)
        for (auto& s : sprites) {
            s.x += s.vx;
            s.y += s.vy;
            if (!spec.enter_exit) {
                double half = s.size * 0.5;
                if (s.x < half || s.x > spec.w - half) s.vx = -s.vx;
                if (s.y < half || s.y > spec.h - half) s.vy = -s.vy;
            }
        }
    }
    return clip;
}

namespace {

json spec_to_json_obj(const SpriteSpec& s) {
    json j;
    j["num_videos"] = s.num_videos;
    j["eval_videos"] = s.eval_videos;
    j["frames_per_clip"] = s.frames_per_clip;
    j["image_size"] = {s.h, s.w};
    j["sprite_count"] = {s.sprite_min, s.sprite_max};
    j["shapes"] = s.shapes;
    j["size_range"] = {s.size_min, s.size_max};
    j["velocity_range"] = {s.speed_min, s.speed_max};
    json pal = json::array();
    for (const auto& c : s.palette) pal.push_back({c[0], c[1], c[2]});
    j["palette"] = pal;
    j["background"] = s.background;
    j["background_color"] = {s.background_color[0], s.background_color[1], s.background_color[2]};
    j["background_color2"] = {s.background_color2[0], s.background_color2[1],
                              s.background_color2[2]};
    j["background_drift"] = s.background_drift;
    j["occlusion"] = s.occlusion;
    j["enter_exit"] = s.enter_exit;
    j["seed"] = s.seed;
    return j;
}

SpriteSpec spec_from_json_obj(const json& j) {
    SpriteSpec s;
    s.num_videos = j.value("num_videos", s.num_videos);
    s.eval_videos = j.value("eval_videos", s.eval_videos);
    s.frames_per_clip = j.value("frames_per_clip", s.frames_per_clip);
    if (j.contains("image_size")) {
        s.h = j["image_size"][0];
        s.w = j["image_size"][1];
    }
    if (j.contains("sprite_count")) {
        s.sprite_min = j["sprite_count"][0];
        s.sprite_max = j["sprite_count"][1];
    }
    if (j.contains("shapes")) s.shapes = j["shapes"].get<std::vector<std::string>>();
    if (j.contains("size_range")) {
        s.size_min = j["size_range"][0];
        s.size_max = j["size_range"][1];
    }
    if (j.contains("velocity_range")) {
        s.speed_min = j["velocity_range"][0];
        s.speed_max = j["velocity_range"][1];
    }
    if (j.contains("palette")) {
        s.palette.clear();
        for (const auto& c : j["palette"])
            s.palette.push_back({c[0].get<uint8_t>(), c[1].get<uint8_t>(), c[2].get<uint8_t>()});
    }
    s.background = j.value("background", s.background);
    auto color3 = [&](const char* key, std::array<uint8_t, 3>& dst) {
        if (j.contains(key))
            dst = {j[key][0].get<uint8_t>(), j[key][1].get<uint8_t>(), j[key][2].get<uint8_t>()};
    };
    color3("background_color", s.background_color);
    color3("background_color2", s.background_color2);
    s.background_drift = j.value("background_drift", s.background_drift);
    s.occlusion = j.value("occlusion", s.occlusion);
    s.enter_exit = j.value("enter_exit", s.enter_exit);
    s.seed = j.value("seed", s.seed);
    return s;
}

} // namespace

std::string sprite_spec_to_json(const SpriteSpec& spec) { return spec_to_json_obj(spec).dump(2); }

SpriteSpec sprite_spec_from_json(const std::string& text) {
    json j = json::parse(text);
    SpriteSpec s = spec_from_json_obj(j);
    s.validate();
    return s;
}

SpriteSpec default_sprite_spec() {
    SpriteSpec s;
    s.num_videos = 550;
    s.eval_videos = 50;
    s.frames_per_clip = 5;
    s.seed = 1;
    return s;
}

SpriteSpec hard_sprite_spec() {
    SpriteSpec s;
    s.num_videos = 220;
    s.eval_videos = 20;
    s.frames_per_clip = 12; // long enough for sliding-window evaluation
    s.background = "drifting_gradient";
    s.occlusion = true;
    s.enter_exit = true;
    s.sprite_min = 2;
    s.sprite_max = 4;
    s.seed = 2;
    return s;
}

void write_dataset(const SpriteSpec& spec, const std::string& out_dir) {
    spec.validate();
    fs::create_directories(out_dir);

    json manifest;
    manifest["format"] = "slotbert-sprites-v1";
    manifest["spec"] = spec_to_json_obj(spec);
    json clips = json::array();
    json train_ids = json::array(), eval_ids = json::array();

    for (int ci = 0; ci < spec.num_videos; ++ci) {
        VideoClip clip = generate_clip(spec, ci);
        fs::path clip_dir = fs::path(out_dir) / clip.clip_id;
        fs::create_directories(clip_dir / "frames");
        fs::create_directories(clip_dir / "masks");

        json entry;
        entry["id"] = clip.clip_id;
        entry["frames"] = clip.t;
        json checksums;
        for (int ti = 0; ti < clip.t; ++ti) {
            char name[16];
            std::snprintf(name, sizeof(name), "%04d.png", ti);

            ImageU8 frame;
            frame.h = clip.h;
            frame.w = clip.w;
            frame.channels = 3;
            frame.pixels.assign(clip.frames.begin() + static_cast<size_t>(ti) * clip.h * clip.w * 3,
                                clip.frames.begin() +
                                    static_cast<size_t>(ti + 1) * clip.h * clip.w * 3);
            std::string frame_rel = clip.clip_id + "/frames/" + name;
            write_png((fs::path(out_dir) / frame_rel).string(), frame);
            checksums[frame_rel] = crc32_of_file((fs::path(out_dir) / frame_rel).string());

            ImageU8 mask;
            mask.h = clip.h;
            mask.w = clip.w;
            mask.channels = 1;
            mask.pixels.resize(static_cast<size_t>(clip.h) * clip.w);
            for (int i = 0; i < clip.h * clip.w; ++i)
                mask.pixels[i] = static_cast<uint8_t>(
                    clip.gt_masks[static_cast<size_t>(ti) * clip.h * clip.w + i]);
            std::string mask_rel = clip.clip_id + "/masks/" + name;
            write_png((fs::path(out_dir) / mask_rel).string(), mask);
            checksums[mask_rel] = crc32_of_file((fs::path(out_dir) / mask_rel).string());
        }

        json meta;
        meta["clip_id"] = clip.clip_id;
        meta["clip_index"] = ci;
        std::ofstream meta_out(clip_dir / "meta.json");
        meta_out << meta.dump(2) << "\n";

        entry["checksums"] = checksums;
        clips.push_back(entry);
        if (ci < spec.num_videos - spec.eval_videos)
            train_ids.push_back(clip.clip_id);
        else
            eval_ids.push_back(clip.clip_id);
    }
    manifest["clips"] = clips;
    manifest["splits"] = {{"train", train_ids}, {"eval", eval_ids}};

    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw std::runtime_error("write_dataset: cannot write manifest in " + out_dir);
    out << manifest.dump(2) << "\n";
}

DatasetHandle read_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("read_dataset: missing manifest.json in " + dir);
    json manifest;
    in >> manifest;

    DatasetHandle ds;
    ds.dir = dir;
    ds.spec = spec_from_json_obj(manifest.at("spec"));
    ds.t = ds.spec.frames_per_clip;
    ds.h = ds.spec.h;
    ds.w = ds.spec.w;

    for (const auto& entry : manifest.at("clips")) ds.clip_ids.push_back(entry.at("id"));
    std::vector<std::string> train = manifest.at("splits").at("train");
    std::vector<std::string> eval = manifest.at("splits").at("eval");
    auto index_of = [&](const std::string& id) {
        auto it = std::find(ds.clip_ids.begin(), ds.clip_ids.end(), id);
        if (it == ds.clip_ids.end())
            throw std::runtime_error("read_dataset: split references unknown clip " + id);
        return static_cast<int>(it - ds.clip_ids.begin());
    };
    for (const auto& id : train) ds.train_indices.push_back(index_of(id));
    for (const auto& id : eval) ds.eval_indices.push_back(index_of(id));
    return ds;
}

VideoClip load_clip(const DatasetHandle& ds, int index) {
    if (index < 0 || index >= static_cast<int>(ds.clip_ids.size()))
        throw std::out_of_range("load_clip: clip index out of range");
    const std::string& id = ds.clip_ids[index];

    // re-read the checksums for this clip from the manifest
    std::ifstream in(fs::path(ds.dir) / "manifest.json");
    json manifest;
    in >> manifest;
    json checksums;
    for (const auto& entry : manifest.at("clips"))
        if (entry.at("id") == id) checksums = entry.at("checksums");

    VideoClip clip;
    clip.clip_id = id;
    clip.t = ds.t;
    clip.h = ds.h;
    clip.w = ds.w;
    clip.c = 3;
    clip.frames.resize(static_cast<size_t>(clip.t) * clip.h * clip.w * 3);
    clip.gt_masks.resize(static_cast<size_t>(clip.t) * clip.h * clip.w);

    for (int ti = 0; ti < clip.t; ++ti) {
        char name[16];
        std::snprintf(name, sizeof(name), "%04d.png", ti);
        std::string frame_rel = id + "/frames/" + name;
        std::string mask_rel = id + "/masks/" + name;
        std::string frame_path = (fs::path(ds.dir) / frame_rel).string();
        std::string mask_path = (fs::path(ds.dir) / mask_rel).string();

        auto verify = [&](const std::string& rel, const std::string& path) {
            if (!checksums.contains(rel)) return;
            uint32_t want = checksums.at(rel).get<uint32_t>();
            uint32_t got = crc32_of_file(path);
            if (want != got)
                throw std::runtime_error("load_clip: checksum mismatch for " + path +
                                         " (manifest " + std::to_string(want) + ", file " +
                                         std::to_string(got) + ")");
        };
        verify(frame_rel, frame_path);
        verify(mask_rel, mask_path);

        ImageU8 frame = read_png(frame_path);
        if (frame.h != clip.h || frame.w != clip.w || frame.channels != 3)
            throw std::runtime_error("load_clip: unexpected frame shape in " + frame_path);
        std::copy(frame.pixels.begin(), frame.pixels.end(),
                  clip.frames.begin() + static_cast<size_t>(ti) * clip.h * clip.w * 3);

        ImageU8 mask = read_png(mask_path);
        if (mask.h != clip.h || mask.w != clip.w || mask.channels != 1)
            throw std::runtime_error("load_clip: unexpected mask shape in " + mask_path);
        for (int i = 0; i < clip.h * clip.w; ++i)
            clip.gt_masks[static_cast<size_t>(ti) * clip.h * clip.w + i] = mask.pixels[i];
    }
    return clip;
}

} // namespace slotbert
