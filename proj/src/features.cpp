#include "slotbert/features.hpp"

#include "slotbert/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace slotbert {

void VideoClip::validate(int patch_size) const {
    if (t < 1) throw std::invalid_argument("VideoClip " + clip_id + ": T must be >= 1");
    if (patch_size > 0 && (h % patch_size != 0 || w % patch_size != 0))
        throw std::invalid_argument("VideoClip " + clip_id + ": H=" + std::to_string(h) +
                                    ", W=" + std::to_string(w) + " not divisible by patch size P=" +
                                    std::to_string(patch_size));
    if (frames.size() != static_cast<size_t>(t) * h * w * c)
        throw std::invalid_argument("VideoClip " + clip_id + ": frame buffer size mismatch");
    if (!gt_masks.empty() && gt_masks.size() != static_cast<size_t>(t) * h * w)
        throw std::invalid_argument("VideoClip " + clip_id + ": gt mask shape differs from frames");
}

Mat clip_frame_matrix(const VideoClip& clip, int frame_index) {
    Mat out(clip.h * clip.w, clip.c);
    for (int r = 0; r < clip.h; ++r)
        for (int col = 0; col < clip.w; ++col)
            for (int ch = 0; ch < clip.c; ++ch)
                out(r * clip.w + col, ch) = clip.pixel(frame_index, r, col, ch) / 255.0;
    return out;
}

Mat patchify(const Mat& frame, int h, int w, int c, int patch_size) {
    if (patch_size <= 0) throw std::invalid_argument("patchify: patch size must be positive");
    if (h % patch_size != 0 || w % patch_size != 0)
        throw std::invalid_argument("patchify: H=" + std::to_string(h) + ", W=" + std::to_string(w) +
                                    " not divisible by patch size P=" + std::to_string(patch_size));
    if (frame.rows() != static_cast<long>(h) * w || frame.cols() != c)
        throw std::invalid_argument("patchify: frame must be (H*W) x C");

    const int gh = h / patch_size, gw = w / patch_size;
    Mat patches(gh * gw, patch_size * patch_size * c);
    for (int pr = 0; pr < gh; ++pr) {
        for (int pc = 0; pc < gw; ++pc) {
            long n = pr * gw + pc;
            long at = 0;
            // flattening order fixed: row, then column, then channel
            for (int r = 0; r < patch_size; ++r)
                for (int col = 0; col < patch_size; ++col)
                    for (int ch = 0; ch < c; ++ch)
                        patches(n, at++) =
                            frame((pr * patch_size + r) * w + pc * patch_size + col, ch);
        }
    }
    return patches;
}

Mat unpatchify(const Mat& patches, int h, int w, int c, int patch_size) {
    const int gh = h / patch_size, gw = w / patch_size;
    if (patches.rows() != static_cast<long>(gh) * gw ||
        patches.cols() != static_cast<long>(patch_size) * patch_size * c)
        throw std::invalid_argument("unpatchify: patch grid shape mismatch");
    Mat frame(h * w, c);
    for (int pr = 0; pr < gh; ++pr) {
        for (int pc = 0; pc < gw; ++pc) {
            long n = pr * gw + pc;
            long at = 0;
            for (int r = 0; r < patch_size; ++r)
                for (int col = 0; col < patch_size; ++col)
                    for (int ch = 0; ch < c; ++ch)
                        frame((pr * patch_size + r) * w + pc * patch_size + col, ch) =
                            patches(n, at++);
        }
    }
    return frame;
}

FeatureSequence encode_frames(const VideoClip& clip, const EncoderConfig& cfg) {
    if (cfg.mode == "external") {
        int gh = clip.h / cfg.patch_size, gw = clip.w / cfg.patch_size;
        FeatureSequence fs = load_external_features(cfg.external_path, clip.t, gh * gw, -1);
        fs.grid_h = gh;
        fs.grid_w = gw;
        return fs;
    }
    if (cfg.mode != "pixel_patch")
        throw std::invalid_argument("encode_frames: unknown encoder mode '" + cfg.mode + "'");

    clip.validate(cfg.patch_size);
    FeatureSequence fs;
    fs.grid_h = clip.h / cfg.patch_size;
    fs.grid_w = clip.w / cfg.patch_size;
    fs.source = FeatureSource::pixel_patch;

    Mat projection;
    if (cfg.projection_dim > 0) {
        // frozen random projection; never trained, fixed by seed
        long d_in = static_cast<long>(cfg.patch_size) * cfg.patch_size * clip.c;
        Rng rng = Rng::derive(cfg.projection_seed, 0xfea7ULL);
        projection.resize(d_in, cfg.projection_dim);
        double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (long i = 0; i < projection.rows(); ++i)
            for (long j = 0; j < projection.cols(); ++j)
                projection(i, j) = rng.gaussian() * scale;
    }

    fs.data.reserve(clip.t);
    for (int ti = 0; ti < clip.t; ++ti) {
        Mat patches = patchify(clip_frame_matrix(clip, ti), clip.h, clip.w, clip.c, cfg.patch_size);
        fs.data.push_back(projection.size() ? Mat(patches * projection) : patches);
    }
    return fs;
}

namespace {

constexpr char kMagic[4] = {'S', 'B', 'F', 'T'};
constexpr uint16_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 1;

#pragma pack(push, 1)
struct SbftHeader {
    char magic[4];
    uint16_t version;
    uint32_t t, n, d;
    uint8_t dtype;
    uint8_t reserved[13];
};
#pragma pack(pop)
static_assert(sizeof(SbftHeader) == 32, "SBFT header must be exactly 32 bytes");

} // namespace

void write_external_features(const std::string& path, const FeatureSequence& feats,
                             const std::string& clip_id) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_external_features: cannot open " + path);

    SbftHeader hdr{};
    std::memcpy(hdr.magic, kMagic, 4);
    hdr.version = kVersion;
    hdr.t = static_cast<uint32_t>(feats.frames());
    hdr.n = static_cast<uint32_t>(feats.n());
    hdr.d = static_cast<uint32_t>(feats.d());
    hdr.dtype = kDtypeF32;
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));

    std::vector<float> row(feats.d());
    for (const Mat& m : feats.data) {
        for (long i = 0; i < m.rows(); ++i) {
            for (long j = 0; j < m.cols(); ++j) row[j] = static_cast<float>(m(i, j));
            out.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
        }
    }
    if (!out) throw std::runtime_error("write_external_features: write failed for " + path);
    out.close();

    nlohmann::json side;
    side["clip_id"] = clip_id;
    side["t"] = feats.frames();
    side["n"] = feats.n();
    side["d"] = feats.d();
    std::ofstream js(path + ".json");
    js << side.dump(2) << "\n";
}

FeatureSequence load_external_features(const std::string& path, int expected_t, int expected_n,
                                       int expected_d) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_external_features: missing file " + path);

    SbftHeader hdr{};
    in.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
    if (!in || std::memcmp(hdr.magic, kMagic, 4) != 0)
        throw std::runtime_error("load_external_features: " + path + " is not an SBFT container");
    if (hdr.version != kVersion)
        throw std::runtime_error("load_external_features: unsupported SBFT version " +
                                 std::to_string(hdr.version));
    if (hdr.dtype != kDtypeF32)
        throw std::runtime_error("load_external_features: unsupported dtype code " +
                                 std::to_string(static_cast<int>(hdr.dtype)) +
                                 " (expected 1 = float32)");

    auto check = [&](int expected, uint32_t got, const char* what) {
        if (expected >= 0 && static_cast<uint32_t>(expected) != got)
            throw std::runtime_error("load_external_features: " + path + " " + what + "=" +
                                     std::to_string(got) + " but expected " +
                                     std::to_string(expected) + " (expected shape T=" +
                                     std::to_string(expected_t) + ", N=" +
                                     std::to_string(expected_n) + ", D=" +
                                     std::to_string(expected_d) + ")");
    };
    check(expected_t, hdr.t, "T");
    check(expected_n, hdr.n, "N");
    check(expected_d, hdr.d, "D");

    FeatureSequence fs;
    fs.source = FeatureSource::external;
    fs.grid_h = 1;
    fs.grid_w = static_cast<int>(hdr.n); // caller overrides with the real grid
    fs.data.reserve(hdr.t);
    std::vector<float> row(hdr.d);
    for (uint32_t ti = 0; ti < hdr.t; ++ti) {
        Mat m(hdr.n, hdr.d);
        for (uint32_t i = 0; i < hdr.n; ++i) {
            in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
            if (!in)
                throw std::runtime_error("load_external_features: " + path +
                                         " truncated (frame " + std::to_string(ti) + ")");
            for (uint32_t j = 0; j < hdr.d; ++j) m(i, j) = row[j];
        }
        fs.data.push_back(std::move(m));
    }
    return fs;
}

FeatureSequence load_external_features(const std::string& path) {
    return load_external_features(path, -1, -1, -1);
}

std::string external_features_clip_id(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) return "";
    nlohmann::json side;
    js >> side;
    return side.value("clip_id", "");
}

} // namespace slotbert
