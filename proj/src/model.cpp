#include "slotbert/model.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

using nlohmann::json;

namespace slotbert {

namespace {

SlotAttentionConfig slot_attention_config(const RunConfig& cfg, const ModelDims& dims) {
    SlotAttentionConfig sa;
    sa.k = cfg.k;
    sa.d_slot = cfg.d_slot;
    sa.n_first = cfg.n_first;
    sa.n_later = cfg.n_later;
    sa.refine_cell = cfg.refine_cell;
    sa.init_mode = cfg.slot_init;
    sa.mlp_hidden = cfg.sa_mlp_hidden;
    sa.grid_h = dims.grid_h;
    sa.grid_w = dims.grid_w;
    return sa;
}

} // namespace

SlotBertModel::SlotBertModel(const RunConfig& cfg, const ModelDims& dims, uint64_t param_seed)
    : cfg_(cfg),
      dims_(dims),
      params_(param_seed),
      slot_attn_(params_, "slot_attention", dims.d_feature, slot_attention_config(cfg, dims)) {
    if (dims.d_feature < 1 || dims.n() < 1)
        throw std::invalid_argument("SlotBertModel: invalid model dimensions");
    if (cfg.use_tst) {
        TstConfig tst_cfg = cfg.tst;
        tst_cfg.d_slot = cfg.d_slot;
        tst_ = std::make_unique<TemporalSlotTransformer>(params_, "tst", tst_cfg);
    }
    if (cfg.decoder == "mlp") {
        MlpDecoderConfig dec;
        dec.n_positions = dims.n();
        dec.d_slot = cfg.d_slot;
        dec.d_feature = dims.d_feature;
        dec.hidden = cfg.mlp_decoder_hidden;
        dec.n_hidden_layers = cfg.mlp_decoder_layers;
        mlp_decoder_ = std::make_unique<MlpBroadcastDecoder>(params_, "decoder_mlp", dec);
    } else if (cfg.decoder == "mixer") {
        MixerDecoderConfig dec;
        dec.n_positions = dims.n();
        dec.d_slot = cfg.d_slot;
        dec.d_feature = dims.d_feature;
        dec.n_blocks = cfg.mixer_blocks;
        dec.n_heads = cfg.mixer_heads;
        dec.render_hidden = cfg.mixer_render_hidden;
        mixer_decoder_ = std::make_unique<SlotMixerDecoder>(params_, "decoder_mixer", dec);
    } else {
        throw std::invalid_argument("SlotBertModel: unknown decoder '" + cfg.decoder + "'");
    }
}

DecodedFrame SlotBertModel::decode_single(const Var& slots) const {
    return mlp_decoder_ ? mlp_decoder_->decode(slots) : mixer_decoder_->decode(slots);
}

std::vector<DecodedFrame> SlotBertModel::decode_frames(const SlotSequence& s) const {
    std::vector<DecodedFrame> out;
    out.reserve(s.t());
    for (const Var& frame : s.frames) out.push_back(decode_single(frame));
    return out;
}

ForwardResult SlotBertModel::forward(const FeatureSequence& x, Rng& slot_rng,
                                     const ForwardOptions& opts) const {
    ForwardResult res;
    auto [s_initial, records] = slot_attn_.run_video(x, slot_rng);
    res.s_initial = s_initial;

    if (tst_) {
        res.s_pos = tst_->add_temporal_pos(s_initial);
        if (opts.gamma > 0.0 && opts.mask_mode == "slots") {
            if (!opts.mask_rng)
                throw std::invalid_argument("forward: slot masking requires a mask rng");
            res.mask = sample_frame_mask(s_initial.t(), opts.gamma, *opts.mask_rng);
        } else {
            res.mask.kept.assign(s_initial.t(), true);
            res.mask.ratio = 0.0;
        }
        res.s_fused = tst_->forward(tst_->apply_mask(res.s_pos, res.mask), res.mask);
    } else {
        res.mask.kept.assign(s_initial.t(), true);
        res.mask.ratio = 0.0;
        res.s_fused = s_initial;
        res.s_fused.stage = SlotStage::fused; // slots flow initial -> decoder unchanged
    }
    res.decoded = decode_frames(res.s_fused);
    return res;
}

MaskSet SlotBertModel::masks_from_decoded(const std::vector<DecodedFrame>& decoded) const {
    MaskSet ms;
    ms.t = static_cast<int>(decoded.size());
    ms.k = cfg_.k;
    ms.grid_h = dims_.grid_h;
    ms.grid_w = dims_.grid_w;
    ms.h = dims_.image_h;
    ms.w = dims_.image_w;
    for (const auto& frame : decoded) {
        ms.soft.push_back(frame.soft_masks->val);
        ms.labels_pixel.push_back(
            upsample_labels(frame.labels, dims_.grid_h, dims_.grid_w, cfg_.patch_size));
    }
    return ms;
}

namespace {
constexpr char kCkptMagic[4] = {'S', 'B', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;
} // namespace

void SlotBertModel::save_checkpoint(const std::string& path, int64_t step, uint64_t rng_state,
                                    const std::string& metrics_json) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);

    json meta;
    meta["config_text"] = run_config_to_text(cfg_);
    meta["config_hash"] = config_hash(cfg_);
    meta["dims"] = {{"d_feature", dims_.d_feature}, {"grid_h", dims_.grid_h},
                    {"grid_w", dims_.grid_w},       {"image_h", dims_.image_h},
                    {"image_w", dims_.image_w},     {"channels", dims_.channels}};
    meta["step"] = step;
    meta["rng_state"] = rng_state;
    meta["metrics"] = json::parse(metrics_json.empty() ? "{}" : metrics_json);
    std::string meta_str = meta.dump();

    out.write(kCkptMagic, 4);
    uint32_t version = kCkptVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t meta_len = meta_str.size();
    out.write(reinterpret_cast<const char*>(&meta_len), sizeof(meta_len));
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    uint64_t n_params = params_.items().size();
    out.write(reinterpret_cast<const char*>(&n_params), sizeof(n_params));
    for (const auto& [name, var] : params_.items()) {
        uint32_t name_len = static_cast<uint32_t>(name.size());
        out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
        out.write(name.data(), name_len);
        uint32_t rows = static_cast<uint32_t>(var->rows());
        uint32_t cols = static_cast<uint32_t>(var->cols());
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        // column-major doubles, matching Eigen's storage
        out.write(reinterpret_cast<const char*>(var->val.data()),
                  static_cast<std::streamsize>(sizeof(double) * rows * cols));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

SlotBertModel::Loaded SlotBertModel::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: missing file " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: " + path + " is not a slotbert checkpoint");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCkptVersion)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version " +
                                 std::to_string(version));
    uint64_t meta_len = 0;
    in.read(reinterpret_cast<char*>(&meta_len), sizeof(meta_len));
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated metadata in " + path);
    json meta = json::parse(meta_str);

    RunConfig cfg = parse_run_config_text(meta.at("config_text").get<std::string>());
    ModelDims dims;
    dims.d_feature = meta.at("dims").at("d_feature");
    dims.grid_h = meta.at("dims").at("grid_h");
    dims.grid_w = meta.at("dims").at("grid_w");
    dims.image_h = meta.at("dims").at("image_h");
    dims.image_w = meta.at("dims").at("image_w");
    dims.channels = meta.at("dims").at("channels");

    Loaded loaded;
    loaded.model = std::make_unique<SlotBertModel>(cfg, dims, /*param_seed=*/cfg.seed);
    loaded.step = meta.at("step").get<int64_t>();
    loaded.rng_state = meta.at("rng_state").get<uint64_t>();
    loaded.metrics_json = meta.at("metrics").dump();

    uint64_t n_params = 0;
    in.read(reinterpret_cast<char*>(&n_params), sizeof(n_params));
    if (n_params != loaded.model->params_.items().size())
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    for (uint64_t i = 0; i < n_params; ++i) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rows = 0, cols = 0;
        in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
        in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
        Var var = loaded.model->params_.find(name);
        if (!var) throw std::runtime_error("load_checkpoint: unknown parameter '" + name + "'");
        if (var->rows() != rows || var->cols() != cols)
            throw std::runtime_error("load_checkpoint: shape mismatch for parameter '" + name +
                                     "'");
        in.read(reinterpret_cast<char*>(var->val.data()),
                static_cast<std::streamsize>(sizeof(double) * rows * cols));
        if (!in) throw std::runtime_error("load_checkpoint: truncated parameter data in " + path);
    }
    return loaded;
}

} // namespace slotbert
