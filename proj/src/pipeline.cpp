#include "slotbert/pipeline.hpp"

#include "slotbert/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace slotbert {

namespace {

EncoderConfig encoder_config(const RunConfig& cfg) {
    EncoderConfig enc;
    enc.mode = cfg.encoder;
    enc.patch_size = cfg.patch_size;
    enc.projection_dim = cfg.projection_dim;
    return enc;
}

ModelDims dims_for(const RunConfig& cfg, const DatasetHandle& ds) {
    if (ds.h % cfg.patch_size != 0 || ds.w % cfg.patch_size != 0)
        throw std::invalid_argument("train: dataset H=" + std::to_string(ds.h) + ", W=" +
                                    std::to_string(ds.w) + " not divisible by patch size P=" +
                                    std::to_string(cfg.patch_size));
    ModelDims dims;
    dims.grid_h = ds.h / cfg.patch_size;
    dims.grid_w = ds.w / cfg.patch_size;
    dims.image_h = ds.h;
    dims.image_w = ds.w;
    dims.channels = 3;
    dims.d_feature = cfg.projection_dim > 0 ? cfg.projection_dim
                                            : cfg.patch_size * cfg.patch_size * 3;
    return dims;
}

VideoClip crop_clip(const VideoClip& clip, int start, int frames) {
    if (start == 0 && frames == clip.t) return clip;
    VideoClip out;
    out.t = frames;
    out.h = clip.h;
    out.w = clip.w;
    out.c = clip.c;
    out.clip_id = clip.clip_id;
    size_t frame_px = static_cast<size_t>(clip.h) * clip.w;
    out.frames.assign(clip.frames.begin() + static_cast<size_t>(start) * frame_px * clip.c,
                      clip.frames.begin() + static_cast<size_t>(start + frames) * frame_px * clip.c);
    if (clip.has_gt())
        out.gt_masks.assign(clip.gt_masks.begin() + static_cast<size_t>(start) * frame_px,
                            clip.gt_masks.begin() + static_cast<size_t>(start + frames) * frame_px);
    return out;
}

// zero a gamma-fraction of the T*N patch feature rows, without replacement
void mask_feature_patches(FeatureSequence& x, double gamma, Rng& rng) {
    int total = x.frames() * x.n();
    int n_masked = static_cast<int>(std::lround(gamma * total));
    n_masked = std::min(n_masked, total - 1);
    if (n_masked <= 0) return;
    std::vector<int> idx(total);
    for (int i = 0; i < total; ++i) idx[i] = i;
    for (int i = 0; i < n_masked; ++i) {
        int j = i + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(total - i)));
        std::swap(idx[i], idx[j]);
        int ti = idx[i] / x.n(), patch = idx[i] % x.n();
        x.data[ti].row(patch).setZero();
    }
}

struct ClipLosses {
    Var recon;
    Var contrast; // null when contrast disabled
    Var aux_slot; // null when the auxiliary slot term is off
};

ClipLosses clip_losses(const SlotBertModel& model, const FeatureSequence& x_input,
                       const std::vector<Mat>& x_target, Rng& slot_rng, Rng& mask_rng) {
    const RunConfig& cfg = model.config();
    ForwardOptions opts;
    opts.gamma = cfg.gamma;
    opts.mask_mode = cfg.mask_mode;
    opts.mask_rng = &mask_rng;
    ForwardResult fwd = model.forward(x_input, slot_rng, opts);

    ClipLosses out;
    std::vector<Var> recon_frames;
    recon_frames.reserve(fwd.decoded.size());
    for (const auto& d : fwd.decoded) recon_frames.push_back(d.x_recon);
    out.recon = reconstruction_loss(recon_frames, x_target);

    if (cfg.use_contrast) {
        const SlotSequence& src =
            (cfg.contrast_on == "initial") ? fwd.s_initial : fwd.s_fused;
        out.contrast = slot_contrastive_loss(src, cfg.tau);
    }
    if (cfg.slot_recon_weight > 0.0 && model.has_tst()) {
        // reconstruct S_pos at masked positions; target detached
        Var acc;
        long count = 0;
        for (int ti = 0; ti < fwd.s_fused.t(); ++ti) {
            Var diff = ag::sub(fwd.s_fused.frames[ti], ag::constant(fwd.s_pos.frames[ti]->val));
            Var sq = ag::sum(ag::square(diff));
            acc = acc ? ag::add(acc, sq) : sq;
            count += fwd.s_pos.frames[ti]->val.size();
        }
        out.aux_slot = ag::scale(acc, 1.0 / static_cast<double>(count));
    }
    return out;
}

} // namespace

TrainResult train(const RunConfig& cfg_in, const std::string& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    if (cfg.data_path.empty()) throw std::invalid_argument("train: data.path is not set");
    fs::create_directories(out_dir);

    DatasetHandle ds = read_dataset(cfg.data_path);
    std::vector<int> train_idx = ds.train_indices;
    if (train_idx.empty()) {
        train_idx.resize(ds.clip_ids.size());
        for (size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = static_cast<int>(i);
    }

    ModelDims dims = dims_for(cfg, ds);
    SlotBertModel model(cfg, dims, cfg.seed);

    int steps = cfg.steps;
    if (steps == 0)
        steps = cfg.epochs * static_cast<int>((train_idx.size() + cfg.batch_size - 1) /
                                              cfg.batch_size);

    nn::Adam opt(model.params().vars(), cfg.lr, cfg.weight_decay);
    Rng slot_rng = Rng::derive(cfg.seed, 1);
    Rng mask_rng = Rng::derive(cfg.seed, 2);
    Rng shuffle_rng = Rng::derive(cfg.seed, 3);
    Rng crop_rng = Rng::derive(cfg.seed, 5);

    // in-memory clip cache: the desk-scale datasets fit comfortably
    std::vector<VideoClip> cache(ds.clip_ids.size());
    std::vector<bool> cached(ds.clip_ids.size(), false);
    auto clip_at = [&](int idx) -> const VideoClip& {
        if (!cached[idx]) {
            cache[idx] = load_clip(ds, idx);
            cached[idx] = true;
        }
        return cache[idx];
    };

    std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
    EncoderConfig enc = encoder_config(cfg);

    std::vector<int> order = train_idx;
    size_t cursor = order.size(); // force initial shuffle
    auto next_batch = [&]() {
        std::vector<int> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }
        return batch;
    };

    TrainResult result;
    result.steps = steps;
    double first_total = 0, last_total = 0;

    for (int step = 0; step < steps; ++step) {
        std::vector<int> batch = next_batch();
        Var total;
        double recon_v = 0, contrast_v = 0;
        for (int idx : batch) {
            const VideoClip& full_clip = clip_at(idx);
            int window = std::min(cfg.train_window, full_clip.t);
            int start = 0;
            if (cfg.random_crop && full_clip.t > window)
                start = static_cast<int>(
                    crop_rng.uniform_int(static_cast<uint64_t>(full_clip.t - window + 1)));
            VideoClip clip = crop_clip(full_clip, start, window);

            FeatureSequence x = encode_frames(clip, enc);
            std::vector<Mat> target = x.data; // reconstruct the unmasked features
            if (cfg.mask_mode == "features" && cfg.gamma > 0.0)
                mask_feature_patches(x, cfg.gamma, mask_rng);

            ClipLosses losses = clip_losses(model, x, target, slot_rng, mask_rng);
            Var clip_total = losses.recon;
            if (losses.contrast)
                clip_total = total_loss(losses.recon, losses.contrast, {cfg.alpha, cfg.tau});
            if (losses.aux_slot)
                clip_total = ag::add(clip_total, ag::scale(losses.aux_slot, cfg.slot_recon_weight));

            if (!std::isfinite(clip_total->val(0, 0))) {
                std::string ids;
                for (int b : batch) ids += ds.clip_ids[b] + " ";
                throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                         "; batch clips: " + ids);
            }
            recon_v += losses.recon->val(0, 0);
            if (losses.contrast) contrast_v += losses.contrast->val(0, 0);
            Var scaled = ag::scale(clip_total, 1.0 / cfg.batch_size);
            total = total ? ag::add(total, scaled) : scaled;
        }

        ag::backward(total);
        if (cfg.grad_clip > 0.0) opt.clip_global_norm(cfg.grad_clip);
        double lr_scale = cfg.warmup_steps > 0
                              ? std::min(1.0, static_cast<double>(step + 1) / cfg.warmup_steps)
                              : 1.0;
        opt.step(lr_scale);
        opt.zero_grad();

        double total_v = total->val(0, 0);
        recon_v /= cfg.batch_size;
        contrast_v /= cfg.batch_size;
        if (step == 0) first_total = total_v;
        last_total = total_v;

        log << json{{"step", step},
                    {"recon", recon_v},
                    {"contrast", contrast_v},
                    {"total", total_v}}
                   .dump()
            << "\n";
        if (cfg.log_every > 0 && step % cfg.log_every == 0) {
            std::cout << "step " << step << "/" << steps << " total=" << total_v
                      << " recon=" << recon_v << " contrast=" << contrast_v << std::endl;
        }
        if (cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0) {
            model.save_checkpoint(
                (fs::path(out_dir) / ("ckpt_step_" + std::to_string(step) + ".sbck")).string(),
                step, slot_rng.state());
        }
    }

    result.first_total = first_total;
    result.final_total = last_total;
    result.checkpoint_path = (fs::path(out_dir) / "ckpt_final.sbck").string();
    model.save_checkpoint(result.checkpoint_path, steps, slot_rng.state());

    if (!ds.eval_indices.empty()) {
        result.final_report = evaluate_model(model, ds);
        std::ofstream report(fs::path(out_dir) / "report.json");
        report << result.final_report.dump(2) << "\n";
    }
    return result;
}

LabelMaskVideo gt_label_video(const VideoClip& clip, int limit_frames) {
    LabelMaskVideo gt;
    gt.t = limit_frames > 0 ? std::min(limit_frames, clip.t) : clip.t;
    gt.h = clip.h;
    gt.w = clip.w;
    gt.has_background = true;
    gt.background_label = 0;
    gt.labels.assign(clip.gt_masks.begin(),
                     clip.gt_masks.begin() + static_cast<size_t>(gt.t) * clip.h * clip.w);
    return gt;
}

LabelMaskVideo pred_label_video(const MaskSet& masks) {
    LabelMaskVideo pred;
    pred.t = masks.t;
    pred.h = masks.h;
    pred.w = masks.w;
    pred.has_background = false; // every slot is a candidate instance
    pred.labels.reserve(static_cast<size_t>(masks.t) * masks.h * masks.w);
    for (const auto& frame : masks.labels_pixel)
        pred.labels.insert(pred.labels.end(), frame.begin(), frame.end());
    return pred;
}

InferResult infer_long(const SlotBertModel& model, const VideoClip& clip, int window, int stride,
                       const std::string& init_mode, uint64_t seed, int limit_frames) {
    const RunConfig& cfg = model.config();
    if (window != cfg.train_window)
        throw std::invalid_argument(
            "infer_long: window " + std::to_string(window) + " differs from the trained window " +
            std::to_string(cfg.train_window) +
            "; recurrent slot initialization is only valid at the training length");
    if (init_mode != "rnn" && init_mode != "predict")
        throw std::invalid_argument("infer_long: init mode must be rnn or predict");
    if (init_mode == "predict" && !model.has_tst())
        throw std::invalid_argument("infer_long: init_mode=predict requires the TST module");

    int t_long = limit_frames > 0 ? std::min(limit_frames, clip.t) : clip.t;
    if (t_long < window)
        throw std::invalid_argument("infer_long: clip has " + std::to_string(t_long) +
                                    " frames but the window needs " + std::to_string(window));

    ag::NoGradGuard no_grad;
    EncoderConfig enc = encoder_config(cfg);
    VideoClip cropped = crop_clip(clip, 0, t_long);
    FeatureSequence x = encode_frames(cropped, enc);

    const SlotAttention& sa = model.slot_attention();
    Rng slot_rng = Rng::derive(seed, 11);

    // per-frame slot stream; frames beyond the first window differ by init mode
    std::vector<Var> initial(t_long);
    Var prev;
    for (int f = 0; f < t_long; ++f) {
        Var features = ag::constant(x.data[f]);
        Var init;
        int iters = f == 0 ? cfg.n_first : cfg.n_later;
        if (f == 0) {
            init = sa.init_slots(cfg.k, slot_rng);
        } else if (f < window || init_mode == "rnn") {
            init = prev;
        } else {
            SlotSequence history;
            history.stage = SlotStage::initial;
            for (int h = f - (window - 1); h < f; ++h) history.frames.push_back(initial[h]);
            init = model.tst().predict_next_slot(history);
        }
        auto [slots, rec] = sa.run(features, init, iters);
        initial[f] = slots;
        prev = slots;
    }

    // window starts, always covering the final frame
    std::vector<int> starts;
    for (int s = 0; s + window <= t_long; s += stride) starts.push_back(s);
    if (starts.empty() || starts.back() != t_long - window) starts.push_back(t_long - window);

    // stitch: each frame from the window where it sits most centrally
    double center = (window - 1) / 2.0;
    std::vector<int> source(t_long, -1);
    std::vector<double> best_dist(t_long, 1e18);
    for (size_t wi = 0; wi < starts.size(); ++wi) {
        for (int off = 0; off < window; ++off) {
            int f = starts[wi] + off;
            double dist = std::abs(off - center);
            if (dist < best_dist[f] - 1e-12) { // strict: ties stay with the earlier window
                best_dist[f] = dist;
                source[f] = static_cast<int>(wi);
            }
        }
    }

    std::vector<DecodedFrame> stitched(t_long);
    std::vector<Mat> fused(t_long);
    for (size_t wi = 0; wi < starts.size(); ++wi) {
        // does any frame need this window?
        bool needed = false;
        for (int f = 0; f < t_long; ++f)
            if (source[f] == static_cast<int>(wi)) needed = true;
        if (!needed) continue;

        SlotSequence win;
        win.stage = SlotStage::initial;
        for (int off = 0; off < window; ++off) win.frames.push_back(initial[starts[wi] + off]);

        SlotSequence fused_seq;
        if (model.has_tst()) {
            TemporalMask keep_all;
            keep_all.kept.assign(window, true);
            fused_seq = model.tst().forward(model.tst().apply_mask(
                                                model.tst().add_temporal_pos(win), keep_all),
                                            keep_all);
        } else {
            fused_seq = win;
            fused_seq.stage = SlotStage::fused;
        }
        for (int off = 0; off < window; ++off) {
            int f = starts[wi] + off;
            if (source[f] != static_cast<int>(wi)) continue;
            stitched[f] = model.decode_single(fused_seq.frames[off]);
            fused[f] = fused_seq.frames[off]->val;
        }
    }

    InferResult out;
    out.masks = model.masks_from_decoded(stitched);
    out.fused_slots = std::move(fused);
    out.source_window = std::move(source);
    return out;
}

json evaluate_model(const SlotBertModel& model, const DatasetHandle& ds,
                    const EvalOverrides& overrides) {
    const RunConfig& cfg = model.config();
    int repeats = overrides.repeats > 0 ? overrides.repeats : cfg.repeats;
    std::string matching = overrides.matching.empty() ? cfg.matching : overrides.matching;
    std::string init_mode = overrides.init_mode.empty() ? cfg.init_mode : overrides.init_mode;

    std::vector<int> eval_idx = ds.eval_indices;
    if (eval_idx.empty()) {
        eval_idx.resize(ds.clip_ids.size());
        for (size_t i = 0; i < eval_idx.size(); ++i) eval_idx[i] = static_cast<int>(i);
    }

    MetricsConfig mcfg;
    mcfg.matching = matching == "hungarian" ? Matching::hungarian : Matching::best_overlap;

    const char* names[] = {"fg_ari", "mbo_v", "mbo_f", "mbhd", "corloc"};
    std::vector<std::vector<double>> repeat_means(5);
    std::map<std::string, std::vector<double>> per_video_acc; // clip -> 5 sums
    int frames_counted = 0, videos_counted = 0;

    ag::NoGradGuard no_grad;
    for (int r = 0; r < repeats; ++r) {
        std::vector<double> sums(5, 0.0);
        std::vector<int> counts(5, 0);
        for (int idx : eval_idx) {
            VideoClip clip = load_clip(ds, idx);
            if (!clip.has_gt()) continue;
            int t_eval = overrides.limit_frames > 0 ? std::min(overrides.limit_frames, clip.t)
                                                    : clip.t;
            uint64_t run_seed = Rng::derive(overrides.seed_base + cfg.seed, r).next_u64();
            InferResult inf = infer_long(model, clip, cfg.window, cfg.stride, init_mode,
                                         run_seed, t_eval);
            LabelMaskVideo pred = pred_label_video(inf.masks);
            LabelMaskVideo gt = gt_label_video(clip, t_eval);
            ClipMetrics m = evaluate_clip_metrics(pred, gt, mcfg);

            const std::optional<double> vals[5] = {m.fg_ari, m.mbo_v, m.mbo_f, m.mbhd, m.corloc};
            for (int i = 0; i < 5; ++i) {
                if (!vals[i]) continue;
                sums[i] += *vals[i];
                counts[i] += 1;
            }
            auto& acc = per_video_acc[clip.clip_id];
            if (acc.empty()) acc.assign(6, 0.0);
            for (int i = 0; i < 5; ++i) acc[i] += vals[i] ? *vals[i] : 0.0;
            acc[5] += 1.0;
            if (r == 0) {
                frames_counted += t_eval;
                ++videos_counted;
            }
        }
        for (int i = 0; i < 5; ++i)
            repeat_means[i].push_back(counts[i] ? sums[i] / counts[i]
                                                : std::numeric_limits<double>::quiet_NaN());
    }

    json metrics;
    for (int i = 0; i < 5; ++i) {
        double mean = 0, sq = 0;
        int n = 0;
        for (double v : repeat_means[i]) {
            if (std::isnan(v)) continue;
            mean += v;
            ++n;
        }
        if (n > 0) mean /= n;
        for (double v : repeat_means[i]) {
            if (std::isnan(v)) continue;
            sq += (v - mean) * (v - mean);
        }
        double stdev = n > 0 ? std::sqrt(sq / n) : 0.0; // population: repeats=1 -> 0
        metrics[names[i]] = {{"mean", mean}, {"std", stdev}};
    }

    json per_video = json::array();
    for (const auto& [id, acc] : per_video_acc) {
        json entry;
        entry["clip_id"] = id;
        for (int i = 0; i < 5; ++i) entry[names[i]] = acc[i] / acc[5];
        per_video.push_back(entry);
    }

    json report;
    report["config_hash"] = config_hash(cfg);
    report["repeats"] = repeats;
    report["matching"] = matching;
    report["init_mode"] = init_mode;
    report["metrics"] = metrics;
    report["per_video"] = per_video;
    report["counts"] = {{"videos", videos_counted}, {"frames", frames_counted}};
    report["gt_available"] = videos_counted > 0;
    return report;
}

json evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_path,
                         const EvalOverrides& overrides) {
    auto loaded = SlotBertModel::load_checkpoint(ckpt_path);
    DatasetHandle ds = read_dataset(data_path);
    return evaluate_model(*loaded.model, ds, overrides);
}

void export_masks(const MaskSet& masks, const std::string& out_dir, const std::string& clip_id,
                  const json& window_cfg, bool export_soft) {
    if (masks.k > 255)
        throw std::invalid_argument("export_masks: K=" + std::to_string(masks.k) +
                                    " does not fit an 8-bit label map (K <= 255)");
    fs::create_directories(out_dir);
    json manifest;
    manifest["clip_id"] = clip_id;
    manifest["k"] = masks.k;
    manifest["image_size"] = {masks.h, masks.w};
    manifest["window"] = window_cfg;
    json frames = json::array();
    for (int ti = 0; ti < masks.t; ++ti) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%04d.png", ti);
        ImageU8 img;
        img.h = masks.h;
        img.w = masks.w;
        img.channels = 1;
        img.pixels.resize(static_cast<size_t>(masks.h) * masks.w);
        for (size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = static_cast<uint8_t>(masks.labels_pixel[ti][i] + 1); // 0 = no slot
        write_png((fs::path(out_dir) / name).string(), img);
        frames.push_back(name);
    }
    manifest["frames"] = frames;

    if (export_soft) {
        // store (T x N x K) through the shared feature container
        FeatureSequence soft;
        soft.grid_h = masks.grid_h;
        soft.grid_w = masks.grid_w;
        for (const Mat& m : masks.soft) soft.data.push_back(m.transpose()); // N x K
        write_external_features((fs::path(out_dir) / "soft_masks.sbft").string(), soft, clip_id);
        manifest["soft_masks"] = "soft_masks.sbft";
    }

    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
}

std::vector<std::vector<int32_t>> read_exported_labels(const std::string& out_dir) {
    std::ifstream in(fs::path(out_dir) / "manifest.json");
    if (!in) throw std::runtime_error("read_exported_labels: missing manifest in " + out_dir);
    json manifest;
    in >> manifest;
    std::vector<std::vector<int32_t>> out;
    for (const auto& name : manifest.at("frames")) {
        ImageU8 img = read_png((fs::path(out_dir) / name.get<std::string>()).string());
        std::vector<int32_t> labels(img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); ++i)
            labels[i] = static_cast<int32_t>(img.pixels[i]) - 1;
        out.push_back(std::move(labels));
    }
    return out;
}

RunConfig apply_variant(const RunConfig& base, const std::string& variant) {
    RunConfig cfg = base;
    if (variant == "full") {
        cfg.use_tst = true;
        cfg.use_contrast = true;
        cfg.mask_mode = "slots";
    } else if (variant == "no_tst") { // contrast kept: the "contrast only" row
        cfg.use_tst = false;
        cfg.use_contrast = true;
    } else if (variant == "no_contrast") {
        cfg.use_tst = true;
        cfg.use_contrast = false;
        cfg.mask_mode = "slots";
    } else if (variant == "no_tst_no_contrast") {
        cfg.use_tst = false;
        cfg.use_contrast = false;
    } else if (variant == "mask_features") {
        cfg.use_tst = true;
        cfg.use_contrast = true;
        cfg.mask_mode = "features";
    } else if (variant == "no_slot_masks") {
        cfg.use_tst = true;
        cfg.use_contrast = true;
        cfg.mask_mode = "none";
    } else {
        throw std::invalid_argument("apply_variant: unknown variant '" + variant + "'");
    }
    return cfg;
}

json ablate(const RunConfig& base, const std::vector<std::string>& variants,
            const std::string& out_dir) {
    fs::create_directories(out_dir);
    json summary;
    for (const std::string& variant : variants) {
        RunConfig cfg = apply_variant(base, variant);
        std::string dir = (fs::path(out_dir) / variant).string();
        std::cout << "== ablation variant " << variant << " ==" << std::endl;
        TrainResult res = train(cfg, dir);
        json entry;
        entry["checkpoint"] = res.checkpoint_path;
        entry["final_total"] = res.final_total;
        if (!res.final_report.is_null() && res.final_report.contains("metrics"))
            entry["metrics"] = res.final_report["metrics"];
        summary[variant] = entry;
    }
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << summary.dump(2) << "\n";
    return summary;
}

} // namespace slotbert
