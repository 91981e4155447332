#include "slotbert/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    slotbert::SpriteSpec spec;
    if (spec_path == "default") {
        spec = slotbert::default_sprite_spec();
    } else if (spec_path == "hard") {
        spec = slotbert::hard_sprite_spec();
    } else {
        spec = slotbert::sprite_spec_from_json(read_file(spec_path));
    }
    slotbert::write_dataset(spec, out_dir);
    std::cout << "wrote " << spec.num_videos << " clips (" << spec.eval_videos
              << " eval) to " << out_dir << std::endl;
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    slotbert::RunConfig cfg = slotbert::load_run_config(config_path);
    if (!data_dir.empty()) cfg.data_path = data_dir;
    slotbert::TrainResult res = slotbert::train(cfg, out_dir);
    std::cout << "final checkpoint: " << res.checkpoint_path << "\n"
              << "loss " << res.first_total << " -> " << res.final_total << std::endl;
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& report_path,
             const std::string& matching, int repeats) {
    slotbert::EvalOverrides ov;
    if (!matching.empty()) ov.matching = matching;
    if (repeats > 0) ov.repeats = repeats;
    json report = slotbert::evaluate_checkpoint(ckpt, data_dir, ov);

    if (!report.at("gt_available").get<bool>()) {
        // no ground truth anywhere: export masks instead of metrics
        auto loaded = slotbert::SlotBertModel::load_checkpoint(ckpt);
        slotbert::DatasetHandle ds = slotbert::read_dataset(data_dir);
        fs::path mask_dir = fs::path(report_path).parent_path() / "masks";
        for (size_t i = 0; i < ds.clip_ids.size(); ++i) {
            slotbert::VideoClip clip = slotbert::load_clip(ds, static_cast<int>(i));
            auto inf = slotbert::infer_long(*loaded.model, clip, loaded.model->config().window,
                                            loaded.model->config().stride,
                                            loaded.model->config().init_mode, 0);
            slotbert::export_masks(inf.masks, (mask_dir / clip.clip_id).string(), clip.clip_id,
                                   json{{"window", loaded.model->config().window}});
        }
        report["mask_export"] = (mask_dir).string();
        std::cerr << "dataset has no ground-truth masks: wrote mask export only" << std::endl;
    }

    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write report to " + report_path);
    out << report.dump(2) << "\n";
    std::cout << report.at("metrics").dump(2) << std::endl;
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& clip_dir, int window,
              const std::string& init, const std::string& export_dir) {
    auto loaded = slotbert::SlotBertModel::load_checkpoint(ckpt);
    slotbert::DatasetHandle ds = slotbert::read_dataset(clip_dir);
    int w = window > 0 ? window : loaded.model->config().train_window;
    for (size_t i = 0; i < ds.clip_ids.size(); ++i) {
        slotbert::VideoClip clip = slotbert::load_clip(ds, static_cast<int>(i));
        auto inf = slotbert::infer_long(*loaded.model, clip, w, loaded.model->config().stride,
                                        init, 0);
        slotbert::export_masks(inf.masks,
                               (fs::path(export_dir) / clip.clip_id).string(), clip.clip_id,
                               json{{"window", w}, {"init", init}});
        std::cout << "exported " << clip.clip_id << std::endl;
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& variants_csv,
               const std::string& out_dir) {
    slotbert::RunConfig base = slotbert::load_run_config(config_path);
    std::vector<std::string> variants;
    std::stringstream ss(variants_csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) variants.push_back(item);
    json summary = slotbert::ablate(base, variants, out_dir);
    std::cout << summary.dump(2) << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"slotbert: object-centric video segmentation with a temporal slot transformer"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, config_path, data_dir, ckpt, report_path, clip_dir;
    std::string matching, init = "rnn", variants = "full,no_tst,no_contrast,no_tst_no_contrast,"
                                                   "mask_features,no_slot_masks";
    int repeats = 0, window = 0;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic sprite dataset");
    gen->add_option("--spec", spec_path, "sprite spec JSON file, or 'default'/'hard'")->required();
    gen->add_option("--out", out_dir, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "run config file")->required();
    train->add_option("--data", data_dir, "dataset directory (overrides data.path)");
    train->add_option("--out", out_dir, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--report", report_path, "output report JSON")->required();
    eval->add_option("--matching", matching, "best_overlap|hungarian");
    eval->add_option("--repeats", repeats, "number of evaluation repeats");

    auto* infer = app.add_subcommand("infer", "sliding-window inference and mask export");
    infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
    infer->add_option("--clip", clip_dir, "dataset directory holding the clip(s)")->required();
    infer->add_option("--window", window, "window length (defaults to the trained window)");
    infer->add_option("--init", init, "rnn|predict");
    infer->add_option("--export", out_dir, "mask export directory")->required();

    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
    ablate->add_option("--config", config_path, "base run config file")->required();
    ablate->add_option("--variants", variants, "comma-separated variant names");
    ablate->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir);
        if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
        if (eval->parsed()) return cmd_eval(ckpt, data_dir, report_path, matching, repeats);
        if (infer->parsed()) return cmd_infer(ckpt, clip_dir, window, init, out_dir);
        if (ablate->parsed()) return cmd_ablate(config_path, variants, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
