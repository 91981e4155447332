#pragma once

#include "slotbert/tst.hpp"

#include <cstdint>
#include <string>

namespace slotbert {

// Flat key = value configuration for a training/evaluation run. Key names
// follow the dotted scheme documented in the README; unknown keys are errors.
struct RunConfig {
    // model
    int k = 7;
    int d_slot = 64;
    int patch_size = 8;
    std::string encoder = "pixel_patch"; // pixel_patch | external
    int projection_dim = 0;              // 0 disables the frozen random projection
    std::string decoder = "mlp";         // mlp | mixer
    std::string refine_cell = "gru_mlp"; // gru_mlp | none
    std::string slot_init = "standard_gaussian";
    int n_first = 3;
    int n_later = 2;
    TstConfig tst; // d_slot is mirrored from model.d_slot at use time
    int mlp_decoder_hidden = 512;
    int mlp_decoder_layers = 4;
    int mixer_blocks = 2;
    int mixer_heads = 4;
    int mixer_render_hidden = 512;
    int sa_mlp_hidden = 128;

    // loss
    double alpha = 0.01;
    double tau = 0.5;
    double gamma = 0.15;
    std::string contrast_on = "fused"; // fused | initial
    double slot_recon_weight = 0.0;    // optional auxiliary slot reconstruction term

    // optim
    double lr = 1e-4;
    double weight_decay = 1e-5;
    int batch_size = 4;
    int steps = 5000;
    int epochs = 0; // when > 0 and steps == 0, steps are derived from epochs
    uint64_t seed = 0;
    int checkpoint_every = 1000;
    int log_every = 50;
    int warmup_steps = 0;   // linear lr warmup from 0
    double grad_clip = 0.0; // global-norm clip, 0 disables

    // ablation
    bool use_tst = true;
    bool use_contrast = true;
    std::string mask_mode = "slots"; // slots | features | none

    // data
    std::string data_path;
    int train_window = 5;
    bool random_crop = false; // default: first train_window frames of each clip

    // eval
    int repeats = 3;
    std::string matching = "best_overlap"; // best_overlap | hungarian
    int window = 5;
    int stride = 1;
    std::string init_mode = "rnn"; // rnn | predict

    void validate() const;
};

// parses key = value lines ('#' comments); SLOTBERT_SEED overrides optim.seed
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg); // 16 hex chars, canonical-text FNV-1a

} // namespace slotbert
