#include "slotbert/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace slotbert {

void RunConfig::validate() const {
    if (k < 1) throw std::invalid_argument("config: model.k must be >= 1");
    if (d_slot < 1) throw std::invalid_argument("config: model.d_slot must be >= 1");
    if (patch_size < 1) throw std::invalid_argument("config: model.patch_size must be >= 1");
    if (encoder != "pixel_patch" && encoder != "external")
        throw std::invalid_argument("config: model.encoder must be pixel_patch or external");
    if (decoder != "mlp" && decoder != "mixer")
        throw std::invalid_argument("config: model.decoder must be mlp or mixer");
    if (refine_cell != "gru_mlp" && refine_cell != "none")
        throw std::invalid_argument("config: model.refine_cell must be gru_mlp or none");
    if (d_slot % tst.n_heads != 0)
        throw std::invalid_argument("config: model.d_slot must be divisible by model.tst.n_heads");
    if (alpha < 0.0) throw std::invalid_argument("config: loss.alpha must be >= 0");
    if (tau <= 0.0) throw std::invalid_argument("config: loss.tau must be > 0");
    if (gamma < 0.0 || gamma >= 1.0)
        throw std::invalid_argument("config: loss.gamma must be in [0, 1)");
    if (contrast_on != "fused" && contrast_on != "initial")
        throw std::invalid_argument("config: loss.contrast_on must be fused or initial");
    if (batch_size < 1) throw std::invalid_argument("config: optim.batch_size must be >= 1");
    if (steps < 0 || (steps == 0 && epochs <= 0))
        throw std::invalid_argument("config: set optim.steps > 0 or optim.epochs > 0");
    if (mask_mode != "slots" && mask_mode != "features" && mask_mode != "none")
        throw std::invalid_argument("config: ablation.mask_mode must be slots, features or none");
    if (repeats < 1) throw std::invalid_argument("config: eval.repeats must be >= 1");
    if (matching != "best_overlap" && matching != "hungarian")
        throw std::invalid_argument("config: eval.matching must be best_overlap or hungarian");
    if (init_mode != "rnn" && init_mode != "predict")
        throw std::invalid_argument("config: eval.init_mode must be rnn or predict");
    if (train_window < 1) throw std::invalid_argument("config: data.train_window must be >= 1");
    if (window < 1) throw std::invalid_argument("config: eval.window must be >= 1");
    if (stride < 1) throw std::invalid_argument("config: eval.stride must be >= 1");
    if (train_window > tst.max_t)
        throw std::invalid_argument("config: data.train_window exceeds model.tst.max_t");
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

int to_int(const std::string& v) { return std::stoi(v); }
double to_double(const std::string& v) { return std::stod(v); }
uint64_t to_u64(const std::string& v) { return std::stoull(v); }
bool to_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: boolean value must be true/false, got '" + v + "'");
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"model.k", [](RunConfig& c, const std::string& v) { c.k = to_int(v); }},
        {"model.d_slot", [](RunConfig& c, const std::string& v) { c.d_slot = to_int(v); }},
        {"model.patch_size", [](RunConfig& c, const std::string& v) { c.patch_size = to_int(v); }},
        {"model.encoder", [](RunConfig& c, const std::string& v) { c.encoder = v; }},
        {"model.projection_dim",
         [](RunConfig& c, const std::string& v) { c.projection_dim = to_int(v); }},
        {"model.decoder", [](RunConfig& c, const std::string& v) { c.decoder = v; }},
        {"model.refine_cell", [](RunConfig& c, const std::string& v) { c.refine_cell = v; }},
        {"model.slot_init", [](RunConfig& c, const std::string& v) { c.slot_init = v; }},
        {"model.n_first", [](RunConfig& c, const std::string& v) { c.n_first = to_int(v); }},
        {"model.n_later", [](RunConfig& c, const std::string& v) { c.n_later = to_int(v); }},
        {"model.tst.n_layers",
         [](RunConfig& c, const std::string& v) { c.tst.n_layers = to_int(v); }},
        {"model.tst.n_heads",
         [](RunConfig& c, const std::string& v) { c.tst.n_heads = to_int(v); }},
        {"model.tst.ffn_multiplier",
         [](RunConfig& c, const std::string& v) { c.tst.ffn_multiplier = to_int(v); }},
        {"model.tst.max_t", [](RunConfig& c, const std::string& v) { c.tst.max_t = to_int(v); }},
        {"model.mlp_decoder_hidden",
         [](RunConfig& c, const std::string& v) { c.mlp_decoder_hidden = to_int(v); }},
        {"model.mlp_decoder_layers",
         [](RunConfig& c, const std::string& v) { c.mlp_decoder_layers = to_int(v); }},
        {"model.mixer_blocks",
         [](RunConfig& c, const std::string& v) { c.mixer_blocks = to_int(v); }},
        {"model.mixer_heads",
         [](RunConfig& c, const std::string& v) { c.mixer_heads = to_int(v); }},
        {"model.mixer_render_hidden",
         [](RunConfig& c, const std::string& v) { c.mixer_render_hidden = to_int(v); }},
        {"model.sa_mlp_hidden",
         [](RunConfig& c, const std::string& v) { c.sa_mlp_hidden = to_int(v); }},
        {"loss.alpha", [](RunConfig& c, const std::string& v) { c.alpha = to_double(v); }},
        {"loss.tau", [](RunConfig& c, const std::string& v) { c.tau = to_double(v); }},
        {"loss.gamma", [](RunConfig& c, const std::string& v) { c.gamma = to_double(v); }},
        {"loss.contrast_on", [](RunConfig& c, const std::string& v) { c.contrast_on = v; }},
        {"loss.slot_recon_weight",
         [](RunConfig& c, const std::string& v) { c.slot_recon_weight = to_double(v); }},
        {"optim.lr", [](RunConfig& c, const std::string& v) { c.lr = to_double(v); }},
        {"optim.weight_decay",
         [](RunConfig& c, const std::string& v) { c.weight_decay = to_double(v); }},
        {"optim.batch_size",
         [](RunConfig& c, const std::string& v) { c.batch_size = to_int(v); }},
        {"optim.steps", [](RunConfig& c, const std::string& v) { c.steps = to_int(v); }},
        {"optim.epochs", [](RunConfig& c, const std::string& v) { c.epochs = to_int(v); }},
        {"optim.seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
        {"optim.checkpoint_every",
         [](RunConfig& c, const std::string& v) { c.checkpoint_every = to_int(v); }},
        {"optim.log_every", [](RunConfig& c, const std::string& v) { c.log_every = to_int(v); }},
        {"optim.warmup_steps",
         [](RunConfig& c, const std::string& v) { c.warmup_steps = to_int(v); }},
        {"optim.grad_clip", [](RunConfig& c, const std::string& v) { c.grad_clip = to_double(v); }},
        {"ablation.use_tst", [](RunConfig& c, const std::string& v) { c.use_tst = to_bool(v); }},
        {"ablation.use_contrast",
         [](RunConfig& c, const std::string& v) { c.use_contrast = to_bool(v); }},
        {"ablation.mask_mode", [](RunConfig& c, const std::string& v) { c.mask_mode = v; }},
        {"data.path", [](RunConfig& c, const std::string& v) { c.data_path = v; }},
        {"data.train_window",
         [](RunConfig& c, const std::string& v) { c.train_window = to_int(v); }},
        {"data.random_crop",
         [](RunConfig& c, const std::string& v) { c.random_crop = to_bool(v); }},
        {"eval.repeats", [](RunConfig& c, const std::string& v) { c.repeats = to_int(v); }},
        {"eval.matching", [](RunConfig& c, const std::string& v) { c.matching = v; }},
        {"eval.window", [](RunConfig& c, const std::string& v) { c.window = to_int(v); }},
        {"eval.stride", [](RunConfig& c, const std::string& v) { c.stride = to_int(v); }},
        {"eval.init_mode", [](RunConfig& c, const std::string& v) { c.init_mode = v; }},
    };
    return table;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        it->second(cfg, value);
    }
    if (const char* env_seed = std::getenv("SLOTBERT_SEED")) cfg.seed = to_u64(env_seed);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_run_config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_run_config_text(buf.str());
}

std::string run_config_to_text(const RunConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "model.k = " << cfg.k << "\n"
        << "model.d_slot = " << cfg.d_slot << "\n"
        << "model.patch_size = " << cfg.patch_size << "\n"
        << "model.encoder = " << cfg.encoder << "\n"
        << "model.projection_dim = " << cfg.projection_dim << "\n"
        << "model.decoder = " << cfg.decoder << "\n"
        << "model.refine_cell = " << cfg.refine_cell << "\n"
        << "model.slot_init = " << cfg.slot_init << "\n"
        << "model.n_first = " << cfg.n_first << "\n"
        << "model.n_later = " << cfg.n_later << "\n"
        << "model.tst.n_layers = " << cfg.tst.n_layers << "\n"
        << "model.tst.n_heads = " << cfg.tst.n_heads << "\n"
        << "model.tst.ffn_multiplier = " << cfg.tst.ffn_multiplier << "\n"
        << "model.tst.max_t = " << cfg.tst.max_t << "\n"
        << "model.mlp_decoder_hidden = " << cfg.mlp_decoder_hidden << "\n"
        << "model.mlp_decoder_layers = " << cfg.mlp_decoder_layers << "\n"
        << "model.mixer_blocks = " << cfg.mixer_blocks << "\n"
        << "model.mixer_heads = " << cfg.mixer_heads << "\n"
        << "model.mixer_render_hidden = " << cfg.mixer_render_hidden << "\n"
        << "model.sa_mlp_hidden = " << cfg.sa_mlp_hidden << "\n"
        << "loss.alpha = " << cfg.alpha << "\n"
        << "loss.tau = " << cfg.tau << "\n"
        << "loss.gamma = " << cfg.gamma << "\n"
        << "loss.contrast_on = " << cfg.contrast_on << "\n"
        << "loss.slot_recon_weight = " << cfg.slot_recon_weight << "\n"
        << "optim.lr = " << cfg.lr << "\n"
        << "optim.weight_decay = " << cfg.weight_decay << "\n"
        << "optim.batch_size = " << cfg.batch_size << "\n"
        << "optim.steps = " << cfg.steps << "\n"
        << "optim.epochs = " << cfg.epochs << "\n"
        << "optim.seed = " << cfg.seed << "\n"
        << "optim.checkpoint_every = " << cfg.checkpoint_every << "\n"
        << "optim.log_every = " << cfg.log_every << "\n"
        << "optim.warmup_steps = " << cfg.warmup_steps << "\n"
        << "optim.grad_clip = " << cfg.grad_clip << "\n"
        << "ablation.use_tst = " << (cfg.use_tst ? "true" : "false") << "\n"
        << "ablation.use_contrast = " << (cfg.use_contrast ? "true" : "false") << "\n"
        << "ablation.mask_mode = " << cfg.mask_mode << "\n"
        << "data.path = " << cfg.data_path << "\n"
        << "data.train_window = " << cfg.train_window << "\n"
        << "data.random_crop = " << (cfg.random_crop ? "true" : "false") << "\n"
        << "eval.repeats = " << cfg.repeats << "\n"
        << "eval.matching = " << cfg.matching << "\n"
        << "eval.window = " << cfg.window << "\n"
        << "eval.stride = " << cfg.stride << "\n"
        << "eval.init_mode = " << cfg.init_mode << "\n";
    return out.str();
}

std::string config_hash(const RunConfig& cfg) {
    std::string text = run_config_to_text(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace slotbert
