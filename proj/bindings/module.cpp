#include "slotbert/pipeline.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace slotbert;

namespace {

LabelMaskVideo label_video_from_array(const py::array_t<int32_t>& arr, bool has_background) {
    auto buf = arr.request();
    if (buf.ndim != 3) throw std::invalid_argument("label video must be a (T, H, W) int32 array");
    LabelMaskVideo v;
    v.t = static_cast<int>(buf.shape[0]);
    v.h = static_cast<int>(buf.shape[1]);
    v.w = static_cast<int>(buf.shape[2]);
    v.has_background = has_background;
    auto a = arr.unchecked<3>();
    v.labels.resize(static_cast<size_t>(v.t) * v.h * v.w);
    size_t at = 0;
    for (int ti = 0; ti < v.t; ++ti)
        for (int r = 0; r < v.h; ++r)
            for (int c = 0; c < v.w; ++c) v.labels[at++] = a(ti, r, c);
    return v;
}

SlotSequence sequence_from_array(const py::array_t<double>& arr) {
    auto buf = arr.request();
    if (buf.ndim != 3) throw std::invalid_argument("slots must be a (T, K, d) float64 array");
    SlotSequence s;
    s.stage = SlotStage::fused;
    auto a = arr.unchecked<3>();
    for (py::ssize_t ti = 0; ti < buf.shape[0]; ++ti) {
        Mat m(buf.shape[1], buf.shape[2]);
        for (py::ssize_t i = 0; i < buf.shape[1]; ++i)
            for (py::ssize_t j = 0; j < buf.shape[2]; ++j) m(i, j) = a(ti, i, j);
        s.frames.push_back(ag::constant(m));
    }
    return s;
}

VideoClip clip_from_array(const py::array_t<uint8_t>& frames) {
    auto buf = frames.request();
    if (buf.ndim != 4 || buf.shape[3] != 3)
        throw std::invalid_argument("frames must be a (T, H, W, 3) uint8 array");
    VideoClip clip;
    clip.t = static_cast<int>(buf.shape[0]);
    clip.h = static_cast<int>(buf.shape[1]);
    clip.w = static_cast<int>(buf.shape[2]);
    clip.c = 3;
    clip.clip_id = "array";
    auto a = frames.unchecked<4>();
    clip.frames.resize(static_cast<size_t>(clip.t) * clip.h * clip.w * 3);
    size_t at = 0;
    for (int ti = 0; ti < clip.t; ++ti)
        for (int r = 0; r < clip.h; ++r)
            for (int c = 0; c < clip.w; ++c)
                for (int ch = 0; ch < 3; ++ch) clip.frames[at++] = a(ti, r, c, ch);
    return clip;
}

// thin handle so python can run inference without touching checkpoints twice
class PyModel {
public:
    explicit PyModel(const std::string& ckpt_path) {
        auto loaded = SlotBertModel::load_checkpoint(ckpt_path);
        model_ = std::move(loaded.model);
        step_ = loaded.step;
    }

    py::array_t<int32_t> segment(const py::array_t<uint8_t>& frames, int window,
                                 const std::string& init_mode, uint64_t seed) {
        VideoClip clip = clip_from_array(frames);
        int w = window > 0 ? window : model_->config().train_window;
        InferResult inf =
            infer_long(*model_, clip, w, model_->config().stride, init_mode, seed);
        py::array_t<int32_t> out({inf.masks.t, inf.masks.h, inf.masks.w});
        auto a = out.mutable_unchecked<3>();
        for (int ti = 0; ti < inf.masks.t; ++ti)
            for (int r = 0; r < inf.masks.h; ++r)
                for (int c = 0; c < inf.masks.w; ++c)
                    a(ti, r, c) = inf.masks.labels_pixel[ti][static_cast<size_t>(r) * inf.masks.w + c];
        return out;
    }

    std::string config_text() const { return run_config_to_text(model_->config()); }
    int64_t step() const { return step_; }
    int k() const { return model_->config().k; }

private:
    std::unique_ptr<SlotBertModel> model_;
    int64_t step_ = 0;
};

} // namespace

PYBIND11_MODULE(_slotbert, m) {
    m.doc() = "Slot attention video segmentation with a bidirectional temporal slot transformer";

    m.def("gen_data", [](const std::string& spec_json, const std::string& out_dir) {
        SpriteSpec spec = spec_json == "default" ? default_sprite_spec()
                          : spec_json == "hard"  ? hard_sprite_spec()
                                                 : sprite_spec_from_json(spec_json);
        write_dataset(spec, out_dir);
    }, py::arg("spec_json"), py::arg("out_dir"),
       "Generate a sprite dataset; spec_json is a JSON string or 'default'/'hard'.");

    m.def("default_spec_json", [] { return sprite_spec_to_json(default_sprite_spec()); });
    m.def("hard_spec_json", [] { return sprite_spec_to_json(hard_sprite_spec()); });

    m.def("train", [](const std::string& config_text, const std::string& out_dir) {
        RunConfig cfg = parse_run_config_text(config_text);
        TrainResult res = train(cfg, out_dir);
        py::dict out;
        out["checkpoint"] = res.checkpoint_path;
        out["first_total"] = res.first_total;
        out["final_total"] = res.final_total;
        out["steps"] = res.steps;
        return out;
    }, py::arg("config_text"), py::arg("out_dir"),
       "Train from a config given as flat key = value text; returns a summary dict.");

    m.def("evaluate", [](const std::string& ckpt, const std::string& data_dir, int repeats,
                         const std::string& matching) {
        EvalOverrides ov;
        if (repeats > 0) ov.repeats = repeats;
        if (!matching.empty()) ov.matching = matching;
        return evaluate_checkpoint(ckpt, data_dir, ov).dump();
    }, py::arg("ckpt"), py::arg("data_dir"), py::arg("repeats") = 0, py::arg("matching") = "",
       "Evaluate a checkpoint; returns the report as a JSON string.");

    m.def("patchify", [](const py::array_t<double>& frame, int patch_size) {
        auto buf = frame.request();
        if (buf.ndim != 3) throw std::invalid_argument("frame must be (H, W, C)");
        int h = static_cast<int>(buf.shape[0]);
        int w = static_cast<int>(buf.shape[1]);
        int c = static_cast<int>(buf.shape[2]);
        auto a = frame.unchecked<3>();
        Mat fm(h * w, c);
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                for (int ch = 0; ch < c; ++ch) fm(r * w + col, ch) = a(r, col, ch);
        Mat patches = patchify(fm, h, w, c, patch_size);
        py::array_t<double> out({patches.rows(), patches.cols()});
        auto o = out.mutable_unchecked<2>();
        for (long i = 0; i < patches.rows(); ++i)
            for (long j = 0; j < patches.cols(); ++j) o(i, j) = patches(i, j);
        return out;
    }, py::arg("frame"), py::arg("patch_size"));

    m.def("slot_contrastive_loss", [](const py::array_t<double>& slots, double tau) {
        return slot_contrastive_loss(sequence_from_array(slots), tau)->val(0, 0);
    }, py::arg("slots"), py::arg("tau") = 0.5,
       "Contrastive loss over a (T, K, d) slot array.");

    m.def("fg_ari", [](const py::array_t<int32_t>& pred, const py::array_t<int32_t>& gt) {
        return fg_ari(label_video_from_array(pred, false), label_video_from_array(gt, true));
    }, py::arg("pred"), py::arg("gt"));

    m.def("mbo", [](const py::array_t<int32_t>& pred, const py::array_t<int32_t>& gt,
                    const std::string& level, const std::string& matching) {
        auto res = mbo(label_video_from_array(pred, false), label_video_from_array(gt, true),
                       level == "frame" ? MboLevel::frame : MboLevel::video,
                       matching == "hungarian" ? Matching::hungarian : Matching::best_overlap);
        return res ? *res : std::numeric_limits<double>::quiet_NaN();
    }, py::arg("pred"), py::arg("gt"), py::arg("level") = "video",
       py::arg("matching") = "best_overlap");

    m.def("mbhd", [](const py::array_t<int32_t>& pred, const py::array_t<int32_t>& gt,
                     const std::string& matching) {
        auto res = mbhd(label_video_from_array(pred, false), label_video_from_array(gt, true),
                        matching == "hungarian" ? Matching::hungarian : Matching::best_overlap);
        return res ? *res : std::numeric_limits<double>::quiet_NaN();
    }, py::arg("pred"), py::arg("gt"), py::arg("matching") = "best_overlap");

    m.def("corloc", [](const py::array_t<int32_t>& pred, const py::array_t<int32_t>& gt) {
        auto res = corloc(label_video_from_array(pred, false), label_video_from_array(gt, true));
        return res ? *res : std::numeric_limits<double>::quiet_NaN();
    }, py::arg("pred"), py::arg("gt"));

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def("segment", &PyModel::segment, py::arg("frames"), py::arg("window") = 0,
             py::arg("init_mode") = "rnn", py::arg("seed") = 0,
             "Per-pixel slot labels for a (T, H, W, 3) uint8 video.")
        .def_property_readonly("config_text", &PyModel::config_text)
        .def_property_readonly("step", &PyModel::step)
        .def_property_readonly("k", &PyModel::k);
}
