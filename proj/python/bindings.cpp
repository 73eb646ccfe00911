#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "sted/data_synth.hpp"
#include "sted/metrics.hpp"
#include "sted/train.hpp"

namespace py = pybind11;
using namespace sted;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DArray& a) {
    std::vector<int> shape(static_cast<size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] =
        static_cast<int>(a.shape(i));
    Tensor t(shape);
    std::copy(a.data(), a.data() + t.numel(), t.data());
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

events::EventStream stream_from_arrays(const py::array_t<uint64_t>& ts,
                                       const py::array_t<int64_t>& xs,
                                       const py::array_t<int64_t>& ys,
                                       const py::array_t<int64_t>& ps, int width, int height,
                                       uint64_t t_start, uint64_t t_end) {
    events::EventStream s;
    s.width = width;
    s.height = height;
    s.t_start = t_start;
    s.t_end = t_end;
    const auto n = ts.size();
    if (xs.size() != n || ys.size() != n || ps.size() != n)
        throw std::invalid_argument("event arrays must share length");
    s.events.resize(static_cast<size_t>(n));
    for (py::ssize_t i = 0; i < n; ++i) {
        s.events[static_cast<size_t>(i)] = events::Event{
            ts.data()[i], static_cast<uint16_t>(xs.data()[i]),
            static_cast<uint16_t>(ys.data()[i]), static_cast<int8_t>(ps.data()[i])};
    }
    return s;
}

py::dict stream_to_dict(const events::EventStream& s) {
    py::array_t<uint64_t> t(static_cast<py::ssize_t>(s.events.size()));
    py::array_t<int64_t> x(static_cast<py::ssize_t>(s.events.size()));
    py::array_t<int64_t> y(static_cast<py::ssize_t>(s.events.size()));
    py::array_t<int64_t> p(static_cast<py::ssize_t>(s.events.size()));
    for (size_t i = 0; i < s.events.size(); ++i) {
        t.mutable_data()[i] = s.events[i].t;
        x.mutable_data()[i] = s.events[i].x;
        y.mutable_data()[i] = s.events[i].y;
        p.mutable_data()[i] = s.events[i].p;
    }
    py::dict d;
    d["t"] = t;
    d["x"] = x;
    d["y"] = y;
    d["p"] = p;
    d["width"] = s.width;
    d["height"] = s.height;
    d["t_start"] = s.t_start;
    d["t_end"] = s.t_end;
    return d;
}

std::vector<events::IntensityFrame> frames_from_array(const DArray& stack) {
    if (stack.ndim() != 3) throw std::invalid_argument("frames must be [K,H,W]");
    const int K = static_cast<int>(stack.shape(0));
    const int H = static_cast<int>(stack.shape(1));
    const int W = static_cast<int>(stack.shape(2));
    std::vector<events::IntensityFrame> frames(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        frames[static_cast<size_t>(k)].data = Tensor({H, W});
        std::copy(stack.data() + static_cast<int64_t>(k) * H * W,
                  stack.data() + static_cast<int64_t>(k + 1) * H * W,
                  frames[static_cast<size_t>(k)].data.data());
    }
    return frames;
}

}  // namespace

PYBIND11_MODULE(_sted, m) {
    m.doc() = "stereo event-intensity deblurring core";

    m.def(
        "voxelize",
        [](const py::array_t<uint64_t>& t, const py::array_t<int64_t>& x,
           const py::array_t<int64_t>& y, const py::array_t<int64_t>& p, int width, int height,
           uint64_t t_start, uint64_t t_end, int bins) {
            events::EventStream s =
                stream_from_arrays(t, x, y, p, width, height, t_start, t_end);
            return to_array(events::voxelize(s, bins).data);
        },
        py::arg("t"), py::arg("x"), py::arg("y"), py::arg("p"), py::arg("width"),
        py::arg("height"), py::arg("t_start"), py::arg("t_end"), py::arg("bins") = 6,
        "Bin events into a signed [bins,H,W] grid with temporal bilinear weights.");

    m.def(
        "simulate_events",
        [](const DArray& frames, const std::vector<uint64_t>& timestamps, double threshold,
           double log_eps, uint64_t refractory_us) {
            events::EventSimConfig cfg;
            cfg.threshold_c = threshold;
            cfg.log_eps = log_eps;
            cfg.refractory_us = refractory_us;
            return stream_to_dict(events::simulate_events(frames_from_array(frames), timestamps,
                                                          cfg));
        },
        py::arg("frames"), py::arg("timestamps"), py::arg("threshold") = 0.15,
        py::arg("log_eps") = 1e-3, py::arg("refractory_us") = 0,
        "Threshold-crossing event simulation over a [K,H,W] frame stack.");

    m.def(
        "synthesize_blur",
        [](const DArray& frames) {
            return to_array(events::synthesize_blur(frames_from_array(frames)).data);
        },
        py::arg("frames"), "Pixel-wise mean over a [K,H,W] stack.");

    m.def(
        "edi_deblur",
        [](const DArray& blurry, const py::array_t<uint64_t>& t, const py::array_t<int64_t>& x,
           const py::array_t<int64_t>& y, const py::array_t<int64_t>& p, uint64_t t_start,
           uint64_t t_end, double c, int m_frames) {
            events::IntensityFrame b;
            b.data = to_tensor(blurry);
            events::EventStream s = stream_from_arrays(
                t, x, y, p, b.data.dim(1), b.data.dim(0), t_start, t_end);
            auto frames = events::edi_deblur(b, s, c, m_frames);
            py::list out;
            for (const auto& f : frames) out.append(to_array(f.data));
            return out;
        },
        py::arg("blurry"), py::arg("t"), py::arg("x"), py::arg("y"), py::arg("p"),
        py::arg("t_start"), py::arg("t_end"), py::arg("c"), py::arg("m") = 7,
        "Classical double-integral reconstruction of m latent frames.");

    m.def(
        "backward_warp",
        [](const DArray& src, const DArray& disp) {
            geometry::ImageTensor img;
            img.role = geometry::ImageRole::feature;
            img.data = to_tensor(src);
            geometry::DisparityMap d;
            d.data = to_tensor(disp);
            return to_array(geometry::backward_warp(img, d).data);
        },
        py::arg("src"), py::arg("disp"),
        "Horizontal bilinear backward warp of [C,H,W] by an [H,W] disparity.");

    m.def(
        "pixel_unshuffle",
        [](const DArray& t, int r) {
            geometry::ImageTensor img;
            img.role = geometry::ImageRole::feature;
            img.data = to_tensor(t);
            return to_array(geometry::pixel_unshuffle(img, r).data);
        },
        py::arg("t"), py::arg("r"));

    m.def(
        "pixel_shuffle",
        [](const DArray& t, int r) {
            geometry::ImageTensor img;
            img.role = geometry::ImageRole::feature;
            img.data = to_tensor(t);
            return to_array(geometry::pixel_shuffle(img, r).data);
        },
        py::arg("t"), py::arg("r"));

    m.def(
        "psnr",
        [](const DArray& a, const DArray& b, double peak) {
            return metrics::psnr(to_tensor(a), to_tensor(b), peak);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def(
        "ssim",
        [](const DArray& a, const DArray& b, double peak) {
            return metrics::ssim(to_tensor(a), to_tensor(b), peak);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def(
        "epe",
        [](const DArray& pred, const DArray& gt) {
            return metrics::epe(to_tensor(pred), to_tensor(gt));
        },
        py::arg("pred"), py::arg("gt"));
    m.def(
        "bad_pixel_ratio",
        [](const DArray& pred, const DArray& gt, double tau) {
            return metrics::bad_pixel_ratio(to_tensor(pred), to_tensor(gt), tau);
        },
        py::arg("pred"), py::arg("gt"), py::arg("tau"));

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, int samples, int height, int width, int layers,
           uint64_t seed, double threshold, int frames, int channels, double max_disp) {
            Rng seeder(seed);
            events::EventSimConfig sim;
            sim.threshold_c = threshold;
            std::vector<synth::Sample> all;
            for (int i = 0; i < samples; ++i) {
                Rng rng(seeder.derive(i + 1));
                synth::SceneSpec spec =
                    synth::random_scene(rng, height, width, layers, max_disp, channels);
                synth::Sample s = synth::make_sample(spec, sim, frames);
                char id[16];
                std::snprintf(id, sizeof(id), "%04d", i);
                s.id = id;
                all.push_back(std::move(s));
            }
            synth::write_dataset(all, out_dir);
            return samples;
        },
        py::arg("out_dir"), py::arg("samples") = 8, py::arg("height") = 64, py::arg("width") = 64,
        py::arg("layers") = 2, py::arg("seed") = 0, py::arg("threshold") = 0.15,
        py::arg("frames") = 7, py::arg("channels") = 3, py::arg("max_disp") = 24,
        "Render a synthetic dataset with exact ground truth to a directory.");

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& out_dir, const std::string& config) {
            train::TrainConfig cfg;
            if (!config.empty())
                cfg = train::TrainConfig::from_json(nlohmann::json::parse(config));
            auto data = synth::read_dataset(data_dir, false);
            train::Model model(cfg);
            train::TrainResult res = train::train_loop(model, data, out_dir);
            py::list losses;
            for (const auto& st : res.steps) losses.append(st.total);
            return losses;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = "",
        "Train on a dataset directory; returns the per-step losses.");

    m.def(
        "evaluate",
        [](const std::string& data_dir, const std::string& ckpt) {
            auto data = synth::read_dataset(data_dir);
            const serialize::Checkpoint ck = serialize::load_checkpoint(ckpt);
            train::TrainConfig cfg =
                train::TrainConfig::from_json(nlohmann::json::parse(ck.extra.at("config")));
            train::Model model(cfg);
            model.load(ckpt);
            train::Report rep =
                train::evaluate(data, train::model_predictor(model), cfg.config_hash());
            py::dict d;
            d["psnr_mid"] = rep.psnr_mid;
            d["ssim_mid"] = rep.ssim_mid;
            d["psnr_seq"] = rep.psnr_seq;
            d["ssim_seq"] = rep.ssim_seq;
            d["epe"] = rep.epe;
            d["bad1"] = rep.bad1;
            d["bad3"] = rep.bad3;
            d["bad5"] = rep.bad5;
            d["n_samples"] = rep.samples.size();
            return d;
        },
        py::arg("data_dir"), py::arg("ckpt"),
        "Evaluate a checkpoint over a dataset; returns aggregate metrics.");

    m.attr("__version__") = "0.1.0";
}
