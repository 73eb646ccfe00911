#include "sted/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sted/errors.hpp"
#include "sted/serialize.hpp"

namespace fs = std::filesystem;

namespace sted::synth {

std::atomic<int64_t> Sample::disparity_reads_{0};

void SceneSpec::validate() const {
    if (height < 8 || width < 8) throw std::invalid_argument("SceneSpec: dims too small");
    if (frames < 2 || exposure_frames < 2 || exposure_frames > frames)
        throw std::invalid_argument("SceneSpec: bad frame counts");
    if (channels != 1 && channels != 3) throw std::invalid_argument("SceneSpec: channels");
    for (const Layer& l : layers) {
        if (l.disparity < 0 || l.disparity > max_disparity)
            throw std::invalid_argument("SceneSpec: layer disparity exceeds max_disparity");
    }
}

// ---------------------------------------------------------------------------
// textures and masks
// ---------------------------------------------------------------------------

namespace {

// Band-limited wrap-around value noise plus a few geometric primitives.
// Smooth enough that photometric alignment has a wide basin, busy enough to
// trigger events everywhere.
struct LayerArt {
    int H = 0, W = 0, C = 1;
    std::vector<real> tex;  // C * H * W, texture coordinates, periodic in x
    MaskKind mask = MaskKind::full;
    real mcx = 0, mcy = 0, mrx = 0, mry = 0;  // mask geometry

    bool covered(int y, real u) const {
        switch (mask) {
            case MaskKind::full:
                return true;
            case MaskKind::rect:
                return std::fabs(u - mcx) <= mrx && std::fabs(y - mcy) <= mry;
            case MaskKind::circle: {
                const real dx = (u - mcx) / mrx, dy = (y - mcy) / mry;
                return dx * dx + dy * dy <= 1;
            }
        }
        return true;
    }

    // bilinear sample with wrap in x, clamp in y
    real sample(int c, real y, real u) const {
        real uw = std::fmod(u, static_cast<real>(W));
        if (uw < 0) uw += W;
        const int x0 = static_cast<int>(std::floor(uw));
        const real wx = uw - x0;
        const int x1 = (x0 + 1) % W;
        const int yy = std::min(H - 1, std::max(0, static_cast<int>(y)));
        const real* plane = tex.data() + static_cast<size_t>(c) * H * W;
        return (1 - wx) * plane[yy * W + x0] + wx * plane[yy * W + x1];
    }
};

LayerArt build_layer_art(const Layer& layer, const SceneSpec& spec) {
    LayerArt art;
    art.H = spec.height;
    art.W = spec.width;
    art.C = spec.channels;
    art.tex.assign(static_cast<size_t>(art.C) * art.H * art.W, real(0));
    Rng rng(layer.seed * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);

    const int H = art.H, W = art.W;
    std::vector<real> luma(static_cast<size_t>(H) * W);
    if (layer.texture == TextureKind::ramp) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                luma[static_cast<size_t>(y) * W + x] =
                    real(0.1) + real(0.8) * x / static_cast<real>(W - 1);
    } else {
        // lattice value noise, period W in x
        const int cell = 8;
        const int gw = std::max(1, W / cell), gh = H / cell + 2;
        std::vector<real> lattice(static_cast<size_t>(gw) * gh);
        for (real& v : lattice) v = rng.uniform(0.15, 0.85);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const real gy = static_cast<real>(y) / cell, gx = static_cast<real>(x) / cell;
                const int iy = static_cast<int>(gy), ix = static_cast<int>(gx) % gw;
                const real fy = gy - static_cast<int>(gy), fx = gx - static_cast<int>(gx);
                const int ix1 = (ix + 1) % gw;
                const int iy1 = std::min(gh - 1, iy + 1);
                const real v00 = lattice[static_cast<size_t>(iy) * gw + ix];
                const real v01 = lattice[static_cast<size_t>(iy) * gw + ix1];
                const real v10 = lattice[static_cast<size_t>(iy1) * gw + ix];
                const real v11 = lattice[static_cast<size_t>(iy1) * gw + ix1];
                const real sx = fx * fx * (3 - 2 * fx);  // smoothstep
                const real sy = fy * fy * (3 - 2 * fy);
                luma[static_cast<size_t>(y) * W + x] = (1 - sy) * ((1 - sx) * v00 + sx * v01) +
                                                       sy * ((1 - sx) * v10 + sx * v11);
            }
        // geometric primitives for crisp event edges
        const int nprim = 4 + static_cast<int>(rng.below(4));
        for (int p = 0; p < nprim; ++p) {
            const bool disc = rng.uniform() < 0.5;
            const real cx = rng.uniform(0, W), cy = rng.uniform(0, H);
            const real rx = rng.uniform(W / 12.0, W / 5.0), ry = rng.uniform(H / 12.0, H / 5.0);
            const real v = rng.uniform() < 0.5 ? rng.uniform(0.04, 0.2) : rng.uniform(0.8, 0.96);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    // periodic distance in x
                    real dx = std::fabs(x - cx);
                    dx = std::min(dx, W - dx);
                    const real dy = y - cy;
                    const bool inside = disc ? (dx * dx / (rx * rx) + dy * dy / (ry * ry) <= 1)
                                             : (dx <= rx && std::fabs(dy) <= ry);
                    if (inside) luma[static_cast<size_t>(y) * W + x] = v;
                }
        }
    }

    for (int c = 0; c < art.C; ++c) {
        const real gain = art.C == 1 ? real(1) : rng.uniform(0.85, 1.15);
        const real bias = art.C == 1 ? real(0) : rng.uniform(-0.04, 0.04);
        real* plane = art.tex.data() + static_cast<size_t>(c) * H * W;
        for (int64_t i = 0; i < static_cast<int64_t>(luma.size()); ++i) {
            real v = real(0.5) + (luma[static_cast<size_t>(i)] - real(0.5)) * gain + bias;
            plane[i] = std::min(real(1), std::max(real(0), v));
        }
    }

    art.mask = layer.mask;
    if (layer.mask != MaskKind::full) {
        art.mcx = rng.uniform(W * 0.25, W * 0.75);
        art.mcy = rng.uniform(H * 0.25, H * 0.75);
        art.mrx = rng.uniform(W * 0.12, W * 0.3);
        art.mry = rng.uniform(H * 0.12, H * 0.3);
    }
    return art;
}

real luma_of(const real* px, int C, int64_t stride) {
    if (C == 1) return px[0];
    return real(0.299) * px[0] + real(0.587) * px[stride] + real(0.114) * px[2 * stride];
}

}  // namespace

std::vector<geometry::ImageTensor> render_scene(const SceneSpec& spec, View view) {
    spec.validate();
    const int H = spec.height, W = spec.width, C = spec.channels;
    std::vector<LayerArt> art;
    art.reserve(spec.layers.size());
    for (const Layer& l : spec.layers) art.push_back(build_layer_art(l, spec));

    std::vector<geometry::ImageTensor> out(static_cast<size_t>(spec.frames));
    for (int j = 0; j < spec.frames; ++j) {
        geometry::ImageTensor frame;
        frame.role = geometry::ImageRole::intensity;
        frame.data = Tensor({C, H, W});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                // front-most covering layer wins
                for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li) {
                    const Layer& l = spec.layers[static_cast<size_t>(li)];
                    real off = l.offset0 + l.velocity * j;
                    if (view == View::event) off -= l.disparity;
                    const real u = x - off;
                    const LayerArt& a = art[static_cast<size_t>(li)];
                    real uw = std::fmod(u, static_cast<real>(W));
                    if (uw < 0) uw += W;
                    if (!a.covered(y, uw)) continue;
                    for (int c = 0; c < C; ++c)
                        frame.data[(static_cast<int64_t>(c) * H + y) * W + x] = a.sample(c, y, u);
                    break;
                }
            }
        out[static_cast<size_t>(j)] = std::move(frame);
    }
    return out;
}

geometry::DisparityMap ground_truth_disparity(const SceneSpec& spec) {
    spec.validate();
    const int H = spec.height, W = spec.width;
    std::vector<LayerArt> art;
    for (const Layer& l : spec.layers) art.push_back(build_layer_art(l, spec));
    geometry::DisparityMap d;
    d.data = Tensor({H, W});
    const int jmid = (spec.exposure_frames - 1) / 2;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li) {
                const Layer& l = spec.layers[static_cast<size_t>(li)];
                const real off = l.offset0 + l.velocity * jmid;
                real uw = std::fmod(x - off, static_cast<real>(W));
                if (uw < 0) uw += W;
                if (!art[static_cast<size_t>(li)].covered(y, uw)) continue;
                d.data[static_cast<int64_t>(y) * W + x] = l.disparity;
                break;
            }
        }
    return d;
}

Sample make_sample(const SceneSpec& spec, const events::EventSimConfig& sim_cfg, int m_frames) {
    spec.validate();
    if (m_frames < 1) throw std::invalid_argument("make_sample: m_frames must be >= 1");
    const int C = spec.channels, H = spec.height, W = spec.width;
    const int span = spec.exposure_frames;

    const auto intensity = render_scene(spec, View::intensity);
    const auto event_view = render_scene(spec, View::event);

    std::vector<uint64_t> ts(static_cast<size_t>(span));
    for (int j = 0; j < span; ++j) ts[static_cast<size_t>(j)] = spec.frame_dt_us * j;

    Sample s;
    // blur: per-channel mean over the exposure stack
    s.blurry.role = geometry::ImageRole::intensity;
    s.blurry.data = Tensor({C, H, W});
    for (int c = 0; c < C; ++c) {
        std::vector<events::IntensityFrame> chan(static_cast<size_t>(span));
        for (int j = 0; j < span; ++j) {
            chan[static_cast<size_t>(j)].data = Tensor({H, W});
            std::copy(intensity[static_cast<size_t>(j)].data.data() + static_cast<int64_t>(c) * H * W,
                      intensity[static_cast<size_t>(j)].data.data() + static_cast<int64_t>(c + 1) * H * W,
                      chan[static_cast<size_t>(j)].data.data());
        }
        events::IntensityFrame b = events::synthesize_blur(chan);
        std::copy(b.data.data(), b.data.data() + b.data.numel(),
                  s.blurry.data.data() + static_cast<int64_t>(c) * H * W);
    }

    // events on the (monochrome) event view over the same window
    std::vector<events::IntensityFrame> ev_luma(static_cast<size_t>(span));
    for (int j = 0; j < span; ++j) {
        ev_luma[static_cast<size_t>(j)].data = Tensor({H, W});
        const Tensor& f = event_view[static_cast<size_t>(j)].data;
        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i)
            ev_luma[static_cast<size_t>(j)].data[i] =
                luma_of(f.data() + i, C, static_cast<int64_t>(H) * W);
    }
    s.events = events::simulate_events(ev_luma, ts, sim_cfg);

    // ground-truth frames at uniform exposure indices
    s.gt_frames.resize(static_cast<size_t>(m_frames));
    s.meta.gt_times.resize(static_cast<size_t>(m_frames));
    for (int k = 0; k < m_frames; ++k) {
        int idx = m_frames == 1 ? (span - 1) / 2
                                : static_cast<int>(std::llround(
                                      static_cast<real>(k) * (span - 1) / (m_frames - 1)));
        s.gt_frames[static_cast<size_t>(k)] = intensity[static_cast<size_t>(idx)];
        s.meta.gt_times[static_cast<size_t>(k)] = ts[static_cast<size_t>(idx)];
    }
    s.set_disparity(ground_truth_disparity(spec));
    s.meta.t_exposure_start = ts.front();
    s.meta.t_exposure_end = ts.back();
    return s;
}

SceneSpec random_scene(Rng& rng, int height, int width, int layers, real max_disp, int channels) {
    SceneSpec spec;
    spec.height = height;
    spec.width = width;
    spec.channels = channels;
    spec.max_disparity = max_disp;
    for (int i = 0; i < layers; ++i) {
        Layer l;
        l.seed = rng.next_u64();
        l.disparity = i == 0 ? rng.uniform(0, max_disp * 0.3) : rng.uniform(0, max_disp * 0.8);
        l.velocity = rng.uniform(0.30, 0.70) * (rng.uniform() < 0.5 ? -1 : 1);
        l.offset0 = rng.uniform(0, static_cast<real>(width));
        l.mask = i == 0 ? MaskKind::full
                        : (rng.uniform() < 0.5 ? MaskKind::rect : MaskKind::circle);
        spec.layers.push_back(l);
    }
    return spec;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

void write_dataset(const std::vector<Sample>& samples, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "sted-dataset-v1";
    manifest["n_samples"] = samples.size();
    nlohmann::json ids = nlohmann::json::array();
    for (const Sample& s : samples) {
        const std::string id = s.id;
        ids.push_back(id);
        const fs::path sdir = fs::path(dir) / id;
        fs::create_directories(sdir);
        geometry::write_raw((sdir / "blurry.raw").string(), s.blurry.data);
        events::write_stev((sdir / "events.stev").string(), s.events);
        for (size_t m = 0; m < s.gt_frames.size(); ++m)
            geometry::write_raw((sdir / ("gt_" + std::to_string(m) + ".raw")).string(),
                                s.gt_frames[m].data);
        if (s.has_disparity())
            geometry::write_disparity((sdir / "disp.raw").string(), s.disparity_for_eval());
        nlohmann::json meta;
        meta["id"] = id;
        meta["channels"] = s.blurry.channels();
        meta["height"] = s.blurry.height();
        meta["width"] = s.blurry.width();
        meta["m_frames"] = s.gt_frames.size();
        meta["t_exposure_start"] = s.meta.t_exposure_start;
        meta["t_exposure_end"] = s.meta.t_exposure_end;
        meta["gt_times"] = s.meta.gt_times;
        meta["config_hash"] = s.meta.config_hash;
        std::ofstream mf(sdir / "meta.json");
        mf << meta.dump(2) << "\n";
    }
    manifest["ids"] = ids;
    if (!samples.empty()) {
        manifest["height"] = samples[0].blurry.height();
        manifest["width"] = samples[0].blurry.width();
        manifest["channels"] = samples[0].blurry.channels();
        manifest["m_frames"] = samples[0].gt_frames.size();
        manifest["config_hash"] = samples[0].meta.config_hash;
    }
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

std::vector<Sample> read_dataset(const std::string& dir, bool load_disparity) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw FormatError("missing manifest: " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("format", "") != "sted-dataset-v1")
        throw FormatError("unknown dataset format in " + dir);
    std::vector<Sample> out;
    for (const auto& idj : manifest.at("ids")) {
        const std::string id = idj.get<std::string>();
        const fs::path sdir = fs::path(dir) / id;
        std::ifstream metaf(sdir / "meta.json");
        if (!metaf) throw FormatError("missing meta.json for sample " + id);
        nlohmann::json meta;
        try {
            metaf >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad meta.json for sample " + id + ": " + e.what());
        }
        Sample s;
        s.id = id;
        s.blurry.role = geometry::ImageRole::intensity;
        s.blurry.data = geometry::read_raw((sdir / "blurry.raw").string());
        s.events = events::read_stev((sdir / "events.stev").string());
        const int m = meta.at("m_frames").get<int>();
        s.gt_frames.resize(static_cast<size_t>(m));
        for (int k = 0; k < m; ++k) {
            s.gt_frames[static_cast<size_t>(k)].role = geometry::ImageRole::intensity;
            s.gt_frames[static_cast<size_t>(k)].data =
                geometry::read_raw((sdir / ("gt_" + std::to_string(k) + ".raw")).string());
        }
        if (load_disparity && fs::exists(sdir / "disp.raw"))
            s.set_disparity(geometry::read_disparity((sdir / "disp.raw").string()));
        s.meta.t_exposure_start = meta.at("t_exposure_start").get<uint64_t>();
        s.meta.t_exposure_end = meta.at("t_exposure_end").get<uint64_t>();
        s.meta.gt_times = meta.at("gt_times").get<std::vector<uint64_t>>();
        s.meta.config_hash = meta.value("config_hash", "");
        out.push_back(std::move(s));
    }
    const size_t expect = manifest.at("n_samples").get<size_t>();
    if (out.size() != expect) throw FormatError("manifest sample count mismatch in " + dir);
    return out;
}

}  // namespace sted::synth
