#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "sted/events.hpp"
#include "sted/geometry.hpp"
#include "sted/random.hpp"

namespace sted::synth {

enum class MaskKind { full, rect, circle };
enum class TextureKind { noise, ramp };

// One fronto-parallel plane: a wrap-around texture translating horizontally
// with constant velocity, carrying a single constant disparity. Layers are
// ordered back to front; the front-most covering layer wins per pixel.
struct Layer {
    uint64_t seed = 0;
    real disparity = 0;      // px, 0 <= d <= SceneSpec::max_disparity
    real velocity = 0;       // px per high-FPS frame
    real offset0 = 0;        // initial horizontal offset
    MaskKind mask = MaskKind::full;
    TextureKind texture = TextureKind::noise;
};

struct SceneSpec {
    std::vector<Layer> layers;
    int height = 64;
    int width = 64;
    int frames = 49;           // K high-FPS frames
    int exposure_frames = 49;  // exposure span, <= frames
    uint64_t frame_dt_us = 1000;
    int channels = 3;  // 1 or 3
    real max_disparity = 48;

    void validate() const;
};

enum class View { intensity, event };

// Composite the layers for the requested view; the event view renders each
// layer shifted left by its disparity (rectified stereo, intensity = left).
std::vector<geometry::ImageTensor> render_scene(const SceneSpec& spec, View view);

// Exact per-pixel ground truth disparity from the layer geometry at the
// mid-exposure instant.
geometry::DisparityMap ground_truth_disparity(const SceneSpec& spec);

// One training record. Ground-truth disparity is eval-only: reads go through
// disparity_for_eval(), which counts accesses so the training path can be
// audited.
struct Sample {
    std::string id;
    geometry::ImageTensor blurry;
    events::EventStream events;
    std::vector<geometry::ImageTensor> gt_frames;
    struct Meta {
        uint64_t t_exposure_start = 0;
        uint64_t t_exposure_end = 0;
        std::vector<uint64_t> gt_times;
        std::string config_hash;
    } meta;

    bool has_disparity() const { return gt_disparity_.data.numel() > 0; }
    const geometry::DisparityMap& disparity_for_eval() const {
        ++disparity_reads_;
        return gt_disparity_;
    }
    void set_disparity(geometry::DisparityMap d) { gt_disparity_ = std::move(d); }

    static int64_t disparity_access_count() { return disparity_reads_.load(); }

private:
    geometry::DisparityMap gt_disparity_;
    static std::atomic<int64_t> disparity_reads_;
};

// Blur over the exposure frames of the intensity view, events simulated on
// the event view over the same window, M ground-truth frames at uniform
// exposure indices, disparity from the layer geometry.
Sample make_sample(const SceneSpec& spec, const events::EventSimConfig& sim_cfg, int m_frames);

// Convenience: a randomized scene with `layers` planes over a full noise
// background, disparities within [0, max_disp].
SceneSpec random_scene(Rng& rng, int height, int width, int layers, real max_disp,
                       int channels = 3);

// ---- persistence ----
// <dir>/manifest.json, <dir>/<id>/{blurry.raw, events.stev, gt_<m>.raw,
// disp.raw, meta.json}; raw files are float32 row-major with dims in the
// sidecars/meta.
void write_dataset(const std::vector<Sample>& samples, const std::string& dir);
std::vector<Sample> read_dataset(const std::string& dir, bool load_disparity = true);

}  // namespace sted::synth
