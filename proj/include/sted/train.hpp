#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sted/data_synth.hpp"
#include "sted/dblrnet.hpp"
#include "sted/dispnet.hpp"
#include "sted/losses.hpp"
#include "sted/serialize.hpp"

namespace sted::train {

struct AblationFlags {
    bool use_dispnet = true;
    bool use_dual_path = true;
    bool use_bde = true;
    bool use_aff = true;
};

struct TrainConfig {
    real lr0 = 1e-4;
    real dispnet_lr_mult = 1.0;  // learning-rate multiplier for the coarse stage
    real decay_factor = 0.5;
    int decay_every = 20;   // epochs
    int decay_start = 40;   // first decayed epoch
    int max_epochs = 120;
    int batch = 6;
    int crop = 256;
    uint64_t seed = 0;
    int voxel_bins = 6;
    bool normalize_voxel = true;  // per-sample max-abs scaling at the network input
    bool tv_on_bde = false;       // extend the smoothness term to the per-stage fields
    std::optional<int> max_steps; // stop after this many optimizer steps
    AblationFlags flags;

    dispnet::DispNetConfig dispnet;
    dblrnet::DblrNetConfig dblrnet;
    losses::LossWeights weights;
    losses::PerceptualConfig perceptual;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    std::string config_hash() const;
};

real lr_schedule(int epoch, const TrainConfig& cfg);

struct Model {
    TrainConfig cfg;
    dispnet::DispNet disp;
    dblrnet::DblrNet dblr;
    losses::PerceptualExtractor perc;
    ParamMap params;

    Model() = default;
    explicit Model(const TrainConfig& cfg);

    void save(const std::string& base) const;
    void load(const std::string& base);
};

struct PipelineOut {
    Var disparity;            // [N,1,H,W] (zeros when DispNet disabled)
    std::vector<Var> frames;  // M of [N,out_ch,H,W]
    std::vector<Var> stage_fields;  // per-stage [N,2L,h,w], empty when BDE off
    dispnet::DispNetDiagnostics disp_diag;
    dblrnet::DblrNetDiagnostics dblr_diag;
};

// Full differentiable pipeline: DispNet (optional) -> event alignment ->
// DblrNet. `forced_disp` overrides the estimated disparity when set.
PipelineOut run_pipeline(const Model& model, const Var& blurry, const Var& voxel,
                         const Var* forced_disp = nullptr, bool want_diag = false);

struct StepStats {
    real total = 0, dblr = 0, perc = 0, tv = 0;
    real grad_norm = 0;
    real lr = 0;
    std::vector<real> stage_mean_abs_disparity;
};

// A resolved training batch: cropped tensors ready for the graph.
struct Batch {
    Tensor blurry;                  // [N,C,H,W]
    Tensor voxel;                   // [N,bins,H,W]
    std::vector<Tensor> gt_frames;  // M of [N,C,H,W]
};

Batch assemble_batch(const std::vector<const synth::Sample*>& samples, const TrainConfig& cfg,
                     Rng& rng, bool crop_enabled = true);

// One optimizer step. Throws NumericError (after dumping diagnostics) on a
// non-finite loss.
StepStats train_step(Model& model, Adam& adam, const Batch& batch, real lr,
                     const std::string& dump_dir = {});

struct TrainResult {
    std::vector<StepStats> steps;
    int epochs_run = 0;
};

// Seeded single-threaded training loop; writes JSON-line logs and
// checkpoints when out_dir is set.
TrainResult train_loop(Model& model, const std::vector<synth::Sample>& data,
                       const std::string& out_dir = {});

// ---- evaluation ----
struct Prediction {
    std::vector<Tensor> frames;  // M of [C,H,W]
    Tensor disparity;            // [H,W]
};
using Predictor = std::function<Prediction(const synth::Sample&)>;

Predictor model_predictor(const Model& model);

struct SampleReport {
    std::string id;
    real psnr_mid = 0, ssim_mid = 0;
    real psnr_seq = 0, ssim_seq = 0;
    real epe = 0, bad1 = 0, bad3 = 0, bad5 = 0;
    bool has_disparity = false;
};

struct Report {
    std::vector<SampleReport> samples;
    real psnr_mid = 0, ssim_mid = 0, psnr_seq = 0, ssim_seq = 0;
    real epe = 0, bad1 = 0, bad3 = 0, bad5 = 0;
    std::string config_hash;
    nlohmann::json to_json() const;
};

Report evaluate(const std::vector<synth::Sample>& data, const Predictor& predict,
                const std::string& config_hash = {});

// ---- ablation harness ----
struct AblationRow {
    AblationFlags flags;
    real final_loss = 0;
    real psnr_seq = 0, ssim_seq = 0;
};

// Trains a fresh model per flag combination for `steps` steps and evaluates.
std::vector<AblationRow> run_ablation(const std::vector<synth::Sample>& data,
                                      const TrainConfig& base_cfg, int steps);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace sted::train
