#include "sted/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sted/errors.hpp"
#include "sted/metrics.hpp"

namespace fs = std::filesystem;

namespace sted::train {

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["lr0"] = lr0;
    j["dispnet_lr_mult"] = dispnet_lr_mult;
    j["decay_factor"] = decay_factor;
    j["decay_every"] = decay_every;
    j["decay_start"] = decay_start;
    j["max_epochs"] = max_epochs;
    j["batch"] = batch;
    j["crop"] = crop;
    j["seed"] = seed;
    j["voxel_bins"] = voxel_bins;
    j["normalize_voxel"] = normalize_voxel;
    j["tv_on_bde"] = tv_on_bde;
    if (max_steps) j["max_steps"] = *max_steps;
    j["use_dispnet"] = flags.use_dispnet;
    j["use_dual_path"] = flags.use_dual_path;
    j["use_bde"] = flags.use_bde;
    j["use_aff"] = flags.use_aff;
    j["dispnet"]["widths"] = dispnet.widths;
    j["dispnet"]["max_disparity"] = dispnet.max_disparity;
    j["dblrnet"]["feature_channels"] = dblrnet.feature_channels;
    j["dblrnet"]["num_ddfe"] = dblrnet.num_ddfe;
    j["dblrnet"]["warp_groups"] = dblrnet.warp_groups;
    j["dblrnet"]["out_frames"] = dblrnet.out_frames;
    j["dblrnet"]["out_channels"] = dblrnet.out_channels;
    j["dblrnet"]["rdb_growth"] = dblrnet.rdb_growth;
    j["dblrnet"]["rdb_layers"] = dblrnet.rdb_layers;
    j["dblrnet"]["global_residual"] = dblrnet.global_residual;
    j["dblrnet"]["bde_range"] = dblrnet.bde_range;
    j["dispnet"]["clamp_leak"] = dispnet.clamp_leak;
    j["dispnet"]["zero_init_heads"] = dispnet.zero_init_heads;
    j["dispnet"]["head_bias_init"] = dispnet.head_bias_init;
    j["weights"]["lambda1"] = weights.lambda1;
    j["weights"]["lambda2"] = weights.lambda2;
    j["weights"]["lambda3"] = weights.lambda3;
    j["perceptual"]["plan"] = perceptual.plan;
    j["perceptual"]["seed"] = perceptual.seed;
    j["perceptual"]["weights_path"] = perceptual.weights_path;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr0 = j.value("lr0", c.lr0);
    c.dispnet_lr_mult = j.value("dispnet_lr_mult", c.dispnet_lr_mult);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.decay_start = j.value("decay_start", c.decay_start);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch = j.value("batch", c.batch);
    c.crop = j.value("crop", c.crop);
    c.seed = j.value("seed", c.seed);
    c.voxel_bins = j.value("voxel_bins", c.voxel_bins);
    c.normalize_voxel = j.value("normalize_voxel", c.normalize_voxel);
    c.tv_on_bde = j.value("tv_on_bde", c.tv_on_bde);
    if (j.contains("max_steps")) c.max_steps = j["max_steps"].get<int>();
    c.flags.use_dispnet = j.value("use_dispnet", true);
    c.flags.use_dual_path = j.value("use_dual_path", true);
    c.flags.use_bde = j.value("use_bde", true);
    c.flags.use_aff = j.value("use_aff", true);
    if (j.contains("dispnet")) {
        const auto& d = j["dispnet"];
        if (d.contains("widths")) c.dispnet.widths = d["widths"].get<std::array<int, 4>>();
        c.dispnet.max_disparity = d.value("max_disparity", c.dispnet.max_disparity);
        c.dispnet.clamp_leak = d.value("clamp_leak", c.dispnet.clamp_leak);
        c.dispnet.zero_init_heads = d.value("zero_init_heads", c.dispnet.zero_init_heads);
        c.dispnet.head_bias_init = d.value("head_bias_init", c.dispnet.head_bias_init);
    }
    if (j.contains("dblrnet")) {
        const auto& d = j["dblrnet"];
        c.dblrnet.feature_channels = d.value("feature_channels", c.dblrnet.feature_channels);
        c.dblrnet.num_ddfe = d.value("num_ddfe", c.dblrnet.num_ddfe);
        c.dblrnet.warp_groups = d.value("warp_groups", c.dblrnet.warp_groups);
        c.dblrnet.out_frames = d.value("out_frames", c.dblrnet.out_frames);
        c.dblrnet.out_channels = d.value("out_channels", c.dblrnet.out_channels);
        c.dblrnet.rdb_growth = d.value("rdb_growth", c.dblrnet.rdb_growth);
        c.dblrnet.rdb_layers = d.value("rdb_layers", c.dblrnet.rdb_layers);
        c.dblrnet.global_residual = d.value("global_residual", c.dblrnet.global_residual);
        c.dblrnet.bde_range = d.value("bde_range", c.dblrnet.bde_range);
    }
    if (j.contains("weights")) {
        const auto& w = j["weights"];
        c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
        c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
        c.weights.lambda3 = w.value("lambda3", c.weights.lambda3);
    }
    if (j.contains("perceptual")) {
        const auto& p = j["perceptual"];
        if (p.contains("plan")) c.perceptual.plan = p["plan"].get<std::vector<int>>();
        c.perceptual.seed = p.value("seed", c.perceptual.seed);
        c.perceptual.weights_path = p.value("weights_path", c.perceptual.weights_path);
    }
    return c;
}

std::string TrainConfig::config_hash() const { return serialize::fnv1a_hex(to_json().dump()); }

real lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < cfg.decay_start) return cfg.lr0;
    const int halvings = (epoch - cfg.decay_start) / cfg.decay_every + 1;
    return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<real>(halvings));
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

Model::Model(const TrainConfig& cfg_in) : cfg(cfg_in) {
    cfg.dispnet.voxel_bins = cfg.voxel_bins;
    cfg.dispnet.image_channels = cfg.dblrnet.out_channels;
    cfg.dblrnet.voxel_bins = cfg.voxel_bins;
    cfg.dblrnet.dual_path = cfg.flags.use_dual_path;
    cfg.dblrnet.use_bde = cfg.flags.use_bde;
    cfg.dblrnet.use_aff = cfg.flags.use_aff;
    cfg.perceptual.in_channels = cfg.dblrnet.out_channels;

    Rng rng(cfg.seed ^ 0x5eed5eed5eed5eedull);
    if (cfg.flags.use_dispnet) {
        disp = dispnet::DispNet(rng, cfg.dispnet);
        disp.collect(params, "dispnet");
    }
    dblr = dblrnet::DblrNet(rng, cfg.dblrnet);
    dblr.collect(params, "dblrnet");
    perc = losses::PerceptualExtractor(cfg.perceptual);
}

void Model::save(const std::string& base) const {
    serialize::save_checkpoint(base, params, cfg.config_hash(),
                               {{"config", cfg.to_json().dump()}});
}

void Model::load(const std::string& base) {
    const serialize::Checkpoint ck = serialize::load_checkpoint(base);
    serialize::assign_params(params, ck);
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

PipelineOut run_pipeline(const Model& model, const Var& blurry, const Var& voxel,
                         const Var* forced_disp, bool want_diag) {
    PipelineOut out;
    const int N = blurry.val().dim(0), H = blurry.val().dim(2), W = blurry.val().dim(3);
    Var aligned = voxel;
    if (forced_disp) {
        out.disparity = *forced_disp;
        aligned = warp_horizontal(voxel, out.disparity);
    } else if (model.cfg.flags.use_dispnet) {
        out.disparity = model.disp.forward(blurry, voxel, want_diag ? &out.disp_diag : nullptr);
        aligned = warp_horizontal(voxel, out.disparity);
    } else {
        out.disparity = Var(Tensor({N, 1, H, W}));  // zero disparity, identity alignment
    }
    out.frames = model.dblr.forward(blurry, aligned, want_diag ? &out.dblr_diag : nullptr,
                                    &out.stage_fields);
    return out;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

namespace {

Tensor crop3(const Tensor& t, int y0, int x0, int ch, int cw) {
    const int C = t.dim(0), W = t.dim(2);
    Tensor out({C, ch, cw});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < ch; ++y)
            std::copy(t.data() + (static_cast<int64_t>(c) * t.dim(1) + y0 + y) * W + x0,
                      t.data() + (static_cast<int64_t>(c) * t.dim(1) + y0 + y) * W + x0 + cw,
                      out.data() + (static_cast<int64_t>(c) * ch + y) * cw);
    return out;
}

void paste(Tensor& dst, int n, const Tensor& src) {
    std::copy(src.data(), src.data() + src.numel(),
              dst.data() + static_cast<int64_t>(n) * src.numel());
}

}  // namespace

Batch assemble_batch(const std::vector<const synth::Sample*>& samples, const TrainConfig& cfg,
                     Rng& rng, bool crop_enabled) {
    if (samples.empty()) throw std::invalid_argument("assemble_batch: empty batch");
    const int N = static_cast<int>(samples.size());
    const int C = samples[0]->blurry.channels();
    const int H = samples[0]->blurry.height();
    const int W = samples[0]->blurry.width();
    const int M = static_cast<int>(samples[0]->gt_frames.size());

    int ch = H, cw = W;
    if (crop_enabled && cfg.crop > 0 && (cfg.crop < H || cfg.crop < W)) {
        ch = std::min(cfg.crop, H);
        cw = std::min(cfg.crop, W);
    }
    if (ch % 8 != 0 || cw % 8 != 0)
        throw std::invalid_argument("assemble_batch: crop must be divisible by 8");

    Batch b;
    b.blurry = Tensor({N, C, ch, cw});
    b.voxel = Tensor({N, cfg.voxel_bins, ch, cw});
    b.gt_frames.assign(static_cast<size_t>(M), Tensor({N, C, ch, cw}));
    for (int n = 0; n < N; ++n) {
        const synth::Sample& s = *samples[static_cast<size_t>(n)];
        const int y0 = (H > ch) ? static_cast<int>(rng.below(H - ch + 1)) : 0;
        const int x0 = (W > cw) ? static_cast<int>(rng.below(W - cw + 1)) : 0;
        paste(b.blurry, n, crop3(s.blurry.data, y0, x0, ch, cw));
        events::VoxelGrid vg = events::voxelize(s.events, cfg.voxel_bins);
        if (cfg.normalize_voxel) {
            const real ma = tensor_max_abs(vg.data);
            if (ma > 0)
                for (int64_t i = 0; i < vg.data.numel(); ++i) vg.data[i] /= ma;
        }
        paste(b.voxel, n, crop3(vg.data, y0, x0, ch, cw));
        for (int m = 0; m < M; ++m)
            paste(b.gt_frames[static_cast<size_t>(m)], n,
                  crop3(s.gt_frames[static_cast<size_t>(m)].data, y0, x0, ch, cw));
    }
    return b;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

StepStats train_step(Model& model, Adam& adam, const Batch& batch, real lr,
                     const std::string& dump_dir) {
    Var blurry(batch.blurry);
    Var voxel(batch.voxel);
    PipelineOut out = run_pipeline(model, blurry, voxel);

    std::vector<Var> gt;
    gt.reserve(batch.gt_frames.size());
    for (const Tensor& g : batch.gt_frames) gt.emplace_back(g);

    losses::LossBreakdown lb =
        losses::total_loss(out.frames, gt, out.disparity, model.cfg.weights, model.perc);
    if (model.cfg.tv_on_bde && model.cfg.weights.lambda3 != 0 && !out.stage_fields.empty()) {
        Var tv_extra;
        for (const Var& f : out.stage_fields) {
            Var t = losses::l_tv(f);
            tv_extra = tv_extra.defined() ? add(tv_extra, t) : t;
        }
        tv_extra = scale(tv_extra, model.cfg.weights.lambda3 /
                                       static_cast<real>(out.stage_fields.size()));
        lb.tv += tv_extra.val()[0] / model.cfg.weights.lambda3;
        lb.total = add(lb.total, tv_extra);
    }

    StepStats st;
    st.total = lb.total.val()[0];
    st.dblr = lb.dblr;
    st.perc = lb.perc;
    st.tv = lb.tv;
    st.lr = lr;
    for (const Var& f : out.stage_fields) {
        real acc = 0;
        for (int64_t i = 0; i < f.val().numel(); ++i) acc += std::fabs(f.val()[i]);
        st.stage_mean_abs_disparity.push_back(acc / static_cast<real>(f.val().numel()));
    }
    if (!std::isfinite(st.total)) {
        nlohmann::json dump;
        dump["loss_total"] = st.total;
        dump["loss_dblr"] = st.dblr;
        dump["loss_perc"] = st.perc;
        dump["loss_tv"] = st.tv;
        dump["lr"] = lr;
        dump["adam_step"] = adam.t;
        if (!dump_dir.empty()) {
            fs::create_directories(dump_dir);
            std::ofstream f(fs::path(dump_dir) / "nan_dump.json");
            f << dump.dump(2) << "\n";
        }
        throw NumericError("train_step: non-finite loss: " + dump.dump());
    }

    model.params.zero_grad();
    lb.total.backward();
    const real mult = model.cfg.dispnet_lr_mult;
    st.grad_norm = adam.step(model.params, [lr, mult](const std::string& name) {
        return name.rfind("dispnet.", 0) == 0 ? lr * mult : lr;
    });
    return st;
}

TrainResult train_loop(Model& model, const std::vector<synth::Sample>& data,
                       const std::string& out_dir) {
    const TrainConfig& cfg = model.cfg;
    if (data.empty()) throw std::invalid_argument("train_loop: empty dataset");
    Rng rng(cfg.seed ^ 0x7161727a734c9bd1ull);
    Adam adam;

    std::ofstream log;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        log.open(fs::path(out_dir) / "train_log.jsonl");
        std::ofstream cf(fs::path(out_dir) / "config.json");
        cf << cfg.to_json().dump(2) << "\n";
    }

    TrainResult result;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int steps_done = 0;
    const int max_steps = cfg.max_steps.value_or(-1);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.below(static_cast<int64_t>(i)))]);
        const real lr = lr_schedule(epoch, cfg);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
            std::vector<const synth::Sample*> batch_samples;
            for (size_t k = start; k < std::min(order.size(), start + static_cast<size_t>(cfg.batch)); ++k)
                batch_samples.push_back(&data[order[k]]);
            Batch batch = assemble_batch(batch_samples, cfg, rng);
            StepStats st = train_step(model, adam, batch, lr, out_dir);
            result.steps.push_back(st);
            ++steps_done;
            if (log) {
                nlohmann::json line;
                line["step"] = steps_done;
                line["epoch"] = epoch;
                line["lr"] = st.lr;
                line["loss"] = st.total;
                line["loss_dblr"] = st.dblr;
                line["loss_perc"] = st.perc;
                line["loss_tv"] = st.tv;
                line["grad_norm"] = st.grad_norm;
                if (!st.stage_mean_abs_disparity.empty())
                    line["bde_mean_abs"] = st.stage_mean_abs_disparity;
                log << line.dump() << "\n";
            }
            if (max_steps > 0 && steps_done >= max_steps) break;
        }
        result.epochs_run = epoch + 1;
        if (max_steps > 0 && steps_done >= max_steps) break;
    }
    if (!out_dir.empty()) model.save((fs::path(out_dir) / "ckpt_final").string());
    return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

Predictor model_predictor(const Model& model) {
    return [&model](const synth::Sample& s) -> Prediction {
        const int C = s.blurry.channels(), H = s.blurry.height(), W = s.blurry.width();
        Tensor b({1, C, H, W});
        std::copy(s.blurry.data.data(), s.blurry.data.data() + s.blurry.data.numel(), b.data());
        events::VoxelGrid vg = events::voxelize(s.events, model.cfg.voxel_bins);
        if (model.cfg.normalize_voxel) {
            const real ma = tensor_max_abs(vg.data);
            if (ma > 0)
                for (int64_t i = 0; i < vg.data.numel(); ++i) vg.data[i] /= ma;
        }
        Tensor v({1, model.cfg.voxel_bins, H, W});
        std::copy(vg.data.data(), vg.data.data() + vg.data.numel(), v.data());
        PipelineOut out = run_pipeline(model, Var(std::move(b)), Var(std::move(v)));
        Prediction p;
        for (const Var& f : out.frames) {
            Tensor frame({C, H, W});
            std::copy(f.val().data(), f.val().data() + f.val().numel(), frame.data());
            // clip to the intensity range at the evaluation boundary
            for (int64_t i = 0; i < frame.numel(); ++i)
                frame[i] = std::min(real(1), std::max(real(0), frame[i]));
            p.frames.push_back(std::move(frame));
        }
        p.disparity = Tensor({H, W});
        std::copy(out.disparity.val().data(), out.disparity.val().data() + p.disparity.numel(),
                  p.disparity.data());
        return p;
    };
}

Report evaluate(const std::vector<synth::Sample>& data, const Predictor& predict,
                const std::string& config_hash) {
    Report rep;
    rep.config_hash = config_hash;
    int n_disp = 0;
    for (const synth::Sample& s : data) {
        Prediction p = predict(s);
        if (p.frames.size() != s.gt_frames.size())
            throw std::invalid_argument("evaluate: prediction frame count mismatch");
        SampleReport sr;
        sr.id = s.id;
        const size_t mid = p.frames.size() / 2;
        sr.psnr_mid = metrics::psnr(p.frames[mid], s.gt_frames[mid].data);
        sr.ssim_mid = metrics::ssim(p.frames[mid], s.gt_frames[mid].data);
        for (size_t m = 0; m < p.frames.size(); ++m) {
            sr.psnr_seq += metrics::psnr(p.frames[m], s.gt_frames[m].data);
            sr.ssim_seq += metrics::ssim(p.frames[m], s.gt_frames[m].data);
        }
        sr.psnr_seq /= static_cast<real>(p.frames.size());
        sr.ssim_seq /= static_cast<real>(p.frames.size());
        if (s.has_disparity() && p.disparity.numel() > 0) {
            const Tensor& gt = s.disparity_for_eval().data;
            sr.epe = metrics::epe(p.disparity, gt);
            sr.bad1 = metrics::bad_pixel_ratio(p.disparity, gt, 1);
            sr.bad3 = metrics::bad_pixel_ratio(p.disparity, gt, 3);
            sr.bad5 = metrics::bad_pixel_ratio(p.disparity, gt, 5);
            sr.has_disparity = true;
            ++n_disp;
        }
        rep.samples.push_back(sr);
    }
    const real n = static_cast<real>(rep.samples.size());
    for (const SampleReport& sr : rep.samples) {
        rep.psnr_mid += sr.psnr_mid / n;
        rep.ssim_mid += sr.ssim_mid / n;
        rep.psnr_seq += sr.psnr_seq / n;
        rep.ssim_seq += sr.ssim_seq / n;
        if (sr.has_disparity) {
            rep.epe += sr.epe / n_disp;
            rep.bad1 += sr.bad1 / n_disp;
            rep.bad3 += sr.bad3 / n_disp;
            rep.bad5 += sr.bad5 / n_disp;
        }
    }
    return rep;
}

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["n_samples"] = samples.size();
    j["config_hash"] = config_hash;
    j["aggregate"] = {{"psnr_mid", psnr_mid}, {"ssim_mid", ssim_mid}, {"psnr_seq", psnr_seq},
                      {"ssim_seq", ssim_seq}, {"epe", epe},           {"bad1", bad1},
                      {"bad3", bad3},         {"bad5", bad5}};
    j["metrics"] = nlohmann::json::array();
    const std::pair<const char*, real> flat[] = {
        {"psnr_mid", psnr_mid}, {"ssim_mid", ssim_mid}, {"psnr_seq", psnr_seq},
        {"ssim_seq", ssim_seq}, {"epe", epe},           {"bad1", bad1},
        {"bad3", bad3},         {"bad5", bad5}};
    for (const auto& [name, value] : flat)
        j["metrics"].push_back({{"metric", name},
                                {"value", value},
                                {"n_samples", samples.size()},
                                {"config_hash", config_hash}});
    j["samples"] = nlohmann::json::array();
    for (const SampleReport& sr : samples) {
        nlohmann::json s;
        s["id"] = sr.id;
        s["psnr_mid"] = sr.psnr_mid;
        s["ssim_mid"] = sr.ssim_mid;
        s["psnr_seq"] = sr.psnr_seq;
        s["ssim_seq"] = sr.ssim_seq;
        if (sr.has_disparity) {
            s["epe"] = sr.epe;
            s["bad1"] = sr.bad1;
            s["bad3"] = sr.bad3;
            s["bad5"] = sr.bad5;
        }
        j["samples"].push_back(s);
    }
    return j;
}

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const std::vector<synth::Sample>& data,
                                      const TrainConfig& base_cfg, int steps) {
    std::vector<AblationRow> rows;
    for (int mask = 0; mask < 16; ++mask) {
        TrainConfig cfg = base_cfg;
        cfg.flags.use_dispnet = mask & 1;
        cfg.flags.use_dual_path = mask & 2;
        cfg.flags.use_bde = mask & 4;
        cfg.flags.use_aff = mask & 8;
        cfg.max_steps = steps;
        Model model(cfg);
        TrainResult tr = train_loop(model, data);
        Report rep = evaluate(data, model_predictor(model), cfg.config_hash());
        AblationRow row;
        row.flags = cfg.flags;
        row.final_loss = tr.steps.empty() ? 0 : tr.steps.back().total;
        row.psnr_seq = rep.psnr_seq;
        row.ssim_seq = rep.ssim_seq;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = "DispNet  DP  BDE  AFF |    loss   PSNR_seq  SSIM_seq\n";
    char buf[128];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "   %c     %c    %c    %c  | %7.4f   %7.3f    %.4f\n",
                      r.flags.use_dispnet ? 'x' : ' ', r.flags.use_dual_path ? 'x' : ' ',
                      r.flags.use_bde ? 'x' : ' ', r.flags.use_aff ? 'x' : ' ', r.final_loss,
                      r.psnr_seq, r.ssim_seq);
        out += buf;
    }
    return out;
}

}  // namespace sted::train
