// Command-line front end: dataset generation, training, evaluation,
// single-sample inference and PNG rendering of results.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sted/errors.hpp"
#include "sted/png.hpp"
#include "sted/train.hpp"

namespace fs = std::filesystem;
using namespace sted;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw UsageError("size must look like 128x96");
    const int w = std::stoi(s.substr(0, x));
    const int h = std::stoi(s.substr(x + 1));
    if (w < 16 || h < 16 || w % 8 != 0 || h % 8 != 0)
        throw UsageError("size must be at least 16x16 and divisible by 8");
    return {w, h};
}

train::TrainConfig load_config(const std::string& path, const train::TrainConfig& base) {
    std::ifstream f(path);
    if (!f) throw FormatError("cannot open config: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad config json: " + std::string(e.what()));
    }
    nlohmann::json merged = base.to_json();
    merged.merge_patch(j);
    return train::TrainConfig::from_json(merged);
}

int cmd_generate(const std::string& out, int samples, const std::string& size, int layers,
                 uint64_t seed, real threshold, int frames, int channels, real max_disp,
                 int jobs) {
    auto [w, h] = parse_size(size);
    events::EventSimConfig sim;
    sim.threshold_c = threshold;

    std::vector<synth::Sample> all(static_cast<size_t>(samples));
    Rng seeder(seed);
    std::vector<uint64_t> seeds(static_cast<size_t>(samples));
    for (int i = 0; i < samples; ++i) seeds[static_cast<size_t>(i)] = seeder.derive(i + 1);

    nlohmann::json gen_cfg;
    gen_cfg["seed"] = seed;
    gen_cfg["threshold"] = threshold;
    gen_cfg["layers"] = layers;
    gen_cfg["size"] = size;
    gen_cfg["frames"] = frames;
    const std::string hash = serialize::fnv1a_hex(gen_cfg.dump());

    auto work = [&](int i) {
        Rng rng(seeds[static_cast<size_t>(i)]);
        synth::SceneSpec spec = synth::random_scene(rng, h, w, layers, max_disp, channels);
        synth::Sample s = synth::make_sample(spec, sim, frames);
        char id[16];
        std::snprintf(id, sizeof(id), "%04d", i);
        s.id = id;
        s.meta.config_hash = hash;
        all[static_cast<size_t>(i)] = std::move(s);
    };
    // sample content depends only on its seed, so fan-out keeps outputs bitwise stable
    const int nthreads = std::max(1, std::min(jobs, samples));
    if (nthreads == 1) {
        for (int i = 0; i < samples; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (int i = next++; i < samples; i = next++) work(i);
            });
        for (auto& th : pool) th.join();
    }
    synth::write_dataset(all, out);
    std::cout << "wrote " << samples << " samples to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const train::TrainConfig& cfg) {
    auto data = synth::read_dataset(data_dir, /*load_disparity=*/false);
    train::Model model(cfg);
    train::TrainResult res = train::train_loop(model, data, out_dir);
    std::cout << "trained " << res.steps.size() << " steps over " << res.epochs_run
              << " epochs; final loss "
              << (res.steps.empty() ? 0.0 : res.steps.back().total) << "\n";
    std::cout << "checkpoint: " << (fs::path(out_dir) / "ckpt_final").string() << "\n";
    return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt, const std::string& out_path,
             bool png) {
    auto data = synth::read_dataset(data_dir);
    const serialize::Checkpoint ck = serialize::load_checkpoint(ckpt);
    auto it = ck.extra.find("config");
    if (it == ck.extra.end()) throw FormatError("checkpoint carries no config");
    train::TrainConfig cfg = train::TrainConfig::from_json(nlohmann::json::parse(it->second));
    train::Model model(cfg);
    model.load(ckpt);
    train::Report rep = train::evaluate(data, train::model_predictor(model), cfg.config_hash());
    std::ofstream f(out_path);
    if (!f) throw FormatError("cannot open for write: " + out_path);
    f << rep.to_json().dump(2) << "\n";
    std::cout << "psnr_mid " << rep.psnr_mid << "  ssim_mid " << rep.ssim_mid << "  epe "
              << rep.epe << "\n";
    if (png) {
        const fs::path dir = fs::path(out_path).parent_path();
        auto predict = train::model_predictor(model);
        for (size_t i = 0; i < std::min<size_t>(data.size(), 4); ++i) {
            train::Prediction p = predict(data[i]);
            std::vector<png::Image8> tiles;
            tiles.push_back(png::from_intensity(data[i].blurry.data));
            for (const Tensor& fr : p.frames) tiles.push_back(png::from_intensity(fr));
            for (const auto& g : data[i].gt_frames) tiles.push_back(png::from_intensity(g.data));
            png::write_png((dir / ("eval_" + data[i].id + ".png")).string(),
                           png::grid(tiles, static_cast<int>(p.frames.size()) + 1));
        }
    }
    return 0;
}

int cmd_infer(const std::string& data_dir, const std::string& id, const std::string& ckpt,
              const std::string& out_dir) {
    auto data = synth::read_dataset(data_dir, /*load_disparity=*/false);
    const synth::Sample* sample = nullptr;
    for (const auto& s : data)
        if (s.id == id || id.empty()) {
            sample = &s;
            break;
        }
    if (!sample) throw UsageError("sample id not found: " + id);

    const serialize::Checkpoint ck = serialize::load_checkpoint(ckpt);
    auto it = ck.extra.find("config");
    if (it == ck.extra.end()) throw FormatError("checkpoint carries no config");
    train::TrainConfig cfg = train::TrainConfig::from_json(nlohmann::json::parse(it->second));
    train::Model model(cfg);
    model.load(ckpt);

    train::Prediction p = train::model_predictor(model)(*sample);
    fs::create_directories(out_dir);
    for (size_t m = 0; m < p.frames.size(); ++m) {
        geometry::write_raw((fs::path(out_dir) / ("frame_" + std::to_string(m) + ".raw")).string(),
                            p.frames[m]);
        png::write_png((fs::path(out_dir) / ("frame_" + std::to_string(m) + ".png")).string(),
                       png::from_intensity(p.frames[m]));
    }
    geometry::DisparityMap d;
    d.data = p.disparity;
    geometry::write_disparity((fs::path(out_dir) / "disparity.raw").string(), d);
    png::write_png((fs::path(out_dir) / "disparity.png").string(),
                   png::colormap_disparity(p.disparity));
    std::cout << "wrote " << p.frames.size() << " frames + disparity to " << out_dir << "\n";
    return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& out_path, int steps,
               const train::TrainConfig& cfg) {
    auto data = synth::read_dataset(data_dir);
    auto rows = train::run_ablation(data, cfg, steps);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"use_dispnet", r.flags.use_dispnet},
                     {"use_dual_path", r.flags.use_dual_path},
                     {"use_bde", r.flags.use_bde},
                     {"use_aff", r.flags.use_aff},
                     {"final_loss", r.final_loss},
                     {"psnr_seq", r.psnr_seq},
                     {"ssim_seq", r.ssim_seq}});
    }
    std::ofstream f(out_path);
    if (!f) throw FormatError("cannot open for write: " + out_path);
    f << j.dump(2) << "\n";
    std::cout << train::ablation_table(rows);
    return 0;
}

int cmd_plot(const std::string& log_path, const std::string& report_path,
             const std::string& sample_dir, const std::string& disp_path,
             const std::string& out_dir) {
    fs::create_directories(out_dir);
    bool did = false;
    if (!log_path.empty()) {
        std::ifstream f(log_path);
        if (!f) throw FormatError("cannot open log: " + log_path);
        std::vector<real> loss;
        std::vector<std::vector<real>> bde_series;  // one series per stage
        std::vector<real> bde_profile;              // per-stage values, last step
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("bad log line: " + std::string(e.what()));
            }
            loss.push_back(j.value("loss", 0.0));
            if (j.contains("bde_mean_abs")) {
                const auto vals = j["bde_mean_abs"].get<std::vector<real>>();
                bde_series.resize(vals.size());
                for (size_t s = 0; s < vals.size(); ++s) bde_series[s].push_back(vals[s]);
                bde_profile = vals;
            }
        }
        png::write_png((fs::path(out_dir) / "loss_curve.png").string(), png::plot_curves({loss}));
        if (!bde_series.empty()) {
            png::write_png((fs::path(out_dir) / "bde_magnitude.png").string(),
                           png::plot_curves(bde_series));
            png::write_png((fs::path(out_dir) / "bde_profile.png").string(),
                           png::plot_curves({bde_profile}));
        }
        did = true;
    }
    if (!report_path.empty()) {
        std::ifstream f(report_path);
        if (!f) throw FormatError("cannot open report: " + report_path);
        nlohmann::json rep;
        try {
            f >> rep;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad report json: " + std::string(e.what()));
        }
        std::vector<real> psnr;
        for (const auto& s : rep.at("samples")) psnr.push_back(s.value("psnr_seq", 0.0));
        png::write_png((fs::path(out_dir) / "psnr_per_sample.png").string(),
                       png::plot_curves({psnr}));
        did = true;
    }
    if (!sample_dir.empty()) {
        geometry::ImageTensor blurry;
        blurry.data = geometry::read_raw((fs::path(sample_dir) / "blurry.raw").string());
        std::vector<png::Image8> tiles = {png::from_intensity(blurry.data)};
        for (int m = 0;; ++m) {
            const fs::path p = fs::path(sample_dir) / ("gt_" + std::to_string(m) + ".raw");
            if (!fs::exists(p)) break;
            tiles.push_back(png::from_intensity(geometry::read_raw(p.string())));
        }
        png::write_png((fs::path(out_dir) / "sample_grid.png").string(),
                       png::grid(tiles, static_cast<int>(tiles.size())));
        if (fs::exists(fs::path(sample_dir) / "disp.raw")) {
            geometry::DisparityMap d =
                geometry::read_disparity((fs::path(sample_dir) / "disp.raw").string());
            png::write_png((fs::path(out_dir) / "sample_disparity.png").string(),
                           png::colormap_disparity(d.data));
        }
        did = true;
    }
    if (!disp_path.empty()) {
        geometry::DisparityMap d = geometry::read_disparity(disp_path);
        png::write_png((fs::path(out_dir) / "disparity.png").string(),
                       png::colormap_disparity(d.data));
        did = true;
    }
    if (!did) throw UsageError("plot: give at least one of --log/--report/--sample/--disparity");
    std::cout << "plots written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stereo event-intensity deblurring toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize a dataset with exact ground truth");
    std::string g_out, g_size = "64x64";
    int g_samples = 8, g_layers = 2, g_frames = 7, g_channels = 3, g_jobs = 1;
    uint64_t g_seed = 0;
    real g_threshold = 0.15, g_maxdisp = 24;
    gen->add_option("--out", g_out, "output directory")->required()->envname("STED_OUT");
    gen->add_option("--samples", g_samples)->envname("STED_SAMPLES");
    gen->add_option("--size", g_size, "WxH, divisible by 8")->envname("STED_SIZE");
    gen->add_option("--layers", g_layers)->envname("STED_LAYERS");
    gen->add_option("--seed", g_seed)->envname("STED_SEED");
    gen->add_option("--threshold", g_threshold, "event contrast threshold")
        ->envname("STED_THRESHOLD");
    gen->add_option("--frames", g_frames, "ground-truth frames per sample")
        ->envname("STED_FRAMES");
    gen->add_option("--channels", g_channels)->envname("STED_CHANNELS");
    gen->add_option("--max-disp", g_maxdisp)->envname("STED_MAX_DISP");
    gen->add_option("--jobs", g_jobs, "worker threads")->envname("STED_JOBS");

    // shared train-flavoured options
    train::TrainConfig cfg;
    std::string t_data, t_out, t_config;
    int t_steps = -1;
    auto add_train_opts = [&](CLI::App* c) {
        c->add_option("--data", t_data, "dataset directory")->required()->envname("STED_DATA");
        c->add_option("--config", t_config, "JSON config; overrides flags")
            ->envname("STED_CONFIG");
        c->add_option("--lr", cfg.lr0)->envname("STED_LR");
        c->add_option("--batch", cfg.batch)->envname("STED_BATCH");
        c->add_option("--crop", cfg.crop)->envname("STED_CROP");
        c->add_option("--seed", cfg.seed)->envname("STED_SEED");
        c->add_option("--epochs", cfg.max_epochs)->envname("STED_EPOCHS");
        c->add_option("--steps", t_steps, "stop after N optimizer steps")
            ->envname("STED_STEPS");
        c->add_option("--bins", cfg.voxel_bins)->envname("STED_BINS");
        c->add_option("--ddfe", cfg.dblrnet.num_ddfe)->envname("STED_DDFE");
        c->add_option("--channels-c", cfg.dblrnet.feature_channels)->envname("STED_CHANNELS_C");
        c->add_option("--groups", cfg.dblrnet.warp_groups)->envname("STED_GROUPS");
        c->add_option("--frames-m", cfg.dblrnet.out_frames)->envname("STED_FRAMES_M");
        c->add_option("--out-channels", cfg.dblrnet.out_channels)->envname("STED_OUT_CHANNELS");
        c->add_flag("--no-dispnet", "disable the coarse disparity stage");
        c->add_flag("--no-dual-path", "single-path concatenated baseline");
        c->add_flag("--no-bde", "disable the bidirectional disparity head");
        c->add_flag("--no-aff", "disable attention fusion");
    };
    auto finish_cfg = [&](CLI::App* c) {
        cfg.flags.use_dispnet = c->count("--no-dispnet") == 0;
        cfg.flags.use_dual_path = c->count("--no-dual-path") == 0;
        cfg.flags.use_bde = c->count("--no-bde") == 0;
        cfg.flags.use_aff = c->count("--no-aff") == 0;
        if (t_steps > 0) cfg.max_steps = t_steps;
        if (!t_config.empty()) cfg = load_config(t_config, cfg);
    };

    auto* tr = app.add_subcommand("train", "train the two-stage pipeline");
    add_train_opts(tr);
    tr->add_option("--out", t_out, "output directory")->required()->envname("STED_OUT");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint, write a JSON report");
    std::string e_ckpt, e_out = "report.json";
    bool e_png = false;
    ev->add_option("--data", t_data)->required()->envname("STED_DATA");
    ev->add_option("--ckpt", e_ckpt, "checkpoint base path")->required()->envname("STED_CKPT");
    ev->add_option("--out", e_out)->envname("STED_OUT");
    ev->add_flag("--png", e_png, "also render result grids");

    auto* inf = app.add_subcommand("infer", "run one sample end to end");
    std::string i_id;
    inf->add_option("--data", t_data)->required()->envname("STED_DATA");
    inf->add_option("--id", i_id, "sample id (defaults to the first)")->envname("STED_ID");
    inf->add_option("--ckpt", e_ckpt)->required()->envname("STED_CKPT");
    inf->add_option("--out", t_out, "output directory")->required()->envname("STED_OUT");

    auto* ab = app.add_subcommand("ablate", "train/evaluate the full module on/off grid");
    add_train_opts(ab);
    ab->add_option("--out", t_out, "output JSON table")->required()->envname("STED_OUT");
    int a_steps = 50;
    ab->add_option("--ablate-steps", a_steps, "steps per grid cell")->envname("STED_ABL_STEPS");

    auto* pl = app.add_subcommand("plot", "render PNG panels from logs/reports/samples");
    std::string p_log, p_report, p_sample, p_disp;
    pl->add_option("--log", p_log, "train_log.jsonl")->envname("STED_LOG");
    pl->add_option("--report", p_report, "eval report json")->envname("STED_REPORT");
    pl->add_option("--sample", p_sample, "sample directory")->envname("STED_SAMPLE");
    pl->add_option("--disparity", p_disp, "disparity .raw path")->envname("STED_DISPARITY");
    pl->add_option("--out", t_out, "output directory")->required()->envname("STED_OUT");

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cmd_generate(g_out, g_samples, g_size, g_layers, g_seed, g_threshold, g_frames,
                                g_channels, g_maxdisp, g_jobs);
        if (tr->parsed()) {
            finish_cfg(tr);
            return cmd_train(t_data, t_out, cfg);
        }
        if (ev->parsed()) return cmd_eval(t_data, e_ckpt, e_out, e_png);
        if (inf->parsed()) return cmd_infer(t_data, i_id, e_ckpt, t_out);
        if (ab->parsed()) {
            finish_cfg(ab);
            return cmd_ablate(t_data, t_out, a_steps, cfg);
        }
        if (pl->parsed()) return cmd_plot(p_log, p_report, p_sample, p_disp, t_out);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
