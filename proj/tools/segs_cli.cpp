// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#include "segs/segs.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

std::pair<int, int> parse_size(const std::string& s) {
    static const std::regex re(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw segs::ConfigError("--size must look like WxH, got " + s);
    return {std::stoi(m[1]), std::stoi(m[2])};
}

segs::TrainConfig config_or_default(const std::string& path) {
    return path.empty() ? segs::TrainConfig{} : segs::load_config(path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw segs::IoError("cannot write " + path);
    return os;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-ensembling Gaussian splatting on synthetic scenes"};
    app.require_subcommand(1);

    // gen-scene
    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene");
    std::string gen_out, gen_size = "64x64";
    segs::SceneSpec spec;
    gen->add_option("--out", gen_out, "scene JSON path")->required();
    gen->add_option("--seed", spec.seed, "scene seed");
    gen->add_option("--gaussians", spec.num_gaussians, "ground-truth Gaussian count");
    gen->add_option("--cams", spec.num_cams, "camera count");
    gen->add_option("--train", spec.num_train, "training views");
    gen->add_option("--size", gen_size, "image size WxH");
    gen->add_flag("--random-init", spec.random_init, "uniform random initialization points");

    // train
    auto* train = app.add_subcommand("train", "train a model on a scene");
    std::string tr_scene, tr_config, tr_mode = "segs", tr_out, tr_log;
    train->add_option("--scene", tr_scene, "scene JSON")->required();
    train->add_option("--config", tr_config, "flat JSON config");
    train->add_option("--mode", tr_mode, "segs | baseline")->check(CLI::IsMember({"segs", "baseline"}));
    train->add_option("--out", tr_out, "checkpoint PLY")->required();
    train->add_option("--log", tr_log, "metrics CSV");

    // render
    auto* rend = app.add_subcommand("render", "render a checkpoint from a scene camera");
    std::string r_ckpt, r_scene, r_out;
    int r_cam = 0;
    rend->add_option("--ckpt", r_ckpt, "checkpoint PLY")->required();
    rend->add_option("--scene", r_scene, "scene JSON providing the cameras")->required();
    rend->add_option("--cam-index", r_cam, "camera index in orbit order")->required();
    rend->add_option("--out", r_out, "output PPM")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "held-out PSNR/SSIM of a checkpoint");
    std::string e_ckpt, e_scene, e_out, e_config;
    ev->add_option("--ckpt", e_ckpt, "checkpoint PLY")->required();
    ev->add_option("--scene", e_scene, "scene JSON")->required();
    ev->add_option("--out", e_out, "report CSV")->required();
    ev->add_option("--config", e_config, "config used for training (background, hash)");

    // ablate
    auto* abl = app.add_subcommand("ablate", "sweep one axis and tabulate held-out metrics");
    std::string a_axis, a_scene, a_out, a_config;
    abl->add_option("--axis", a_axis, "interval | omega | strategy")->required();
    abl->add_option("--scene", a_scene, "scene JSON")->required();
    abl->add_option("--out", a_out, "table CSV")->required();
    abl->add_option("--config", a_config, "base config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*gen) {
            std::tie(spec.width, spec.height) = parse_size(gen_size);
            segs::save_scene(gen_out, segs::gen_scene(spec));
        } else if (*train) {
            const segs::SyntheticScene scene = segs::load_scene(tr_scene);
            const segs::TrainConfig cfg = config_or_default(tr_config);
            std::ofstream log;
            if (!tr_log.empty()) {
                log = open_out(tr_log);
                log << segs::metrics_csv_header() << '\n';
            }
            const auto on_row = [&](const segs::MetricsRow& r) {
                if (log.is_open()) log << segs::metrics_csv_line(r) << '\n';
            };
            segs::GaussianCloud model;
            if (tr_mode == "baseline") model = segs::train_baseline(scene, cfg, on_row).model;
            else model = segs::train_segs(scene, cfg, on_row).pair.sigma_model;
            segs::save_ply(tr_out, model);
        } else if (*rend) {
            const segs::SyntheticScene scene = segs::load_scene(r_scene);
            if (r_cam < 0 || r_cam >= static_cast<int>(scene.cameras.size()))
                throw segs::ConfigError("--cam-index out of range");
            const segs::GaussianCloud cloud = segs::load_ply(r_ckpt);
            segs::save_ppm(r_out, segs::render(cloud, scene.cameras[r_cam]).image);
        } else if (*ev) {
            const segs::SyntheticScene scene = segs::load_scene(e_scene);
            const segs::TrainConfig cfg = config_or_default(e_config);
            segs::EvalReport rep = segs::eval_heldout(segs::load_ply(e_ckpt), scene,
                                                      segs::RenderSettings{cfg.background()});
            rep.config_hash = segs::config_hash(cfg);
            std::ofstream os = open_out(e_out);
            os.precision(9);
            os << "view,camera_index,psnr,ssim\n";
            for (std::size_t v = 0; v < rep.psnr.size(); ++v)
                os << v << ',' << scene.heldout_indices[v] << ',' << rep.psnr[v] << ',' << rep.ssim[v]
                   << '\n';
            os << "mean,," << rep.mean_psnr << ',' << rep.mean_ssim << '\n';
            std::printf("held-out PSNR %.3f dB, SSIM %.4f (seed %llu, config %016llx)\n", rep.mean_psnr,
                        rep.mean_ssim, static_cast<unsigned long long>(rep.seed),
                        static_cast<unsigned long long>(rep.config_hash));
        } else if (*abl) {
            const segs::AblationAxis axis = segs::parse_axis(a_axis);
            const segs::SyntheticScene scene = segs::load_scene(a_scene);
            const auto rows = segs::run_ablation(scene, config_or_default(a_config), axis);
            std::ofstream os = open_out(a_out);
            segs::write_ablation_csv(os, rows);
        }
    } catch (const segs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const segs::DivergenceError& e) {
        std::cerr << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
