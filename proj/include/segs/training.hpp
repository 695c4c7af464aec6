// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/config.hpp"
#include "segs/core.hpp"
#include "segs/density.hpp"
#include "segs/losses.hpp"
#include "segs/metrics.hpp"
#include "segs/optimizer.hpp"
#include "segs/perturb.hpp"
#include "segs/random.hpp"
#include "segs/renderer.hpp"
#include "segs/scene.hpp"
#include "segs/uncertainty.hpp"
#include "segs/views.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace segs {

/// One line of the training log. psnr_* are NaN on iterations without evaluation.
struct MetricsRow {
    std::int64_t iter = 0;
    double loss_rgb_sigma = 0.0;
    double loss_rgb_delta = 0.0;
    double loss_reg = 0.0;
    double psnr_train = std::numeric_limits<double>::quiet_NaN();
    double psnr_heldout = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_gauss_sigma = 0;
    std::size_t n_gauss_delta = 0;
    std::size_t n_flagged = 0;
    double omega = 0.0;
};

inline const char* metrics_csv_header() {
    return "iter,loss_rgb_sigma,loss_rgb_delta,loss_reg,psnr_train,psnr_heldout,n_gauss_sigma,"
           "n_gauss_delta,n_flagged,omega";
}

inline std::string metrics_csv_line(const MetricsRow& r) {
    std::ostringstream os;
    os.precision(9);
    const auto opt = [&](double v) {
        if (std::isfinite(v)) os << v;
    };
    os << r.iter << ',' << r.loss_rgb_sigma << ',' << r.loss_rgb_delta << ',' << r.loss_reg << ',';
    opt(r.psnr_train);
    os << ',';
    opt(r.psnr_heldout);
    os << ',' << r.n_gauss_sigma << ',' << r.n_gauss_delta << ',' << r.n_flagged << ',' << r.omega;
    return os.str();
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << metrics_csv_header() << '\n';
    for (const auto& r : rows) os << metrics_csv_line(r) << '\n';
}

struct PerturbEvent {
    std::int64_t iter = 0;
    std::size_t flagged = 0;
    double omega = 0.0;
};

struct TrainLog {
    std::vector<MetricsRow> rows;
    std::vector<PerturbEvent> perturb_events;
    std::size_t perturb_skipped = 0;  // events skipped while buffers were underfull
    std::size_t nonfinite_grad_entries = 0;
    double seconds = 0.0;
};

struct ModelPair {
    GaussianCloud sigma_model;  // used for inference
    GaussianCloud delta_model;
    AdamState sigma_state;
    AdamState delta_state;
};

struct SegsResult {
    ModelPair pair;
    TrainLog log;
};

struct BaselineResult {
    GaussianCloud model;
    TrainLog log;
};

using RowCallback = std::function<void(const MetricsRow&)>;

namespace detail {

struct ModelSlot {
    GaussianCloud cloud;
    AdamState adam;
    DensityStats stats;
    std::uint64_t density_stream = 0;

    ModelSlot(GaussianCloud c, std::uint64_t stream)
        : cloud(std::move(c)), adam(cloud.size()), stats(cloud.size()), density_stream(stream) {}
};

inline AdamHyper make_hyper(const TrainConfig& cfg, double extent, std::int64_t iter) {
    AdamHyper hp;
    hp.lr[static_cast<int>(ParamGroup::Position)] =
        exp_decay_lr(cfg.lr_position_init * extent, cfg.lr_position_final * extent, iter,
                     cfg.total_iters);
    hp.lr[static_cast<int>(ParamGroup::Rotation)] = cfg.lr_rotation;
    hp.lr[static_cast<int>(ParamGroup::Scale)] = cfg.lr_scale;
    hp.lr[static_cast<int>(ParamGroup::Opacity)] = cfg.lr_opacity;
    hp.lr[static_cast<int>(ParamGroup::ShDc)] = cfg.lr_sh_dc;
    hp.lr[static_cast<int>(ParamGroup::ShRest)] = cfg.lr_sh_rest;
    hp.beta1 = cfg.adam_beta1;
    hp.beta2 = cfg.adam_beta2;
    hp.eps = cfg.adam_eps;
    return hp;
}

struct PhotoStep {
    double loss = 0.0;
    CloudGradients grads;
};

inline PhotoStep photometric_step(const GaussianCloud& cloud, const CameraPose& cam,
                                  const Image& gt, const TrainConfig& cfg,
                                  const RenderSettings& settings) {
    const RenderOutput out = render(cloud, cam, settings);
    const LossGrad lg = photometric_loss_grad(out.image, gt, cfg.lambda);
    return {lg.value, render_backward(cloud, cam, out, lg.d_a)};
}

inline void add_scaled(std::vector<GaussianGrad>& dst, const std::vector<GaussianGrad>& src,
                       double s) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        auto a = flatten_params(dst[i]);
        const auto b = flatten_params(src[i]);
        for (int k = 0; k < kParamsPerGaussian; ++k) a[k] += s * b[k];
        unflatten_params(a, dst[i]);
    }
}

inline bool densify_due(const TrainConfig& cfg, std::int64_t it) {
    const auto until = static_cast<std::int64_t>(cfg.densify_until_frac * cfg.total_iters);
    return cfg.densify_enabled && it > cfg.densify_from_iter && it <= until &&
           it % cfg.densify_interval == 0;
}

inline void densify(ModelSlot& m, const TrainConfig& cfg, double extent, std::int64_t it) {
    DensityParams p;
    p.grad_threshold = cfg.densify_grad_threshold;
    p.dense_scale = cfg.percent_dense * extent;
    p.split_factor = cfg.split_factor;
    p.prune_opacity = cfg.prune_opacity;
    density_control(m.cloud, m.stats, m.adam, p,
                    derive_seed(m.density_stream, {static_cast<std::uint64_t>(it)}));
}

inline std::size_t count_nonfinite(const std::vector<GaussianGrad>& g) {
    std::size_t n = 0;
    for (const auto& r : g)
        for (double v : flatten_params(r))
            if (!std::isfinite(v)) ++n;
    return n;
}

[[noreturn]] inline void diverged(std::int64_t it, const char* which, double loss, std::size_t n) {
    std::ostringstream os;
    os << "training diverged at iteration " << it << ": " << which
       << " photometric loss is " << loss << " (" << n << " Gaussians)";
    throw DivergenceError(os.str());
}

inline void check_scene(const SyntheticScene& scene, std::size_t min_views) {
    if (scene.train_cams.size() < min_views)
        throw ConfigError("training needs at least " + std::to_string(min_views) + " training views");
    if (scene.init_points.empty()) throw ConfigError("scene has no initialization points");
}

inline void maybe_eval(MetricsRow& row, const GaussianCloud& model, const SyntheticScene& scene,
                       const TrainConfig& cfg, const RenderSettings& settings) {
    if (row.iter % cfg.eval_interval != 0 && row.iter != cfg.total_iters) return;
    row.psnr_train = mean_train_psnr(model, scene, settings);
    row.psnr_heldout = scene.heldout_cams.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : eval_heldout(model, scene, settings).mean_psnr;
}

}  // namespace detail

/// Plain single-model training: photometric loss, round-robin training views.
inline BaselineResult train_baseline(const SyntheticScene& scene, const TrainConfig& cfg,
                                     const RowCallback& on_row = {}) {
    cfg.validate();
    detail::check_scene(scene, 1);
    const auto t0 = std::chrono::steady_clock::now();
    const RenderSettings settings{cfg.background()};
    const double extent = scene_extent(scene.train_cams);
    const NoiseSchedule sched = cfg.noise_schedule();
    detail::ModelSlot m(init_cloud_from_points(scene.init_points, scene.init_colors),
                        derive_seed(cfg.seed, StreamTag::DensitySigma));
    BaselineResult res;
    const std::size_t nv = scene.train_cams.size();

    for (std::int64_t it = 1; it <= cfg.total_iters; ++it) {
        const std::size_t v = static_cast<std::size_t>(it - 1) % nv;
        detail::PhotoStep s =
            detail::photometric_step(m.cloud, scene.train_cams[v], scene.train_images[v], cfg, settings);
        if (!std::isfinite(s.loss)) detail::diverged(it, "model", s.loss, m.cloud.size());
        m.stats.accumulate(s.grads, scene.spec.width, scene.spec.height);
        res.log.nonfinite_grad_entries +=
            optimizer_step(m.cloud, s.grads.grads, m.adam, detail::make_hyper(cfg, extent, it));
        m.cloud.step = it;
        if (detail::densify_due(cfg, it)) {
            detail::densify(m, cfg, extent, it);
            m.stats.reset(m.cloud.size());
        }
        MetricsRow row;
        row.iter = it;
        row.loss_rgb_sigma = s.loss;
        row.n_gauss_sigma = m.cloud.size();
        row.omega = omega_at(sched, it);
        detail::maybe_eval(row, m.cloud, scene, cfg, settings);
        if (on_row) on_row(row);
        res.log.rows.push_back(row);
    }
    res.model = std::move(m.cloud);
    res.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Self-ensembling training of the Sigma/Delta pair.
inline SegsResult train_segs(const SyntheticScene& scene, const TrainConfig& cfg,
                             const RowCallback& on_row = {}) {
    cfg.validate();
    detail::check_scene(scene, 2);
    const auto t0 = std::chrono::steady_clock::now();
    const RenderSettings settings{cfg.background()};
    const double extent = scene_extent(scene.train_cams);
    const NoiseSchedule sched = cfg.noise_schedule();
    const PerturbStrategy strategy = cfg.strategy();
    const PerturbMode mode = cfg.mode();
    const int w = scene.spec.width, h = scene.spec.height;

    const GaussianCloud init = init_cloud_from_points(scene.init_points, scene.init_colors);
    detail::ModelSlot sig(init, derive_seed(cfg.seed, StreamTag::DensitySigma));
    detail::ModelSlot del(init, derive_seed(cfg.seed, StreamTag::DensityDelta));
    const double co_threshold =
        cfg.co_prune_threshold > 0.0 ? cfg.co_prune_threshold : 2.0 * median_nn_spacing(init);

    std::mt19937_64 view_rng(derive_seed(cfg.seed, StreamTag::PseudoViews));
    std::mt19937_64 pick_rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(StreamTag::PseudoViews), 1}));
    const int m_views = static_cast<int>(cfg.num_buffers);
    const auto make_buffers = [&](const PseudoViewSet& set) {
        std::vector<RenderBuffer> b;
        for (int k = 0; k < static_cast<int>(set.size()); ++k)
            b.emplace_back(k, static_cast<std::size_t>(cfg.buffer_size));
        return b;
    };
    PseudoViewSet pseudo =
        sample_pseudo_views(scene.train_cams, m_views, view_rng, cfg.beta_min, cfg.beta_max);
    std::vector<RenderBuffer> buffers = make_buffers(pseudo);
    std::uniform_int_distribution<int> pick(0, m_views - 1);

    const bool use_reg = cfg.gamma != 0.0;
    const bool perturbing = strategy != PerturbStrategy::None;
    const bool need_buffers = strategy == PerturbStrategy::UncertaintyAware;
    std::optional<GaussianCloud> temporal;      // copy mode: perturbed sample of Delta

    SegsResult res;
    const std::size_t nv = scene.train_cams.size();

    for (std::int64_t it = 1; it <= cfg.total_iters; ++it) {
        if (cfg.pseudo_resample_interval > 0 && it > 1 &&
            (it - 1) % cfg.pseudo_resample_interval == 0) {
            pseudo = sample_pseudo_views(scene.train_cams, m_views, view_rng, cfg.beta_min,
                                         cfg.beta_max);
            buffers = make_buffers(pseudo);
        }
        MetricsRow row;
        row.iter = it;
        row.omega = omega_at(sched, it);

        // (1) photometric losses on one training view.
        const std::size_t v = static_cast<std::size_t>(it - 1) % nv;
        const CameraPose& cam = scene.train_cams[v];
        detail::PhotoStep ps = detail::photometric_step(sig.cloud, cam, scene.train_images[v], cfg, settings);
        detail::PhotoStep pd = detail::photometric_step(del.cloud, cam, scene.train_images[v], cfg, settings);
        if (!std::isfinite(ps.loss)) detail::diverged(it, "sigma-model", ps.loss, sig.cloud.size());
        if (!std::isfinite(pd.loss)) detail::diverged(it, "delta-model", pd.loss, del.cloud.size());
        row.loss_rgb_sigma = ps.loss;
        row.loss_rgb_delta = pd.loss;

        // (2) co-regularization on one pseudo view.
        if (use_reg) {
            const CameraPose& pv = pseudo.views[static_cast<std::size_t>(pick(pick_rng))];
            const GaussianCloud& other = (mode == PerturbMode::Copy && temporal) ? *temporal : del.cloud;
            const bool grad_to_delta = !cfg.reg_stop_grad_delta && &other == &del.cloud;
            const RenderOutput rs = render(sig.cloud, pv, settings);
            const RenderOutput rd = render(other, pv, settings);
            const LossGrad lr = regularization_loss_grad(rs.image, rd.image, cfg.lambda);
            row.loss_reg = lr.value;
            detail::add_scaled(ps.grads.grads, render_backward(sig.cloud, pv, rs, lr.d_a).grads, cfg.gamma);
            if (grad_to_delta)
                detail::add_scaled(pd.grads.grads, render_backward(del.cloud, pv, rd, lr.d_b).grads,
                                   cfg.gamma);
        }

        // (3) optimizer steps.
        sig.stats.accumulate(ps.grads, w, h);
        del.stats.accumulate(pd.grads, w, h);
        const AdamHyper hp = detail::make_hyper(cfg, extent, it);
        res.log.nonfinite_grad_entries += optimizer_step(sig.cloud, ps.grads.grads, sig.adam, hp);
        res.log.nonfinite_grad_entries += optimizer_step(del.cloud, pd.grads.grads, del.adam, hp);
        sig.cloud.step = del.cloud.step = it;

        // Density control and co-pruning.
        if (detail::densify_due(cfg, it)) {
            detail::densify(sig, cfg, extent, it);
            detail::densify(del, cfg, extent, it);
            if (cfg.co_prune_enabled)
                co_prune(sig.cloud, sig.adam, del.cloud, del.adam, co_threshold);
            sig.stats.reset(sig.cloud.size());
            del.stats.reset(del.cloud.size());
        }

        // Buffer pushes and perturbation of the Delta-model.
        std::vector<RenderOutput> pseudo_renders;
        const auto render_pseudo = [&] {
            pseudo_renders.clear();
            for (const CameraPose& pv : pseudo.views) pseudo_renders.push_back(render(del.cloud, pv, settings));
        };
        if (need_buffers && it % cfg.buffer_push_interval == 0) {
            render_pseudo();
            for (std::size_t k = 0; k < buffers.size(); ++k)
                push_frame(buffers[k], pseudo_renders[k].image, it);
        }
        if (perturbing && it % cfg.perturb_interval == 0) {
            std::optional<std::vector<bool>> flags;
            if (strategy == PerturbStrategy::RandomAll) {
                flags.emplace(del.cloud.size(), true);
            } else if (strategy == PerturbStrategy::GradientAware) {
                // Gradient of the current step only: photometric loss of the current
                // Delta on this iteration's training view, density-control threshold.
                const detail::PhotoStep g =
                    detail::photometric_step(del.cloud, cam, scene.train_images[v], cfg, settings);
                DensityStats now(del.cloud.size());
                now.accumulate(g.grads, w, h);
                std::vector<bool> f(del.cloud.size());
                for (std::size_t i = 0; i < f.size(); ++i)
                    f[i] = now.average(i) >= cfg.densify_grad_threshold;
                flags = std::move(f);
            } else {
                std::vector<UncertaintyMap> maps;
                for (const RenderBuffer& b : buffers) {
                    auto m = build_uncertainty_map(b, static_cast<int>(cfg.kernel_k), cfg.ratio_r,
                                                   cfg.theta_min);
                    if (!m) break;
                    maps.push_back(std::move(*m));
                }
                if (maps.size() == buffers.size()) {
                    if (pseudo_renders.size() != pseudo.size()) render_pseudo();
                    std::vector<const Coverage*> cov;
                    for (const auto& r : pseudo_renders) cov.push_back(&r.coverage);
                    flags = flag_gaussians(del.cloud.size(), maps, cov, cfg.aggregation());
                }
            }
            if (flags) {
                const std::uint64_t stream =
                    derive_seed(cfg.seed, {static_cast<std::uint64_t>(StreamTag::Perturbation),
                                           static_cast<std::uint64_t>(it)});
                GaussianCloud* target = &del.cloud;
                if (mode == PerturbMode::Copy) {
                    temporal = del.cloud;
                    target = &*temporal;
                }
                const PerturbStats st = perturb_model(*target, *flags, sched, it, stream);
                row.n_flagged = st.perturbed;
                res.log.perturb_events.push_back({it, st.perturbed, omega_at(sched, it)});
            } else {
                ++res.log.perturb_skipped;
            }
        }

        row.n_gauss_sigma = sig.cloud.size();
        row.n_gauss_delta = del.cloud.size();
        detail::maybe_eval(row, sig.cloud, scene, cfg, settings);
        if (on_row) on_row(row);
        res.log.rows.push_back(row);
    }
    res.pair.sigma_model = std::move(sig.cloud);
    res.pair.delta_model = std::move(del.cloud);
    res.pair.sigma_state = std::move(sig.adam);
    res.pair.delta_state = std::move(del.adam);
    res.log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace segs
