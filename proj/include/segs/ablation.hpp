// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/config.hpp"
#include "segs/metrics.hpp"
#include "segs/scene.hpp"
#include "segs/training.hpp"

#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace segs {

enum class AblationAxis { Interval, Omega, Strategy };

inline AblationAxis parse_axis(const std::string& s) {
    if (s == "interval" || s == "perturb_interval") return AblationAxis::Interval;
    if (s == "omega") return AblationAxis::Omega;
    if (s == "strategy") return AblationAxis::Strategy;
    throw ConfigError("unknown ablation axis '" + s + "' (interval|omega|strategy)");
}

struct AblationRow {
    std::string setting;
    TrainConfig config;
    EvalReport report;
};

/// Settings swept along one axis, applied on top of `base`.
inline std::vector<std::pair<std::string, TrainConfig>> ablation_settings(const TrainConfig& base,
                                                                          AblationAxis axis) {
    std::vector<std::pair<std::string, TrainConfig>> out;
    switch (axis) {
        case AblationAxis::Interval:
            for (std::int64_t k : {100, 500, 900}) {
                TrainConfig c = base;
                c.perturb_interval = k;
                out.emplace_back("perturb_interval=" + std::to_string(k), c);
            }
            break;
        case AblationAxis::Omega:
            for (double w0 : {0.02, 0.04, 0.08, 0.16}) {
                TrainConfig c = base;
                c.omega_start = w0;
                c.omega_end = std::min(base.omega_end, w0);
                std::ostringstream name;
                name << "omega_start=" << w0;
                out.emplace_back(name.str(), c);
            }
            break;
        case AblationAxis::Strategy:
            for (const char* s : {"none", "random", "gradient", "uncertainty"}) {
                TrainConfig c = base;
                c.perturb_strategy = s;
                out.emplace_back(std::string("strategy=") + s, c);
            }
            break;
    }
    return out;
}

inline std::vector<AblationRow> run_ablation(const SyntheticScene& scene, const TrainConfig& base,
                                             AblationAxis axis) {
    std::vector<AblationRow> rows;
    for (auto& [name, cfg] : ablation_settings(base, axis)) {
        const SegsResult r = train_segs(scene, cfg);
        EvalReport rep = eval_heldout(r.pair.sigma_model, scene, RenderSettings{cfg.background()});
        rep.config_hash = config_hash(cfg);
        rows.push_back({name, cfg, std::move(rep)});
    }
    return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << "setting,mean_psnr,mean_ssim,seed,config_hash\n";
    os.precision(9);
    for (const auto& r : rows)
        os << r.setting << ',' << r.report.mean_psnr << ',' << r.report.mean_ssim << ','
           << r.report.seed << ',' << std::hex << r.report.config_hash << std::dec << '\n';
}

}  // namespace segs
