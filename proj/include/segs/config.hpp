// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/perturb.hpp"
#include "segs/uncertainty.hpp"

#include "json.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace segs {

enum class PerturbStrategy { None, RandomAll, GradientAware, UncertaintyAware };
enum class PerturbMode { InPlace, Copy };

/// Every knob of the training loops. Defaults follow the reference schedule
/// (M = 24, S = 3, perturb every 500 iterations, lambda 0.2, gamma 1).
struct TrainConfig {
    // Losses.
    double lambda = 0.2;
    double gamma = 1.0;
    bool reg_stop_grad_delta = false;

    // Pseudo views and buffers.
    std::int64_t num_buffers = 24;
    std::int64_t buffer_size = 3;
    std::int64_t buffer_push_interval = 100;
    double beta_min = 0.3;
    double beta_max = 0.7;
    std::int64_t pseudo_resample_interval = 0;  // 0: never

    // Uncertainty-aware perturbation.
    std::string perturb_strategy = "uncertainty";  // none | random | gradient | uncertainty
    std::string perturb_mode = "in_place";         // in_place | copy
    std::int64_t perturb_interval = 500;
    double omega_start = 0.08;
    double omega_end = 0.02;
    std::string decay_shape = "log_linear";  // log_linear | linear
    bool perturb_positions = true;
    bool perturb_rotations = true;
    bool perturb_scales = true;
    bool perturb_opacities = true;
    double ratio_r = 0.05;
    double theta_min = 0.01;
    std::int64_t kernel_k = 5;
    std::string flag_aggregation = "or";  // or | and

    // Schedule.
    std::int64_t total_iters = 10000;
    std::int64_t eval_interval = 100;

    // Optimizer.
    double lr_position_init = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_rotation = 0.001;
    double lr_scale = 0.005;
    double lr_opacity = 0.05;
    double lr_sh_dc = 0.0025;
    double lr_sh_rest = 0.000125;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    // Density control.
    bool densify_enabled = true;
    double densify_grad_threshold = 2e-4;
    std::int64_t densify_interval = 100;
    std::int64_t densify_from_iter = 500;
    double densify_until_frac = 0.6;
    double split_factor = 1.6;
    double prune_opacity = 0.005;
    double percent_dense = 0.01;

    // Co-pruning.
    bool co_prune_enabled = true;
    double co_prune_threshold = 0.0;  // <= 0: twice the median NN spacing at init

    double background_r = 0.0;
    double background_g = 0.0;
    double background_b = 0.0;

    std::uint64_t seed = 0;

    PerturbStrategy strategy() const {
        if (perturb_strategy == "none") return PerturbStrategy::None;
        if (perturb_strategy == "random") return PerturbStrategy::RandomAll;
        if (perturb_strategy == "gradient") return PerturbStrategy::GradientAware;
        if (perturb_strategy == "uncertainty") return PerturbStrategy::UncertaintyAware;
        throw ConfigError("perturb_strategy must be none|random|gradient|uncertainty");
    }
    PerturbMode mode() const {
        if (perturb_mode == "in_place") return PerturbMode::InPlace;
        if (perturb_mode == "copy") return PerturbMode::Copy;
        throw ConfigError("perturb_mode must be in_place|copy");
    }
    FlagAggregation aggregation() const {
        if (flag_aggregation == "or") return FlagAggregation::Any;
        if (flag_aggregation == "and") return FlagAggregation::All;
        throw ConfigError("flag_aggregation must be or|and");
    }
    NoiseSchedule noise_schedule() const {
        NoiseSchedule s;
        s.omega_start = omega_start;
        s.omega_end = omega_end;
        s.total_iters = total_iters;
        if (decay_shape == "log_linear") s.shape = DecayShape::LogLinear;
        else if (decay_shape == "linear") s.shape = DecayShape::Linear;
        else throw ConfigError("decay_shape must be log_linear|linear");
        s.positions = perturb_positions;
        s.rotations = perturb_rotations;
        s.scales = perturb_scales;
        s.opacities = perturb_opacities;
        return s;
    }
    Vec3 background() const { return {background_r, background_g, background_b}; }

    void validate() const {
        const auto need = [](bool ok, const char* msg) {
            if (!ok) throw ConfigError(msg);
        };
        need(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0,1]");
        need(gamma >= 0.0, "gamma must be non-negative");
        need(ratio_r > 0.0 && ratio_r <= 1.0, "ratio_r must lie in (0,1]");
        need(buffer_size >= 2, "buffer_size must be >= 2");
        need(kernel_k >= 1 && kernel_k % 2 == 1, "kernel_k must be odd");
        need(num_buffers >= 1, "num_buffers must be >= 1");
        need(perturb_interval >= 1, "perturb_interval must be >= 1");
        need(buffer_push_interval >= 1, "buffer_push_interval must be >= 1");
        need(total_iters >= 1, "total_iters must be >= 1");
        need(eval_interval >= 1, "eval_interval must be >= 1");
        need(theta_min >= 0.0, "theta_min must be non-negative");
        need(beta_min >= 0.0 && beta_max <= 1.0 && beta_min <= beta_max,
             "beta range must lie in [0,1]");
        need(densify_interval >= 1, "densify_interval must be >= 1");
        need(split_factor > 1.0, "split_factor must exceed 1");
        need(densify_until_frac >= 0.0 && densify_until_frac <= 1.0,
             "densify_until_frac must lie in [0,1]");
        need(pseudo_resample_interval >= 0, "pseudo_resample_interval must be >= 0");
        need(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
             "adam betas must lie in [0,1)");
        for (double v : {background_r, background_g, background_b})
            need(v >= 0.0 && v <= 1.0, "background must lie in [0,1]");
        strategy();
        mode();
        aggregation();
        noise_schedule().validate();
    }
};

namespace detail {

struct ConfigField {
    const char* name;
    std::function<void(TrainConfig&, const nlohmann::json&)> read;
    std::function<void(const TrainConfig&, nlohmann::json&)> write;
};

template <typename T>
ConfigField field(const char* name, T TrainConfig::*member) {
    return {name,
            [member, name](TrainConfig& c, const nlohmann::json& j) {
                try {
                    if constexpr (std::is_same_v<T, bool>) {
                        if (!j.is_boolean()) throw ConfigError("");
                    } else if constexpr (std::is_same_v<T, std::string>) {
                        if (!j.is_string()) throw ConfigError("");
                    } else if constexpr (std::is_integral_v<T>) {
                        if (!j.is_number_integer()) throw ConfigError("");
                    } else {
                        if (!j.is_number()) throw ConfigError("");
                    }
                    c.*member = j.get<T>();
                } catch (const std::exception&) {
                    throw ConfigError(std::string("config key '") + name + "' has the wrong type");
                }
            },
            [member, name](const TrainConfig& c, nlohmann::json& j) { j[name] = c.*member; }};
}

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        field("lambda", &TrainConfig::lambda),
        field("gamma", &TrainConfig::gamma),
        field("reg_stop_grad_delta", &TrainConfig::reg_stop_grad_delta),
        field("num_buffers", &TrainConfig::num_buffers),
        field("buffer_size", &TrainConfig::buffer_size),
        field("buffer_push_interval", &TrainConfig::buffer_push_interval),
        field("beta_min", &TrainConfig::beta_min),
        field("beta_max", &TrainConfig::beta_max),
        field("pseudo_resample_interval", &TrainConfig::pseudo_resample_interval),
        field("perturb_strategy", &TrainConfig::perturb_strategy),
        field("perturb_mode", &TrainConfig::perturb_mode),
        field("perturb_interval", &TrainConfig::perturb_interval),
        field("omega_start", &TrainConfig::omega_start),
        field("omega_end", &TrainConfig::omega_end),
        field("decay_shape", &TrainConfig::decay_shape),
        field("perturb_positions", &TrainConfig::perturb_positions),
        field("perturb_rotations", &TrainConfig::perturb_rotations),
        field("perturb_scales", &TrainConfig::perturb_scales),
        field("perturb_opacities", &TrainConfig::perturb_opacities),
        field("ratio_r", &TrainConfig::ratio_r),
        field("theta_min", &TrainConfig::theta_min),
        field("kernel_k", &TrainConfig::kernel_k),
        field("flag_aggregation", &TrainConfig::flag_aggregation),
        field("total_iters", &TrainConfig::total_iters),
        field("eval_interval", &TrainConfig::eval_interval),
        field("lr_position_init", &TrainConfig::lr_position_init),
        field("lr_position_final", &TrainConfig::lr_position_final),
        field("lr_rotation", &TrainConfig::lr_rotation),
        field("lr_scale", &TrainConfig::lr_scale),
        field("lr_opacity", &TrainConfig::lr_opacity),
        field("lr_sh_dc", &TrainConfig::lr_sh_dc),
        field("lr_sh_rest", &TrainConfig::lr_sh_rest),
        field("adam_beta1", &TrainConfig::adam_beta1),
        field("adam_beta2", &TrainConfig::adam_beta2),
        field("adam_eps", &TrainConfig::adam_eps),
        field("densify_enabled", &TrainConfig::densify_enabled),
        field("densify_grad_threshold", &TrainConfig::densify_grad_threshold),
        field("densify_interval", &TrainConfig::densify_interval),
        field("densify_from_iter", &TrainConfig::densify_from_iter),
        field("densify_until_frac", &TrainConfig::densify_until_frac),
        field("split_factor", &TrainConfig::split_factor),
        field("prune_opacity", &TrainConfig::prune_opacity),
        field("percent_dense", &TrainConfig::percent_dense),
        field("co_prune_enabled", &TrainConfig::co_prune_enabled),
        field("co_prune_threshold", &TrainConfig::co_prune_threshold),
        field("background_r", &TrainConfig::background_r),
        field("background_g", &TrainConfig::background_g),
        field("background_b", &TrainConfig::background_b),
        field("seed", &TrainConfig::seed),
    };
    return fields;
}

}  // namespace detail

/// Flat JSON object; keys must be TrainConfig field names, missing keys keep defaults.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
    if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
    const auto& fields = detail::config_fields();
    for (const auto& [key, value] : j.items()) {
        const auto it = std::find_if(fields.begin(), fields.end(),
                                     [&](const detail::ConfigField& f) { return key == f.name; });
        if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
        it->read(base, value);
    }
    base.validate();
    return base;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : detail::config_fields()) f.write(c, j);
    return j;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// FNV-1a over the canonical JSON dump; used to tag evaluation reports.
inline std::uint64_t config_hash(const TrainConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace segs
