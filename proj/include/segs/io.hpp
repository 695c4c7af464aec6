// Copyright Contributors to the segs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "segs/core.hpp"
#include "segs/scene.hpp"
#include "segs/views.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace segs {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// PLY checkpoints: binary little-endian, one float32 vertex property per parameter.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& ply_property_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n = {"x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z",
                                      "log_scale_0", "log_scale_1", "log_scale_2", "opacity_logit"};
        for (int k = 0; k < kShFloats; ++k) n.push_back("sh_" + std::to_string(k));
        return n;
    }();
    return names;
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

// PLY order: position, rotation, scale, opacity, sh (same as flatten_params).
inline std::array<float, kParamsPerGaussian> to_floats(const Gaussian& g) {
    const auto p = flatten_params(g);
    std::array<float, kParamsPerGaussian> f{};
    for (int k = 0; k < kParamsPerGaussian; ++k) f[k] = static_cast<float>(p[k]);
    return f;
}

}  // namespace detail

/// Parameters rounded through float32, i.e. what a save/load cycle yields.
inline GaussianCloud quantize_float32(const GaussianCloud& c) {
    GaussianCloud out = c;
    for (Gaussian& g : out.gaussians) {
        auto p = flatten_params(g);
        for (double& v : p) v = static_cast<double>(static_cast<float>(v));
        unflatten_params(p, g);
    }
    return out;
}

inline void write_ply(std::ostream& os, const GaussianCloud& cloud) {
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "comment step " << cloud.step << "\n";
    os << "element vertex " << cloud.size() << "\n";
    for (const auto& n : ply_property_names()) os << "property float " << n << "\n";
    os << "end_header\n";
    for (const Gaussian& g : cloud.gaussians) {
        const auto f = detail::to_floats(g);
        os.write(reinterpret_cast<const char*>(f.data()), sizeof(float) * f.size());
    }
}

inline void save_ply(const std::string& path, const GaussianCloud& cloud) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    write_ply(os, cloud);
    if (!os) throw IoError("write failed: " + path);
}

inline GaussianCloud read_ply(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw IoError("not a PLY file");
    std::size_t count = 0;
    bool have_count = false;
    std::vector<std::string> props;
    GaussianCloud cloud;
    while (std::getline(is, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") throw IoError("unsupported PLY format " + fmt);
        } else if (kw == "element") {
            std::string name;
            ls >> name >> count;
            if (name != "vertex") throw IoError("unexpected PLY element " + name);
            have_count = true;
        } else if (kw == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float") throw IoError("PLY property " + name + " is not float");
            props.push_back(name);
        } else if (kw == "comment") {
            std::string key;
            ls >> key;
            if (key == "step") ls >> cloud.step;
        }
    }
    if (line != "end_header" || !have_count) throw IoError("truncated PLY header");
    if (props != ply_property_names()) throw IoError("PLY properties do not match the Gaussian layout");
    cloud.gaussians.resize(count);
    std::array<float, kParamsPerGaussian> f{};
    std::array<double, kParamsPerGaussian> p{};
    for (std::size_t i = 0; i < count; ++i) {
        if (!is.read(reinterpret_cast<char*>(f.data()), sizeof(float) * f.size()))
            throw IoError("truncated PLY body");
        for (int k = 0; k < kParamsPerGaussian; ++k) p[k] = f[k];
        unflatten_params(p, cloud.gaussians[i]);
    }
    return cloud;
}

inline GaussianCloud load_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    return read_ply(is);
}

// ---------------------------------------------------------------------------
// PPM images (P6, 8-bit).
// ---------------------------------------------------------------------------

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void save_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.data.size());
    std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Image load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    is >> magic >> w >> h >> maxv;
    if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) throw IoError("unsupported PPM " + path);
    is.get();
    Image img(w, h);
    std::vector<std::uint8_t> bytes(img.data.size());
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw IoError("truncated PPM " + path);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

/// Debug dump of a scalar map: grayscale PPM normalized by the map maximum,
/// plus raw float32 values (row-major) in `<stem>.f32`.
inline void dump_scalar_map(const std::string& stem, const ScalarMap& m) {
    double mx = 0.0;
    for (double v : m.data) mx = std::max(mx, v);
    Image img(m.width, m.height);
    for (std::size_t p = 0; p < m.data.size(); ++p)
        for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = mx > 0.0 ? m.data[p] / mx : 0.0;
    save_ppm(stem + ".ppm", img);
    std::ofstream os(stem + ".f32", std::ios::binary);
    if (!os) throw IoError("cannot write " + stem + ".f32");
    for (double v : m.data) {
        const float f = static_cast<float>(v);
        os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
}

// ---------------------------------------------------------------------------
// Scene files (JSON). Images are not stored; they are re-rendered on load.
// ---------------------------------------------------------------------------

inline nlohmann::json scene_to_json(const SyntheticScene& s) {
    using nlohmann::json;
    json j;
    const SceneSpec& p = s.spec;
    j["spec"] = {{"num_gaussians", p.num_gaussians}, {"num_cams", p.num_cams},
                 {"num_train", p.num_train},         {"width", p.width},
                 {"height", p.height},               {"orbit_radius", p.orbit_radius},
                 {"arc_degrees", p.arc_degrees},     {"fov_degrees", p.fov_degrees},
                 {"jitter_degrees", p.jitter_degrees},
                 {"elevation_degrees", p.elevation_degrees},
                 {"init_noise", p.init_noise},       {"random_init", p.random_init},
                 {"seed", p.seed}};
    j["cameras"] = json::array();
    for (const auto& c : s.cameras) j["cameras"].push_back(camera_to_json(c));
    j["train_indices"] = s.train_indices;
    j["heldout_indices"] = s.heldout_indices;
    j["gt_cloud"] = json::array();
    for (const Gaussian& g : s.gt_cloud.gaussians) j["gt_cloud"].push_back(flatten_params(g));
    j["init_points"] = json::array();
    for (std::size_t i = 0; i < s.init_points.size(); ++i) {
        const Vec3& x = s.init_points[i];
        const Vec3& c = s.init_colors[i];
        j["init_points"].push_back({x.x(), x.y(), x.z(), c.x(), c.y(), c.z()});
    }
    return j;
}

inline SyntheticScene scene_from_json(const nlohmann::json& j) {
    SyntheticScene s;
    try {
        const auto& p = j.at("spec");
        s.spec.num_gaussians = p.at("num_gaussians").get<int>();
        s.spec.num_cams = p.at("num_cams").get<int>();
        s.spec.num_train = p.at("num_train").get<int>();
        s.spec.width = p.at("width").get<int>();
        s.spec.height = p.at("height").get<int>();
        s.spec.orbit_radius = p.at("orbit_radius").get<double>();
        s.spec.arc_degrees = p.at("arc_degrees").get<double>();
        s.spec.fov_degrees = p.at("fov_degrees").get<double>();
        s.spec.jitter_degrees = p.at("jitter_degrees").get<double>();
        s.spec.elevation_degrees = p.at("elevation_degrees").get<double>();
        s.spec.init_noise = p.at("init_noise").get<double>();
        s.spec.random_init = p.at("random_init").get<bool>();
        s.spec.seed = p.at("seed").get<std::uint64_t>();
        for (const auto& c : j.at("cameras")) s.cameras.push_back(camera_from_json(c));
        s.train_indices = j.at("train_indices").get<std::vector<int>>();
        s.heldout_indices = j.at("heldout_indices").get<std::vector<int>>();
        for (const auto& row : j.at("gt_cloud")) {
            Gaussian g;
            unflatten_params(row.get<std::array<double, kParamsPerGaussian>>(), g);
            s.gt_cloud.gaussians.push_back(g);
        }
        for (const auto& row : j.at("init_points")) {
            const auto v = row.get<std::array<double, 6>>();
            s.init_points.emplace_back(v[0], v[1], v[2]);
            s.init_colors.emplace_back(v[3], v[4], v[5]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scene file: ") + e.what());
    }
    const int nc = static_cast<int>(s.cameras.size());
    if (nc == 0) throw ConfigError("scene file has no cameras");
    for (int i : s.train_indices)
        if (i < 0 || i >= nc) throw ConfigError("scene train index out of range");
    for (int i : s.heldout_indices)
        if (i < 0 || i >= nc) throw ConfigError("scene held-out index out of range");
    s.finalize();
    return s;
}

inline void save_scene(const std::string& path, const SyntheticScene& s) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << scene_to_json(s).dump(1) << "\n";
}

inline SyntheticScene load_scene(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open scene file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scene file " + path + ": " + e.what());
    }
    return scene_from_json(j);
}

}  // namespace segs
