#include "trifusion/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "trifusion/random.hpp"
#include "trifusion/tensor_file.hpp"

namespace trifusion {

namespace {

using Vec3 = std::array<double, 3>;

constexpr double kDeg = std::numbers::pi / 180.0;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(dot(v, v));
    return {v[0] / n, v[1] / n, v[2] / n};
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int box = -1;  // -1 ground, -2 nothing
    Vec3 normal{0, 0, 1};
};

// Slab test against every box and the ground plane z = 0.
Hit cast(const SceneLayout& layout, const Vec3& o, const Vec3& d) {
    Hit hit;
    hit.box = -2;
    if (d[2] < 0.0) {
        hit.t = -o[2] / d[2];
        hit.box = -1;
    }
    for (std::size_t i = 0; i < layout.boxes.size(); ++i) {
        const Box& b = layout.boxes[i];
        const Vec3 lo{b.cx - b.sx / 2, b.cy - b.sy / 2, 0.0};
        const Vec3 hi{b.cx + b.sx / 2, b.cy + b.sy / 2, b.sz};
        double t0 = 0.0, t1 = hit.t;
        int axis = -1;
        double sign = 0.0;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (std::abs(d[a]) < 1e-12) {
                miss = o[a] < lo[a] || o[a] > hi[a];
                continue;
            }
            double ta = (lo[a] - o[a]) / d[a];
            double tb = (hi[a] - o[a]) / d[a];
            double s = -1.0;
            if (ta > tb) {
                std::swap(ta, tb);
                s = 1.0;
            }
            if (ta > t0) {
                t0 = ta;
                axis = a;
                sign = s;
            }
            t1 = std::min(t1, tb);
            miss = t0 > t1;
        }
        if (!miss && axis >= 0 && t0 < hit.t) {
            hit.t = t0;
            hit.box = static_cast<int>(i);
            hit.normal = {0, 0, 0};
            hit.normal[axis] = sign;
        }
    }
    return hit;
}

float to_channel(double v) { return static_cast<float>(std::clamp(v * 255.0, -255.0, 255.0)); }

double quantize(double v, double step) { return std::round(v / step); }

}  // namespace

SceneLayout random_layout(std::uint64_t seed, std::uint64_t index) {
    Rng rng(seed, StreamPurpose::scene_layout, index);
    SceneLayout layout;
    const auto n = rng.uniform_int(2, 5);
    for (std::uint64_t i = 0; i < n; ++i) {
        Box b{};
        const double dist = rng.uniform(5.0, 18.0);
        const double az = rng.uniform(-std::numbers::pi, std::numbers::pi);
        b.cx = dist * std::cos(az);
        b.cy = dist * std::sin(az);
        b.sx = rng.uniform(1.0, 4.0);
        b.sy = rng.uniform(1.0, 4.0);
        b.sz = rng.uniform(0.5, 3.0);
        b.reflectivity = rng.uniform(0.3, 1.0);
        b.r = rng.uniform(0.1, 0.9);
        b.g = rng.uniform(0.1, 0.9);
        b.b = rng.uniform(0.1, 0.9);
        layout.boxes.push_back(b);
    }
    return layout;
}

Tensor render_lidar(const SceneLayout& layout, std::size_t height, std::size_t width) {
    Tensor out({4, height, width});
    auto px = out.mutable_data();
    const std::size_t plane = height * width;
    const Vec3 origin{0.0, 0.0, rig::lidar_height};
    const double el_span = rig::elevation_top_deg - rig::elevation_bottom_deg;
    constexpr std::size_t n = rig::lidar_supersample;
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            double depth = 0.0, intensity = 0.0, h = 0.0, occ = 0.0;
            for (std::size_t sr = 0; sr < n; ++sr) {
                const double el = (rig::elevation_top_deg - (r + (sr + 0.5) / n) / height * el_span) * kDeg;
                for (std::size_t sc = 0; sc < n; ++sc) {
                    const double az = -std::numbers::pi + (c + (sc + 0.5) / n) / width * 2.0 * std::numbers::pi;
                    const Vec3 d{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
                    const Hit hit = cast(layout, origin, d);
                    if (hit.box == -2 || hit.t > rig::max_range) {
                        depth += 1.0;
                        continue;
                    }
                    const double z = origin[2] + hit.t * d[2];
                    const double lambert = std::abs(dot(hit.normal, d));
                    const double refl = hit.box >= 0 ? layout.boxes[hit.box].reflectivity : rig::ground_reflectivity;
                    depth += hit.t / rig::max_range;
                    intensity += refl * lambert;
                    h += (z - rig::lidar_height) / rig::height_span;
                    occ += 1.0;
                }
            }
            const double inv = 1.0 / static_cast<double>(n * n);
            const std::size_t i = r * width + c;
            px[i] = to_channel(depth * inv);
            px[plane + i] = to_channel(intensity * inv);
            px[2 * plane + i] = to_channel(h * inv);
            px[3 * plane + i] = to_channel(occ * inv);
        }
    }
    return out;
}

Tensor render_view(const SceneLayout& layout, std::size_t view, std::size_t views, std::size_t height,
                   std::size_t width) {
    Tensor out({3, height, width});
    auto px = out.mutable_data();
    const std::size_t plane = height * width;
    const double yaw = 2.0 * std::numbers::pi * static_cast<double>(view) / static_cast<double>(views);
    const Vec3 fwd{std::cos(yaw), std::sin(yaw), 0.0};
    const Vec3 right{std::sin(yaw), -std::cos(yaw), 0.0};
    const double tan_h = std::tan(rig::camera_hfov_deg / 2.0 * kDeg);
    const double tan_v = tan_h * static_cast<double>(height) / static_cast<double>(width);
    const Vec3 origin{0.0, 0.0, rig::camera_height};
    const Vec3 light = normalized({0.3, 0.5, 0.8});
    for (std::size_t r = 0; r < height; ++r) {
        const double v = 1.0 - 2.0 * (r + 0.5) / height;
        for (std::size_t c = 0; c < width; ++c) {
            const double u = 2.0 * (c + 0.5) / width - 1.0;
            const Vec3 d = normalized({fwd[0] + u * tan_h * right[0], fwd[1] + u * tan_h * right[1], v * tan_v});
            const Hit hit = cast(layout, origin, d);
            std::array<double, 3> rgb;
            if (hit.box >= 0) {
                const Box& b = layout.boxes[hit.box];
                const double shade = 0.3 + 0.7 * std::abs(dot(hit.normal, light));
                rgb = {b.r * shade, b.g * shade, b.b * shade};
            } else if (hit.box == -1) {
                const double x = origin[0] + hit.t * d[0];
                const double y = origin[1] + hit.t * d[1];
                const bool odd = (static_cast<long>(std::floor(x)) + static_cast<long>(std::floor(y))) & 1;
                const double fade = std::exp(-hit.t / rig::max_range);
                const double g = (odd ? 0.45 : 0.35) * fade + 0.5 * (1.0 - fade);
                rgb = {g, g, g};
            } else {
                rgb = {0.55 + 0.2 * v, 0.7 + 0.15 * v, 0.9};
            }
            const std::size_t i = r * width + c;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                px[ch * plane + i] = static_cast<float>(std::clamp(rgb[ch], 0.0, 1.0));
            }
        }
    }
    return out;
}

Tensor pseudo_text_embedding(const SceneLayout& layout, std::uint64_t seed, std::size_t dim) {
    std::uint64_t h = derive_seed(seed, StreamPurpose::text_embedding, layout.boxes.size());
    auto mix = [&h](double q) { h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(q))); };
    for (const Box& b : layout.boxes) {
        mix(quantize(b.cx, 0.25));
        mix(quantize(b.cy, 0.25));
        mix(quantize(b.sx, 0.1));
        mix(quantize(b.sy, 0.1));
        mix(quantize(b.sz, 0.1));
        mix(quantize(b.reflectivity, 1.0 / 16));
        mix(quantize(b.r, 1.0 / 16));
        mix(quantize(b.g, 1.0 / 16));
        mix(quantize(b.b, 1.0 / 16));
    }
    Tensor out({dim});
    auto px = out.mutable_data();
    for (std::size_t i = 0; i < dim; ++i) {
        const double u = static_cast<double>(splitmix64(h + i) >> 11) * 0x1.0p-53;
        px[i] = static_cast<float>(2.0 * u - 1.0);
    }
    return out;
}

SceneSample render_scene(const SceneLayout& layout, std::uint64_t seed, const ModelDims& dims, std::string id) {
    SceneSample s;
    s.id = std::move(id);
    s.lidar = render_lidar(layout, dims.lidar_height, dims.lidar_width);
    for (std::size_t v = 0; v < dims.views; ++v) {
        s.views.push_back(render_view(layout, v, dims.views, dims.image_height, dims.image_width));
    }
    s.text_emb = pseudo_text_embedding(layout, seed, dims.text_dim);
    return s;
}

std::vector<SceneSample> synth_scenes(std::size_t count, std::uint64_t seed, const ModelDims& dims) {
    if (count == 0) {
        throw InputError("synth_scenes: count must be at least 1");
    }
    dims.validate();
    std::vector<SceneSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "scene_%04zu", i);
        out.push_back(render_scene(random_layout(seed, i), seed, dims, id));
    }
    return out;
}

Split split_dataset(std::vector<SceneSample> samples, double train_frac, std::uint64_t seed) {
    if (samples.empty()) {
        throw InputError("split_dataset: no samples");
    }
    if (!(train_frac > 0.0 && train_frac < 1.0)) {
        throw InputError("split_dataset: train fraction must lie in (0, 1)");
    }
    Rng rng(seed, StreamPurpose::dataset_split);
    for (std::size_t i = samples.size(); i > 1; --i) {
        std::swap(samples[i - 1], samples[rng.uniform_int(0, i - 1)]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(samples.size())));
    Split split;
    split.train.assign(std::make_move_iterator(samples.begin()),
                       std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)));
    split.test.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                      std::make_move_iterator(samples.end()));
    return split;
}

void write_sample(const std::filesystem::path& path, const SceneSample& sample) {
    std::vector<NamedTensor> entries;
    entries.emplace_back("lidar", sample.lidar);
    for (std::size_t v = 0; v < sample.views.size(); ++v) {
        entries.emplace_back("view" + std::to_string(v), sample.views[v]);
    }
    entries.emplace_back("text_emb", sample.text_emb);
    write_tensors(path, entries);
}

SceneSample read_sample(const std::filesystem::path& path, std::string id) {
    auto entries = read_tensors(path);
    SceneSample s;
    s.id = std::move(id);
    s.lidar = find_tensor(entries, "lidar");
    s.text_emb = find_tensor(entries, "text_emb");
    for (std::size_t v = 0;; ++v) {
        const std::string name = "view" + std::to_string(v);
        auto it = std::find_if(entries.begin(), entries.end(), [&](const NamedTensor& e) { return e.first == name; });
        if (it == entries.end()) {
            break;
        }
        s.views.push_back(it->second);
    }
    return s;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    nlohmann::ordered_json j;
    j["format"] = "trifusion-dataset";
    j["version"] = 1;
    auto& samples = j["samples"] = nlohmann::ordered_json::array();
    for (const auto& p : manifest.train) {
        samples.push_back({{"path", p}, {"split", "train"}});
    }
    for (const auto& p : manifest.test) {
        samples.push_back({{"path", p}, {"split", "test"}});
    }
    if (manifest.text_embedding_override) {
        j["text_embedding_override"] = *manifest.text_embedding_override;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw InputError("cannot open " + path.string() + " for writing");
    }
    out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot open manifest " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what(), e.byte);
    }
    Manifest m;
    try {
        for (const auto& s : j.at("samples")) {
            const auto split = s.at("split").get<std::string>();
            auto p = s.at("path").get<std::string>();
            if (split == "train") {
                m.train.push_back(std::move(p));
            } else if (split == "test") {
                m.test.push_back(std::move(p));
            } else {
                throw InputError(path.string() + ": unknown split '" + split + "'");
            }
        }
        if (j.contains("text_embedding_override")) {
            m.text_embedding_override = j["text_embedding_override"].get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": malformed manifest: " + e.what());
    }
    return m;
}

void write_dataset(const std::filesystem::path& dir, const Split& split) {
    std::filesystem::create_directories(dir);
    Manifest m;
    for (const auto& s : split.train) {
        write_sample(dir / (s.id + ".tnsr"), s);
        m.train.push_back(s.id + ".tnsr");
    }
    for (const auto& s : split.test) {
        write_sample(dir / (s.id + ".tnsr"), s);
        m.test.push_back(s.id + ".tnsr");
    }
    write_manifest(dir / "manifest.json", m);
}

void check_sample(const SceneSample& s, const ModelDims& dims) {
    const Shape lidar{ModelDims::lidar_channels, dims.lidar_height, dims.lidar_width};
    const Shape view{ModelDims::image_channels, dims.image_height, dims.image_width};
    if (s.lidar.shape() != lidar) {
        throw DimensionError(s.id + ": LiDAR shape " + shape_string(s.lidar.shape()) + ", expected " +
                             shape_string(lidar));
    }
    if (s.views.size() != dims.views) {
        throw DimensionError(s.id + ": " + std::to_string(s.views.size()) + " views, expected " +
                             std::to_string(dims.views));
    }
    for (const auto& v : s.views) {
        if (v.shape() != view) {
            throw DimensionError(s.id + ": view shape " + shape_string(v.shape()) + ", expected " +
                                 shape_string(view));
        }
    }
    if (s.text_emb.shape() != Shape{dims.text_dim}) {
        throw DimensionError(s.id + ": text embedding shape " + shape_string(s.text_emb.shape()));
    }
    for (float x : s.lidar.data()) {
        if (!(x >= -255.0f && x <= 255.0f)) {
            throw InputError(s.id + ": LiDAR value outside [-255, 255]");
        }
    }
}

Split load_dataset(const std::filesystem::path& manifest_path, const ModelDims& dims) {
    const Manifest m = read_manifest(manifest_path);
    const auto base = manifest_path.parent_path();
    std::vector<NamedTensor> overrides;
    if (m.text_embedding_override) {
        overrides = read_tensors(base / *m.text_embedding_override);
    }
    auto load = [&](const std::vector<std::string>& paths) {
        std::vector<SceneSample> out;
        for (const auto& p : paths) {
            auto s = read_sample(base / p, std::filesystem::path(p).stem().string());
            if (m.text_embedding_override) {
                s.text_emb = find_tensor(overrides, s.id);
            }
            check_sample(s, dims);
            out.push_back(std::move(s));
        }
        return out;
    };
    return {load(m.train), load(m.test)};
}

}  // namespace trifusion
