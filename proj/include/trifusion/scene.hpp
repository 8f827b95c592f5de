#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trifusion/models.hpp"
#include "trifusion/tensor.hpp"

namespace trifusion {

/// One multimodal observation of a box world.
struct SceneSample {
    std::string id;
    Tensor lidar;               ///< [4, H, W] in [-255, 255]
    std::vector<Tensor> views;  ///< [3, H_img, W_img] in [0, 1], camera order
    Tensor text_emb;            ///< [text_dim] in [-1, 1]
};

struct Box {
    double cx, cy;            // ground-plane centre (m), sensor at the origin
    double sx, sy, sz;        // extents (m); boxes rest on the ground
    double reflectivity;      // [0, 1]
    double r, g, b;           // albedo
};

struct SceneLayout {
    std::vector<Box> boxes;
};

// Sensor geometry shared by the LiDAR and camera renderers.
namespace rig {
inline constexpr double lidar_height = 1.8;
inline constexpr double camera_height = 1.6;
inline constexpr double max_range = 40.0;
inline constexpr double elevation_top_deg = 2.0;
inline constexpr double elevation_bottom_deg = -24.8;
/// Height channel spans [-2.5, 2.5] m around the LiDAR.
inline constexpr double height_span = 2.5;
inline constexpr double camera_hfov_deg = 60.0;
inline constexpr double ground_reflectivity = 0.2;
/// Rays per cell side; channels are averages over the n x n rays.
inline constexpr std::size_t lidar_supersample = 4;
}  // namespace rig

/// 2 to 5 boxes drawn from the scene_layout stream of (seed, index).
SceneLayout random_layout(std::uint64_t seed, std::uint64_t index);

/// LiDAR range image channels: depth (range / max_range), intensity,
/// height (relative to the sensor, / height_span) and object occupancy, each
/// scaled by 255 and clamped to [-255, 255]. Rows run from the top elevation
/// down; columns sweep azimuth from -180 to 180 degrees.
Tensor render_lidar(const SceneLayout& layout, std::size_t height, std::size_t width);

/// Pinhole camera `view` of `views`, yaw = view * 360 / views degrees.
Tensor render_view(const SceneLayout& layout, std::size_t view, std::size_t views, std::size_t height,
                   std::size_t width);

/// Hash of the quantized layout expanded to `dim` values in [-1, 1].
Tensor pseudo_text_embedding(const SceneLayout& layout, std::uint64_t seed, std::size_t dim);

SceneSample render_scene(const SceneLayout& layout, std::uint64_t seed, const ModelDims& dims, std::string id);

/// `count` scenes; scene i uses layout random_layout(seed, i).
std::vector<SceneSample> synth_scenes(std::size_t count, std::uint64_t seed, const ModelDims& dims);

struct Split {
    std::vector<SceneSample> train;
    std::vector<SceneSample> test;
};

/// Seeded shuffle then prefix split with |train| = round(train_frac * n).
Split split_dataset(std::vector<SceneSample> samples, double train_frac, std::uint64_t seed);

/// Sample files hold entries "lidar", "view0".."viewN-1" and "text_emb".
void write_sample(const std::filesystem::path& path, const SceneSample& sample);
SceneSample read_sample(const std::filesystem::path& path, std::string id);

struct Manifest {
    std::vector<std::string> train;  ///< sample paths relative to the manifest
    std::vector<std::string> test;
    /// TensorFile with one entry per sample id replacing its text_emb.
    std::optional<std::string> text_embedding_override;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Writes every sample plus manifest.json into `dir`.
void write_dataset(const std::filesystem::path& dir, const Split& split);

/// Loads a manifest and its samples, applying the text override if present.
/// Checks each sample against `dims`.
Split load_dataset(const std::filesystem::path& manifest_path, const ModelDims& dims);

/// DimensionError unless the sample matches the configured sizes.
void check_sample(const SceneSample& sample, const ModelDims& dims);

}  // namespace trifusion
