#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trifusion/attacks.hpp"
#include "trifusion/metrics.hpp"
#include "trifusion/models.hpp"
#include "trifusion/scene.hpp"
#include "trifusion/training.hpp"

namespace trifusion {

struct SeedConfig {
    std::uint64_t data = 0;    ///< scene synthesis and split
    std::uint64_t init = 0;    ///< model weights
    std::uint64_t batch = 0;   ///< batch order
    std::uint64_t attack = 0;  ///< noise and PGD starts
};

struct SweepConfig {
    PerturbationKind kind = PerturbationKind::gaussian;
    std::vector<double> levels;  ///< strictly increasing
    float pgd_step = 0.01f;
    /// Use step = 2.5 * level / iters instead of the absolute pgd_step.
    bool pgd_relative_step = false;
    std::size_t pgd_iters = 40;
    bool pgd_random_start = true;
    bool clamp_to_range = false;
};

struct ExperimentConfig {
    ModelDims dims;
    std::size_t scenes = 20;
    double train_frac = 0.8;
    /// Load this dataset instead of synthesizing one. Relative to the config file.
    std::optional<std::string> manifest;
    bool train = true;
    std::size_t epochs = 50;
    std::size_t batch_size = 4;
    AdamOptions adam;
    std::string cnn_checkpoint = "cnn_ae.tnsr";
    std::string tri_checkpoint = "trifusion.tnsr";
    SweepConfig sweep;
    MetricConfig metric;
    SeedConfig seeds;
    std::string output_dir = "out";
};

/// Levels used when a config names a kind but no levels.
std::vector<double> default_levels(PerturbationKind kind);

/// Parses the JSON config text. `overrides` are "dotted.key=value" strings
/// applied before validation; values parse as JSON, falling back to a plain
/// string. ConfigError on unknown keys, missing seeds, bad values, or a level
/// list that is empty or not strictly increasing.
ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});

/// Reads `path`; relative paths inside the config resolve against its directory.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical JSON of a resolved config, written next to every artifact.
std::string config_json(const ExperimentConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, CnnAeParams& params);
void save_checkpoint(const std::filesystem::path& path, TriFusionParams& params);
/// ConfigError when the file is missing, FormatError when an entry is missing
/// or shaped wrong.
void load_checkpoint(const std::filesystem::path& path, CnnAeParams& params);
void load_checkpoint(const std::filesystem::path& path, TriFusionParams& params);

/// Loads the configured dataset or synthesizes one from seeds.data.
Split prepare_data(const ExperimentConfig& cfg);

struct TrainedModels {
    CnnAeParams cnn;
    TriFusionParams tri;
    TrainCurve cnn_curve;
    TrainCurve tri_curve;
};

/// Trains both models from seeds.init on `train`.
TrainedModels train_models(const ExperimentConfig& cfg, const std::vector<SceneSample>& train);

/// Reads both checkpoints; ConfigError if either is missing.
TrainedModels load_models(const ExperimentConfig& cfg);

struct ExperimentRecord {
    std::string model;  ///< "cnn_ae" or "trifusion"
    PerturbationKind kind;
    double level;
    double mse;
    double psnr;
};

/// One CSV row: both models at one level, joined.
struct SweepRow {
    PerturbationKind kind;
    double level;
    double cnn_mse, tri_mse, mse_pct_delta;
    double cnn_psnr, tri_psnr, psnr_pct_delta;
};

struct SweepResult {
    std::vector<ExperimentRecord> records;  ///< model-major, level order within
    std::vector<SweepRow> rows;             ///< level order
    double cnn_clean_mse = 0.0;
    double tri_clean_mse = 0.0;
    std::size_t test_count = 0;
};

/// For every level: perturbs each test sample's LiDAR against each model,
/// reconstructs, and averages MSE and PSNR over the test set. InputError on
/// an empty level list or test set.
SweepResult run_sweep(const ExperimentConfig& cfg, const CnnAeParams& cnn, const TriFusionParams& tri,
                      const std::vector<SceneSample>& test);

inline constexpr const char* kSweepHeader =
    "kind,level,cnn_mse,tri_mse,mse_pct_delta,cnn_psnr,tri_psnr,psnr_pct_delta";

/// `#`-prefixed metadata lines (test count, clean MSE) then the header and rows.
std::string sweep_csv(const SweepResult& result);

/// Accepts sweep CSVs with or without metadata. FormatError on a wrong header
/// or a malformed row.
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

std::vector<ExperimentRecord> records_from_rows(const std::vector<SweepRow>& rows);

struct SensitivityRow {
    PerturbationKind kind;
    std::string model;
    double s_mse;
    double s_psnr;
};

/// OLS of each metric against level per (kind, model). Kinds appear in input
/// order; cnn_ae precedes trifusion.
std::vector<SensitivityRow> reproduce_table4(const std::vector<SweepRow>& rows);
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

struct TrendEntry {
    double level;
    double cnn_ratio;  ///< MSE(level) / MSE(clean)
    double tri_ratio;
};

/// Ratios at the three largest levels (fewer if the sweep is shorter).
std::vector<TrendEntry> pgd_trend(const SweepResult& result);
std::string trend_report(const SweepResult& result);

enum class PlotMetric { mse, psnr };
PlotMetric parse_plot_metric(const std::string& name);

/// Pure-text SVG with one polyline per model. InputError on no records or
/// fewer than two levels; NumericalError on a non-finite value.
std::string emit_plot(const std::vector<ExperimentRecord>& records, PlotMetric metric);

}  // namespace trifusion
