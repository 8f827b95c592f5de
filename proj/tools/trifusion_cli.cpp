// trifusion: command-line driver for dataset synthesis, training, perturbation
// sweeps, the fusion oracle, sensitivity fits and plotting.
//
// Exit codes: 0 success, 2 configuration error, 3 data/format error,
// 4 numerical failure, 1 anything else.

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "trifusion/error.hpp"
#include "trifusion/fusion_oracle.hpp"
#include "trifusion/harness.hpp"

namespace fs = std::filesystem;
using namespace trifusion;

namespace {

struct ConfigArgs {
    std::string path;
    std::vector<std::string> overrides;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("-c,--config", args.path, "experiment JSON config")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "override a config value, key.path=value (repeatable)");
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw InputError("failed writing " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void emit(const std::string& output, const std::string& text) {
    if (output.empty() || output == "-") {
        std::cout << text;
    } else {
        write_text(output, text);
    }
}

fs::path ckpt(const ExperimentConfig& cfg, const std::string& name) {
    fs::path p(name);
    return p.is_absolute() ? p : fs::path(cfg.output_dir) / p;
}

TrainedModels train_and_save(const ExperimentConfig& cfg, const Split& split) {
    fmt::print(stderr, "training on {} scenes for {} epochs\n", split.train.size(), cfg.epochs);
    auto models = train_models(cfg, split.train);
    save_checkpoint(ckpt(cfg, cfg.cnn_checkpoint), models.cnn);
    save_checkpoint(ckpt(cfg, cfg.tri_checkpoint), models.tri);
    std::string curves = "model,epoch,loss\n";
    for (std::size_t e = 0; e < models.cnn_curve.epoch_loss.size(); ++e) {
        curves += fmt::format("cnn_ae,{},{:.6f}\n", e, models.cnn_curve.epoch_loss[e]);
    }
    for (std::size_t e = 0; e < models.tri_curve.epoch_loss.size(); ++e) {
        curves += fmt::format("trifusion,{},{:.6f}\n", e, models.tri_curve.epoch_loss[e]);
    }
    write_text(fs::path(cfg.output_dir) / "train_curves.csv", curves);
    return models;
}

int cmd_synth(const ConfigArgs& a) {
    const auto cfg = load_config(a.path, a.overrides);
    const auto split = prepare_data(cfg);
    const auto dir = fs::path(cfg.output_dir) / "data";
    write_dataset(dir, split);
    fmt::print("wrote {} train and {} test scenes to {}\n", split.train.size(), split.test.size(), dir.string());
    return 0;
}

int cmd_train(const ConfigArgs& a) {
    const auto cfg = load_config(a.path, a.overrides);
    const auto split = prepare_data(cfg);
    const auto models = train_and_save(cfg, split);
    write_text(fs::path(cfg.output_dir) / "config.json", config_json(cfg));
    fmt::print("final epoch loss: cnn_ae {:.3f}, trifusion {:.3f}\n", models.cnn_curve.epoch_loss.back(),
               models.tri_curve.epoch_loss.back());
    return 0;
}

int cmd_sweep(const ConfigArgs& a) {
    const auto cfg = load_config(a.path, a.overrides);
    const auto split = prepare_data(cfg);
    const auto models = cfg.train ? train_and_save(cfg, split) : load_models(cfg);
    const auto kind = to_string(cfg.sweep.kind);
    fmt::print(stderr, "sweeping {} over {} levels on {} test scenes\n", kind, cfg.sweep.levels.size(),
               split.test.size());
    const auto result = run_sweep(cfg, models.cnn, models.tri, split.test);
    const fs::path out(cfg.output_dir);
    write_text(out / "config.json", config_json(cfg));
    write_text(out / fmt::format("sweep_{}.csv", kind), sweep_csv(result));
    if (cfg.sweep.levels.size() >= 2) {
        write_text(out / fmt::format("{}_mse.svg", kind), emit_plot(result.records, PlotMetric::mse));
        write_text(out / fmt::format("{}_psnr.svg", kind), emit_plot(result.records, PlotMetric::psnr));
    }
    if (cfg.sweep.kind == PerturbationKind::pgd) {
        const auto report = trend_report(result);
        write_text(out / "pgd_trend.csv", report);
        std::cout << report;
    }
    std::cout << sweep_csv(result);
    return 0;
}

struct OracleArgs {
    double sigma_l2 = 0, a_norm2 = 0, sigma_p2 = 0, b_norm2 = 0;
    double alpha = -1;
    std::size_t trials = 0;
    std::size_t dim = 2;
    std::uint64_t seed = 0;
};

int cmd_oracle(const OracleArgs& a) {
    const OracleParams p{a.sigma_l2, a.a_norm2, a.sigma_p2, a.b_norm2};
    const auto e = effective_errors(p);
    nlohmann::ordered_json j;
    j["v_x"] = e.v_x;
    j["v_p"] = e.v_p;
    const auto opt = optimal_alpha(e.v_x, e.v_p);
    j["alpha_star"] = opt.alpha;
    j["error_min"] = opt.error_min;
    j["improvement_holds"] = improvement_holds(e.v_x, e.v_p);
    if (a.alpha >= 0) {
        j["alpha"] = a.alpha;
        j["error_at_alpha"] = error_at_alpha(e.v_x, e.v_p, a.alpha);
    }
    if (a.trials > 0) {
        const double alpha = a.alpha >= 0 ? a.alpha : opt.alpha;
        const auto mc = monte_carlo_validate(p, alpha, a.dim, a.trials, a.seed);
        j["monte_carlo"] = {{"alpha", alpha},
                            {"trials", a.trials},
                            {"mean", mc.mean},
                            {"standard_error", mc.standard_error},
                            {"predicted", mc.predicted}};
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_sensitivity(const std::vector<std::string>& inputs, const std::string& output) {
    std::vector<SweepRow> rows;
    for (const auto& f : inputs) {
        try {
            const auto part = parse_sweep_csv(read_text(f));
            rows.insert(rows.end(), part.begin(), part.end());
        } catch (const FormatError& e) {
            throw FormatError(f + ": " + e.detail(), e.offset());
        }
    }
    emit(output, sensitivity_csv(reproduce_table4(rows)));
    return 0;
}

int cmd_plot(const std::string& input, const std::string& metric, const std::string& output) {
    const auto m = parse_plot_metric(metric);
    emit(output, emit_plot(records_from_rows(parse_sweep_csv(read_text(input))), m));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TriFusion-AE robustness harness"};
    app.require_subcommand(1);

    ConfigArgs synth_args, train_args, sweep_args;
    auto* synth = app.add_subcommand("synth", "synthesize a scene dataset and its manifest");
    add_config_args(synth, synth_args);
    auto* train = app.add_subcommand("train", "train both models and write checkpoints");
    add_config_args(train, train_args);
    auto* sweep = app.add_subcommand("sweep", "run a perturbation sweep and write CSV/SVG artifacts");
    add_config_args(sweep, sweep_args);

    OracleArgs oracle_args;
    auto* oracle = app.add_subcommand("oracle", "evaluate the two-estimator fusion error model");
    oracle->add_option("--sigma-l2", oracle_args.sigma_l2, "LiDAR noise variance")->required();
    oracle->add_option("--a-norm2", oracle_args.a_norm2, "squared norm of the LiDAR bias")->required();
    oracle->add_option("--sigma-p2", oracle_args.sigma_p2, "prior noise variance")->required();
    oracle->add_option("--b-norm2", oracle_args.b_norm2, "squared norm of the prior bias")->required();
    oracle->add_option("--alpha", oracle_args.alpha, "also evaluate this fusion weight");
    oracle->add_option("--trials", oracle_args.trials, "Monte-Carlo trials (0 disables)");
    oracle->add_option("--dim", oracle_args.dim, "Monte-Carlo vector dimension");
    oracle->add_option("--seed", oracle_args.seed, "Monte-Carlo seed");

    std::vector<std::string> sens_inputs;
    std::string sens_output;
    auto* sens = app.add_subcommand("sensitivity", "fit sensitivities from sweep CSVs");
    sens->add_option("inputs", sens_inputs, "sweep CSV files")->required()->check(CLI::ExistingFile);
    sens->add_option("-o,--output", sens_output, "output CSV (default stdout)");

    std::string plot_input, plot_metric = "mse", plot_output;
    auto* plot = app.add_subcommand("plot", "render a sweep CSV as SVG");
    plot->add_option("input", plot_input, "sweep CSV file")->required()->check(CLI::ExistingFile);
    plot->add_option("-m,--metric", plot_metric, "mse or psnr");
    plot->add_option("-o,--output", plot_output, "output SVG (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(synth_args);
        if (*train) return cmd_train(train_args);
        if (*sweep) return cmd_sweep(sweep_args);
        if (*oracle) return cmd_oracle(oracle_args);
        if (*sens) return cmd_sensitivity(sens_inputs, sens_output);
        if (*plot) return cmd_plot(plot_input, plot_metric, plot_output);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "configuration error: {}\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        fmt::print(stderr, "format error: {}\n", e.what());
        return 3;
    } catch (const InputError& e) {
        fmt::print(stderr, "input error: {}\n", e.what());
        return 3;
    } catch (const DimensionError& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical failure: {}\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 1;
}
