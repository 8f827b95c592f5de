#include "trifusion/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "trifusion/error.hpp"
#include "trifusion/sensitivity.hpp"
#include "trifusion/tensor_file.hpp"

namespace trifusion {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// Reads typed fields out of one config object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : path_(std::move(path)) {
        if (!j.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
        obj_ = &j;
    }

    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, _] : obj_->items()) {
            if (!seen_.count(k)) {
                throw ConfigError("unknown config key " + dotted(k));
            }
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return obj_->contains(key);
    }

    const json& at(const std::string& key) {
        seen_.insert(key);
        if (!obj_->contains(key)) {
            throw ConfigError("missing config key " + dotted(key));
        }
        return obj_->at(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        out = convert<T>(obj_->at(key), key);
    }

    template <typename T>
    T require(const std::string& key) {
        return convert<T>(at(key), key);
    }

    std::string dotted(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    template <typename T>
    T convert(const json& v, const std::string& key) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(dotted(key) + " must be a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(dotted(key) + " must be a string");
            return v.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(dotted(key) + " must be a non-negative integer");
            return v.get<T>();
        } else {
            if (!v.is_number()) throw ConfigError(dotted(key) + " must be a number");
            const double d = v.get<double>();
            if (!std::isfinite(d)) throw ConfigError(dotted(key) + " must be finite");
            return static_cast<T>(d);
        }
    }

    const json* obj_ = nullptr;
    std::string path_;
    std::set<std::string> seen_;
};

void apply_override(json& root, const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + text + "' is not key=value");
    }
    const std::string key = text.substr(0, eq);
    const std::string raw = text.substr(eq + 1);
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw ConfigError("override key '" + key + "' has an empty component");
        }
        if (!node->is_object()) {
            throw ConfigError("override key '" + key + "' descends into a non-object");
        }
        if (dot == std::string::npos) {
            json value;
            try {
                value = json::parse(raw);
            } catch (const json::parse_error&) {
                value = raw;
            }
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

ModelDims parse_dims(const json& j) {
    ModelDims d;
    Section s(j, "dims");
    s.read("lidar_height", d.lidar_height);
    s.read("lidar_width", d.lidar_width);
    s.read("views", d.views);
    s.read("image_height", d.image_height);
    s.read("image_width", d.image_width);
    s.read("embed_dim", d.embed_dim);
    s.read("heads", d.heads);
    s.read("text_dim", d.text_dim);
    s.read("depth_patch", d.depth_patch);
    if (s.has("text_tokens")) {
        const auto t = s.require<std::string>("text_tokens");
        if (t == "single") {
            d.text_tokens = TextTokenization::single;
        } else if (t == "per_element") {
            d.text_tokens = TextTokenization::per_element;
        } else {
            throw ConfigError("dims.text_tokens must be 'single' or 'per_element', got '" + t + "'");
        }
    }
    return d;
}

void check_levels(const std::vector<double>& levels) {
    if (levels.empty()) {
        throw ConfigError("sweep.levels is empty");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!std::isfinite(levels[i]) || levels[i] < 0.0) {
            throw ConfigError(fmt::format("sweep.levels[{}] must be finite and non-negative", i));
        }
        if (i > 0 && !(levels[i] > levels[i - 1])) {
            throw ConfigError("sweep.levels must be strictly increasing");
        }
    }
}

ExperimentConfig parse_json(const json& root) {
    ExperimentConfig cfg;
    Section top(root, "");
    if (top.has("dims")) cfg.dims = parse_dims(top.at("dims"));
    try {
        cfg.dims.validate();
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("dims: ") + e.what());
    }

    if (top.has("data")) {
        Section s(top.at("data"), "data");
        s.read("scenes", cfg.scenes);
        s.read("train_frac", cfg.train_frac);
        if (s.has("manifest")) cfg.manifest = s.require<std::string>("manifest");
    }
    if (!cfg.manifest && cfg.scenes < 2) {
        throw ConfigError("data.scenes must be at least 2");
    }
    if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0)) {
        throw ConfigError("data.train_frac must lie in (0, 1)");
    }

    if (top.has("train")) {
        Section s(top.at("train"), "train");
        s.read("enabled", cfg.train);
        s.read("epochs", cfg.epochs);
        s.read("batch_size", cfg.batch_size);
        s.read("lr", cfg.adam.lr);
        s.read("beta1", cfg.adam.beta1);
        s.read("beta2", cfg.adam.beta2);
        s.read("eps", cfg.adam.eps);
    }
    if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (cfg.adam.lr < 0.0) throw ConfigError("train.lr must be non-negative");
    if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0 && cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) {
        throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
    }
    if (!(cfg.adam.eps > 0.0)) throw ConfigError("train.eps must be positive");

    if (top.has("checkpoints")) {
        Section s(top.at("checkpoints"), "checkpoints");
        s.read("cnn_ae", cfg.cnn_checkpoint);
        s.read("trifusion", cfg.tri_checkpoint);
    }

    {
        Section s(top.at("sweep"), "sweep");
        cfg.sweep.kind = parse_perturbation_kind(s.require<std::string>("kind"));
        if (s.has("levels")) {
            const json& l = s.at("levels");
            if (!l.is_array()) throw ConfigError("sweep.levels must be an array");
            for (const auto& v : l) {
                if (!v.is_number()) throw ConfigError("sweep.levels must hold numbers");
                cfg.sweep.levels.push_back(v.get<double>());
            }
        } else {
            cfg.sweep.levels = default_levels(cfg.sweep.kind);
        }
        s.read("pgd_step", cfg.sweep.pgd_step);
        if (s.has("pgd_step_rule")) {
            const auto rule = s.require<std::string>("pgd_step_rule");
            if (rule == "absolute") {
                cfg.sweep.pgd_relative_step = false;
            } else if (rule == "relative") {
                cfg.sweep.pgd_relative_step = true;
            } else {
                throw ConfigError("sweep.pgd_step_rule must be 'absolute' or 'relative', got '" + rule + "'");
            }
        }
        s.read("pgd_iters", cfg.sweep.pgd_iters);
        s.read("pgd_random_start", cfg.sweep.pgd_random_start);
        s.read("clamp_to_range", cfg.sweep.clamp_to_range);
    }
    check_levels(cfg.sweep.levels);
    if (!(cfg.sweep.pgd_step > 0.0f)) throw ConfigError("sweep.pgd_step must be positive");
    if (cfg.sweep.pgd_relative_step && cfg.sweep.pgd_iters == 0) {
        throw ConfigError("sweep.pgd_step_rule 'relative' needs pgd_iters > 0");
    }

    if (top.has("metric")) {
        Section s(top.at("metric"), "metric");
        if (s.has("psnr_max_mode")) cfg.metric.mode = parse_psnr_mode(s.require<std::string>("psnr_max_mode"));
        s.read("max_value", cfg.metric.max_value);
    }
    if (cfg.metric.mode == PsnrMaxMode::constant && !(cfg.metric.max_value > 0.0)) {
        throw ConfigError("metric.max_value must be positive");
    }

    {
        Section s(top.at("seeds"), "seeds");
        cfg.seeds.data = s.require<std::uint64_t>("data");
        cfg.seeds.init = s.require<std::uint64_t>("init");
        cfg.seeds.batch = s.require<std::uint64_t>("batch");
        cfg.seeds.attack = s.require<std::uint64_t>("attack");
    }

    top.read("output_dir", cfg.output_dir);
    return cfg;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::path p(name);
    return p.is_absolute() ? p : std::filesystem::path(cfg.output_dir) / p;
}

template <typename Params>
void save_params(const std::filesystem::path& path, Params& params) {
    std::vector<NamedTensor> entries;
    for (auto& [name, t] : named_params(params)) {
        entries.emplace_back(name, t->detach());
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_tensors(path, entries);
}

template <typename Params>
void load_params(const std::filesystem::path& path, Params& params) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("checkpoint " + path.string() + " does not exist");
    }
    const auto entries = read_tensors(path);
    for (auto& [name, t] : named_params(params)) {
        const Tensor& src = find_tensor(entries, name);
        if (src.shape() != t->shape()) {
            throw FormatError(fmt::format("{}: entry '{}' has shape {}, expected {}", path.string(), name,
                                          shape_string(src.shape()), shape_string(t->shape())),
                              0);
        }
        *t = src.detach();
    }
}

ReconModel cnn_model(const CnnAeParams& p) {
    return [&p](const Tensor& x) { return cnn_ae_forward(p, x).recon; };
}

ReconModel tri_model(const TriFusionParams& p, const ModelDims& dims, const SceneSample& s) {
    return [&p, &dims, &s](const Tensor& x) { return trifusion_forward<float>(p, dims, x, s.views, s.text_emb); };
}

struct LevelMetrics {
    double mse = 0.0;
    double psnr = 0.0;
};

// Mean per-sample MSE and PSNR over the test set at one perturbation level.
template <typename MakeModel>
LevelMetrics evaluate(const ExperimentConfig& cfg, const std::vector<SceneSample>& test, MakeModel make_model,
                      const PerturbationSpec* spec) {
    LevelMetrics out;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& s = test[i];
        const ReconModel model = make_model(s);
        const Tensor input = spec ? perturb(*spec, model, s.lidar, s.lidar, i) : s.lidar;
        const Tensor recon = model(input);
        const double m = mse(recon, s.lidar);
        if (!std::isfinite(m)) {
            throw NumericalError(fmt::format("non-finite reconstruction error on sample {}", s.id));
        }
        out.mse += m;
        out.psnr += psnr(m, cfg.metric, &s.lidar);
    }
    out.mse /= static_cast<double>(test.size());
    out.psnr /= static_cast<double>(test.size());
    return out;
}

std::string fmt_level(double v) { return fmt::format("{}", v); }
std::string fmt_value(double v) { return fmt::format("{:.6f}", v); }

double parse_number(const std::string& cell, std::size_t offset, const std::string& column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != cell.size()) {
        throw FormatError("column " + column + ": '" + cell + "' is not a number", offset);
    }
    return v;
}

}  // namespace

std::vector<double> default_levels(PerturbationKind kind) {
    if (kind == PerturbationKind::gaussian) {
        return {1, 2, 5, 10, 20, 30, 40, 50, 60};
    }
    return {0.1, 0.5, 1, 5, 10, 20, 40, 55, 60, 70};
}

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON at byte {}: {}", e.byte, e.what()));
    }
    for (const auto& o : overrides) {
        apply_override(root, o);
    }
    try {
        return parse_json(root);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg = parse_config(slurp(path), overrides);
    const auto base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (!std::filesystem::path(p).is_absolute()) p = (base / p).lexically_normal().string();
    };
    resolve(cfg.output_dir);
    if (cfg.manifest) resolve(*cfg.manifest);
    return cfg;
}

std::string config_json(const ExperimentConfig& cfg) {
    ordered_json j;
    const auto& d = cfg.dims;
    j["dims"] = {{"lidar_height", d.lidar_height},
                 {"lidar_width", d.lidar_width},
                 {"views", d.views},
                 {"image_height", d.image_height},
                 {"image_width", d.image_width},
                 {"embed_dim", d.embed_dim},
                 {"heads", d.heads},
                 {"text_dim", d.text_dim},
                 {"depth_patch", d.depth_patch},
                 {"text_tokens", d.text_tokens == TextTokenization::single ? "single" : "per_element"}};
    j["data"] = {{"scenes", cfg.scenes}, {"train_frac", cfg.train_frac}};
    if (cfg.manifest) j["data"]["manifest"] = *cfg.manifest;
    j["train"] = {{"enabled", cfg.train},         {"epochs", cfg.epochs},        {"batch_size", cfg.batch_size},
                  {"lr", cfg.adam.lr},            {"beta1", cfg.adam.beta1},     {"beta2", cfg.adam.beta2},
                  {"eps", cfg.adam.eps}};
    j["checkpoints"] = {{"cnn_ae", cfg.cnn_checkpoint}, {"trifusion", cfg.tri_checkpoint}};
    j["sweep"] = {{"kind", to_string(cfg.sweep.kind)},
                  {"levels", cfg.sweep.levels},
                  {"pgd_step", cfg.sweep.pgd_step},
                  {"pgd_step_rule", cfg.sweep.pgd_relative_step ? "relative" : "absolute"},
                  {"pgd_iters", cfg.sweep.pgd_iters},
                  {"pgd_random_start", cfg.sweep.pgd_random_start},
                  {"clamp_to_range", cfg.sweep.clamp_to_range}};
    j["metric"] = {{"psnr_max_mode", to_string(cfg.metric.mode)}, {"max_value", cfg.metric.max_value}};
    j["seeds"] = {{"data", cfg.seeds.data},
                  {"init", cfg.seeds.init},
                  {"batch", cfg.seeds.batch},
                  {"attack", cfg.seeds.attack}};
    j["output_dir"] = cfg.output_dir;
    return j.dump(2) + "\n";
}

void save_checkpoint(const std::filesystem::path& path, CnnAeParams& params) { save_params(path, params); }
void save_checkpoint(const std::filesystem::path& path, TriFusionParams& params) { save_params(path, params); }
void load_checkpoint(const std::filesystem::path& path, CnnAeParams& params) { load_params(path, params); }
void load_checkpoint(const std::filesystem::path& path, TriFusionParams& params) { load_params(path, params); }

Split prepare_data(const ExperimentConfig& cfg) {
    if (cfg.manifest) {
        return load_dataset(*cfg.manifest, cfg.dims);
    }
    return split_dataset(synth_scenes(cfg.scenes, cfg.seeds.data, cfg.dims), cfg.train_frac, cfg.seeds.data);
}

TrainedModels train_models(const ExperimentConfig& cfg, const std::vector<SceneSample>& train) {
    TrainOptions opt;
    opt.epochs = cfg.epochs;
    opt.batch_size = cfg.batch_size;
    opt.adam = cfg.adam;
    opt.seed = cfg.seeds.batch;
    TrainedModels m{init_cnn_ae(cfg.seeds.init), init_trifusion(cfg.dims, cfg.seeds.init), {}, {}};
    m.cnn_curve = train_cnn_ae(m.cnn, train, opt);
    m.tri_curve = train_trifusion(m.tri, cfg.dims, train, opt);
    return m;
}

TrainedModels load_models(const ExperimentConfig& cfg) {
    TrainedModels m{zero_cnn_ae<float>(), zero_trifusion<float>(cfg.dims), {}, {}};
    load_checkpoint(checkpoint_path(cfg, cfg.cnn_checkpoint), m.cnn);
    load_checkpoint(checkpoint_path(cfg, cfg.tri_checkpoint), m.tri);
    return m;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const CnnAeParams& cnn, const TriFusionParams& tri,
                      const std::vector<SceneSample>& test) {
    if (cfg.sweep.levels.empty()) {
        throw InputError("sweep has no levels");
    }
    if (test.empty()) {
        throw InputError("sweep has no test samples");
    }
    for (const auto& s : test) check_sample(s, cfg.dims);

    auto make_cnn = [&](const SceneSample&) { return cnn_model(cnn); };
    auto make_tri = [&](const SceneSample& s) { return tri_model(tri, cfg.dims, s); };

    SweepResult r;
    r.test_count = test.size();
    r.cnn_clean_mse = evaluate(cfg, test, make_cnn, nullptr).mse;
    r.tri_clean_mse = evaluate(cfg, test, make_tri, nullptr).mse;

    std::vector<LevelMetrics> cnn_m, tri_m;
    for (double level : cfg.sweep.levels) {
        PerturbationSpec spec;
        spec.kind = cfg.sweep.kind;
        spec.level = static_cast<float>(level);
        spec.pgd_iters = cfg.sweep.pgd_iters;
        spec.pgd_step = cfg.sweep.pgd_relative_step
                            ? static_cast<float>(2.5 * level / static_cast<double>(cfg.sweep.pgd_iters))
                            : cfg.sweep.pgd_step;
        if (!(spec.pgd_step > 0.0f)) spec.pgd_step = cfg.sweep.pgd_step;
        spec.pgd_random_start = cfg.sweep.pgd_random_start;
        spec.seed = cfg.seeds.attack;
        spec.clamp_to_range = cfg.sweep.clamp_to_range;
        spec.validate();
        cnn_m.push_back(evaluate(cfg, test, make_cnn, &spec));
        tri_m.push_back(evaluate(cfg, test, make_tri, &spec));
    }

    const auto& levels = cfg.sweep.levels;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        r.records.push_back({"cnn_ae", cfg.sweep.kind, levels[i], cnn_m[i].mse, cnn_m[i].psnr});
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        r.records.push_back({"trifusion", cfg.sweep.kind, levels[i], tri_m[i].mse, tri_m[i].psnr});
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        SweepRow row{cfg.sweep.kind,
                     levels[i],
                     cnn_m[i].mse,
                     tri_m[i].mse,
                     percent_delta(tri_m[i].mse, cnn_m[i].mse),
                     cnn_m[i].psnr,
                     tri_m[i].psnr,
                     percent_delta(tri_m[i].psnr, cnn_m[i].psnr)};
        r.rows.push_back(row);
    }
    return r;
}

std::string sweep_csv(const SweepResult& result) {
    std::string out;
    out += fmt::format("# test_count={}\n", result.test_count);
    out += fmt::format("# cnn_clean_mse={}\n", fmt_value(result.cnn_clean_mse));
    out += fmt::format("# tri_clean_mse={}\n", fmt_value(result.tri_clean_mse));
    out += kSweepHeader;
    out += '\n';
    for (const auto& r : result.rows) {
        out += fmt::format("{},{},{},{},{},{},{},{}\n", to_string(r.kind), fmt_level(r.level), fmt_value(r.cnn_mse),
                           fmt_value(r.tri_mse), fmt_value(r.mse_pct_delta), fmt_value(r.cnn_psnr),
                           fmt_value(r.tri_psnr), fmt_value(r.psnr_pct_delta));
    }
    return out;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
    static const char* columns[] = {"kind",     "level",    "cnn_mse",  "tri_mse",
                                    "mse_pct_delta", "cnn_psnr", "tri_psnr", "psnr_pct_delta"};
    std::vector<SweepRow> rows;
    bool header_seen = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t line_start = pos;
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != kSweepHeader) {
                throw FormatError("sweep CSV header must be '" + std::string(kSweepHeader) + "'", line_start);
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::size_t c = 0;
        while (true) {
            const auto comma = line.find(',', c);
            cells.push_back(line.substr(c, comma == std::string::npos ? std::string::npos : comma - c));
            if (comma == std::string::npos) break;
            c = comma + 1;
        }
        if (cells.size() != 8) {
            throw FormatError(fmt::format("sweep CSV row has {} cells, expected 8", cells.size()), line_start);
        }
        SweepRow r{};
        try {
            r.kind = parse_perturbation_kind(cells[0]);
        } catch (const ConfigError&) {
            throw FormatError("unknown perturbation kind '" + cells[0] + "'", line_start);
        }
        double* targets[] = {&r.level,    &r.cnn_mse,  &r.tri_mse,  &r.mse_pct_delta,
                             &r.cnn_psnr, &r.tri_psnr, &r.psnr_pct_delta};
        for (std::size_t k = 0; k < 7; ++k) {
            *targets[k] = parse_number(cells[k + 1], line_start, columns[k + 1]);
        }
        rows.push_back(r);
    }
    if (!header_seen) {
        throw FormatError("sweep CSV has no header", 0);
    }
    return rows;
}

std::vector<ExperimentRecord> records_from_rows(const std::vector<SweepRow>& rows) {
    std::vector<ExperimentRecord> out;
    for (const auto& r : rows) out.push_back({"cnn_ae", r.kind, r.level, r.cnn_mse, r.cnn_psnr});
    for (const auto& r : rows) out.push_back({"trifusion", r.kind, r.level, r.tri_mse, r.tri_psnr});
    return out;
}

std::vector<SensitivityRow> reproduce_table4(const std::vector<SweepRow>& rows) {
    std::vector<PerturbationKind> kinds;
    for (const auto& r : rows) {
        if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end()) kinds.push_back(r.kind);
    }
    std::vector<SensitivityRow> out;
    for (auto kind : kinds) {
        std::vector<std::pair<double, double>> cm, cp, tm, tp;
        for (const auto& r : rows) {
            if (r.kind != kind) continue;
            cm.emplace_back(r.level, r.cnn_mse);
            cp.emplace_back(r.level, r.cnn_psnr);
            tm.emplace_back(r.level, r.tri_mse);
            tp.emplace_back(r.level, r.tri_psnr);
        }
        out.push_back({kind, "cnn_ae", sensitivity(ols_fit(cm)), sensitivity(ols_fit(cp))});
        out.push_back({kind, "trifusion", sensitivity(ols_fit(tm)), sensitivity(ols_fit(tp))});
    }
    return out;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
    std::string out = "perturbation,model,s_mse,s_psnr\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{}\n", to_string(r.kind), r.model, fmt_value(r.s_mse), fmt_value(r.s_psnr));
    }
    return out;
}

std::vector<TrendEntry> pgd_trend(const SweepResult& result) {
    if (!(result.cnn_clean_mse > 0.0) || !(result.tri_clean_mse > 0.0)) {
        throw DegenerateError("clean MSE is zero; ratios are undefined");
    }
    std::vector<TrendEntry> out;
    const std::size_t n = result.rows.size();
    for (std::size_t i = n > 3 ? n - 3 : 0; i < n; ++i) {
        const auto& r = result.rows[i];
        out.push_back({r.level, r.cnn_mse / result.cnn_clean_mse, r.tri_mse / result.tri_clean_mse});
    }
    return out;
}

std::string trend_report(const SweepResult& result) {
    const auto trend = pgd_trend(result);
    std::string out = "level,cnn_ratio,tri_ratio,tri_smaller\n";
    std::size_t smaller = 0;
    for (const auto& t : trend) {
        const bool s = t.tri_ratio < t.cnn_ratio;
        smaller += s;
        out += fmt::format("{},{},{},{}\n", fmt_level(t.level), fmt_value(t.cnn_ratio), fmt_value(t.tri_ratio),
                           s ? "yes" : "no");
    }
    out += fmt::format("# trifusion ratio smaller at {} of {} levels\n", smaller, trend.size());
    return out;
}

}  // namespace trifusion
