#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "trifusion/error.hpp"
#include "trifusion/harness.hpp"

namespace trifusion {

PlotMetric parse_plot_metric(const std::string& name) {
    if (name == "mse") return PlotMetric::mse;
    if (name == "psnr") return PlotMetric::psnr;
    throw ConfigError("unknown plot metric '" + name + "' (expected mse or psnr)");
}

std::string emit_plot(const std::vector<ExperimentRecord>& records, PlotMetric metric) {
    if (records.empty()) {
        throw InputError("nothing to plot");
    }
    std::vector<std::string> models;
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    std::set<double> levels;
    for (const auto& r : records) {
        const double y = metric == PlotMetric::mse ? r.mse : r.psnr;
        if (!std::isfinite(y) || !std::isfinite(r.level)) {
            throw NumericalError(fmt::format("non-finite value for {} at level {}", r.model, r.level));
        }
        if (!series.count(r.model)) models.push_back(r.model);
        series[r.model].emplace_back(r.level, y);
        levels.insert(r.level);
    }
    if (levels.size() < 2) {
        throw InputError("a plot needs at least two levels");
    }

    double xmin = *levels.begin(), xmax = *levels.rbegin();
    double ymin = series[models[0]][0].second, ymax = ymin;
    for (const auto& [_, pts] : series) {
        for (const auto& p : pts) {
            ymin = std::min(ymin, p.second);
            ymax = std::max(ymax, p.second);
        }
    }
    if (ymax == ymin) {
        ymin -= 1.0;
        ymax += 1.0;
    }

    constexpr double width = 640, height = 400, left = 70, right = 20, top = 30, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };
    static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    const char* ylabel = metric == PlotMetric::mse ? "MSE" : "PSNR (dB)";
    const std::string kind = to_string(records.front().kind);

    std::string out;
    out += fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n", width,
        height);
    out += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", width, height);
    out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left, top + ph,
                       left + pw);
    out += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left, top, top + ph);
    for (double lv : levels) {
        out += fmt::format("<text x=\"{:.2f}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n", sx(lv),
                           top + ph + 14, fmt::format("{}", lv));
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = ymin + (ymax - ymin) * i / 4.0;
        out += fmt::format("<text x=\"{}\" y=\"{:.2f}\" font-size=\"10\" text-anchor=\"end\">{:.3g}</text>\n",
                           left - 6, sy(v) + 3, v);
    }
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{} level</text>\n",
                       left + pw / 2, height - 12, kind);
    out += fmt::format(
        "<text x=\"16\" y=\"{0}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        top + ph / 2, ylabel);
    for (std::size_t m = 0; m < models.size(); ++m) {
        auto pts = series[models[m]];
        std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::string coords;
        for (const auto& [x, y] : pts) {
            if (!coords.empty()) coords += ' ';
            coords += fmt::format("{:.2f},{:.2f}", sx(x), sy(y));
        }
        const char* colour = colours[m % 4];
        out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour,
                           coords);
        out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n", left + pw - 90,
                           top + 14 + 14 * m, colour, models[m]);
    }
    out += "</svg>\n";
    return out;
}

}  // namespace trifusion
