#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "msp/cli.hpp"
#include "msp/error.hpp"

namespace msp::cli {

namespace {

constexpr std::array<const char*, 12> kPalette = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
                                                  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#8c564b"};
constexpr const char* kMissing = "#cccccc";
constexpr double kLeft = 40, kTop = 50, kBottom = 40, kLegend = 190;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

// Five-stop viridis approximation, t in [0, 1].
std::string ramp(double t) {
    static constexpr double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(t));
    const double f = t - i;
    char buf[8];
    int rgb[3];
    for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround(stops[i][c] + f * (stops[i + 1][c] - stops[i][c])));
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    return buf;
}

std::optional<nlohmann::json> color_value(const embed::EmbeddedPoint& p, const std::string& key) {
    if (key == "label") return nlohmann::json(p.label);
    if (p.meta.is_object() && p.meta.contains(key)) return p.meta.at(key);
    return std::nullopt;
}

std::string category(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::string render_svg(const embed::Embedding2D& e, const PlotOptions& o) {
    if (!(o.width > kLeft + kLegend + 20) || !(o.height > kTop + kBottom + 20)) throw ParameterError("plot is too small");
    const std::size_t n = e.points.size();
    std::vector<std::optional<nlohmann::json>> values(n);
    bool any = false, numeric = true;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = color_value(e.points[i], o.color_by);
        if (!values[i]) continue;
        any = true;
        if (values[i]->is_number()) {
            lo = std::min(lo, values[i]->get<double>());
            hi = std::max(hi, values[i]->get<double>());
        } else {
            numeric = false;
        }
    }

    std::vector<std::string> fill(n, kMissing);
    std::vector<std::pair<std::string, std::string>> legend;  // (color, text)
    bool continuous = false;
    if (!any) {
        std::fill(fill.begin(), fill.end(), kPalette[0]);
        legend.emplace_back(kPalette[0], "all points");
    } else if (numeric && o.color_by != "label") {
        continuous = true;
        for (std::size_t i = 0; i < n; ++i)
            if (values[i]) fill[i] = ramp(hi > lo ? (values[i]->get<double>() - lo) / (hi - lo) : 0.5);
    } else {
        std::map<std::string, std::size_t> classes;
        for (const auto& v : values)
            if (v) classes.emplace(category(*v), 0);
        std::size_t k = 0;
        for (auto& [name, idx] : classes) idx = k++;
        auto color_of = [&](std::size_t idx) {
            return classes.size() <= kPalette.size() ? std::string(kPalette[idx])
                                                     : ramp(static_cast<double>(idx) / static_cast<double>(classes.size() - 1));
        };
        for (std::size_t i = 0; i < n; ++i)
            if (values[i]) fill[i] = color_of(classes.at(category(*values[i])));
        for (const auto& [name, idx] : classes) legend.emplace_back(color_of(idx), name);
    }
    if (any && std::any_of(values.begin(), values.end(), [](const auto& v) { return !v; })) legend.emplace_back(kMissing, "(missing)");

    // Uniform scale so the layout keeps its aspect ratio.
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (n > 0) {
        x0 = y0 = std::numeric_limits<double>::infinity();
        x1 = y1 = -x0;
        for (const auto& p : e.points) {
            x0 = std::min(x0, p.x);
            x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y);
            y1 = std::max(y1, p.y);
        }
    }
    const double pw = o.width - kLeft - kLegend, ph = o.height - kTop - kBottom;
    const double span = std::max({x1 - x0, (y1 - y0) * pw / ph, 1e-12});
    const double scale = pw / span;
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    auto sx = [&](double x) { return kLeft + 0.5 * pw + (x - cx) * scale; };
    auto sy = [&](double y) { return kTop + 0.5 * ph - (y - cy) * scale; };

    std::string title = e.projection.method == "tsne" ? "t-SNE(" + fmt("%g", e.projection.perplexity.value_or(0)) + ")" : "PCA";
    if (e.projection.seed) title += ", seed " + std::to_string(*e.projection.seed);
    title += ", " + std::to_string(n) + " points, colored by " + o.color_by;

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%g", o.width) + "\" height=\"" + fmt("%g", o.height) +
         "\" viewBox=\"0 0 " + fmt("%g", o.width) + " " + fmt("%g", o.height) + "\" font-family=\"sans-serif\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
    s += "<text x=\"" + fmt("%g", kLeft) + "\" y=\"28\" font-size=\"16\">" + escape(title) + "</text>\n";
    s += "<rect x=\"" + fmt("%g", kLeft) + "\" y=\"" + fmt("%g", kTop) + "\" width=\"" + fmt("%g", pw) + "\" height=\"" +
         fmt("%g", ph) + "\" fill=\"none\" stroke=\"#dddddd\"/>\n";
    s += "<g fill-opacity=\"0.8\" stroke=\"none\">\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = e.points[i];
        s += "<circle cx=\"" + fmt("%.2f", sx(p.x)) + "\" cy=\"" + fmt("%.2f", sy(p.y)) + "\" r=\"" + fmt("%g", o.radius) +
             "\" fill=\"" + fill[i] + "\"><title>" + escape(p.id) + "</title></circle>\n";
    }
    s += "</g>\n";

    const double lx = o.width - kLegend + 20;
    s += "<g font-size=\"12\">\n";
    s += "<text x=\"" + fmt("%g", lx) + "\" y=\"" + fmt("%g", kTop) + "\" font-weight=\"bold\">" + escape(o.color_by) + "</text>\n";
    double ly = kTop + 20;
    if (continuous) {
        s += "<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">";
        for (int k = 0; k <= 4; ++k)
            s += "<stop offset=\"" + fmt("%g", k / 4.0) + "\" stop-color=\"" + ramp(k / 4.0) + "\"/>";
        s += "</linearGradient></defs>\n";
        s += "<rect x=\"" + fmt("%g", lx) + "\" y=\"" + fmt("%g", ly) + "\" width=\"16\" height=\"150\" fill=\"url(#ramp)\"/>\n";
        s += "<text x=\"" + fmt("%g", lx + 24) + "\" y=\"" + fmt("%g", ly + 10) + "\">" + fmt("%.6g", hi) + "</text>\n";
        s += "<text x=\"" + fmt("%g", lx + 24) + "\" y=\"" + fmt("%g", ly + 150) + "\">" + fmt("%.6g", lo) + "</text>\n";
        ly += 170;
    }
    for (const auto& [color, text] : legend) {
        s += "<circle cx=\"" + fmt("%g", lx + 6) + "\" cy=\"" + fmt("%g", ly - 4) + "\" r=\"5\" fill=\"" + color + "\"/>";
        s += "<text x=\"" + fmt("%g", lx + 18) + "\" y=\"" + fmt("%g", ly) + "\">" + escape(text) + "</text>\n";
        ly += 18;
    }
    s += "</g>\n</svg>\n";
    return s;
}

}  // namespace msp::cli
