#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unordered_set>

#include "msp/detail/bytes.hpp"
#include "msp/embed.hpp"
#include "msp/error.hpp"

namespace msp::embed {

using ojson = nlohmann::ordered_json;

double round9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

Embedding2D make_embedding(const Projection& projection, const Matrix& coords, const std::vector<std::string>& ids,
                           const std::vector<std::string>& labels, const std::vector<nlohmann::json>& meta) {
    if (coords.cols != 2 || coords.rows != ids.size()) {
        throw InputError("embedding: " + std::to_string(ids.size()) + " ids for a " + std::to_string(coords.rows) + "x" +
                         std::to_string(coords.cols) + " layout");
    }
    if (!labels.empty() && labels.size() != ids.size()) throw InputError("embedding: label count does not match ids");
    if (!meta.empty() && meta.size() != ids.size()) throw InputError("embedding: meta count does not match ids");
    Embedding2D e;
    e.projection = projection;
    e.points.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        EmbeddedPoint p;
        p.id = ids[i];
        p.x = round9(coords(i, 0));
        p.y = round9(coords(i, 1));
        if (!labels.empty()) p.label = labels[i];
        if (!meta.empty()) p.meta = meta[i];
        e.points.push_back(std::move(p));
    }
    return e;
}

std::string to_json(const Embedding2D& e) {
    ojson proj;
    proj["method"] = e.projection.method;
    if (e.projection.perplexity) proj["perplexity"] = *e.projection.perplexity;
    if (e.projection.seed) proj["seed"] = *e.projection.seed;
    proj["latent_dim"] = e.projection.latent_dim;

    ojson points = ojson::array();
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < e.points.size(); ++i) {
        const auto& p = e.points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw InputError("embedding point " + std::to_string(i) + " (" + p.id + ") has a non-finite coordinate");
        }
        if (!seen.insert(p.id).second) throw InputError("embedding has duplicate id " + p.id);
        ojson q;
        q["id"] = p.id;
        q["x"] = round9(p.x);
        q["y"] = round9(p.y);
        q["label"] = p.label;
        q["meta"] = p.meta.is_null() ? ojson::object() : ojson::parse(p.meta.dump());
        points.push_back(std::move(q));
    }
    ojson doc;
    doc["version"] = 1;
    doc["projection"] = std::move(proj);
    doc["points"] = std::move(points);
    return doc.dump() + "\n";
}

namespace {

[[noreturn]] void fail(const std::string& pointer, const std::string& what) {
    throw FormatError("embedding JSON at " + (pointer.empty() ? std::string("/") : pointer) + ": " + what);
}

const nlohmann::json& field(const nlohmann::json& obj, const std::string& pointer, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(pointer + "/" + key, "missing");
    return *it;
}

double number(const nlohmann::json& v, const std::string& pointer) {
    if (!v.is_number()) fail(pointer, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(pointer, "not finite");
    return d;
}

std::string text(const nlohmann::json& v, const std::string& pointer) {
    if (!v.is_string()) fail(pointer, "expected a string");
    return v.get<std::string>();
}

}  // namespace

Embedding2D from_json(const std::string& source) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(source);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("embedding JSON does not parse: ") + e.what(), static_cast<std::int64_t>(e.byte));
    }
    if (!doc.is_object()) fail("", "expected an object");
    const auto& version = field(doc, "", "version");
    if (!version.is_number_integer() || version.get<std::int64_t>() != 1) fail("/version", "unsupported version");

    Embedding2D e;
    const auto& proj = field(doc, "", "projection");
    if (!proj.is_object()) fail("/projection", "expected an object");
    e.projection.method = text(field(proj, "/projection", "method"), "/projection/method");
    if (e.projection.method != "pca" && e.projection.method != "tsne") fail("/projection/method", "expected \"pca\" or \"tsne\"");
    if (proj.contains("perplexity")) e.projection.perplexity = number(proj["perplexity"], "/projection/perplexity");
    if (proj.contains("seed")) {
        if (!proj["seed"].is_number_unsigned()) fail("/projection/seed", "expected a non-negative integer");
        e.projection.seed = proj["seed"].get<std::uint64_t>();
    }
    const auto& dim = field(proj, "/projection", "latent_dim");
    if (!dim.is_number_unsigned()) fail("/projection/latent_dim", "expected a non-negative integer");
    e.projection.latent_dim = dim.get<std::size_t>();

    const auto& points = field(doc, "", "points");
    if (!points.is_array()) fail("/points", "expected an array");
    std::unordered_set<std::string> seen;
    e.points.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::string ptr = "/points/" + std::to_string(i);
        const auto& q = points[i];
        if (!q.is_object()) fail(ptr, "expected an object");
        EmbeddedPoint p;
        p.id = text(field(q, ptr, "id"), ptr + "/id");
        if (!seen.insert(p.id).second) fail(ptr + "/id", "duplicate id \"" + p.id + "\"");
        p.x = number(field(q, ptr, "x"), ptr + "/x");
        p.y = number(field(q, ptr, "y"), ptr + "/y");
        p.label = q.contains("label") ? text(q["label"], ptr + "/label") : std::string();
        if (q.contains("meta")) {
            if (!q["meta"].is_object()) fail(ptr + "/meta", "expected an object");
            p.meta = q["meta"];
        }
        e.points.push_back(std::move(p));
    }
    return e;
}

void export_embedding(const Embedding2D& e, const std::filesystem::path& path) { detail::write_text(path, to_json(e)); }

Embedding2D import_embedding(const std::filesystem::path& path) { return from_json(detail::read_text(path)); }

}  // namespace msp::embed
