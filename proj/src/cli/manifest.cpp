#include <charconv>
#include <cmath>
#include <unordered_set>

#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"

namespace msp::cli {

using ojson = nlohmann::ordered_json;

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return &e;
    return nullptr;
}

nlohmann::json meta_to_json(const field::Meta& meta) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : meta) {
        const char* end = v.data() + v.size();
        std::uint64_t u = 0;
        std::int64_t i = 0;
        if (auto r = std::from_chars(v.data(), end, u); !v.empty() && r.ec == std::errc() && r.ptr == end) {
            j[k] = u;
            continue;
        }
        if (auto r = std::from_chars(v.data(), end, i); !v.empty() && r.ec == std::errc() && r.ptr == end) {
            j[k] = i;
            continue;
        }
        double d = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
        if (!v.empty() && ec == std::errc() && ptr == v.data() + v.size() && std::isfinite(d)) {
            j[k] = d;
        } else {
            j[k] = v;
        }
    }
    return j;
}

std::string manifest_to_json(const DatasetManifest& m) {
    ojson doc;
    doc["version"] = 1;
    doc["dataset"] = m.dataset;
    doc["seed"] = m.seed;
    doc["tool_version"] = m.tool_version;
    ojson entries = ojson::array();
    for (const auto& e : m.entries) {
        ojson j;
        j["id"] = e.id;
        j["image"] = e.image;
        j["field"] = e.field;
        j["label"] = e.label;
        j["group"] = e.group;
        j["variant"] = e.variant;
        j["threshold"] = e.threshold;
        j["resolution"] = e.resolution;
        j["params"] = ojson::parse(e.params.dump());
        entries.push_back(std::move(j));
    }
    doc["entries"] = std::move(entries);
    return doc.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const fs::path& root) {
    DatasetManifest m;
    m.root = root;
    std::string where = "/";
    try {
        const auto doc = nlohmann::json::parse(text);
        if (doc.at("version").get<int>() != 1) throw FormatError("manifest at /version: unsupported version");
        m.dataset = doc.at("dataset").get<std::string>();
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.tool_version = doc.at("tool_version").get<std::string>();
        std::unordered_set<std::string> seen;
        const auto& entries = doc.at("entries");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            where = "/entries/" + std::to_string(i);
            const auto& j = entries.at(i);
            ManifestEntry e;
            e.id = j.at("id").get<std::string>();
            e.image = j.at("image").get<std::string>();
            e.field = j.value("field", std::string());
            e.label = j.value("label", std::string());
            e.group = j.value("group", e.id);
            e.variant = j.value("variant", 0);
            e.threshold = j.value("threshold", 0.0);
            e.resolution = j.at("resolution").get<std::size_t>();
            e.params = j.value("params", nlohmann::json::object());
            if (!seen.insert(e.id).second) throw FormatError("manifest at " + where + "/id: duplicate id " + e.id);
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest at " + where + ": " + e.what());
    }
    return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
    std::unordered_set<std::string> seen;
    const fs::path root = path.parent_path();
    for (const auto& e : m.entries) {
        if (!seen.insert(e.id).second) throw InputError("manifest has duplicate id " + e.id);
        if (!fs::exists(root / e.image)) throw IoError("manifest entry " + e.id + ": missing image " + (root / e.image).string());
        if (!e.field.empty() && !fs::exists(root / e.field)) {
            throw IoError("manifest entry " + e.id + ": missing field " + (root / e.field).string());
        }
    }
    detail::write_text(path, manifest_to_json(m));
}

DatasetManifest load_manifest(const fs::path& path) {
    return manifest_from_json(detail::read_text(path), path.parent_path());
}

}  // namespace msp::cli
