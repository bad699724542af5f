#include <cstdio>

#include <unordered_map>

#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/morse.hpp"
#include "msp/rng.hpp"
#include "pool.hpp"

namespace msp::cli {

namespace {

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string padded(std::size_t i, std::size_t count) {
    const int width = std::max<int>(5, static_cast<int>(std::to_string(count > 0 ? count - 1 : 0).size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, i);
    return buf;
}

std::string number_text(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Arc image of a field, written next to the field itself.
ManifestEntry store_item(const field::ScalarField2D& f, const std::string& id, const std::string& label,
                         const std::string& group, int variant, double simplify, std::size_t resolution,
                         const fs::path& out_dir) {
    const auto arcs = morse::field_arcs(f, simplify);
    auto img = raster::rasterize(arcs, f.width(), f.height(), resolution);
    img.meta = {{"id", id}, {"label", label}, {"threshold", number_text(simplify)}};

    ManifestEntry e;
    e.id = id;
    e.field = "fields/" + id + ".msf";
    e.image = "images/" + id + ".pbm";
    e.label = label;
    e.group = group;
    e.variant = variant;
    e.threshold = simplify;
    e.resolution = resolution;
    e.params = meta_to_json(f.meta());
    field::store_field(f, out_dir / e.field);
    raster::store_image(img, out_dir / e.image);
    return e;
}

// MSF1 carries no meta, so crops keep theirs (offsets, source) in
// "<file>.json" next to the field.
fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

void write_sidecar(const fs::path& path, const field::Meta& meta) {
    msp::detail::write_text(sidecar_path(path), nlohmann::json(meta).dump(1) + "\n");
}

field::Meta read_sidecar(const fs::path& path) {
    const auto p = sidecar_path(path);
    if (!fs::exists(p)) return {};
    try {
        return nlohmann::json::parse(msp::detail::read_text(p)).get<field::Meta>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad field sidecar " + p.string() + ": " + e.what());
    }
}

void progress(const Log& log, const char* what, std::size_t done, std::size_t total) {
    if (log && (done == total || done % std::max<std::size_t>(1, total / 10) == 0)) {
        log(std::string(what) + " " + std::to_string(done) + "/" + std::to_string(total));
    }
}

}  // namespace

DatasetManifest gen_synth(const GenSynthOptions& o, const fs::path& out_dir) {
    if (o.count < 1) throw ParameterError("gen-synth needs count >= 1");
    if (o.resolution < 1) throw ParameterError("resolution must be >= 1");
    if (o.field_size < 2) throw ParameterError("field size must be >= 2");
    if (!(o.noise >= 0.0)) throw ParameterError("noise magnitude must be >= 0");
    if (!(o.simplify >= 0.0)) throw ParameterError("simplification threshold must be >= 0");
    make_dirs(out_dir / "fields");
    make_dirs(out_dir / "images");

    const std::size_t per = o.variants + 1;
    std::vector<ManifestEntry> entries(o.count * per);
    std::atomic<std::size_t> done{0};
    detail::parallel_for(o.count, o.jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(o.seed, i);
        const auto params = field::sample_params(s, o.field_size, o.field_size);
        const auto base = field::quantize_f32(field::generate(params, o.field_size, o.field_size));
        const std::string group = padded(i, o.count);
        const std::string label = field::to_string(params.family);
        for (std::size_t v = 0; v < per; ++v) {
            const auto f = v == 0 ? base
                                  : field::quantize_f32(field::add_uniform_noise(base, o.noise, derive_seed(s, v),
                                                                                 static_cast<int>(v)));
            entries[i * per + v] = store_item(f, group + "-" + std::to_string(v), label, group, static_cast<int>(v),
                                              o.simplify, o.resolution, out_dir);
        }
        progress(o.log, "gen-synth", ++done, o.count);
    });

    DatasetManifest m;
    m.dataset = "synth-" + std::to_string(o.seed);
    m.seed = o.seed;
    m.entries = std::move(entries);
    m.root = out_dir;
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

DatasetManifest extract(const std::vector<fs::path>& fields, const fs::path& out_dir, const ExtractOptions& o) {
    if (fields.empty()) throw ParameterError("extract needs at least one field");
    if (o.resolution < 1) throw ParameterError("resolution must be >= 1");
    if (!(o.simplify >= 0.0)) throw ParameterError("simplification threshold must be >= 0");
    make_dirs(out_dir / "fields");
    make_dirs(out_dir / "images");

    std::vector<std::string> ids;
    std::unordered_map<std::string, int> uses;
    for (const auto& p : fields) {
        const std::string stem = p.stem().string();
        const int k = uses[stem]++;
        ids.push_back(k == 0 ? stem : stem + "~" + std::to_string(k));
    }
    std::vector<ManifestEntry> entries(fields.size());
    std::atomic<std::size_t> done{0};
    detail::parallel_for(fields.size(), o.jobs, [&](std::size_t i) {
        auto f = field::load_field(fields[i]);
        for (const auto& [k, v] : read_sidecar(fields[i])) f.meta().try_emplace(k, v);
        const auto fam = f.meta().find("family");
        const std::string label = fam != f.meta().end() ? fam->second : (o.label.empty() ? "field" : o.label);
        entries[i] = store_item(f, ids[i], label, ids[i], 0, o.simplify, o.resolution, out_dir);
        progress(o.log, "extract", ++done, fields.size());
    });

    DatasetManifest m;
    m.dataset = "extract";
    m.entries = std::move(entries);
    m.root = out_dir;
    save_manifest(m, out_dir / "manifest.json");
    return m;
}

std::vector<field::ScalarField2D> crop_windows(const field::ScalarField2D& f, std::size_t w, std::size_t h,
                                               std::size_t stride_x, std::size_t stride_y) {
    if (w < 2 || h < 2) throw ParameterError("crop window must be at least 2x2");
    if (stride_x < 1 || stride_y < 1) throw ParameterError("crop stride must be >= 1");
    if (w > f.width() || h > f.height()) {
        throw ParameterError("crop window " + std::to_string(w) + "x" + std::to_string(h) + " is larger than the " +
                             std::to_string(f.width()) + "x" + std::to_string(f.height()) + " field");
    }
    std::vector<field::ScalarField2D> out;
    for (std::size_t y = 0; y + h <= f.height(); y += stride_y)
        for (std::size_t x = 0; x + w <= f.width(); x += stride_x) out.push_back(field::crop(f, x, y, w, h));
    return out;
}

std::vector<fs::path> crop(const fs::path& path, std::size_t w, std::size_t h, std::size_t stride_x, std::size_t stride_y,
                           const fs::path& out_dir) {
    const auto f = field::load_field(path);
    const auto windows = crop_windows(f, w, h, stride_x, stride_y);
    make_dirs(out_dir);
    std::vector<fs::path> written;
    for (const auto& c : windows) {
        const auto out = out_dir / (path.stem().string() + "_x" + c.meta().at("crop_x") + "_y" + c.meta().at("crop_y") + ".msf");
        field::store_field(c, out);
        write_sidecar(out, c.meta());
        written.push_back(out);
    }
    return written;
}

}  // namespace msp::cli
