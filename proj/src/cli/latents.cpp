#include <cmath>
#include <cstring>

#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"

namespace msp::cli {

namespace {

constexpr char kMagic[4] = {'M', 'L', 'A', 'T'};

nlohmann::json point_meta(const ManifestEntry& e) {
    nlohmann::json m = e.params.is_object() ? e.params : nlohmann::json::object();
    m["group"] = e.group;
    m["variant"] = e.variant;
    m["threshold"] = e.threshold;
    return m;
}

}  // namespace

LatentSet encode(const nn::Autoencoder<float>& model, const DatasetManifest& m, std::size_t batch_size) {
    if (batch_size < 1) throw ParameterError("batch size must be >= 1");
    const auto images = load_images(m);
    const std::size_t dim = model.config().latent_dim;
    LatentSet s;
    s.vectors = embed::Matrix(images.size(), dim);
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        const auto part = std::span(images).subspan(start, std::min(batch_size, images.size() - start));
        for (const auto& img : part) {
            if (img.n != model.config().resolution) {
                throw InputError("model expects " + std::to_string(model.config().resolution) + " pixel images, got " +
                                 std::to_string(img.n));
            }
        }
        const auto z = model.encode(nn::to_batch<float>(part));
        for (std::size_t i = 0; i < part.size(); ++i)
            for (std::size_t c = 0; c < dim; ++c) s.vectors(start + i, c) = static_cast<double>(z.sample(i)[c]);
    }
    for (const auto& e : m.entries) {
        s.ids.push_back(e.id);
        s.labels.push_back(e.label);
        s.meta.push_back(point_meta(e));
    }
    return s;
}

std::vector<std::uint8_t> encode_latents(const LatentSet& s) {
    const std::size_t n = s.ids.size();
    if (s.vectors.rows != n || s.labels.size() != n || s.meta.size() != n) throw InputError("latent set parts disagree in length");
    nlohmann::ordered_json h;
    h["count"] = n;
    h["dim"] = s.vectors.cols;
    h["ids"] = s.ids;
    h["labels"] = s.labels;
    h["meta"] = nlohmann::ordered_json::parse(nlohmann::json(s.meta).dump());
    const std::string header = h.dump();
    detail::ByteWriter w;
    w.raw(kMagic, 4);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(header.size()));
    w.str(header);
    for (double v : s.vectors.data) w.f32(static_cast<float>(v));
    return std::move(w.bytes());
}

LatentSet decode_latents(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an MLAT latent file", 0);
    const auto at_version = static_cast<std::int64_t>(r.offset());
    if (r.u32("version") != 1) throw FormatError("unsupported MLAT version", at_version);
    const auto len = r.u32("header length");
    const auto at_header = static_cast<std::int64_t>(r.offset());
    const auto text = r.str(len, "header");
    LatentSet s;
    std::size_t n = 0, dim = 0;
    try {
        const auto h = nlohmann::json::parse(text);
        n = h.at("count").get<std::size_t>();
        dim = h.at("dim").get<std::size_t>();
        s.ids = h.at("ids").get<std::vector<std::string>>();
        s.labels = h.at("labels").get<std::vector<std::string>>();
        s.meta = h.at("meta").get<std::vector<nlohmann::json>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad MLAT header: ") + e.what(), at_header);
    }
    if (s.ids.size() != n || s.labels.size() != n || s.meta.size() != n) throw FormatError("MLAT header lists disagree with count", at_header);
    if (r.remaining() != n * dim * 4) {
        throw FormatError("MLAT payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(n * dim * 4),
                          static_cast<std::int64_t>(r.offset()));
    }
    s.vectors = embed::Matrix(n, dim);
    for (auto& v : s.vectors.data) {
        const auto at = static_cast<std::int64_t>(r.offset());
        v = static_cast<double>(r.f32("latent"));
        if (!std::isfinite(v)) throw FormatError("non-finite latent value", at);
    }
    return s;
}

void save_latents(const LatentSet& s, const fs::path& path) { detail::write_file(path, encode_latents(s)); }

LatentSet load_latents(const fs::path& path) { return decode_latents(detail::read_file(path)); }

embed::Embedding2D project(const LatentSet& latents, const ProjectOptions& o) {
    embed::Projection p;
    p.latent_dim = latents.vectors.cols;
    embed::Matrix coords;
    if (o.method == "pca") {
        p.method = "pca";
        coords = embed::pca(latents.vectors, 2).coords;
    } else if (o.method == "tsne") {
        p.method = "tsne";
        p.perplexity = o.perplexity;
        p.seed = o.seed;
        embed::TsneOptions t;
        t.perplexity = o.perplexity;
        t.seed = o.seed;
        t.iterations = o.iterations;
        coords = embed::tsne(latents.vectors, t).coords;
    } else {
        throw ParameterError("unknown projection method '" + o.method + "' (use tsne or pca)");
    }
    return embed::make_embedding(p, coords, latents.ids, latents.labels, latents.meta);
}

ProjectOptions project_options_from_json(const nlohmann::json& body, const ProjectOptions& defaults) {
    if (!body.is_object()) throw ParameterError("projection request must be a JSON object");
    ProjectOptions o = defaults;
    if (body.contains("method")) {
        if (!body["method"].is_string()) throw ParameterError("method must be a string");
        o.method = body["method"].get<std::string>();
    }
    if (body.contains("perplexity")) {
        if (!body["perplexity"].is_number()) throw ParameterError("perplexity must be a number");
        o.perplexity = body["perplexity"].get<double>();
    }
    if (body.contains("seed")) {
        if (!body["seed"].is_number_unsigned()) throw ParameterError("seed must be a non-negative integer");
        o.seed = body["seed"].get<std::uint64_t>();
    }
    if (body.contains("iterations")) {
        if (!body["iterations"].is_number_unsigned()) throw ParameterError("iterations must be a positive integer");
        o.iterations = body["iterations"].get<std::size_t>();
    }
    return o;
}

}  // namespace msp::cli
