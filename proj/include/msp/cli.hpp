#pragma once

// The end-to-end pipeline behind the `msp` tool: dataset manifests, the
// dataset commands (gen-synth, extract, crop), training, encoding,
// projection, SVG plots and the HTTP service used by the explorer.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msp/embed.hpp"
#include "msp/field.hpp"
#include "msp/nn.hpp"
#include "msp/raster.hpp"

namespace msp::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "1.0.0";

/// Progress sink for long commands; may be empty.
using Log = std::function<void(const std::string&)>;

// ---- manifest ----

struct ManifestEntry {
    std::string id;
    std::string image;  ///< P4 path, relative to the manifest directory
    std::string field;  ///< MSF1 path, relative to the manifest directory
    std::string label;  ///< family for synthetic data
    std::string group;  ///< id shared by a base function and its noisy variants
    int variant = 0;    ///< 0 for the base function
    double threshold = 0.0;
    std::size_t resolution = 0;
    nlohmann::json params = nlohmann::json::object();  ///< synth parameters or source annotation
    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::string dataset;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::vector<ManifestEntry> entries;
    fs::path root;  ///< directory the relative paths resolve against; not serialized

    const ManifestEntry* find(const std::string& id) const;
    fs::path image_path(const ManifestEntry& e) const { return root / e.image; }
    fs::path field_path(const ManifestEntry& e) const { return root / e.field; }
};

std::string manifest_to_json(const DatasetManifest& m);
/// Throws FormatError on schema violations or duplicate ids.
DatasetManifest manifest_from_json(const std::string& text, const fs::path& root);
/// Writes `path` after checking ids are unique and every referenced file exists.
void save_manifest(const DatasetManifest& m, const fs::path& path);
DatasetManifest load_manifest(const fs::path& path);

/// Field meta as a JSON object; values that read fully as finite numbers
/// become JSON numbers.
nlohmann::json meta_to_json(const field::Meta& meta);

// ---- dataset commands ----

struct GenSynthOptions {
    std::size_t count = 10;  ///< base functions
    std::uint64_t seed = 0;
    std::size_t resolution = 64;
    std::size_t variants = 4;
    double noise = 0.05;
    double simplify = 0.04;
    std::size_t field_size = 256;
    std::size_t jobs = 1;
    Log log;
};

/// For base i, with s_i = derive_seed(seed, i):
///   params  = field::sample_params(s_i, field_size, field_size)
///   base    = quantize_f32(generate(params))                      (variant 0)
///   variant = quantize_f32(add_uniform_noise(base, noise,
///                          derive_seed(s_i, v), v))               (v = 1..variants)
/// then morse::field_arcs(field, simplify) and raster::rasterize to
/// resolution x resolution. Writes fields/, images/ and manifest.json under
/// out_dir. Ids are "<base>-<variant>" with a zero-padded base index.
DatasetManifest gen_synth(const GenSynthOptions& options, const fs::path& out_dir);

struct ExtractOptions {
    double simplify = 0.04;
    std::size_t resolution = 64;
    std::string label;  ///< used when a field carries no family
    std::size_t jobs = 1;
    Log log;
};

/// Arc images for existing MSF1/CSV fields. Each field is copied to
/// out_dir/fields as MSF1 so the manifest is self-contained; ids are the file
/// stems, suffixed when two inputs share a stem.
DatasetManifest extract(const std::vector<fs::path>& fields, const fs::path& out_dir, const ExtractOptions& options);

/// Disjoint or overlapping w x h windows at offsets 0, stride, 2 stride, ...
/// that fit inside the field. Throws ParameterError when the window is larger
/// than the field or a size is zero.
std::vector<field::ScalarField2D> crop_windows(const field::ScalarField2D& f, std::size_t w, std::size_t h,
                                               std::size_t stride_x, std::size_t stride_y);

/// Writes each window as out_dir/<stem>_x<x0>_y<y0>.msf and returns the paths.
std::vector<fs::path> crop(const fs::path& field, std::size_t w, std::size_t h, std::size_t stride_x,
                           std::size_t stride_y, const fs::path& out_dir);

// ---- training ----

struct TrainCommand {
    std::size_t latent_dim = 64;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;  ///< weight init and shuffling
    double lr = 1e-4;
    std::size_t batch_size = 16;
    double min_delta = 1e-5;
    std::size_t patience = 3;
    /// Fraction of entries held out as a test set, chosen by seed.
    double test_fraction = 0.0;
    std::optional<fs::path> resume;  ///< continue from a checkpoint with optimizer state
    Log log;
};

struct TrainOutcome {
    nn::TrainReport report;
    std::size_t train_count = 0, test_count = 0;
};

std::vector<raster::ArcImage> load_images(const DatasetManifest& m);

/// Trains on the manifest's images, writes the checkpoint (with optimizer
/// state) and a CSV "epoch,train_loss,test_loss,lr".
TrainOutcome train(const DatasetManifest& m, const TrainCommand& options, const fs::path& checkpoint,
                   const fs::path& loss_csv);

/// Rows are numbered from first_epoch (1 unless resumed).
std::string loss_csv(const nn::TrainReport& report, std::size_t first_epoch = 1);

/// One training run per (latent_dim, seed), each writing
/// out_dir/loss_d<dim>_s<seed>.csv, plus out_dir/summary.csv.
void sweep(const DatasetManifest& m, const std::vector<std::size_t>& latent_dims, const std::vector<std::uint64_t>& seeds,
           const TrainCommand& base, const fs::path& out_dir);

// ---- latents ----

struct LatentSet {
    std::vector<std::string> ids;
    std::vector<std::string> labels;
    std::vector<nlohmann::json> meta;  ///< copied from the manifest entries
    embed::Matrix vectors;              ///< one row per id, float32 precision
    friend bool operator==(const LatentSet&, const LatentSet&) = default;
};

LatentSet encode(const nn::Autoencoder<float>& model, const DatasetManifest& m, std::size_t batch_size = 64);

// MLAT: "MLAT", u32 version = 1, u32 header length, JSON header
// {count, dim, ids, labels, meta}, then count * dim float32 LE, row-major.
std::vector<std::uint8_t> encode_latents(const LatentSet& s);
LatentSet decode_latents(const std::vector<std::uint8_t>& bytes);
void save_latents(const LatentSet& s, const fs::path& path);
LatentSet load_latents(const fs::path& path);

// ---- projection and plots ----

struct ProjectOptions {
    std::string method = "tsne";  ///< "tsne" or "pca"
    double perplexity = 30.0;
    std::uint64_t seed = 0;
    std::size_t iterations = 1000;
};

embed::Embedding2D project(const LatentSet& latents, const ProjectOptions& options);

/// Request body of POST /api/project: {method, perplexity?, seed?, iterations?}.
ProjectOptions project_options_from_json(const nlohmann::json& body, const ProjectOptions& defaults = {});

struct PlotOptions {
    std::string color_by = "label";  ///< "label" or a meta key
    double width = 800, height = 600;
    double radius = 3;
};

/// Scatterplot with one circle per point and a legend. Numeric color keys use
/// a continuous ramp; other keys get a categorical palette (up to 12 classes,
/// beyond that the ramp). Unknown keys fall back to a single color. Output
/// depends only on the inputs.
std::string render_svg(const embed::Embedding2D& e, const PlotOptions& options = {});

// ---- HTTP service ----

struct ServiceData {
    std::string embedding_json;  ///< served verbatim
    embed::Embedding2D embedding;
    DatasetManifest manifest;
    std::optional<LatentSet> latents;  ///< needed by POST /api/project
};

/// GET /api/embedding, /api/points/{id}, /api/image/{id}[?format=p4|png],
/// /api/field/{id}; POST /api/project. Errors are {"error": message}.
class Service {
public:
    explicit Service(ServiceData data);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to host:port (port 0 picks a free one) and returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace msp::cli
