#pragma once

// 2D projections of latent vectors (PCA and exact t-SNE) and the embedding
// JSON document served to plots and the explorer.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace msp::embed {

/// Dense row-major matrix, one vector per row.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows(rows), cols(cols), data(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// ---- PCA ----

struct PcaResult {
    Matrix coords;                    ///< rows x k, centered data times components
    Matrix components;                ///< k x m, orthonormal rows
    std::vector<double> eigenvalues;  ///< k values, non-increasing (covariance uses 1 / (N - 1))
    std::vector<double> mean;         ///< m values
    std::vector<std::string> warnings;
};

/// Top-k principal axes from a symmetric eigendecomposition of the sample
/// covariance. Each component's sign is fixed so that its largest-magnitude
/// entry is positive. Identical inputs give zero coordinates and a warning.
PcaResult pca(const Matrix& x, std::size_t k = 2);

// ---- t-SNE ----

struct TsneOptions {
    double perplexity = 30.0;
    std::uint64_t seed = 0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;
    double init_stddev = 1e-4;
    /// Entropy tolerance of the per-point bandwidth search, in nats.
    double entropy_tolerance = 1e-5;
};

struct Calibration {
    Matrix p;                       ///< symmetric joint probabilities, n x n, zero diagonal
    std::vector<double> beta;       ///< 1 / (2 sigma_i^2)
    std::vector<double> entropy;    ///< H(P_i) in nats
};

/// Conditional distributions with entropy ln(perplexity) per point, then
/// P = (P_j|i + P_i|j) / 2n. Throws ParameterError unless
/// 1 <= perplexity < (n - 1) / 3.
Calibration calibrate(const Matrix& x, double perplexity, double tolerance = 1e-5);

/// KL(P || Q) for a 2D layout y (n x 2) under the Student-t kernel.
double kl_divergence(const Matrix& p, const Matrix& y);

/// d KL / d y, n x 2.
Matrix kl_gradient(const Matrix& p, const Matrix& y);

struct TsneResult {
    Matrix coords;  ///< n x 2
    std::vector<double> entropy;
    double kl_initial = 0.0;  ///< at the initial layout
    double kl_final = 0.0;
};

TsneResult tsne(const Matrix& x, const TsneOptions& options = {});

// ---- embedding document ----

struct Projection {
    std::string method;  ///< "pca" or "tsne"
    std::optional<double> perplexity;
    std::optional<std::uint64_t> seed;
    std::size_t latent_dim = 0;
    friend bool operator==(const Projection&, const Projection&) = default;
};

struct EmbeddedPoint {
    std::string id;
    double x = 0.0, y = 0.0;
    std::string label;
    nlohmann::json meta = nlohmann::json::object();
    friend bool operator==(const EmbeddedPoint&, const EmbeddedPoint&) = default;
};

struct Embedding2D {
    Projection projection;
    std::vector<EmbeddedPoint> points;
    friend bool operator==(const Embedding2D&, const Embedding2D&) = default;
};

/// Coordinates as written to JSON: 9 significant digits.
double round9(double v);

/// Assembles points from an n x 2 layout, rounding coordinates with round9.
/// `labels` and `meta` may be empty or have one entry per id.
Embedding2D make_embedding(const Projection& projection, const Matrix& coords, const std::vector<std::string>& ids,
                           const std::vector<std::string>& labels = {}, const std::vector<nlohmann::json>& meta = {});

/// Throws InputError on non-finite coordinates or duplicate ids.
std::string to_json(const Embedding2D& e);
/// Throws FormatError naming the JSON pointer of the first violation.
Embedding2D from_json(const std::string& text);

void export_embedding(const Embedding2D& e, const std::filesystem::path& path);
Embedding2D import_embedding(const std::filesystem::path& path);

}  // namespace msp::embed
