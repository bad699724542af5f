#include <cmath>

#include <Eigen/Dense>

#include "msp/embed.hpp"
#include "msp/error.hpp"

namespace msp::embed {

PcaResult pca(const Matrix& x, std::size_t k) {
    const std::size_t n = x.rows, m = x.cols;
    if (n < 2) throw ParameterError("pca needs at least 2 vectors, got " + std::to_string(n));
    if (k < 1 || m < k) throw ParameterError("pca: k = " + std::to_string(k) + " with " + std::to_string(m) + "-dim vectors");
    if (x.data.size() != n * m) throw InputError("pca: matrix storage does not match its shape");

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMat> data(x.data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const RowMat centered = data.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

    PcaResult r;
    r.mean.assign(mean.data(), mean.data() + m);
    r.components = Matrix(k, m);
    r.eigenvalues.resize(k);
    r.coords = Matrix(n, k);
    if (cov.cwiseAbs().maxCoeff() == 0.0) {
        // Identical vectors: any orthonormal basis is a valid answer.
        r.warnings.push_back("all vectors are identical; projection has zero variance");
        for (std::size_t c = 0; c < k; ++c) r.components(c, c) = 1.0;
        return r;
    }

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw InputError("pca: eigendecomposition did not converge");
    // Eigenvalues come out ascending.
    for (std::size_t c = 0; c < k; ++c) {
        const auto col = static_cast<Eigen::Index>(m - 1 - c);
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index big = 0;
        v.cwiseAbs().maxCoeff(&big);
        if (v(big) < 0) v = -v;
        for (std::size_t j = 0; j < m; ++j) r.components(c, j) = v(static_cast<Eigen::Index>(j));
        r.eigenvalues[c] = solver.eigenvalues()(col);
        const Eigen::VectorXd proj = centered * v;
        for (std::size_t i = 0; i < n; ++i) r.coords(i, c) = proj(static_cast<Eigen::Index>(i));
    }
    return r;
}

}  // namespace msp::embed
