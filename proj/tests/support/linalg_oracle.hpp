#pragma once

// Dense reference linear algebra for the projection tests: a direct
// covariance sum and a cyclic Jacobi eigensolver.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

// Sample covariance with 1 / (n - 1), accumulated in long double.
inline Dense covariance(const Dense& rows) {
    const std::size_t n = rows.size(), m = rows.front().size();
    std::vector<long double> mean(m, 0.0L);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < m; ++j) mean[j] += r[j];
    for (auto& v : mean) v /= static_cast<long double>(n);
    Dense c(m, std::vector<double>(m));
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
            long double s = 0.0L;
            for (const auto& r : rows) s += (r[a] - mean[a]) * (r[b] - mean[b]);
            c[a][b] = static_cast<double>(s / static_cast<long double>(n - 1));
        }
    }
    return c;
}

// Eigenvalues of a symmetric matrix, sorted descending.
inline std::vector<double> jacobi_eigenvalues(Dense a) {
    const std::size_t m = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = p + 1; q < m; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < m; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < m; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(m);
    for (std::size_t i = 0; i < m; ++i) ev[i] = a[i][i];
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return ev;
}

}  // namespace oracle
