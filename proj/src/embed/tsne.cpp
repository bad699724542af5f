#include <algorithm>
#include <cmath>
#include <limits>

#include "msp/embed.hpp"
#include "msp/error.hpp"
#include "msp/rng.hpp"

namespace msp::embed {

namespace {

Matrix squared_distances(const Matrix& x) {
    const std::size_t n = x.rows;
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < x.cols; ++c) {
                const double t = x(i, c) - x(j, c);
                s += t * t;
            }
            d(i, j) = d(j, i) = s;
        }
    }
    return d;
}

// Row i of the conditional distribution for precision beta; returns H in nats.
double conditional_row(const Matrix& d, std::size_t i, double beta, std::vector<double>& row) {
    const std::size_t n = d.rows;
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d(i, j));
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
            row[j] = 0.0;
            continue;
        }
        const double shifted = d(i, j) - dmin;
        row[j] = std::exp(-beta * shifted);
        sum += row[j];
        weighted += shifted * row[j];
    }
    for (auto& v : row) v /= sum;
    return std::log(sum) + beta * weighted / sum;
}

// Student-t numerators 1 / (1 + |y_i - y_j|^2), zero diagonal; returns their sum.
double kernel(const Matrix& y, Matrix& num) {
    const std::size_t n = y.rows;
    num = Matrix(n, n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            num(i, j) = num(j, i) = q;
            z += 2.0 * q;
        }
    }
    return z;
}

void gradient(const Matrix& p, double exaggeration, const Matrix& y, Matrix& grad) {
    Matrix num;
    const double z = kernel(y, num);
    const std::size_t n = y.rows;
    grad = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        double gx = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w = (exaggeration * p(i, j) - num(i, j) / z) * num(i, j);
            gx += w * (y(i, 0) - y(j, 0));
            gy += w * (y(i, 1) - y(j, 1));
        }
        grad(i, 0) = 4.0 * gx;
        grad(i, 1) = 4.0 * gy;
    }
}

void check_layout(const Matrix& p, const Matrix& y) {
    if (p.rows != p.cols || y.rows != p.rows || y.cols != 2) throw InputError("t-SNE: P and layout sizes disagree");
}

}  // namespace

Calibration calibrate(const Matrix& x, double perplexity, double tolerance) {
    const std::size_t n = x.rows;
    if (!(perplexity >= 1.0) || !(perplexity < (static_cast<double>(n) - 1.0) / 3.0)) {
        throw ParameterError("perplexity " + std::to_string(perplexity) + " outside [1, (n - 1) / 3) for n = " +
                             std::to_string(n));
    }
    const Matrix d = squared_distances(x);
    const double target = std::log(perplexity);
    Calibration c;
    c.beta.resize(n);
    c.entropy.resize(n);
    Matrix cond(n, n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        double h = conditional_row(d, i, beta, row);
        for (int it = 0; it < 200 && std::abs(h - target) >= tolerance; ++it) {
            if (h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = conditional_row(d, i, beta, row);
        }
        c.beta[i] = beta;
        c.entropy[i] = h;
        std::copy(row.begin(), row.end(), cond.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    c.p = Matrix(n, n);
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) c.p(i, j) = c.p(j, i) = (cond(i, j) + cond(j, i)) * scale;
    return c;
}

double kl_divergence(const Matrix& p, const Matrix& y) {
    check_layout(p, y);
    Matrix num;
    const double z = kernel(y, num);
    double kl = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i)
        for (std::size_t j = 0; j < p.rows; ++j)
            if (j != i && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) * z / num(i, j));
    return kl;
}

Matrix kl_gradient(const Matrix& p, const Matrix& y) {
    check_layout(p, y);
    Matrix g;
    gradient(p, 1.0, y, g);
    return g;
}

TsneResult tsne(const Matrix& x, const TsneOptions& o) {
    if (o.iterations < 1) throw ParameterError("t-SNE needs at least one iteration");
    if (!(o.learning_rate > 0.0)) throw ParameterError("t-SNE learning rate must be > 0");
    const Calibration cal = calibrate(x, o.perplexity, o.entropy_tolerance);
    const std::size_t n = x.rows;

    Rng rng(o.seed);
    Matrix y(n, 2);
    for (auto& v : y.data) v = o.init_stddev * rng.normal();

    TsneResult r;
    r.entropy = cal.entropy;
    r.kl_initial = kl_divergence(cal.p, y);

    Matrix grad, step(n, 2), gains(n, 2, 1.0);
    for (std::size_t it = 0; it < o.iterations; ++it) {
        const double exaggeration = it < o.exaggeration_iterations ? o.early_exaggeration : 1.0;
        const double momentum = it < o.momentum_switch ? o.initial_momentum : o.final_momentum;
        gradient(cal.p, exaggeration, y, grad);
        for (std::size_t k = 0; k < y.data.size(); ++k) {
            // Per-coordinate gains grow while the descent direction agrees
            // with the previous step and shrink when it reverses.
            auto& gain = gains.data[k];
            gain = ((grad.data[k] > 0.0) != (step.data[k] > 0.0)) ? gain + 0.2 : gain * 0.8;
            gain = std::max(gain, 0.01);
            step.data[k] = momentum * step.data[k] - o.learning_rate * gain * grad.data[k];
            y.data[k] += step.data[k];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y(i, 0);
            my += y(i, 1);
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y(i, 0) -= mx;
            y(i, 1) -= my;
        }
    }
    r.kl_final = kl_divergence(cal.p, y);
    r.coords = std::move(y);
    return r;
}

}  // namespace msp::embed
