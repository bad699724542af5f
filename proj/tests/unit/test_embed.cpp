#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "msp/embed.hpp"
#include "msp/error.hpp"
#include "msp/rng.hpp"
#include "support/embed_oracle.hpp"

using namespace msp;
using namespace msp::embed;
using namespace testing_support;

namespace {

Matrix random_matrix(std::size_t n, std::size_t m, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(n, m);
    // uneven scales so the spectrum is well spread
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) x(i, j) = rng.normal() * static_cast<double>(j + 1);
    return x;
}


Matrix two_clusters(std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(100, 10);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t c = 0; c < 10; ++c) x(i, c) = rng.normal() + (i >= 50 && c == 0 ? 20.0 : 0.0);
    return x;
}

}  // namespace

TEST_CASE("pca of collinear points") {
    Matrix x(5, 3);
    for (int t = -2; t <= 2; ++t) {
        x(static_cast<std::size_t>(t + 2), 0) = t;
        x(static_cast<std::size_t>(t + 2), 1) = 2 * t;
    }
    const auto r = pca(x);
    CHECK(r.components(0, 0) == doctest::Approx(1 / std::sqrt(5.0)).epsilon(1e-12));
    CHECK(r.components(0, 1) == doctest::Approx(2 / std::sqrt(5.0)).epsilon(1e-12));
    CHECK(std::abs(r.components(0, 2)) < 1e-12);
    CHECK(r.eigenvalues[0] == doctest::Approx(12.5));  // var(t) * 5 = 2.5 * 5
    CHECK(std::abs(r.eigenvalues[1]) < 1e-12);
    CHECK(r.warnings.empty());
}

TEST_CASE("pca components are orthonormal and variances match the oracle") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto x = random_matrix(100, 8, s);
        const auto r = pca(x, 8);
        CHECK(max_orthonormality_error(r.components) < 1e-8);
        const auto ev = oracle::jacobi_eigenvalues(oracle::covariance(to_dense(x)));
        for (std::size_t c = 0; c < 8; ++c) {
            CHECK(std::abs(r.eigenvalues[c] - ev[c]) < 1e-8);
            CHECK(std::abs(column_variance(r.coords, c) - ev[c]) < 1e-8);
            if (c > 0) CHECK(r.eigenvalues[c] <= r.eigenvalues[c - 1]);
        }
    }
}

TEST_CASE("pca with all components reconstructs the input") {
    const auto x = random_matrix(40, 6, 9);
    const auto r = pca(x, 6);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) {
            double v = r.mean[j];
            for (std::size_t c = 0; c < 6; ++c) v += r.coords(i, c) * r.components(c, j);
            worst = std::max(worst, std::abs(v - x(i, j)));
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("pca does not depend on input order") {
    const auto x = random_matrix(60, 5, 4);
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng(12).shuffle(perm.begin(), perm.end());
    Matrix y(60, 5);
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = 0; j < 5; ++j) y(i, j) = x(perm[i], j);
    const auto a = pca(x), b = pca(y);
    for (std::size_t i = 0; i < 60; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            // up to a per-axis sign, which the largest-entry rule fixes anyway
            CHECK(std::abs(std::abs(b.coords(i, c)) - std::abs(a.coords(perm[i], c))) < 1e-9);
            CHECK(std::abs(b.coords(i, c) - a.coords(perm[i], c)) < 1e-9);
        }
    }
}

TEST_CASE("pca of identical vectors warns instead of failing") {
    Matrix x(4, 3, 2.5);
    const auto r = pca(x);
    CHECK(r.warnings.size() == 1);
    for (double v : r.coords.data) CHECK(v == 0.0);
    CHECK(r.eigenvalues == std::vector<double>{0.0, 0.0});
    CHECK(max_orthonormality_error(r.components) == 0.0);
}

TEST_CASE("pca argument checks") {
    CHECK_THROWS_AS(pca(Matrix(1, 3)), ParameterError);
    CHECK_THROWS_AS(pca(Matrix(5, 1), 2), ParameterError);
    CHECK_THROWS_AS(pca(Matrix(5, 3), 0), ParameterError);
}

TEST_CASE("t-SNE bandwidths hit the perplexity target") {
    for (double perp : {2.0, 5.0, 10.0, 30.0}) {
        const auto x = random_matrix(120, 6, static_cast<std::uint64_t>(perp));
        const auto c = calibrate(x, perp);
        for (std::size_t i = 0; i < x.rows; ++i) {
            CHECK(std::abs(c.entropy[i] - std::log(perp)) < 1e-4);
            CHECK(std::abs(entropy_from_beta(x, i, c.beta[i]) - std::log(perp)) < 1e-4);
        }
    }
}

TEST_CASE("joint probabilities are symmetric and normalized") {
    auto x = random_matrix(30, 4, 2);
    // every vector twice under a different id
    Matrix d(60, 4);
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = 0; j < 4; ++j) d(i, j) = x(i % 30, j);
    const auto c = calibrate(d, 8.0);
    double sum = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < 60; ++i) {
        CHECK(c.p(i, i) == 0.0);
        for (std::size_t j = 0; j < 60; ++j) {
            worst = std::max(worst, std::abs(c.p(i, j) - c.p(j, i)));
            sum += c.p(i, j);
        }
    }
    CHECK(worst < 1e-12);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perplexity range") {
    const auto x = random_matrix(31, 3, 1);  // (31 - 1) / 3 = 10
    CHECK_NOTHROW(calibrate(x, 9.99));
    CHECK_THROWS_AS(calibrate(x, 10.0), ParameterError);
    CHECK_THROWS_AS(calibrate(x, 0.5), ParameterError);
    CHECK_THROWS_AS(tsne(x, {.perplexity = 12.0}), ParameterError);
}

TEST_CASE("KL gradient matches central differences") {
    Rng rng(5);
    for (std::size_t n : {5u, 12u, 30u}) {
        const auto x = random_matrix(n, 4, n);
        const auto c = calibrate(x, std::min(3.0, (static_cast<double>(n) - 1.0) / 3.0 - 0.1));
        Matrix y(n, 2);
        for (auto& v : y.data) v = rng.normal();
        const auto g = kl_gradient(c.p, y);
        const double h = 1e-6;
        for (std::size_t k = 0; k < y.data.size(); ++k) {
            Matrix up = y, down = y;
            up.data[k] += h;
            down.data[k] -= h;
            const double fd = (kl_divergence(c.p, up) - kl_divergence(c.p, down)) / (2 * h);
            const double rel = std::abs(fd - g.data[k]) / std::max(1e-3, std::abs(fd) + std::abs(g.data[k]));
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("t-SNE separates two distant clusters") {
    const auto x = two_clusters(3);
    const auto r = tsne(x, {.perplexity = 10.0, .seed = 1});
    CHECK(r.kl_final <= r.kl_initial);
    for (std::size_t i = 0; i < x.rows; ++i) CHECK(std::abs(r.entropy[i] - std::log(10.0)) < 1e-4);

    // perpendicular bisector of the two 2D centroids
    double ca[2] = {0, 0}, cb[2] = {0, 0};
    for (std::size_t i = 0; i < 100; ++i)
        for (int k = 0; k < 2; ++k) (i < 50 ? ca : cb)[k] += r.coords(i, static_cast<std::size_t>(k)) / 50.0;
    const double nx = cb[0] - ca[0], ny = cb[1] - ca[1];
    const double mx = 0.5 * (ca[0] + cb[0]), my = 0.5 * (ca[1] + cb[1]);
    for (std::size_t i = 0; i < 100; ++i) {
        const double side = (r.coords(i, 0) - mx) * nx + (r.coords(i, 1) - my) * ny;
        CHECK((i < 50 ? side < 0 : side > 0));
    }

    // mean silhouette
    auto dist = [&](std::size_t a, std::size_t b) {
        return std::hypot(r.coords(a, 0) - r.coords(b, 0), r.coords(a, 1) - r.coords(b, 1));
    };
    double sil = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        double own = 0.0, other = 0.0;
        for (std::size_t j = 0; j < 100; ++j) {
            if (j == i) continue;
            ((i < 50) == (j < 50) ? own : other) += dist(i, j);
        }
        own /= 49.0;
        other /= 50.0;
        sil += (other - own) / std::max(own, other);
    }
    CHECK(sil / 100.0 > 0.5);
}

TEST_CASE("t-SNE is deterministic given the seed") {
    const auto x = random_matrix(40, 5, 8);
    const auto a = tsne(x, {.perplexity = 5.0, .seed = 2});
    const auto b = tsne(x, {.perplexity = 5.0, .seed = 2});
    const auto c = tsne(x, {.perplexity = 5.0, .seed = 3});
    CHECK(a.coords.data == b.coords.data);
    CHECK(a.coords.data != c.coords.data);
    CHECK(a.kl_final <= a.kl_initial);
}

TEST_CASE("embedding JSON round trip") {
    Rng rng(1);
    Matrix coords(10000, 2);
    std::vector<std::string> ids, labels;
    std::vector<nlohmann::json> meta;
    for (std::size_t i = 0; i < 10000; ++i) {
        coords(i, 0) = rng.normal() * 37.0;
        coords(i, 1) = rng.uniform(-1e-3, 1e-3);
        ids.push_back("p" + std::to_string(i));
        labels.push_back(i % 3 ? "sine" : "blobs");
        meta.push_back({{"group", i / 5}, {"source", "f" + std::to_string(i) + ".msf"}});
    }
    const auto e = make_embedding({"tsne", 30.0, 7, 64}, coords, ids, labels, meta);
    const auto text = to_json(e);
    const auto back = from_json(text);
    CHECK(back == e);
    CHECK(to_json(back) == text);
    CHECK(back.points[17].meta["group"] == 3);
    CHECK(back.projection.perplexity == 30.0);
    CHECK(back.projection.seed == 7u);

    const auto pca_doc = nlohmann::json::parse(to_json(make_embedding({"pca", {}, {}, 8}, Matrix(1, 2), {"a"})));
    CHECK_FALSE(pca_doc["projection"].contains("perplexity"));
    CHECK(pca_doc["points"][0]["meta"].is_object());
}

TEST_CASE("coordinates are written with 9 significant digits") {
    Matrix c(1, 2);
    c(0, 0) = 1.0 / 3.0;
    c(0, 1) = -123456.789012345;
    const auto text = to_json(make_embedding({"pca", {}, {}, 2}, c, {"a"}));
    CHECK(text.find("\"x\":0.333333333,") != std::string::npos);
    CHECK(text.find("\"y\":-123456.789,") != std::string::npos);
}

TEST_CASE("embedding JSON schema errors carry a JSON pointer") {
    auto message = [](const std::string& text) {
        try {
            from_json(text);
        } catch (const FormatError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message(R"({"version":1,"points":[]})").find("/projection") != std::string::npos);
    CHECK(message(R"({"version":2,"projection":{},"points":[]})").find("/version") != std::string::npos);
    const std::string proj = R"("projection":{"method":"tsne","latent_dim":4})";
    CHECK(message("{\"version\":1," + proj + "}").find("/points") != std::string::npos);
    CHECK(message("{\"version\":1," + proj + R"(,"points":[{"id":"a","x":1,"y":"2"}]})").find("/points/0/y") !=
          std::string::npos);
    CHECK(message("{\"version\":1," + proj + R"(,"points":[{"id":"a","x":1,"y":2},{"id":"a","x":1,"y":2}]})")
              .find("/points/1/id") != std::string::npos);
    CHECK(message(R"({"version":1,"projection":{"method":"umap","latent_dim":4},"points":[]})").find("/projection/method") !=
          std::string::npos);
    CHECK_THROWS_AS(from_json("{\"version\":"), FormatError);
}

TEST_CASE("export refuses non-finite coordinates") {
    Matrix c(2, 2);
    c(1, 0) = std::nan("");
    CHECK_THROWS_AS(to_json(make_embedding({"pca", {}, {}, 2}, c, {"a", "b"})), InputError);
    CHECK_THROWS_AS(make_embedding({"pca", {}, {}, 2}, c, {"a"}), InputError);
}
