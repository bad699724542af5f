#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/nn.hpp"
#include "msp/rng.hpp"
#include "support/layer_check.hpp"

using namespace msp;
using namespace msp::nn;
using namespace testing_support;

namespace {

raster::ArcImage random_image(std::size_t n, std::uint64_t seed, double density = 0.2) {
    Rng rng(seed);
    raster::ArcImage img;
    img.n = n;
    img.bits.resize(n * n);
    for (auto& b : img.bits) b = rng.uniform01() < density ? 1 : 0;
    return img;
}

// Structured images: a few straight strokes, like sparse arc drawings.
raster::ArcImage stroke_image(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    raster::ArcImage img;
    img.n = n;
    img.bits.assign(n * n, 0);
    for (int s = 0; s < 3; ++s) {
        const auto r = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        for (std::size_t i = 0; i < n; ++i) img.bits[(s % 2 ? r * n + i : i * n + r)] = 1;
    }
    return img;
}

AutoencoderConfig tiny_config(std::uint64_t seed = 3) {
    AutoencoderConfig c;
    c.resolution = 16;
    c.latent_dim = 8;
    c.stages = {{4, 2}, {6, 2}};
    c.seed = seed;
    c.zero_init_output = false;
    return c;
}

// ---- reference evaluator: direct loops over the stored parameters ----

struct Ref {
    std::size_t c, h, w;
    std::vector<double> v;
};

Ref ref_conv(const Ref& in, const Buffer<float>& w, const Buffer<float>& b, std::size_t cout, std::size_t stride) {
    Ref out{cout, (in.h - 1) / stride + 1, (in.w - 1) / stride + 1, {}};
    out.v.assign(out.c * out.h * out.w, 0.0);
    for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) {
                double s = b[o];
                for (std::size_t c = 0; c < in.c; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const long iy = static_cast<long>(y * stride) + ky - 1, ix = static_cast<long>(x * stride) + kx - 1;
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.h) || ix >= static_cast<long>(in.w)) continue;
                            s += static_cast<double>(w[((o * in.c + c) * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)]) *
                                 in.v[(c * in.h + static_cast<std::size_t>(iy)) * in.w + static_cast<std::size_t>(ix)];
                        }
                out.v[(o * out.h + y) * out.w + x] = s;
            }
    return out;
}

Ref ref_linear(const Ref& in, const Buffer<float>& w, const Buffer<float>& b, Shape out_shape) {
    Ref out{out_shape.c, out_shape.h, out_shape.w, std::vector<double>(out_shape.size())};
    for (std::size_t o = 0; o < out.v.size(); ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in.v.size(); ++i) s += static_cast<double>(w[o * in.v.size() + i]) * in.v[i];
        out.v[o] = s;
    }
    return out;
}

// half-pixel bilinear: src = (dst + 0.5) / f - 0.5, clamped at both ends
Ref ref_upsample(const Ref& in, std::size_t f) {
    Ref out{in.c, in.h * f, in.w * f, {}};
    out.v.resize(out.c * out.h * out.w);
    auto coord = [&](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, double& t) {
        const double s = std::max(0.0, (static_cast<double>(o) + 0.5) / static_cast<double>(f) - 0.5);
        i0 = static_cast<std::size_t>(std::floor(s));
        i1 = std::min(i0 + 1, n - 1);
        t = s - static_cast<double>(i0);
    };
    for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t y = 0; y < out.h; ++y)
            for (std::size_t x = 0; x < out.w; ++x) {
                std::size_t y0, y1, x0, x1;
                double ty, tx;
                coord(y, in.h, y0, y1, ty);
                coord(x, in.w, x0, x1, tx);
                auto at = [&](std::size_t yy, std::size_t xx) { return in.v[(c * in.h + yy) * in.w + xx]; };
                out.v[(c * out.h + y) * out.w + x] = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
                                                    ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
            }
    return out;
}

Ref reference_forward(const Autoencoder<float>& m, const raster::ArcImage& img) {
    Ref r{1, img.n, img.n, std::vector<double>(img.bits.begin(), img.bits.end())};
    for (std::size_t i = 0; i < m.num_layers(); ++i) {
        const auto& l = m.layer(i);
        switch (l.kind()) {
        case LayerKind::conv:
            r = ref_conv(r, l.weight, l.bias, l.output_shape().c, dynamic_cast<const Conv3x3<float>&>(l).stride());
            break;
        case LayerKind::linear: r = ref_linear(r, l.weight, l.bias, l.output_shape()); break;
        case LayerKind::relu:
            for (auto& v : r.v) v = std::max(v, 0.0);
            break;
        case LayerKind::upsample: r = ref_upsample(r, dynamic_cast<const Upsample<float>&>(l).factor()); break;
        case LayerKind::sigmoid:
            for (auto& v : r.v) v = 1.0 / (1.0 + std::exp(-v));
            break;
        }
        const auto s = l.output_shape();
        REQUIRE(r.c == s.c);
        REQUIRE(r.h == s.h);
        REQUIRE(r.w == s.w);
    }
    return r;
}

}  // namespace

TEST_CASE("bce values") {
    const std::vector<double> half(64, 0.5);
    std::vector<double> target(64);
    Rng rng(1);
    for (auto& t : target) t = rng.coin() ? 1.0 : 0.0;
    CHECK(bce<double>(half, target) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce<double>(std::vector<double>{0.9}, std::vector<double>{1.0}) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    // predictions equal to binary targets hit the clamp
    CHECK(bce<double>(target, target) <= -std::log(1.0 - 1e-7) + 1e-15);
    CHECK(bce<double>(target, target) >= 0.0);
    CHECK_THROWS_AS(bce<double>(half, std::vector<double>(3, 0.0)), InputError);
}

TEST_CASE("bce is invariant under a shared pixel permutation") {
    Rng rng(8);
    std::vector<double> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
        a[i] = rng.uniform(0.01, 0.99);
        b[i] = rng.coin() ? 1.0 : 0.0;
    }
    const double before = bce<double>(a, b);
    std::vector<std::size_t> perm(100);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    std::vector<double> pa(100), pb(100);
    for (std::size_t i = 0; i < 100; ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
    }
    CHECK(bce<double>(pa, pb) == doctest::Approx(before).epsilon(1e-14));
}

TEST_CASE("configuration plans") {
    const auto c64 = AutoencoderConfig::defaults(64, 64);
    CHECK(c64.stages.size() == 4);
    const auto c50 = AutoencoderConfig::defaults(50, 128);
    CHECK(c50.stages[2].stride == 5);
    CHECK_THROWS_AS(AutoencoderConfig::defaults(40, 64), ParameterError);
    auto bad = c64;
    bad.stages[0].stride = 3;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    CHECK(AutoencoderConfig::from_json(c50.to_json()) == c50);

    const Autoencoder<float> m50(c50);
    raster::ArcImage img = random_image(50, 2);
    const auto x = to_batch<float>(std::span(&img, 1));
    CHECK(m50.encode(x).shape == Shape{128, 1, 1});
    CHECK(m50.forward(x).shape == Shape{1, 50, 50});
}

TEST_CASE("zero weights give 0.5 everywhere") {
    Autoencoder<float> m(AutoencoderConfig::defaults(64, 64, 1));
    m.for_each_parameter([](Buffer<float>& w, Buffer<float>&) { std::fill(w.begin(), w.end(), 0.0f); });
    const auto img = random_image(64, 5);
    const auto y = m.forward(to_batch<float>(std::span(&img, 1)));
    REQUIRE(y.data.size() == 64 * 64);
    for (float v : y.data) REQUIRE(v == 0.5f);
}

TEST_CASE("default init starts at ln 2 on binary targets") {
    Autoencoder<float> m(AutoencoderConfig::defaults(64, 64, 9));
    std::vector<raster::ArcImage> data;
    for (std::uint64_t s = 0; s < 8; ++s) data.push_back(random_image(64, s));
    CHECK(std::abs(evaluate(m, data) - std::log(2.0)) < 1e-3);
}

TEST_CASE("forward matches a direct-loop reference") {
    Autoencoder<float> m(tiny_config());
    CHECK(m.parameter_count() < 5000);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto img = random_image(16, 100 + s, 0.4);
        const auto y = m.forward(to_batch<float>(std::span(&img, 1)));
        const auto r = reference_forward(m, img);
        double worst = 0.0;
        for (std::size_t i = 0; i < r.v.size(); ++i) worst = std::max(worst, std::abs(r.v[i] - static_cast<double>(y.data[i])));
        CHECK(worst < 1e-6);
        for (float v : y.data) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
        }
    }
    // the default 64x64 model too, on one image
    Autoencoder<float> big(AutoencoderConfig::defaults(64, 64, 4));
    big.for_each_parameter([](Buffer<float>& w, Buffer<float>&) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.01f * static_cast<float>(i % 7) - 0.03f;
    });
    const auto img = stroke_image(64, 3);
    const auto y = big.forward(to_batch<float>(std::span(&img, 1)));
    const auto r = reference_forward(big, img);
    double worst = 0.0;
    for (std::size_t i = 0; i < r.v.size(); ++i) worst = std::max(worst, std::abs(r.v[i] - static_cast<double>(y.data[i])));
    CHECK(worst < 1e-6);
}

TEST_CASE("layer gradients match central differences") {
    SUBCASE("conv stride 1") {
        Conv3x3<double> l({3, 6, 5}, 4, 1);
        randomize(l, 1);
        CHECK(check_layer(l, random_tensor(2, {3, 6, 5}, 2), 3) < 1e-4);
    }
    SUBCASE("conv stride 2") {
        Conv3x3<double> l({2, 8, 8}, 3, 2);
        randomize(l, 4);
        CHECK(check_layer(l, random_tensor(2, {2, 8, 8}, 5), 6) < 1e-4);
    }
    SUBCASE("conv stride 5") {
        Conv3x3<double> l({2, 10, 10}, 3, 5);
        randomize(l, 7);
        CHECK(check_layer(l, random_tensor(1, {2, 10, 10}, 8), 9) < 1e-4);
    }
    SUBCASE("linear") {
        Linear<double> l({3, 2, 2}, {5, 1, 1});
        randomize(l, 10);
        CHECK(check_layer(l, random_tensor(3, {3, 2, 2}, 11), 12) < 1e-4);
    }
    SUBCASE("relu") {
        ReLU<double> l({2, 4, 4});
        CHECK(check_layer(l, random_tensor(2, {2, 4, 4}, 13, 1e-3), 14) < 1e-4);
    }
    SUBCASE("upsample x2 and x5") {
        Upsample<double> u2({2, 3, 4}, 2);
        CHECK(check_layer(u2, random_tensor(2, {2, 3, 4}, 15), 16) < 1e-4);
        Upsample<double> u5({1, 2, 3}, 5);
        CHECK(check_layer(u5, random_tensor(1, {1, 2, 3}, 17), 18) < 1e-4);
    }
    SUBCASE("sigmoid") {
        Sigmoid<double> l({1, 5, 5});
        CHECK(check_layer(l, random_tensor(2, {1, 5, 5}, 19), 20) < 1e-4);
    }
}

TEST_CASE("whole-model gradient of the mean BCE") {
    auto cfg = tiny_config(21);
    Autoencoder<double> m(cfg);
    std::vector<raster::ArcImage> imgs{random_image(16, 1, 0.3), random_image(16, 2, 0.3)};
    const auto x = to_batch<double>(imgs);
    m.zero_grad();
    const double loss = m.accumulate_gradient(x);
    CHECK(loss == doctest::Approx(bce<double>(m.forward(x).data, x.data)).epsilon(1e-14));

    Rng rng(5);
    double worst = 0.0;
    std::size_t probes = 0;
    for (std::size_t li = 0; li < m.num_layers(); ++li) {
        auto& l = m.layer(li);
        if (l.weight.empty()) continue;
        for (int p = 0; p < 30; ++p, ++probes) {
            const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(l.weight.size()) - 1));
            const double keep = l.weight[i];
            l.weight[i] = keep + 1e-5;
            const double up = bce<double>(m.forward(x).data, x.data);
            l.weight[i] = keep - 1e-5;
            const double down = bce<double>(m.forward(x).data, x.data);
            l.weight[i] = keep;
            worst = std::max(worst, rel_err(l.grad_weight[i], (up - down) / 2e-5));
        }
    }
    CHECK(probes > 100);
    CHECK(worst < 1e-4);
}

TEST_CASE("gradients: dead paths are zero and repeated calls agree") {
    Autoencoder<float> m(AutoencoderConfig::defaults(64, 64, 2));
    raster::ArcImage blank;
    blank.n = 64;
    blank.bits.assign(64 * 64, 0);
    m.zero_grad();
    m.accumulate_gradient(to_batch<float>(std::span(&blank, 1)));
    // the first convolution only sees zeros, so only its bias can move
    for (float g : m.layer(0).grad_weight) REQUIRE(g == 0.0f);

    const auto img = stroke_image(64, 4);
    const auto x = to_batch<float>(std::span(&img, 1));
    std::vector<Buffer<float>> first, second;
    m.zero_grad();
    m.accumulate_gradient(x);
    m.for_each_parameter([&](Buffer<float>&, Buffer<float>& g) { first.push_back(g); });
    m.zero_grad();
    m.accumulate_gradient(x);
    m.for_each_parameter([&](Buffer<float>&, Buffer<float>& g) { second.push_back(g); });
    CHECK(first == second);
}

TEST_CASE("upsampling a constant image is exact") {
    for (std::size_t f : {2u, 5u}) {
        Upsample<float> u({3, 4, 5}, f);
        Tensor<float> x(2, {3, 4, 5}, 0.1f);
        Tensor<float> y;
        u.forward(x, y);
        for (float v : y.data) REQUIRE(v == 0.1f);
    }
}

TEST_CASE("decode(encode(x)) is forward(x)") {
    Autoencoder<float> m(tiny_config(6));
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto img = random_image(16, s);
        const auto x = to_batch<float>(std::span(&img, 1));
        REQUIRE(m.decode(m.encode(x)).data == m.forward(x).data);
        REQUIRE(m.encode(x).data == m.encode(x).data);
    }
}

TEST_CASE("plateau schedule halves after patience bad epochs") {
    PlateauSchedule s;
    double lr = 1e-4;
    lr = s.update(1.0, lr);
    CHECK(lr == 1e-4);
    lr = s.update(0.999995, lr);  // improvement below min_delta
    lr = s.update(1.2, lr);
    CHECK(lr == 1e-4);
    CHECK(s.bad_epochs == 2);
    lr = s.update(1.1, lr);  // a real improvement resets the count
    CHECK(s.bad_epochs == 0);
    for (int i = 0; i < 3; ++i) lr = s.update(1.1, lr);
    CHECK(lr == 0.5e-4);
    CHECK(s.bad_epochs == 0);
    lr = s.update(0.5, lr);
    CHECK(lr == 0.5e-4);
    CHECK(s.previous == 0.5);
}

TEST_CASE("training errors") {
    Autoencoder<float> m(tiny_config());
    CHECK_THROWS_AS(train(m, {}, {}), InputError);
    std::vector<raster::ArcImage> mixed{random_image(16, 1), random_image(8, 2)};
    CHECK_THROWS_AS(train(m, mixed, {}), InputError);
}

TEST_CASE("a single image is memorized") {
    Autoencoder<float> m(AutoencoderConfig::defaults(64, 64, 11));
    const std::vector<raster::ArcImage> one{stroke_image(64, 12)};
    TrainOptions opt;
    opt.epochs = 200;
    opt.batch_size = 1;
    // 200 Adam steps at 1e-4 move a weight by at most ~0.02; this overfit
    // check needs a larger step to get anywhere in 200 iterations.
    opt.lr = 1e-3;
    const auto report = train(m, one, opt);
    REQUIRE(report.train_loss.size() == 200);
    MESSAGE("memorization: epoch 1 " << report.train_loss.front() << ", final " << evaluate(m, one));
    CHECK(evaluate(m, one) < 0.05);
    // schedule contract
    for (std::size_t i = 1; i < report.lr.size(); ++i) {
        CHECK(report.lr[i] <= report.lr[i - 1]);
        if (report.lr[i] != report.lr[i - 1]) CHECK(report.lr[i] == report.lr[i - 1] * 0.5);
    }
}

TEST_CASE("training is deterministic and resumable through a checkpoint") {
    std::vector<raster::ArcImage> data;
    for (std::uint64_t s = 0; s < 24; ++s) data.push_back(s % 2 ? stroke_image(16, s) : random_image(16, s, 0.15));
    TrainOptions opt;
    opt.epochs = 6;
    opt.batch_size = 5;
    opt.lr = 1e-3;
    opt.shuffle_seed = 4;

    Autoencoder<float> a(tiny_config(7)), b(tiny_config(7));
    const auto ra = train(a, data, opt);
    const auto rb = train(b, data, opt);
    CHECK(ra.train_loss == rb.train_loss);
    CHECK(encode_checkpoint(a) == encode_checkpoint(b));

    // 3 epochs, checkpoint with optimizer state, reload, 3 more
    Autoencoder<float> c(tiny_config(7));
    TrainState st;
    auto half = opt;
    half.epochs = 3;
    train(c, data, half, {}, &st);
    auto restored = decode_checkpoint(encode_checkpoint(c, &st));
    REQUIRE(restored.state.has_value());
    CHECK(restored.state->epoch == 3);
    const auto rest = train(restored.model, data, opt, {}, &*restored.state);
    REQUIRE(rest.train_loss.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rest.train_loss[i] == ra.train_loss[3 + i]);
    CHECK(encode_checkpoint(restored.model) == encode_checkpoint(a));
    CHECK(restored.model.iteration == 6);

    // test-set losses are reported per epoch
    Autoencoder<float> d(tiny_config(7));
    const auto rd = train(d, data, half, std::span(data).first(4));
    CHECK(rd.test_loss.size() == 3);
}

TEST_CASE("trained model separates blank and full images") {
    std::vector<raster::ArcImage> data;
    for (std::uint64_t s = 0; s < 16; ++s) data.push_back(stroke_image(16, s));
    Autoencoder<float> m(tiny_config(2));
    TrainOptions opt;
    opt.epochs = 5;
    opt.batch_size = 4;
    opt.lr = 1e-3;
    train(m, data, opt);
    raster::ArcImage zero, ones;
    zero.n = ones.n = 16;
    zero.bits.assign(256, 0);
    ones.bits.assign(256, 1);
    CHECK(m.encode(to_batch<float>(std::span(&zero, 1))).data != m.encode(to_batch<float>(std::span(&ones, 1))).data);
}

TEST_CASE("checkpoint round trip and format errors") {
    Autoencoder<float> m(tiny_config(13));
    m.iteration = 42;
    const auto img = random_image(16, 3);
    const auto x = to_batch<float>(std::span(&img, 1));
    const auto bytes = encode_checkpoint(m);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MCAE");

    const auto path = std::filesystem::temp_directory_path() / "msp_test_model.mcae";
    save_model(m, path);
    const auto back = load_model(path);
    CHECK(back.model.forward(x).data == m.forward(x).data);
    CHECK(back.model.iteration == 42);
    CHECK_FALSE(back.state.has_value());

    auto cut = bytes;
    cut.resize(cut.size() - 8);
    try {
        decode_checkpoint(cut);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string what = e.what();
        const auto want = std::to_string(m.parameter_count() * 4);
        CHECK(what.find("expected " + want) != std::string::npos);
        CHECK(what.find(std::to_string(m.parameter_count() * 4 - 8) + " bytes") != std::string::npos);
    }

    auto bad_version = bytes;
    bad_version[4] = 2;
    CHECK_THROWS_AS(decode_checkpoint(bad_version), FormatError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);

    // rewrite the header so the declared latent_dim disagrees with the table
    detail::ByteReader r(bytes);
    r.str(4, "");
    r.u32("");
    const auto hlen = r.u32("");
    std::string header = r.str(hlen, "");
    const auto at = header.find("\"latent_dim\":8");
    REQUIRE(at != std::string::npos);
    header.replace(at, 14, "\"latent_dim\":9");
    detail::ByteWriter w;
    w.str("MCAE");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(header.size()));
    w.str(header);
    w.raw(bytes.data() + 12 + hlen, bytes.size() - 12 - hlen);
    try {
        decode_checkpoint(w.bytes());
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("layer shape table") != std::string::npos);
    }
}
