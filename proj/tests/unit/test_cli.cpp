#include <cmath>
#include <thread>
#include <unistd.h>

#include "doctest.h"
#include "httplib.h"
#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/morse.hpp"
#include "msp/rng.hpp"

using namespace msp;
using namespace msp::cli;

namespace {

const fs::path& scratch_root() {
    static const struct Root {
        fs::path path = fs::temp_directory_path() / ("msp_test_" + std::to_string(::getpid()));
        ~Root() {
            std::error_code ec;
            fs::remove_all(path, ec);
        }
    } root;
    return root.path;
}

fs::path scratch(const std::string& name) {
    const auto dir = scratch_root() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

GenSynthOptions small_synth(std::uint64_t seed = 5) {
    GenSynthOptions o;
    o.count = 8;
    o.seed = seed;
    o.resolution = 16;
    o.field_size = 40;
    return o;
}

// One small dataset, model and latent set shared by the tests below.
struct Fixture {
    fs::path dir;
    DatasetManifest manifest;
    LatentSet latents;

    Fixture() {
        dir = scratch("fixture");
        manifest = gen_synth(small_synth(), dir / "ds");
        TrainCommand t;
        t.epochs = 2;
        t.latent_dim = 8;
        t.lr = 1e-3;
        train(manifest, t, dir / "m.mcae", dir / "m.csv");
        latents = encode(nn::load_model(dir / "m.mcae").model, manifest);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

field::ScalarField2D ramp_field(std::size_t w, std::size_t h) {
    std::vector<double> v(w * h);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.37 * static_cast<double>(i % w)) + 0.01 * static_cast<double>(i / w);
    return {w, h, std::move(v)};
}

}  // namespace

TEST_CASE("gen-synth writes groups of a base function and its variants") {
    const auto& m = fixture().manifest;
    REQUIRE(m.entries.size() == 40);
    for (std::size_t g = 0; g < 8; ++g) {
        for (std::size_t v = 0; v < 5; ++v) {
            const auto& e = m.entries[g * 5 + v];
            CHECK(e.group == m.entries[g * 5].group);
            CHECK(e.variant == static_cast<int>(v));
            CHECK(e.label == m.entries[g * 5].label);
            CHECK(e.id == e.group + "-" + std::to_string(v));
            CHECK(fs::exists(m.image_path(e)));
            CHECK(fs::exists(m.field_path(e)));
            CHECK(e.resolution == 16);
            CHECK(e.threshold == 0.04);
            CHECK((e.label == "blobs" || e.label == "sine" || e.label == "rotsine"));
            CHECK(e.params["family"] == e.label);
            if (v > 0) CHECK(e.params["noise_magnitude"] == 0.05);
        }
    }
    const auto back = load_manifest(fixture().dir / "ds" / "manifest.json");
    CHECK(back.entries == m.entries);
    CHECK(back.seed == 5);
    CHECK(back.tool_version == kToolVersion);
    CHECK(m.entries[0].params["seed"].is_number_unsigned());
}

TEST_CASE("gen-synth is deterministic and independent of the worker count") {
    const auto dir = scratch("determinism");
    auto o = small_synth(9);
    o.count = 4;
    gen_synth(o, dir / "a");
    o.jobs = 3;
    gen_synth(o, dir / "b");
    CHECK(detail::read_text(dir / "a" / "manifest.json") == detail::read_text(dir / "b" / "manifest.json"));
    for (const auto& e : load_manifest(dir / "a" / "manifest.json").entries) {
        CHECK(detail::read_file(dir / "a" / e.image) == detail::read_file(dir / "b" / e.image));
        CHECK(detail::read_file(dir / "a" / e.field) == detail::read_file(dir / "b" / e.field));
    }
}

TEST_CASE("gen-synth equals the stepwise field, morse and raster calls") {
    const auto& m = fixture().manifest;
    const auto o = small_synth();
    for (std::size_t i : {1u, 6u}) {
        const std::uint64_t s = derive_seed(o.seed, i);
        const auto base = field::quantize_f32(field::generate(field::sample_params(s, 40, 40), 40, 40));
        for (std::size_t v : {0u, 3u}) {
            const auto f = v == 0 ? base : field::quantize_f32(field::add_uniform_noise(base, 0.05, derive_seed(s, v), static_cast<int>(v)));
            const auto img = raster::rasterize(morse::field_arcs(f, 0.04), 40, 40, 16);
            const auto& e = m.entries[i * 5 + v];
            CHECK(field::load_field(m.field_path(e)).values() == f.values());
            CHECK(raster::load_image(m.image_path(e)).bits == img.bits);
        }
    }
}

TEST_CASE("family draws are uniform over the three families") {
    std::size_t counts[3] = {0, 0, 0};
    for (std::uint64_t i = 0; i < 10000; ++i) ++counts[static_cast<int>(field::sample_params(derive_seed(0, i), 256, 256).family)];
    // binomial sd = sqrt(10000 * 1/3 * 2/3) ~ 47; a 4 sd bound, which an
    // uneven-looking 3320/3435/3245 split also satisfies
    for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - 10000.0 / 3.0) < 4 * 47.2);
    for (double c : {3320.0, 3435.0, 3245.0}) CHECK(std::abs(c - 10000.0 / 3.0) < 4 * 47.2);
}

TEST_CASE("crop windows") {
    const auto strip = ramp_field(400, 50);
    const auto crops = crop_windows(strip, 50, 50, 50, 50);
    REQUIRE(crops.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(crops[k].meta().at("crop_x") == std::to_string(50 * k));
        CHECK(crops[k].meta().at("crop_y") == "0");
        CHECK(crops[k](0, 0) == strip(50 * k, 0));
        CHECK(crops[k](49, 49) == strip(50 * k + 49, 49));
    }
    CHECK(crop_windows(strip, 50, 50, 500, 500).size() == 1);
    CHECK(crop_windows(strip, 100, 50, 25, 1).size() == 13);
    CHECK_THROWS_AS(crop_windows(strip, 60, 60, 50, 50), ParameterError);
    CHECK_THROWS_AS(crop_windows(strip, 50, 50, 0, 50), ParameterError);
}

TEST_CASE("crop files keep their offsets through extract") {
    const auto dir = scratch("crop");
    field::store_field(ramp_field(120, 40), dir / "strip.msf");
    const auto paths = crop(dir / "strip.msf", 40, 40, 40, 40, dir / "crops");
    REQUIRE(paths.size() == 3);
    CHECK(paths[2].filename() == "strip_x80_y0.msf");
    ExtractOptions o;
    o.resolution = 8;
    o.label = "strip";
    const auto m = extract(paths, dir / "ds", o);
    REQUIRE(m.entries.size() == 3);
    CHECK(m.entries[2].id == "strip_x80_y0");
    CHECK(m.entries[2].params["crop_x"] == 80);
    CHECK(m.entries[2].label == "strip");
    CHECK(field::load_field(m.field_path(m.entries[1])).values() == field::load_field(paths[1]).values());
}

TEST_CASE("extract names, labels and errors") {
    const auto dir = scratch("extract");
    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    auto f = field::generate(field::SynthParams::make_sine(7, 12), 30, 30);
    field::store_field(f, dir / "a" / "f.msf");
    detail::write_text(dir / "b" / "f.csv", "0,1,2\n3,4,5\n6,7,9\n");
    const auto m = extract({dir / "a" / "f.msf", dir / "b" / "f.csv"}, dir / "out", {});
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].id == "f");
    CHECK(m.entries[1].id == "f~1");
    CHECK(m.entries[0].label == "field");  // MSF1 does not carry the family
    CHECK(m.entries[1].params["source_path"] == (dir / "b" / "f.csv").string());
    CHECK(raster::load_image(m.image_path(m.entries[0])).n == 64);
    CHECK_THROWS_AS(extract({dir / "missing.msf"}, dir / "out2", {}), IoError);
    CHECK_THROWS_AS(extract({}, dir / "out3", {}), ParameterError);
}

TEST_CASE("manifest validation") {
    const auto& fx = fixture();
    auto m = fx.manifest;
    auto text = manifest_to_json(m);
    CHECK(manifest_from_json(text, m.root).entries == m.entries);

    m.entries[1].id = m.entries[0].id;
    CHECK_THROWS_AS(manifest_from_json(manifest_to_json(m), m.root), FormatError);
    CHECK_THROWS_AS(save_manifest(m, fx.dir / "ds" / "dup.json"), InputError);
    m = fx.manifest;
    m.entries[0].image = "images/none.pbm";
    CHECK_THROWS_AS(save_manifest(m, fx.dir / "ds" / "broken.json"), IoError);
    CHECK_THROWS_AS(manifest_from_json("{\"version\":1}", "."), FormatError);
}

TEST_CASE("train writes a loss table and a resumable checkpoint") {
    const auto& fx = fixture();
    const auto csv = detail::read_text(fx.dir / "m.csv");
    CHECK(csv.rfind("epoch,train_loss,test_loss,lr\n1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    const auto dir = scratch("train");
    TrainCommand t;
    t.epochs = 3;
    t.latent_dim = 8;
    t.lr = 1e-3;
    t.test_fraction = 0.25;
    const auto full = train(fx.manifest, t, dir / "full.mcae", dir / "full.csv");
    CHECK(full.train_count == 30);
    CHECK(full.test_count == 10);
    CHECK(full.report.test_loss.size() == 3);

    t.epochs = 2;
    train(fx.manifest, t, dir / "half.mcae", dir / "half.csv");
    t.epochs = 3;
    t.resume = dir / "half.mcae";
    const auto rest = train(fx.manifest, t, dir / "rest.mcae", dir / "rest.csv");
    REQUIRE(rest.report.train_loss.size() == 1);
    CHECK(rest.report.train_loss[0] == full.report.train_loss[2]);
    CHECK(detail::read_file(dir / "rest.mcae") == detail::read_file(dir / "full.mcae"));
    CHECK(detail::read_text(dir / "rest.csv").find("\n3,") != std::string::npos);
}

TEST_CASE("sweep writes one loss table per run") {
    const auto dir = scratch("sweep");
    TrainCommand t;
    t.epochs = 1;
    sweep(fixture().manifest, {4, 8}, {0, 1}, t, dir);
    for (const char* name : {"loss_d4_s0.csv", "loss_d4_s1.csv", "loss_d8_s0.csv", "loss_d8_s1.csv", "summary.csv"})
        CHECK(fs::exists(dir / name));
    const auto summary = detail::read_text(dir / "summary.csv");
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
    CHECK_THROWS_AS(sweep(fixture().manifest, {}, {0}, t, dir), ParameterError);
}

TEST_CASE("latent files round trip") {
    const auto& s = fixture().latents;
    CHECK(s.ids.size() == 40);
    CHECK(s.vectors.cols == 8);
    CHECK(s.meta[7]["group"] == "00001");
    CHECK(s.meta[7]["variant"] == 2);
    const auto bytes = encode_latents(s);
    CHECK(decode_latents(bytes) == s);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_latents(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_latents(bad), FormatError);
}

TEST_CASE("encode matches the model's encoder") {
    const auto& fx = fixture();
    const auto model = nn::load_model(fx.dir / "m.mcae").model;
    const auto img = raster::load_image(fx.manifest.image_path(fx.manifest.entries[13]));
    const auto z = model.encode(nn::to_batch<float>(std::span(&img, 1)));
    // batched and single-image GEMMs may round differently in the last bit
    for (std::size_t c = 0; c < 8; ++c) CHECK(fx.latents.vectors(13, c) == doctest::Approx(z.data[c]).epsilon(1e-5));
}

TEST_CASE("project dispatches on the method") {
    const auto& s = fixture().latents;
    const auto t = project(s, {"tsne", 5.0, 4, 300});
    CHECK(t.projection.method == "tsne");
    CHECK(t.projection.seed == 4u);
    CHECK(t.points.size() == 40);
    CHECK(t.points[3].id == s.ids[3]);
    CHECK(t.points[3].label == s.labels[3]);
    const auto again = project(s, {"tsne", 5.0, 4, 300});
    CHECK(embed::to_json(again) == embed::to_json(t));
    const auto p = project(s, {"pca"});
    CHECK(p.projection.method == "pca");
    CHECK_FALSE(p.projection.perplexity.has_value());
    CHECK_THROWS_AS(project(s, {"umap"}), ParameterError);
    CHECK_THROWS_AS(project(s, {"tsne", 20.0}), ParameterError);

    const auto o = project_options_from_json(nlohmann::json::parse(R"({"method":"tsne","perplexity":40,"seed":3})"));
    CHECK(o.perplexity == 40.0);
    CHECK(o.seed == 3u);
    CHECK(o.iterations == 1000);
    CHECK_THROWS_AS(project_options_from_json(nlohmann::json::parse(R"({"seed":-1})")), ParameterError);
}

TEST_CASE("svg plot") {
    embed::Embedding2D e;
    e.projection = {"tsne", 30.0, 1, 8};
    e.points = {{"a", 0, 0, "sine", {{"x0", 0}}}, {"b", 1, 1, "blobs", {{"x0", 50}}}, {"c<", 2, 0, "sine", {{"x0", 100}}}};
    const auto svg = render_svg(e);
    CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
    CHECK(svg.find("t-SNE(30), seed 1, 3 points") != std::string::npos);
    std::size_t titles = 0;
    for (std::size_t p = 0; (p = svg.find("<title>", p)) != std::string::npos; ++p) ++titles;
    CHECK(titles == 3);
    CHECK(svg.find("<title>c&lt;</title>") != std::string::npos);
    // x spans 2 and y spans 1: uniform scale 285 from the 570 x 510 frame, y centered
    CHECK(svg.find("<circle cx=\"636\" cy=\"66\" r=\"5\" fill=\"#4e79a7\"/><text x=\"648\" y=\"70\">blobs</text>") != std::string::npos);
    CHECK(svg.find("<circle cx=\"40.00\" cy=\"447.50\" r=\"3\" fill=\"#f28e2b\"><title>a</title>") != std::string::npos);
    CHECK(render_svg(e) == svg);

    PlotOptions numeric;
    numeric.color_by = "x0";
    const auto ramp = render_svg(e, numeric);
    CHECK(ramp.find("linearGradient") != std::string::npos);
    CHECK(ramp.find("fill=\"#440154\"><title>a</title>") != std::string::npos);
    CHECK(ramp.find("fill=\"#fde725\"><title>c&lt;</title>") != std::string::npos);

    PlotOptions unknown;
    unknown.color_by = "nothing";
    CHECK(render_svg(e, unknown).find("all points") != std::string::npos);
}

TEST_CASE("HTTP service") {
    const auto& fx = fixture();
    ServiceData d;
    const auto emb = project(fx.latents, {"pca"});
    d.embedding_json = embed::to_json(emb);
    d.embedding = emb;
    d.manifest = fx.manifest;
    d.latents = fx.latents;
    Service service(std::move(d));
    const int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.run(); });
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60);

    SUBCASE("embedding is served verbatim") {
        const auto r = client.Get("/api/embedding");
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(r->body == embed::to_json(emb));
        CHECK(r->get_header_value("Content-Type") == "application/json");
        CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
    }
    SUBCASE("point metadata") {
        const auto r = client.Get("/api/points/00002-3");
        REQUIRE(r);
        CHECK(r->status == 200);
        const auto j = nlohmann::json::parse(r->body);
        CHECK(j["x"] == emb.points[13].x);
        CHECK(j["manifest"]["image"] == "images/00002-3.pbm");
        CHECK(j["meta"]["variant"] == 3);
        const auto miss = client.Get("/api/points/zzz");
        REQUIRE(miss);
        CHECK(miss->status == 404);
        CHECK(nlohmann::json::parse(miss->body).contains("error"));
    }
    SUBCASE("arc images") {
        const auto& e = fx.manifest.entries[7];
        const auto stored = raster::load_image(fx.manifest.image_path(e));
        const auto p4 = client.Get("/api/image/" + e.id + "?format=p4");
        REQUIRE(p4);
        CHECK(p4->status == 200);
        CHECK(raster::decode_p4(p4->body).bits == stored.bits);
        const auto png = client.Get("/api/image/" + e.id);
        REQUIRE(png);
        CHECK(png->get_header_value("Content-Type") == "image/png");
        CHECK(png->body == raster::encode_png(stored));
        const auto miss = client.Get("/api/image/unknown");
        REQUIRE(miss);
        CHECK(miss->status == 404);
        const auto bad = client.Get("/api/image/" + e.id + "?format=gif");
        REQUIRE(bad);
        CHECK(bad->status == 400);
    }
    SUBCASE("scalar fields") {
        const auto& e = fx.manifest.entries[4];
        const auto r = client.Get("/api/field/" + e.id);
        REQUIRE(r);
        CHECK(r->status == 200);
        const auto j = nlohmann::json::parse(r->body);
        const auto f = field::load_field(fx.manifest.field_path(e));
        CHECK(j["width"] == 40);
        CHECK(j["height"] == 40);
        CHECK(j["values"].get<std::vector<double>>() == f.values());
        CHECK(j["min"] <= j["max"]);
        const auto miss = client.Get("/api/field/unknown");
        REQUIRE(miss);
        CHECK(miss->status == 404);
    }
    SUBCASE("re-projection equals the project command") {
        const auto r = client.Post("/api/project", R"({"method":"tsne","perplexity":10,"seed":3,"iterations":250})",
                                   "application/json");
        REQUIRE(r);
        CHECK(r->status == 200);
        CHECK(r->body == embed::to_json(project(fx.latents, {"tsne", 10.0, 3, 250})));
        const auto bad = client.Post("/api/project", R"({"method":"tsne","perplexity":40})", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        const auto junk = client.Post("/api/project", "{", "application/json");
        REQUIRE(junk);
        CHECK(junk->status == 400);
    }
    SUBCASE("unknown routes and preflight") {
        const auto r = client.Get("/api/nope");
        REQUIRE(r);
        CHECK(r->status == 404);
        CHECK(nlohmann::json::parse(r->body).contains("error"));
        const auto opt = client.Options("/api/project");
        REQUIRE(opt);
        CHECK(opt->status == 204);
    }
    SUBCASE("concurrent reads") {
        std::vector<std::thread> readers;
        std::atomic<int> ok{0};
        for (int k = 0; k < 4; ++k) {
            readers.emplace_back([&, k] {
                httplib::Client c("127.0.0.1", port);
                for (int i = 0; i < 5; ++i) {
                    const auto r = c.Get("/api/points/" + fx.manifest.entries[static_cast<std::size_t>(k * 5 + i)].id);
                    if (r && r->status == 200) ++ok;
                }
            });
        }
        for (auto& t : readers) t.join();
        CHECK(ok == 20);
    }
    service.stop();
    server.join();
}

TEST_CASE("service without latents refuses re-projection") {
    const auto& fx = fixture();
    ServiceData d;
    d.embedding = project(fx.latents, {"pca"});
    d.embedding_json = embed::to_json(d.embedding);
    d.manifest = fx.manifest;
    Service service(std::move(d));
    const int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.run(); });
    httplib::Client client("127.0.0.1", port);
    const auto r = client.Post("/api/project", "{}", "application/json");
    REQUIRE(r);
    CHECK(r->status == 409);
    service.stop();
    server.join();
}
