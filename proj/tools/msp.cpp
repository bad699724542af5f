// msp: build, train and explore visual spaces of Morse complexes.

#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/morse.hpp"

namespace fs = std::filesystem;
using namespace msp;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    bool verbose = false;

    cli::Log log() const {
        if (!verbose) return {};
        return [](const std::string& s) { std::cerr << s << '\n'; };
    }
};

cli::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

// "64x64" or "64"
std::pair<std::size_t, std::size_t> parse_window(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) {
            const auto v = std::stoul(s);
            return {v, v};
        }
        return {std::stoul(s.substr(0, x)), std::stoul(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw ParameterError("window must look like 50x50, got '" + s + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual spaces of Morse complexes: arc images, autoencoder latents and 2D projections"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for generation, training and projection")->capture_default_str();
    app.add_option("--jobs", g.jobs, "Worker threads for dataset commands")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_flag("--verbose", g.verbose, "Progress on stderr");

    // gen-synth
    cli::GenSynthOptions gen;
    fs::path gen_out;
    auto* c_gen = app.add_subcommand("gen-synth", "Synthetic fields (blobs, sine, rotated sine) with noisy variants, as arc images");
    c_gen->add_option("--count", gen.count, "Base functions")->capture_default_str();
    c_gen->add_option("--out", gen_out, "Output directory")->required();
    c_gen->add_option("--resolution", gen.resolution, "Arc image side")->capture_default_str();
    c_gen->add_option("--variants", gen.variants, "Noisy variants per base function")->capture_default_str();
    c_gen->add_option("--noise", gen.noise, "Uniform noise magnitude")->capture_default_str();
    c_gen->add_option("--simplify", gen.simplify, "Persistence threshold")->capture_default_str();
    c_gen->add_option("--field-size", gen.field_size, "Field grid side")->capture_default_str();

    // extract
    cli::ExtractOptions ext;
    std::vector<fs::path> ext_fields;
    fs::path ext_out, ext_arcs;
    auto* c_ext = app.add_subcommand("extract", "Arc images for existing MSF1 or CSV fields");
    c_ext->add_option("fields", ext_fields, "Field files")->required();
    c_ext->add_option("--out", ext_out, "Output directory")->required();
    c_ext->add_option("--simplify", ext.simplify, "Persistence threshold")->capture_default_str();
    c_ext->add_option("--resolution", ext.resolution, "Arc image side")->capture_default_str();
    c_ext->add_option("--label", ext.label, "Label for fields without a family");
    c_ext->add_option("--arcs-json", ext_arcs, "Also write each field's separatrix polylines as JSON here");

    // crop
    fs::path crop_field, crop_out;
    std::string crop_window = "50x50";
    std::size_t crop_stride = 0, crop_sx = 0, crop_sy = 0;
    auto* c_crop = app.add_subcommand("crop", "Cut a field into windows");
    c_crop->add_option("field", crop_field, "Field file")->required();
    c_crop->add_option("--window", crop_window, "Window size WxH")->capture_default_str();
    c_crop->add_option("--stride", crop_stride, "Step in both directions (default: window size)");
    c_crop->add_option("--stride-x", crop_sx, "Horizontal step");
    c_crop->add_option("--stride-y", crop_sy, "Vertical step");
    c_crop->add_option("--out", crop_out, "Output directory")->required();

    // train
    cli::TrainCommand tr;
    fs::path tr_manifest, tr_out, tr_csv, tr_resume;
    auto* c_train = app.add_subcommand("train", "Train the autoencoder on a dataset");
    c_train->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    c_train->add_option("--out", tr_out, "Checkpoint path")->required();
    c_train->add_option("--loss-csv", tr_csv, "Loss table (default: <out>.loss.csv)");
    c_train->add_option("--latent-dim", tr.latent_dim, "Latent size")->capture_default_str();
    c_train->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
    c_train->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
    c_train->add_option("--batch", tr.batch_size, "Batch size")->capture_default_str();
    c_train->add_option("--patience", tr.patience, "Bad epochs before the rate halves")->capture_default_str();
    c_train->add_option("--min-delta", tr.min_delta, "Smallest loss drop that counts as progress")->capture_default_str();
    c_train->add_option("--test-fraction", tr.test_fraction, "Held-out share of the dataset")->capture_default_str();
    c_train->add_option("--resume", tr_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);

    // sweep
    cli::TrainCommand sw;
    fs::path sw_manifest, sw_out;
    std::vector<std::size_t> sw_dims{16, 32, 64, 128};
    std::vector<std::uint64_t> sw_seeds{0};
    auto* c_sweep = app.add_subcommand("sweep", "Loss curves over latent sizes and seeds");
    c_sweep->add_option("--manifest", sw_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    c_sweep->add_option("--out", sw_out, "Output directory")->required();
    c_sweep->add_option("--latent-dims", sw_dims, "Latent sizes")->delimiter(',')->capture_default_str();
    c_sweep->add_option("--seeds", sw_seeds, "Seeds")->delimiter(',')->capture_default_str();
    c_sweep->add_option("--epochs", sw.epochs, "Epochs per run")->capture_default_str();
    c_sweep->add_option("--lr", sw.lr, "Initial learning rate")->capture_default_str();
    c_sweep->add_option("--batch", sw.batch_size, "Batch size")->capture_default_str();
    c_sweep->add_option("--test-fraction", sw.test_fraction, "Held-out share of the dataset")->capture_default_str();

    // encode
    fs::path en_ckpt, en_manifest, en_out;
    auto* c_enc = app.add_subcommand("encode", "Latent vectors for every image of a dataset");
    c_enc->add_option("--checkpoint", en_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    c_enc->add_option("--manifest", en_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    c_enc->add_option("--out", en_out, "Latent file")->required();

    // project
    cli::ProjectOptions pr;
    fs::path pr_latents, pr_out;
    auto* c_proj = app.add_subcommand("project", "2D embedding of latent vectors");
    c_proj->add_option("--latents", pr_latents, "Latent file")->required()->check(CLI::ExistingFile);
    c_proj->add_option("--method", pr.method, "tsne or pca")->capture_default_str()->check(CLI::IsMember({"tsne", "pca"}));
    c_proj->add_option("--perplexity", pr.perplexity, "t-SNE perplexity")->capture_default_str();
    c_proj->add_option("--iterations", pr.iterations, "t-SNE iterations")->capture_default_str();
    c_proj->add_option("--out", pr_out, "Embedding JSON")->required();

    // plot
    cli::PlotOptions pl;
    fs::path pl_emb, pl_out;
    auto* c_plot = app.add_subcommand("plot", "SVG scatterplot of an embedding");
    c_plot->add_option("--embedding", pl_emb, "Embedding JSON")->required()->check(CLI::ExistingFile);
    c_plot->add_option("--color-by", pl.color_by, "label or a meta key")->capture_default_str();
    c_plot->add_option("--width", pl.width, "Width in px")->capture_default_str();
    c_plot->add_option("--height", pl.height, "Height in px")->capture_default_str();
    c_plot->add_option("--out", pl_out, "SVG path")->required();

    // serve
    fs::path sv_emb, sv_manifest, sv_latents;
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    auto* c_serve = app.add_subcommand("serve", "HTTP API for the explorer");
    c_serve->add_option("--embedding", sv_emb, "Embedding JSON")->required()->check(CLI::ExistingFile);
    c_serve->add_option("--manifest", sv_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
    c_serve->add_option("--latents", sv_latents, "Latent file, enables re-projection")->check(CLI::ExistingFile);
    c_serve->add_option("--host", sv_host, "Bind address")->capture_default_str();
    c_serve->add_option("--port", sv_port, "Port (0 picks one)")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_gen) {
            gen.seed = g.seed;
            gen.jobs = g.jobs;
            gen.log = g.log();
            const auto m = cli::gen_synth(gen, gen_out);
            std::cout << m.entries.size() << " images in " << (gen_out / "manifest.json").string() << '\n';
        } else if (*c_ext) {
            ext.jobs = g.jobs;
            ext.log = g.log();
            const auto m = cli::extract(ext_fields, ext_out, ext);
            if (!ext_arcs.empty()) {
                fs::create_directories(ext_arcs);
                for (const auto& e : m.entries) {
                    const auto arcs = morse::field_arcs(field::load_field(m.field_path(e)), ext.simplify);
                    detail::write_text(ext_arcs / (e.id + ".arcs.json"), morse::arcs_to_json(arcs) + "\n");
                }
            }
            std::cout << m.entries.size() << " images in " << (ext_out / "manifest.json").string() << '\n';
        } else if (*c_crop) {
            const auto [w, h] = parse_window(crop_window);
            const std::size_t sx = crop_sx ? crop_sx : (crop_stride ? crop_stride : w);
            const std::size_t sy = crop_sy ? crop_sy : (crop_stride ? crop_stride : h);
            const auto paths = cli::crop(crop_field, w, h, sx, sy, crop_out);
            for (const auto& p : paths) std::cout << p.string() << '\n';
        } else if (*c_train) {
            tr.seed = g.seed;
            tr.log = g.log();
            if (!tr_resume.empty()) tr.resume = tr_resume;
            if (tr_csv.empty()) tr_csv = fs::path(tr_out.string() + ".loss.csv");
            const auto r = cli::train(cli::load_manifest(tr_manifest), tr, tr_out, tr_csv);
            std::printf("%zu training images, %zu held out; final train loss %.6f in %.1f s\n", r.train_count, r.test_count,
                        r.report.train_loss.empty() ? 0.0 : r.report.train_loss.back(), r.report.seconds);
        } else if (*c_sweep) {
            sw.log = g.log();
            cli::sweep(cli::load_manifest(sw_manifest), sw_dims, sw_seeds, sw, sw_out);
            std::cout << (sw_out / "summary.csv").string() << '\n';
        } else if (*c_enc) {
            const auto ck = nn::load_model(en_ckpt);
            const auto s = cli::encode(ck.model, cli::load_manifest(en_manifest));
            cli::save_latents(s, en_out);
            std::cout << s.ids.size() << " latent vectors of size " << s.vectors.cols << '\n';
        } else if (*c_proj) {
            pr.seed = g.seed;
            embed::export_embedding(cli::project(cli::load_latents(pr_latents), pr), pr_out);
        } else if (*c_plot) {
            detail::write_text(pl_out, cli::render_svg(embed::import_embedding(pl_emb), pl));
        } else if (*c_serve) {
            cli::ServiceData d;
            d.embedding_json = detail::read_text(sv_emb);
            d.embedding = embed::from_json(d.embedding_json);
            d.manifest = cli::load_manifest(sv_manifest);
            if (!sv_latents.empty()) d.latents = cli::load_latents(sv_latents);
            cli::Service service(std::move(d));
            const int port = service.bind(sv_host, sv_port);
            std::cout << "serving on http://" << sv_host << ":" << port << std::endl;
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.run();
            g_service = nullptr;
        }
    } catch (const ParameterError& e) {
        std::cerr << "msp: invalid argument: " << e.what() << '\n';
        return 2;
    } catch (const InputError& e) {
        std::cerr << "msp: bad input: " << e.what() << '\n';
        return 3;
    } catch (const FormatError& e) {
        std::cerr << "msp: bad file: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "msp: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "msp: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
