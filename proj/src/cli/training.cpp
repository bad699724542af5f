#include <cmath>
#include <algorithm>
#include <cstdio>
#include <numeric>

#include "msp/cli.hpp"
#include "msp/detail/bytes.hpp"
#include "msp/error.hpp"
#include "msp/rng.hpp"

namespace msp::cli {

namespace {

std::string g9(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

std::vector<raster::ArcImage> load_images(const DatasetManifest& m) {
    std::vector<raster::ArcImage> images;
    images.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        images.push_back(raster::load_image(m.image_path(e)));
        if (images.back().n != e.resolution) {
            throw InputError("image " + e.id + " is " + std::to_string(images.back().n) + " pixels wide, manifest says " +
                             std::to_string(e.resolution));
        }
    }
    return images;
}

std::string loss_csv(const nn::TrainReport& r, std::size_t first_epoch) {
    std::string out = "epoch,train_loss,test_loss,lr\n";
    for (std::size_t i = 0; i < r.train_loss.size(); ++i) {
        out += std::to_string(first_epoch + i) + "," + g9(r.train_loss[i]) + "," + (i < r.test_loss.size() ? g9(r.test_loss[i]) : "") +
               "," + g9(r.lr[i]) + "\n";
    }
    return out;
}

TrainOutcome train(const DatasetManifest& m, const TrainCommand& o, const fs::path& checkpoint, const fs::path& csv) {
    if (m.entries.empty()) throw InputError("manifest has no entries");
    if (!(o.test_fraction >= 0.0 && o.test_fraction < 1.0)) throw ParameterError("test fraction must be in [0, 1)");
    const std::size_t n = m.entries.front().resolution;
    auto images = load_images(m);

    // Held-out entries are a seeded random subset, kept in manifest order.
    std::vector<raster::ArcImage> train_set, test_set;
    std::vector<bool> held(images.size(), false);
    const auto n_test = static_cast<std::size_t>(std::floor(o.test_fraction * static_cast<double>(images.size())));
    if (n_test > 0) {
        std::vector<std::size_t> order(images.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng(derive_seed(o.seed, 0x7e57)).shuffle(order.begin(), order.end());
        for (std::size_t k = 0; k < n_test; ++k) held[order[k]] = true;
    }
    for (std::size_t i = 0; i < images.size(); ++i) (held[i] ? test_set : train_set).push_back(std::move(images[i]));

    nn::TrainState state;
    std::optional<nn::Autoencoder<float>> model;
    if (o.resume) {
        auto ck = nn::load_model(*o.resume);
        if (!ck.state) throw InputError("checkpoint " + o.resume->string() + " has no optimizer state to resume from");
        model.emplace(std::move(ck.model));
        state = *ck.state;
    } else {
        model.emplace(nn::AutoencoderConfig::defaults(n, o.latent_dim, o.seed));
    }

    nn::TrainOptions t;
    t.epochs = o.epochs;
    t.batch_size = o.batch_size;
    t.lr = o.lr;
    t.min_delta = o.min_delta;
    t.patience = o.patience;
    t.shuffle_seed = o.seed;
    if (o.log) {
        t.on_epoch = [&](std::size_t epoch, double train_loss, double test_loss, double lr) {
            o.log("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(o.epochs) + " train " + g9(train_loss) +
                  (std::isnan(test_loss) ? std::string() : " test " + g9(test_loss)) + " lr " + g9(lr));
        };
    }
    TrainOutcome out;
    out.train_count = train_set.size();
    out.test_count = test_set.size();
    const std::size_t first_epoch = state.epoch + 1;
    out.report = nn::train(*model, train_set, t, test_set, &state);
    nn::save_model(*model, checkpoint, &state);
    detail::write_text(csv, loss_csv(out.report, first_epoch));
    return out;
}

void sweep(const DatasetManifest& m, const std::vector<std::size_t>& latent_dims, const std::vector<std::uint64_t>& seeds,
           const TrainCommand& base, const fs::path& out_dir) {
    if (latent_dims.empty() || seeds.empty()) throw ParameterError("sweep needs at least one latent size and one seed");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
    std::string summary = "latent_dim,seed,epochs,final_train_loss,final_test_loss,best_train_loss\n";
    for (const auto d : latent_dims) {
        for (const auto s : seeds) {
            TrainCommand c = base;
            c.latent_dim = d;
            c.seed = s;
            c.resume.reset();
            const std::string tag = "d" + std::to_string(d) + "_s" + std::to_string(s);
            if (c.log) c.log("sweep run " + tag);
            const auto r = train(m, c, out_dir / ("model_" + tag + ".mcae"), out_dir / ("loss_" + tag + ".csv")).report;
            const double best = *std::min_element(r.train_loss.begin(), r.train_loss.end());
            summary += std::to_string(d) + "," + std::to_string(s) + "," + std::to_string(r.train_loss.size()) + "," +
                       g9(r.train_loss.back()) + "," + (r.test_loss.empty() ? "" : g9(r.test_loss.back())) + "," +
                       g9(best) + "\n";
        }
    }
    detail::write_text(out_dir / "summary.csv", summary);
}

}  // namespace msp::cli
