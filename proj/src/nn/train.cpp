#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "msp/error.hpp"
#include "msp/nn.hpp"
#include "msp/rng.hpp"

namespace msp::nn {

void Adam::restore(std::uint64_t steps, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v) {
    if (m.size() != v.size()) throw FormatError("adam moment count mismatch");
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

void Adam::step(Autoencoder<float>& model, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(p_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(p_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(p_.beta1), b2 = static_cast<float>(p_.beta2);
    const auto lr_f = static_cast<float>(lr), eps = static_cast<float>(p_.eps);
    const auto ic1 = static_cast<float>(1.0 / c1), ic2 = static_cast<float>(1.0 / c2);
    std::size_t k = 0;
    model.for_each_parameter([&](Buffer<float>& w, Buffer<float>& g) {
        if (k == m_.size()) {
            m_.emplace_back(w.size(), 0.0f);
            v_.emplace_back(w.size(), 0.0f);
        }
        auto& m = m_[k];
        auto& v = v_[k];
        if (m.size() != w.size()) throw ParameterError("adam state does not match the model");
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const float mh = m[i] * ic1, vh = v[i] * ic2;
            w[i] -= lr_f * mh / (std::sqrt(vh) + eps);
        }
        ++k;
    });
}

double PlateauSchedule::update(double epoch_loss, double lr) {
    const bool improved = !has_previous || epoch_loss <= previous - min_delta;
    previous = epoch_loss;
    has_previous = true;
    if (improved) {
        bad_epochs = 0;
        return lr;
    }
    if (++bad_epochs >= patience) {
        bad_epochs = 0;
        return lr * factor;
    }
    return lr;
}

namespace {

void check_dataset(std::span<const raster::ArcImage> data, std::size_t n, const char* what) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].n != n || data[i].bits.size() != n * n) {
            throw InputError(std::string(what) + " image " + std::to_string(i) + " has resolution " +
                             std::to_string(data[i].n) + ", model expects " + std::to_string(n));
        }
    }
}

}  // namespace

double evaluate(const Autoencoder<float>& model, std::span<const raster::ArcImage> data, std::size_t batch_size) {
    if (data.empty()) throw InputError("evaluate: empty data set");
    check_dataset(data, model.config().resolution, "evaluation");
    double sum = 0.0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const auto part = data.subspan(start, std::min(batch_size, data.size() - start));
        const auto x = to_batch<float>(part);
        const auto y = model.forward(x);
        sum += bce<float>(y.data, x.data) * static_cast<double>(part.size());
    }
    return sum / static_cast<double>(data.size());
}

TrainReport train(Autoencoder<float>& model, std::span<const raster::ArcImage> data, const TrainOptions& options,
                  std::span<const raster::ArcImage> test, TrainState* state) {
    if (data.empty()) throw InputError("training set is empty");
    if (options.batch_size < 1) throw ParameterError("batch size must be >= 1");
    if (!(options.lr > 0.0)) throw ParameterError("learning rate must be > 0");
    check_dataset(data, model.config().resolution, "training");
    check_dataset(test, model.config().resolution, "test");

    TrainState local;
    TrainState& st = state ? *state : local;
    if (st.epoch == 0) {
        st.lr = options.lr;
        st.schedule = PlateauSchedule{};
    }
    st.schedule.min_delta = options.min_delta;
    st.schedule.patience = options.patience;

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    std::vector<std::size_t> order(data.size());
    std::vector<const raster::ArcImage*> batch;
    for (; st.epoch < options.epochs; ++st.epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(options.shuffle_seed, st.epoch));
        rng.shuffle(order.begin(), order.end());

        double sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);
            const auto x = to_batch<float>(std::span<const raster::ArcImage* const>(batch));
            model.zero_grad();
            sum += model.accumulate_gradient(x) * static_cast<double>(batch.size());
            st.optimizer.step(model, st.lr);
        }
        const double train_loss = sum / static_cast<double>(data.size());
        const double test_loss = test.empty() ? std::numeric_limits<double>::quiet_NaN() : evaluate(model, test);
        report.train_loss.push_back(train_loss);
        if (!test.empty()) report.test_loss.push_back(test_loss);
        report.lr.push_back(st.lr);
        model.iteration = st.epoch + 1;
        if (options.on_epoch) options.on_epoch(st.epoch, train_loss, test_loss, st.lr);
        st.lr = st.schedule.update(train_loss, st.lr);
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace msp::nn
