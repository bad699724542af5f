#include <cmath>

#include "json.hpp"
#include "msp/error.hpp"
#include "msp/nn.hpp"
#include "msp/rng.hpp"

namespace msp::nn {

std::vector<Stage> AutoencoderConfig::default_stages(std::size_t resolution) {
    if (resolution == 50) return {{16, 2}, {32, 1}, {64, 5}, {128, 1}};
    if (resolution >= 16 && resolution % 16 == 0) return {{16, 2}, {32, 2}, {64, 2}, {128, 2}};
    throw ParameterError("no default channel plan for resolution " + std::to_string(resolution) +
                         " (use a multiple of 16, or 50)");
}

AutoencoderConfig AutoencoderConfig::defaults(std::size_t resolution, std::size_t latent_dim, std::uint64_t seed) {
    AutoencoderConfig c;
    c.resolution = resolution;
    c.latent_dim = latent_dim;
    c.stages = default_stages(resolution);
    c.seed = seed;
    c.validate();
    return c;
}

void AutoencoderConfig::validate() const {
    if (resolution < 1) throw ParameterError("resolution must be >= 1");
    if (latent_dim < 1) throw ParameterError("latent_dim must be >= 1");
    if (stages.empty()) throw ParameterError("channel plan is empty");
    std::size_t side = resolution;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const auto& s = stages[i];
        if (s.channels < 1 || s.stride < 1) throw ParameterError("stage " + std::to_string(i) + " needs channels, stride >= 1");
        if (side % s.stride != 0) {
            throw ParameterError("stage " + std::to_string(i) + ": side " + std::to_string(side) +
                                 " not divisible by stride " + std::to_string(s.stride));
        }
        side /= s.stride;
    }
}

std::string AutoencoderConfig::to_json() const {
    nlohmann::json j;
    j["resolution"] = resolution;
    j["latent_dim"] = latent_dim;
    j["seed"] = seed;
    j["zero_init_output"] = zero_init_output;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) j["stages"].push_back({{"channels", s.channels}, {"stride", s.stride}});
    return j.dump();
}

AutoencoderConfig AutoencoderConfig::from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        AutoencoderConfig c;
        c.resolution = j.at("resolution").get<std::size_t>();
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.zero_init_output = j.value("zero_init_output", true);
        for (const auto& s : j.at("stages")) c.stages.push_back({s.at("channels").get<std::size_t>(), s.at("stride").get<std::size_t>()});
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad autoencoder config: ") + e.what());
    }
}

namespace {

// Fan-in scaled uniform in [-sqrt(6 / fan_in), sqrt(6 / fan_in)], biases zero.
template <typename T>
void init_uniform(Layer<T>& layer, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& w : layer.weight) w = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

template <typename T>
Autoencoder<T>::Autoencoder(AutoencoderConfig config) : config_(std::move(config)) {
    config_.validate();
    Shape s{1, config_.resolution, config_.resolution};
    auto push = [&](std::unique_ptr<Layer<T>> l) {
        s = l->output_shape();
        layers_.push_back(std::move(l));
    };
    std::vector<Shape> stage_inputs;
    for (const auto& st : config_.stages) {
        stage_inputs.push_back(s);
        push(std::make_unique<Conv3x3<T>>(s, st.channels, st.stride));
        push(std::make_unique<ReLU<T>>(s));
    }
    const Shape coarse = s;
    const Shape latent{config_.latent_dim, 1, 1};
    push(std::make_unique<Linear<T>>(s, latent));
    split_ = layers_.size();

    push(std::make_unique<Linear<T>>(latent, coarse));
    push(std::make_unique<ReLU<T>>(s));
    for (std::size_t i = config_.stages.size(); i-- > 0;) {
        if (config_.stages[i].stride > 1) push(std::make_unique<Upsample<T>>(s, config_.stages[i].stride));
        push(std::make_unique<Conv3x3<T>>(s, stage_inputs[i].c, 1));
        if (i > 0) push(std::make_unique<ReLU<T>>(s));
    }
    push(std::make_unique<Sigmoid<T>>(s));

    std::size_t last_param = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (!layers_[i]->weight.empty()) last_param = i;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto& l = *layers_[i];
        if (l.weight.empty()) continue;
        if (i == last_param && config_.zero_init_output) continue;
        init_uniform(l, l.weight.size() / l.bias.size(), derive_seed(config_.seed, i));
    }
}

template <typename T>
std::size_t Autoencoder<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->weight.size() + l->bias.size();
    return n;
}

template <typename T>
std::vector<Tensor<T>> Autoencoder<T>::run(const Tensor<T>& in, std::size_t first, std::size_t last) const {
    std::vector<Tensor<T>> acts;
    acts.reserve(last - first + 1);
    acts.push_back(in);
    for (std::size_t i = first; i < last; ++i) {
        Tensor<T> out;
        layers_[i]->forward(acts.back(), out);
        acts.push_back(std::move(out));
    }
    return acts;
}

template <typename T>
Tensor<T> Autoencoder<T>::encode(const Tensor<T>& images) const {
    return std::move(run(images, 0, split_).back());
}

template <typename T>
Tensor<T> Autoencoder<T>::decode(const Tensor<T>& latents) const {
    return std::move(run(latents, split_, layers_.size()).back());
}

template <typename T>
double Autoencoder<T>::accumulate_gradient(const Tensor<T>& images) {
    // Logistic output and BCE are differentiated together:
    // d(loss)/d(logit) = (a - b) / N, zero where a is clamped.
    const std::size_t last = layers_.size() - 1;
    auto acts = run(images, 0, last);
    Tensor<T> a;
    layers_[last]->forward(acts.back(), a);
    const double loss = bce<T>(a.data, images.data);

    Tensor<T> grad(a.batch, a.shape);
    const T inv_n = T(1) / static_cast<T>(a.data.size());
    const T lo = static_cast<T>(kBceEps), hi = static_cast<T>(1.0 - kBceEps);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const T p = a.data[i];
        grad.data[i] = (p > lo && p < hi) ? (p - images.data[i]) * inv_n : T(0);
    }
    for (std::size_t i = last; i-- > 0;) {
        Tensor<T> din;
        layers_[i]->backward(acts[i], acts[i + 1], grad, i > 0 ? &din : nullptr);
        grad = std::move(din);
    }
    return loss;
}

template <typename T>
void Autoencoder<T>::zero_grad() {
    for (auto& l : layers_) l->zero_grad();
}

template <typename T>
void Autoencoder<T>::for_each_parameter(const std::function<void(Buffer<T>&, Buffer<T>&)>& fn) {
    for (auto& l : layers_) {
        if (l->weight.empty()) continue;
        fn(l->weight, l->grad_weight);
        fn(l->bias, l->grad_bias);
    }
}

template <typename T>
double bce(std::span<const T> predicted, std::span<const T> target) {
    if (predicted.size() != target.size()) {
        throw InputError("bce: " + std::to_string(predicted.size()) + " predictions vs " + std::to_string(target.size()) +
                         " targets");
    }
    if (predicted.empty()) throw InputError("bce: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double a = std::clamp(static_cast<double>(predicted[i]), kBceEps, 1.0 - kBceEps);
        const double b = static_cast<double>(target[i]);
        sum -= b * std::log(a) + (1.0 - b) * std::log(1.0 - a);
    }
    return sum / static_cast<double>(predicted.size());
}

template <typename T>
Tensor<T> to_batch(std::span<const raster::ArcImage* const> images) {
    if (images.empty()) throw InputError("empty image batch");
    const std::size_t n = images[0]->n;
    Tensor<T> t(images.size(), {1, n, n});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->n != n || images[i]->bits.size() != n * n) {
            throw InputError("mixed image resolutions: " + std::to_string(images[i]->n) + " vs " + std::to_string(n));
        }
        std::transform(images[i]->bits.begin(), images[i]->bits.end(), t.sample(i), [](std::uint8_t b) { return T(b ? 1 : 0); });
    }
    return t;
}

template <typename T>
Tensor<T> to_batch(std::span<const raster::ArcImage> images) {
    std::vector<const raster::ArcImage*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& im : images) ptrs.push_back(&im);
    return to_batch<T>(std::span<const raster::ArcImage* const>(ptrs));
}

raster::GrayImage to_gray(const Tensor<float>& batch, std::size_t index) {
    if (batch.shape.c != 1 || batch.shape.h != batch.shape.w) throw InputError("reconstruction must be 1 x n x n");
    raster::GrayImage g;
    g.n = batch.shape.h;
    g.values.assign(batch.sample(index), batch.sample(index) + batch.shape.size());
    return g;
}

template class Autoencoder<float>;
template class Autoencoder<double>;
template double bce<float>(std::span<const float>, std::span<const float>);
template double bce<double>(std::span<const double>, std::span<const double>);
template Tensor<float> to_batch<float>(std::span<const raster::ArcImage>);
template Tensor<double> to_batch<double>(std::span<const raster::ArcImage>);
template Tensor<float> to_batch<float>(std::span<const raster::ArcImage* const>);
template Tensor<double> to_batch<double>(std::span<const raster::ArcImage* const>);

}  // namespace msp::nn
