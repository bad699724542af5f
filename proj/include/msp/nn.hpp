#pragma once

// Convolutional autoencoder over arc images, with hand-written backprop.
//
// Layers work on batched NCHW tensors. Everything is templated on the
// scalar type: float for training and inference, double for gradient checks.
// Only float models can be checkpointed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msp/raster.hpp"

namespace msp::nn {

/// 64-byte aligned storage. Vectorized kernels pick their summation order
/// from the alignment of the data, so fixed alignment keeps results
/// reproducible across runs.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

struct Shape {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t size() const noexcept { return c * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
struct Tensor {
    std::size_t batch = 0;
    Shape shape;
    Buffer<T> data;

    Tensor() = default;
    Tensor(std::size_t batch, Shape shape, T fill = T(0)) : batch(batch), shape(shape), data(batch * shape.size(), fill) {}

    T* sample(std::size_t b) noexcept { return data.data() + b * shape.size(); }
    const T* sample(std::size_t b) const noexcept { return data.data() + b * shape.size(); }
};

enum class LayerKind { conv, linear, relu, upsample, sigmoid };
std::string to_string(LayerKind k);

/// A differentiable map between fixed shapes. Parameterised layers own a
/// weight and a bias array plus gradient accumulators of the same sizes.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const noexcept = 0;
    virtual Shape output_shape() const noexcept = 0;
    virtual Shape input_shape() const noexcept = 0;

    virtual void forward(const Tensor<T>& in, Tensor<T>& out) const = 0;
    /// Accumulates parameter gradients and writes d(loss)/d(in) when din is
    /// not null. `out` is the value forward produced for `in`.
    virtual void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) = 0;

    /// Weight shape as stored, e.g. {out, in, 3, 3} for a convolution.
    virtual std::vector<std::size_t> weight_shape() const { return {}; }

    Buffer<T> weight, bias, grad_weight, grad_bias;

    void zero_grad();
};

/// 3x3 convolution, padding 1. Weight layout [out][in][ky][kx].
template <typename T>
class Conv3x3 final : public Layer<T> {
public:
    Conv3x3(Shape in, std::size_t out_channels, std::size_t stride);
    LayerKind kind() const noexcept override { return LayerKind::conv; }
    Shape input_shape() const noexcept override { return in_; }
    Shape output_shape() const noexcept override { return out_; }
    void forward(const Tensor<T>& in, Tensor<T>& out) const override;
    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override;
    std::vector<std::size_t> weight_shape() const override { return {out_.c, in_.c, 3, 3}; }
    std::size_t stride() const noexcept { return stride_; }

private:
    void im2col(const T* src, T* col) const;
    void col2im(const T* col, T* dst) const;
    Shape in_, out_;
    std::size_t stride_;
};

/// Fully connected layer on the flattened input. Weight layout [out][in].
template <typename T>
class Linear final : public Layer<T> {
public:
    Linear(Shape in, Shape out);
    LayerKind kind() const noexcept override { return LayerKind::linear; }
    Shape input_shape() const noexcept override { return in_; }
    Shape output_shape() const noexcept override { return out_; }
    void forward(const Tensor<T>& in, Tensor<T>& out) const override;
    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override;
    std::vector<std::size_t> weight_shape() const override { return {out_.size(), in_.size()}; }

private:
    Shape in_, out_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    explicit ReLU(Shape s) : s_(s) {}
    LayerKind kind() const noexcept override { return LayerKind::relu; }
    Shape input_shape() const noexcept override { return s_; }
    Shape output_shape() const noexcept override { return s_; }
    void forward(const Tensor<T>& in, Tensor<T>& out) const override;
    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override;

private:
    Shape s_;
};

/// Bilinear upsampling by an integer factor, half-pixel centers, edge clamped.
template <typename T>
class Upsample final : public Layer<T> {
public:
    Upsample(Shape in, std::size_t factor);
    LayerKind kind() const noexcept override { return LayerKind::upsample; }
    Shape input_shape() const noexcept override { return in_; }
    Shape output_shape() const noexcept override { return out_; }
    void forward(const Tensor<T>& in, Tensor<T>& out) const override;
    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override;
    std::size_t factor() const noexcept { return factor_; }

private:
    struct Tap {
        std::size_t i0, i1;
        T frac;
    };
    static std::vector<Tap> taps(std::size_t n, std::size_t factor);
    Shape in_, out_;
    std::size_t factor_;
    std::vector<Tap> tx_, ty_;
};

/// Logistic function 1 / (1 + exp(-x)).
template <typename T>
class Sigmoid final : public Layer<T> {
public:
    explicit Sigmoid(Shape s) : s_(s) {}
    LayerKind kind() const noexcept override { return LayerKind::sigmoid; }
    Shape input_shape() const noexcept override { return s_; }
    Shape output_shape() const noexcept override { return s_; }
    void forward(const Tensor<T>& in, Tensor<T>& out) const override;
    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override;

private:
    Shape s_;
};

struct Stage {
    std::size_t channels = 0;
    std::size_t stride = 1;
    friend bool operator==(const Stage&, const Stage&) = default;
};

struct AutoencoderConfig {
    std::size_t resolution = 64;
    std::size_t latent_dim = 64;
    std::vector<Stage> stages;  ///< encoder convolutions; the decoder mirrors them
    std::uint64_t seed = 0;
    bool zero_init_output = true;  ///< start with every output at 0.5

    /// Stride-2 plan 16-32-64-128 when n % 16 == 0; 50 gets
    /// 16/2, 32/1, 64/5, 128/1 (down to 5x5).
    static std::vector<Stage> default_stages(std::size_t resolution);
    static AutoencoderConfig defaults(std::size_t resolution, std::size_t latent_dim, std::uint64_t seed = 0);

    /// Throws ParameterError unless the plan maps n down and back up exactly.
    void validate() const;

    std::string to_json() const;
    static AutoencoderConfig from_json(const std::string& text);

    friend bool operator==(const AutoencoderConfig&, const AutoencoderConfig&) = default;
};

/// Encoder: (conv, ReLU) per stage, then a linear map to the latent.
/// Decoder: linear map + ReLU back to the coarsest grid, then per stage in
/// reverse an upsample by its stride and a conv, ReLU after every conv except
/// the last, and the logistic output.
template <typename T>
class Autoencoder {
public:
    explicit Autoencoder(AutoencoderConfig config);

    const AutoencoderConfig& config() const noexcept { return config_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    /// Index of the first decoder layer.
    std::size_t latent_layer() const noexcept { return split_; }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
    std::size_t parameter_count() const;

    /// Runs layers [first, last) and returns every intermediate value,
    /// acts[0] = in and acts.back() = result.
    std::vector<Tensor<T>> run(const Tensor<T>& in, std::size_t first, std::size_t last) const;

    Tensor<T> encode(const Tensor<T>& images) const;
    Tensor<T> decode(const Tensor<T>& latents) const;
    Tensor<T> forward(const Tensor<T>& images) const { return decode(encode(images)); }

    /// Mean BCE of the reconstruction against binary targets; adds the
    /// gradient to each layer's accumulators. Gradients are not zeroed.
    double accumulate_gradient(const Tensor<T>& images);

    void zero_grad();
    void for_each_parameter(const std::function<void(Buffer<T>& value, Buffer<T>& grad)>& fn);

    std::uint64_t iteration = 0;

private:
    AutoencoderConfig config_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::size_t split_ = 0;
};

/// Mean binary cross entropy with a clamped to [eps, 1 - eps].
inline constexpr double kBceEps = 1e-7;
template <typename T>
double bce(std::span<const T> predicted, std::span<const T> target);

/// Images as a batch of shape {1, n, n}; throws InputError on mixed sizes.
template <typename T>
Tensor<T> to_batch(std::span<const raster::ArcImage> images);
template <typename T>
Tensor<T> to_batch(std::span<const raster::ArcImage* const> images);
raster::GrayImage to_gray(const Tensor<float>& batch, std::size_t index);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction, one moment pair per parameter array.
class Adam {
public:
    explicit Adam(AdamParams p = {}) : p_(p) {}
    void step(Autoencoder<float>& model, double lr);

    std::uint64_t steps() const noexcept { return t_; }
    AdamParams params() const noexcept { return p_; }
    std::vector<std::vector<float>>& first_moments() noexcept { return m_; }
    std::vector<std::vector<float>>& second_moments() noexcept { return v_; }
    void restore(std::uint64_t steps, std::vector<std::vector<float>> m, std::vector<std::vector<float>> v);

private:
    AdamParams p_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

/// Halve the rate after `patience` epochs in a row that each fail to improve
/// on the epoch before by min_delta; the counter then restarts.
struct PlateauSchedule {
    double min_delta = 1e-5;
    std::size_t patience = 3;
    double factor = 0.5;

    double previous = 0.0;
    bool has_previous = false;
    std::size_t bad_epochs = 0;

    /// Returns the rate for the next epoch. An epoch is bad when its loss is
    /// not at least min_delta below the previous epoch's; `patience`
    /// consecutive bad epochs multiply the rate by `factor`.
    double update(double epoch_loss, double lr);
};

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double lr = 1e-4;
    double min_delta = 1e-5;
    std::size_t patience = 3;
    std::uint64_t shuffle_seed = 0;
    /// Called after each epoch with (epoch, train loss, test loss or NaN, lr).
    std::function<void(std::size_t, double, double, double)> on_epoch;
};

struct TrainReport {
    std::vector<double> train_loss;  ///< mean per-pixel BCE over each epoch's batches
    std::vector<double> test_loss;   ///< after each epoch; empty without a test set
    std::vector<double> lr;          ///< rate used during each epoch
    double seconds = 0.0;
};

/// Training state that survives a checkpoint.
struct TrainState {
    Adam optimizer;
    PlateauSchedule schedule;
    double lr = 1e-4;
    std::size_t epoch = 0;
};

TrainReport train(Autoencoder<float>& model, std::span<const raster::ArcImage> data, const TrainOptions& options,
                  std::span<const raster::ArcImage> test = {}, TrainState* state = nullptr);

/// Mean per-pixel BCE of the model over a data set.
double evaluate(const Autoencoder<float>& model, std::span<const raster::ArcImage> data, std::size_t batch_size = 64);

// MCAE checkpoint: "MCAE", u32 version = 1, u32 header length, JSON header,
// float32 LE weights in layer order (weight then bias), then the Adam first
// and second moments in the same order when the header says so.
void save_model(const Autoencoder<float>& model, const std::filesystem::path& path, const TrainState* state = nullptr);
std::vector<std::uint8_t> encode_checkpoint(const Autoencoder<float>& model, const TrainState* state = nullptr);

struct Checkpoint {
    Autoencoder<float> model;
    std::optional<TrainState> state;
};
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
Checkpoint load_model(const std::filesystem::path& path);

}  // namespace msp::nn
