#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "msp/error.hpp"
#include "msp/nn.hpp"

namespace msp::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_input(const Tensor<T>& in, const Shape& expect, const char* layer) {
    if (!(in.shape == expect) || in.data.size() != in.batch * expect.size()) {
        throw InputError(std::string(layer) + ": input shape " + std::to_string(in.shape.c) + "x" +
                         std::to_string(in.shape.h) + "x" + std::to_string(in.shape.w) + ", expected " +
                         std::to_string(expect.c) + "x" + std::to_string(expect.h) + "x" + std::to_string(expect.w));
    }
}

template <typename T>
void prepare(Tensor<T>& out, std::size_t batch, Shape s) {
    out.batch = batch;
    out.shape = s;
    out.data.assign(batch * s.size(), T(0));
}

}  // namespace

std::string to_string(LayerKind k) {
    switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::linear: return "linear";
    case LayerKind::relu: return "relu";
    case LayerKind::upsample: return "upsample";
    case LayerKind::sigmoid: return "sigmoid";
    }
    return "?";
}

template <typename T>
void Layer<T>::zero_grad() {
    std::fill(grad_weight.begin(), grad_weight.end(), T(0));
    std::fill(grad_bias.begin(), grad_bias.end(), T(0));
}

// ---- Conv3x3 ----

template <typename T>
Conv3x3<T>::Conv3x3(Shape in, std::size_t out_channels, std::size_t stride) : in_(in), stride_(stride) {
    if (stride < 1) throw ParameterError("conv stride must be >= 1");
    out_ = {out_channels, (in.h - 1) / stride + 1, (in.w - 1) / stride + 1};
    this->weight.assign(out_channels * in.c * 9, T(0));
    this->bias.assign(out_channels, T(0));
    this->grad_weight.assign(this->weight.size(), T(0));
    this->grad_bias.assign(this->bias.size(), T(0));
}

// col has in.c * 9 rows and out.h * out.w columns.
template <typename T>
void Conv3x3<T>::im2col(const T* src, T* col) const {
    const std::size_t n = out_.h * out_.w;
    for (std::size_t c = 0; c < in_.c; ++c) {
        const T* plane = src + c * in_.h * in_.w;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                T* row = col + ((c * 3 + ky) * 3 + kx) * n;
                for (std::size_t oy = 0; oy < out_.h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - 1;
                    T* dst = row + oy * out_.w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_.h)) {
                        std::fill(dst, dst + out_.w, T(0));
                        continue;
                    }
                    const T* line = plane + static_cast<std::size_t>(iy) * in_.w;
                    for (std::size_t ox = 0; ox < out_.w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - 1;
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_.w)) ? T(0) : line[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void Conv3x3<T>::col2im(const T* col, T* dst) const {
    const std::size_t n = out_.h * out_.w;
    for (std::size_t c = 0; c < in_.c; ++c) {
        T* plane = dst + c * in_.h * in_.w;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const T* row = col + ((c * 3 + ky) * 3 + kx) * n;
                for (std::size_t oy = 0; oy < out_.h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - 1;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_.h)) continue;
                    T* line = plane + static_cast<std::size_t>(iy) * in_.w;
                    const T* src = row + oy * out_.w;
                    for (std::size_t ox = 0; ox < out_.w; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - 1;
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(in_.w)) line[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void Conv3x3<T>::forward(const Tensor<T>& in, Tensor<T>& out) const {
    check_input(in, in_, "conv");
    prepare(out, in.batch, out_);
    const std::size_t k = in_.c * 9, n = out_.h * out_.w;
    Buffer<T> col(k * n);
    const CMapRow<T> w(this->weight.data(), static_cast<Eigen::Index>(out_.c), static_cast<Eigen::Index>(k));
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(this->bias.data(), static_cast<Eigen::Index>(out_.c));
    for (std::size_t s = 0; s < in.batch; ++s) {
        im2col(in.sample(s), col.data());
        const CMapRow<T> c(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MapRow<T> o(out.sample(s), static_cast<Eigen::Index>(out_.c), static_cast<Eigen::Index>(n));
        o.noalias() = w * c;
        o.colwise() += b;
    }
}

template <typename T>
void Conv3x3<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) {
    const std::size_t k = in_.c * 9, n = out_.h * out_.w;
    Buffer<T> col(k * n), dcol(din ? k * n : 0);
    const CMapRow<T> w(this->weight.data(), static_cast<Eigen::Index>(out_.c), static_cast<Eigen::Index>(k));
    MapRow<T> gw(this->grad_weight.data(), static_cast<Eigen::Index>(out_.c), static_cast<Eigen::Index>(k));
    if (din) prepare(*din, in.batch, in_);
    for (std::size_t s = 0; s < in.batch; ++s) {
        const CMapRow<T> g(dout.sample(s), static_cast<Eigen::Index>(out_.c), static_cast<Eigen::Index>(n));
        im2col(in.sample(s), col.data());
        const CMapRow<T> c(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        gw.noalias() += g * c.transpose();
        for (std::size_t o = 0; o < out_.c; ++o) this->grad_bias[o] += g.row(static_cast<Eigen::Index>(o)).sum();
        if (din) {
            MapRow<T> dc(dcol.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
            dc.noalias() = w.transpose() * g;
            col2im(dcol.data(), din->sample(s));
        }
    }
}

// ---- Linear ----

template <typename T>
Linear<T>::Linear(Shape in, Shape out) : in_(in), out_(out) {
    this->weight.assign(out.size() * in.size(), T(0));
    this->bias.assign(out.size(), T(0));
    this->grad_weight.assign(this->weight.size(), T(0));
    this->grad_bias.assign(this->bias.size(), T(0));
}

template <typename T>
void Linear<T>::forward(const Tensor<T>& in, Tensor<T>& out) const {
    check_input(in, in_, "linear");
    prepare(out, in.batch, out_);
    const auto ni = static_cast<Eigen::Index>(in_.size()), no = static_cast<Eigen::Index>(out_.size());
    const auto nb = static_cast<Eigen::Index>(in.batch);
    const CMapRow<T> w(this->weight.data(), no, ni);
    const CMapRow<T> x(in.data.data(), nb, ni);
    MapRow<T> y(out.data.data(), nb, no);
    y.noalias() = x * w.transpose();
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(this->bias.data(), no);
    y.rowwise() += b;
}

template <typename T>
void Linear<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) {
    const auto ni = static_cast<Eigen::Index>(in_.size()), no = static_cast<Eigen::Index>(out_.size());
    const auto nb = static_cast<Eigen::Index>(in.batch);
    const CMapRow<T> w(this->weight.data(), no, ni);
    const CMapRow<T> x(in.data.data(), nb, ni);
    const CMapRow<T> g(dout.data.data(), nb, no);
    MapRow<T> gw(this->grad_weight.data(), no, ni);
    gw.noalias() += g.transpose() * x;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(this->grad_bias.data(), no);
    gb += g.colwise().sum();
    if (din) {
        prepare(*din, in.batch, in_);
        MapRow<T> dx(din->data.data(), nb, ni);
        dx.noalias() = g * w;
    }
}

// ---- ReLU ----

template <typename T>
void ReLU<T>::forward(const Tensor<T>& in, Tensor<T>& out) const {
    check_input(in, s_, "relu");
    prepare(out, in.batch, s_);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > T(0) ? in.data[i] : T(0);
}

template <typename T>
void ReLU<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) {
    if (!din) return;
    prepare(*din, in.batch, s_);
    for (std::size_t i = 0; i < in.data.size(); ++i) din->data[i] = in.data[i] > T(0) ? dout.data[i] : T(0);
}

// ---- Upsample ----

// Source position of output pixel o is (o + 0.5) / f - 0.5, clamped to the
// first pixel; the right neighbour is clamped to the last.
template <typename T>
auto Upsample<T>::taps(std::size_t n, std::size_t factor) -> std::vector<Tap> {
    std::vector<Tap> t(n * factor);
    for (std::size_t o = 0; o < t.size(); ++o) {
        double x = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        if (x < 0.0) x = 0.0;
        const auto i0 = static_cast<std::size_t>(x);
        t[o] = {i0, std::min(i0 + 1, n - 1), static_cast<T>(x - static_cast<double>(i0))};
    }
    return t;
}

template <typename T>
Upsample<T>::Upsample(Shape in, std::size_t factor) : in_(in), factor_(factor) {
    if (factor < 1) throw ParameterError("upsample factor must be >= 1");
    out_ = {in.c, in.h * factor, in.w * factor};
    tx_ = taps(in.w, factor);
    ty_ = taps(in.h, factor);
}

template <typename T>
void Upsample<T>::forward(const Tensor<T>& in, Tensor<T>& out) const {
    check_input(in, in_, "upsample");
    prepare(out, in.batch, out_);
    for (std::size_t p = 0; p < in.batch * in_.c; ++p) {
        const T* src = in.data.data() + p * in_.h * in_.w;
        T* dst = out.data.data() + p * out_.h * out_.w;
        for (std::size_t oy = 0; oy < out_.h; ++oy) {
            const auto& ty = ty_[oy];
            const T* r0 = src + ty.i0 * in_.w;
            const T* r1 = src + ty.i1 * in_.w;
            for (std::size_t ox = 0; ox < out_.w; ++ox) {
                const auto& tx = tx_[ox];
                // a + t * (b - a) keeps constant inputs exactly constant
                const T top = r0[tx.i0] + tx.frac * (r0[tx.i1] - r0[tx.i0]);
                const T bottom = r1[tx.i0] + tx.frac * (r1[tx.i1] - r1[tx.i0]);
                dst[oy * out_.w + ox] = top + ty.frac * (bottom - top);
            }
        }
    }
}

template <typename T>
void Upsample<T>::backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) {
    if (!din) return;
    prepare(*din, in.batch, in_);
    for (std::size_t p = 0; p < in.batch * in_.c; ++p) {
        T* dst = din->data.data() + p * in_.h * in_.w;
        const T* src = dout.data.data() + p * out_.h * out_.w;
        for (std::size_t oy = 0; oy < out_.h; ++oy) {
            const auto& ty = ty_[oy];
            T* r0 = dst + ty.i0 * in_.w;
            T* r1 = dst + ty.i1 * in_.w;
            for (std::size_t ox = 0; ox < out_.w; ++ox) {
                const auto& tx = tx_[ox];
                const T g = src[oy * out_.w + ox];
                const T gt = g * (T(1) - ty.frac), gb = g * ty.frac;
                r0[tx.i0] += gt * (T(1) - tx.frac);
                r0[tx.i1] += gt * tx.frac;
                r1[tx.i0] += gb * (T(1) - tx.frac);
                r1[tx.i1] += gb * tx.frac;
            }
        }
    }
}

// ---- Sigmoid ----

template <typename T>
void Sigmoid<T>::forward(const Tensor<T>& in, Tensor<T>& out) const {
    check_input(in, s_, "sigmoid");
    prepare(out, in.batch, s_);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
        const T x = in.data[i];
        if (x >= T(0)) {
            out.data[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out.data[i] = e / (T(1) + e);
        }
    }
}

template <typename T>
void Sigmoid<T>::backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) {
    if (!din) return;
    prepare(*din, in.batch, s_);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const T a = out.data[i];
        din->data[i] = dout.data[i] * a * (T(1) - a);
    }
}

#define MSP_NN_LAYERS(T)        \
    template class Layer<T>;    \
    template class Conv3x3<T>;  \
    template class Linear<T>;   \
    template class ReLU<T>;     \
    template class Upsample<T>; \
    template class Sigmoid<T>;

MSP_NN_LAYERS(float)
MSP_NN_LAYERS(double)

}  // namespace msp::nn
