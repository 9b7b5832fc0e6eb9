#include "dgmnet/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Core>

#include "dgmnet/errors.hpp"

namespace dgmnet::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void he_normal(Tensor& t, std::size_t fan_in, InitRng& rng) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& v : t.values()) v = dist(rng);
}

void im2col3x3(const float* x, std::size_t c, std::size_t h, std::size_t w, float* col) {
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < c; ++ci) {
        const float* plane = x + ci * hw;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                float* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    float* dst = row + y * w;
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) {
                        std::memset(dst, 0, w * sizeof(float));
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(sy) * w;
                    if (kx == 0) {
                        dst[0] = 0.0f;
                        std::memcpy(dst + 1, src, (w - 1) * sizeof(float));
                    } else if (kx == 1) {
                        std::memcpy(dst, src, w * sizeof(float));
                    } else {
                        std::memcpy(dst, src + 1, (w - 1) * sizeof(float));
                        dst[w - 1] = 0.0f;
                    }
                }
            }
        }
    }
}

void col2im3x3(const float* col, std::size_t c, std::size_t h, std::size_t w, float* x) {
    const std::size_t hw = h * w;
    for (std::size_t ci = 0; ci < c; ++ci) {
        float* plane = x + ci * hw;
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const float* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + static_cast<long>(ky) - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    const float* src = row + y * w;
                    float* dst = plane + static_cast<std::size_t>(sy) * w;
                    if (kx == 0) {
                        for (std::size_t xx = 1; xx < w; ++xx) dst[xx - 1] += src[xx];
                    } else if (kx == 1) {
                        for (std::size_t xx = 0; xx < w; ++xx) dst[xx] += src[xx];
                    } else {
                        for (std::size_t xx = 0; xx + 1 < w; ++xx) dst[xx + 1] += src[xx];
                    }
                }
            }
        }
    }
}

void require_channels(const Tensor& x, std::size_t c, const char* layer) {
    if (x.shape().c != c) {
        throw ValidationError(std::string(layer) + " expects " + std::to_string(c) + " channels, got " +
                              to_string(x.shape()));
    }
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, InitRng& rng, bool with_bias)
    : in_(in_ch), out_(out_ch), k_(kernel), with_bias_(with_bias), weight_(Shape{out_ch, in_ch, kernel, kernel}), bias_(Shape{out_ch, 1}) {
    if (kernel != 1 && kernel != 3) throw ValidationError("Conv2d supports kernel 1 or 3");
    if (in_ch == 0 || out_ch == 0) throw ValidationError("Conv2d channel counts must be positive");
    he_normal(weight_.value, in_ch * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x, const Context& ctx) {
    require_channels(x, in_, "Conv2d");
    in_shape_ = x.shape();
    const std::size_t hw = in_shape_.plane();
    const std::size_t kdim = in_ * k_ * k_;
    Tensor y(Shape{in_shape_.n, out_, in_shape_.h, in_shape_.w});
    const CMapMat W(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kdim));

    if (k_ == 3) {
        const bool keep = ctx.caches();
        if (keep) {
            cols_.resize(in_shape_.n * kdim * hw);
        } else {
            cols_.resize(kdim * hw);
        }
        for (std::size_t n = 0; n < in_shape_.n; ++n) {
            float* col = cols_.data() + (keep ? n * kdim * hw : 0);
            im2col3x3(x.sample(n), in_, in_shape_.h, in_shape_.w, col);
            const CMapMat C(col, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
            MapMat Y(y.sample(n), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(hw));
            Y.noalias() = W * C;
        }
        if (!keep) cols_.clear();
    } else {
        if (ctx.caches()) input_ = x;
        for (std::size_t n = 0; n < in_shape_.n; ++n) {
            const CMapMat C(x.sample(n), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
            MapMat Y(y.sample(n), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(hw));
            Y.noalias() = W * C;
        }
    }
    if (!with_bias_) return y;
    for (std::size_t n = 0; n < in_shape_.n; ++n) {
        for (std::size_t o = 0; o < out_; ++o) {
            float* p = y.plane(n, o);
            const float b = bias_.value[o];
            for (std::size_t i = 0; i < hw; ++i) p[i] += b;
        }
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const std::size_t hw = in_shape_.plane();
    const std::size_t kdim = in_ * k_ * k_;
    if (k_ == 3 && cols_.size() != in_shape_.n * kdim * hw) {
        throw ValidationError("Conv2d::backward without a training forward");
    }
    Tensor dx(in_shape_);
    const CMapMat W(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kdim));
    MapMat dW(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kdim));
    FloatBuffer dcol(k_ == 3 ? kdim * hw : 0);

    for (std::size_t n = 0; n < in_shape_.n; ++n) {
        const CMapMat dY(dy.sample(n), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(hw));
        const float* col = k_ == 3 ? cols_.data() + n * kdim * hw : input_.sample(n);
        const CMapMat C(col, static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
        if (!weight_.frozen) dW.noalias() += dY * C.transpose();
        if (with_bias_ && !bias_.frozen) {
            for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dY.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (k_ == 3) {
            MapMat dC(dcol.data(), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
            dC.noalias() = W.transpose() * dY;
            col2im3x3(dcol.data(), in_, in_shape_.h, in_shape_.w, dx.sample(n));
        } else {
            MapMat dX(dx.sample(n), static_cast<Eigen::Index>(kdim), static_cast<Eigen::Index>(hw));
            dX.noalias() = W.transpose() * dY;
        }
    }
    return dx;
}

void Conv2d::visit_parameters(const std::string& prefix, const ParameterFn& fn) {
    fn(join_name(prefix, "weight"), weight_);
    if (with_bias_) fn(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------------------------------------
// ConvTranspose2x2

ConvTranspose2x2::ConvTranspose2x2(std::size_t in_ch, std::size_t out_ch, InitRng& rng)
    : in_(in_ch), out_(out_ch), weight_(Shape{in_ch, out_ch, 2, 2}), bias_(Shape{out_ch, 1}) {
    if (in_ch == 0 || out_ch == 0) throw ValidationError("ConvTranspose2x2 channel counts must be positive");
    he_normal(weight_.value, in_ch, rng);
}

Tensor ConvTranspose2x2::forward(const Tensor& x, const Context& ctx) {
    require_channels(x, in_, "ConvTranspose2x2");
    const Shape s = x.shape();
    const std::size_t hw = s.plane();
    if (ctx.caches()) input_ = x;
    Tensor y(Shape{s.n, out_, s.h * 2, s.w * 2});
    const CMapMat Wm(weight_.value.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_ * 4));
    RowMat G(static_cast<Eigen::Index>(out_ * 4), static_cast<Eigen::Index>(hw));
    for (std::size_t n = 0; n < s.n; ++n) {
        const CMapMat X(x.sample(n), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(hw));
        G.noalias() = Wm.transpose() * X;
        for (std::size_t o = 0; o < out_; ++o) {
            float* dst = y.plane(n, o);
            const float b = bias_.value[o];
            for (std::size_t ab = 0; ab < 4; ++ab) {
                const float* g = G.data() + (o * 4 + ab) * hw;
                const std::size_t a = ab / 2, bb = ab % 2;
                for (std::size_t i = 0; i < s.h; ++i) {
                    float* row = dst + (2 * i + a) * (2 * s.w) + bb;
                    const float* src = g + i * s.w;
                    for (std::size_t j = 0; j < s.w; ++j) row[2 * j] = src[j] + b;
                }
            }
        }
    }
    return y;
}

Tensor ConvTranspose2x2::backward(const Tensor& dy) {
    const Shape s = input_.shape();
    const std::size_t hw = s.plane();
    Tensor dx(s);
    const CMapMat Wm(weight_.value.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_ * 4));
    MapMat dWm(weight_.grad.data(), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(out_ * 4));
    RowMat G(static_cast<Eigen::Index>(out_ * 4), static_cast<Eigen::Index>(hw));
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t o = 0; o < out_; ++o) {
            const float* src = dy.plane(n, o);
            double bsum = 0.0;
            for (std::size_t ab = 0; ab < 4; ++ab) {
                float* g = G.data() + (o * 4 + ab) * hw;
                const std::size_t a = ab / 2, bb = ab % 2;
                for (std::size_t i = 0; i < s.h; ++i) {
                    const float* row = src + (2 * i + a) * (2 * s.w) + bb;
                    for (std::size_t j = 0; j < s.w; ++j) {
                        g[i * s.w + j] = row[2 * j];
                        bsum += row[2 * j];
                    }
                }
            }
            if (!bias_.frozen) bias_.grad[o] += static_cast<float>(bsum);
        }
        const CMapMat X(input_.sample(n), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(hw));
        if (!weight_.frozen) dWm.noalias() += X * G.transpose();
        MapMat dX(dx.sample(n), static_cast<Eigen::Index>(in_), static_cast<Eigen::Index>(hw));
        dX.noalias() = Wm * G;
    }
    return dx;
}

void ConvTranspose2x2::visit_parameters(const std::string& prefix, const ParameterFn& fn) {
    fn(join_name(prefix, "weight"), weight_);
    fn(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, float momentum, float eps)
    : c_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(Shape{channels, 1}),
      beta_(Shape{channels, 1}),
      running_mean_(Shape{channels, 1}, 0.0f),
      running_var_(Shape{channels, 1}, 1.0f) {
    gamma_.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, const Context& ctx) {
    require_channels(x, c_, "BatchNorm2d");
    const Shape s = x.shape();
    const std::size_t hw = s.plane();
    const double m = static_cast<double>(s.n * hw);
    Tensor y(s);
    xhat_ = Tensor(s);
    inv_std_.assign(c_, 0.0f);
    last_training_ = ctx.training;

    for (std::size_t c = 0; c < c_; ++c) {
        double mean, var;
        if (ctx.training) {
            double sum = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const float* p = x.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) sum += p[i];
            }
            mean = sum / m;
            double ss = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const float* p = x.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
            }
            var = ss / m;
            const double unbiased = m > 1.0 ? ss / (m - 1.0) : var;
            running_mean_[c] = static_cast<float>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
            running_var_[c] = static_cast<float>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
        } else {
            mean = running_mean_[c];
            var = running_var_[c];
        }
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
        inv_std_[c] = inv;
        const float g = gamma_.value[c], b = beta_.value[c];
        const float mu = static_cast<float>(mean);
        for (std::size_t n = 0; n < s.n; ++n) {
            const float* p = x.plane(n, c);
            float* xh = xhat_.plane(n, c);
            float* q = y.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                xh[i] = (p[i] - mu) * inv;
                q[i] = g * xh[i] + b;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const Shape s = xhat_.shape();
    const std::size_t hw = s.plane();
    const double m = static_cast<double>(s.n * hw);
    Tensor dx(s);
    for (std::size_t c = 0; c < c_; ++c) {
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const float* g = dy.plane(n, c);
            const float* xh = xhat_.plane(n, c);
            for (std::size_t i = 0; i < hw; ++i) {
                dgamma += static_cast<double>(g[i]) * xh[i];
                dbeta += g[i];
            }
        }
        if (!gamma_.frozen) gamma_.grad[c] += static_cast<float>(dgamma);
        if (!beta_.frozen) beta_.grad[c] += static_cast<float>(dbeta);
        const float scale = gamma_.value[c] * inv_std_[c];
        if (last_training_) {
            const float k = scale / static_cast<float>(m);
            const float mf = static_cast<float>(m);
            const float db = static_cast<float>(dbeta), dg = static_cast<float>(dgamma);
            for (std::size_t n = 0; n < s.n; ++n) {
                const float* g = dy.plane(n, c);
                const float* xh = xhat_.plane(n, c);
                float* d = dx.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) d[i] = k * (mf * g[i] - db - xh[i] * dg);
            }
        } else {
            for (std::size_t n = 0; n < s.n; ++n) {
                const float* g = dy.plane(n, c);
                float* d = dx.plane(n, c);
                for (std::size_t i = 0; i < hw; ++i) d[i] = scale * g[i];
            }
        }
    }
    return dx;
}

void BatchNorm2d::visit_parameters(const std::string& prefix, const ParameterFn& fn) {
    fn(join_name(prefix, "gamma"), gamma_);
    fn(join_name(prefix, "beta"), beta_);
}

void BatchNorm2d::visit_buffers(const std::string& prefix, const BufferFn& fn) {
    fn(join_name(prefix, "running_mean"), running_mean_);
    fn(join_name(prefix, "running_var"), running_var_);
}

// ---------------------------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in_features, std::size_t out_features, InitRng& rng)
    : in_(in_features), out_(out_features), weight_(Shape{out_features, in_features}), bias_(Shape{out_features, 1}) {
    he_normal(weight_.value, in_features, rng);
}

Tensor Linear::forward(const Tensor& x, const Context& ctx) {
    if (x.shape().sample() != in_) {
        throw ValidationError("Linear expects " + std::to_string(in_) + " features, got " + to_string(x.shape()));
    }
    const std::size_t n = x.shape().n;
    if (ctx.caches()) input_ = x;
    Tensor y(Shape{n, out_, 1, 1});
    const CMapMat X(x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_));
    const CMapMat W(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MapMat Y(y.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_));
    Y.noalias() = X * W.transpose();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < out_; ++o) y[i * out_ + o] += bias_.value[o];
    }
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    const std::size_t n = input_.shape().n;
    Tensor dx(input_.shape());
    const CMapMat X(input_.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_));
    const CMapMat W(weight_.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    const CMapMat dY(dy.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_));
    if (!weight_.frozen) {
        MapMat dW(weight_.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
        dW.noalias() += dY.transpose() * X;
    }
    if (!bias_.frozen) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += dy[i * out_ + o];
        }
    }
    MapMat dX(dx.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_));
    dX.noalias() = dY * W;
    return dx;
}

void Linear::visit_parameters(const std::string& prefix, const ParameterFn& fn) {
    fn(join_name(prefix, "weight"), weight_);
    fn(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------------------------------------
// Elementwise activations

Tensor ReLU::forward(const Tensor& x, const Context&) {
    input_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = input_[i] > 0.0f ? dy[i] : 0.0f;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, const Context&) {
    input_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope_ * x[i];
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = input_[i] > 0.0f ? dy[i] : slope_ * dy[i];
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, const Context&) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
    output_ = y;
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * output_[i] * (1.0f - output_[i]);
    return dx;
}

// ---------------------------------------------------------------------------------------------
// Pooling, dropout, resize

Tensor MaxPool2x2::forward(const Tensor& x, const Context&) {
    const Shape s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw ValidationError("MaxPool2x2 needs even spatial dims, got " + to_string(s));
    in_shape_ = s;
    const std::size_t oh = s.h / 2, ow = s.w / 2;
    Tensor y(Shape{s.n, s.c, oh, ow});
    argmax_.resize(y.size());
    std::size_t k = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const float* p = x.plane(n, c);
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j, ++k) {
                    const std::uint32_t base = static_cast<std::uint32_t>(2 * i * s.w + 2 * j);
                    const std::uint32_t cand[4] = {base, base + 1, base + static_cast<std::uint32_t>(s.w),
                                                   base + static_cast<std::uint32_t>(s.w) + 1};
                    std::uint32_t best = cand[0];
                    for (std::uint32_t q : cand) {
                        if (p[q] > p[best]) best = q;
                    }
                    argmax_[k] = best;
                    y[k] = p[best];
                }
            }
        }
    }
    return y;
}

Tensor MaxPool2x2::backward(const Tensor& dy) const {
    Tensor dx(in_shape_);
    const std::size_t per_plane = (in_shape_.h / 2) * (in_shape_.w / 2);
    for (std::size_t k = 0; k < dy.size(); ++k) {
        const std::size_t plane = k / per_plane;
        dx[plane * in_shape_.plane() + argmax_[k]] += dy[k];
    }
    return dx;
}

Tensor Dropout::forward(const Tensor& x, const Context& ctx) {
    if (!ctx.training || rate_ <= 0.0f) {
        keep_.clear();
        return x;
    }
    if (!ctx.rng) throw ValidationError("Dropout in training mode needs an rng");
    std::bernoulli_distribution keep(1.0 - rate_);
    const float scale = 1.0f / (1.0f - rate_);
    keep_.resize(x.size());
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        keep_[i] = keep(*ctx.rng) ? scale : 0.0f;
        y[i] = x[i] * keep_[i];
    }
    return y;
}

Tensor Dropout::backward(const Tensor& dy) const {
    if (keep_.empty()) return dy;
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * keep_[i];
    return dx;
}

Tensor GlobalPool::forward(const Tensor& x, const Context&) {
    const Shape s = x.shape();
    in_shape_ = s;
    Tensor y(Shape{s.n, s.c, 1, 1});
    if (kind_ == PoolKind::Max) argmax_.resize(s.n * s.c);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const float* p = x.plane(n, c);
            if (kind_ == PoolKind::Average) {
                double sum = 0.0;
                for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
                y[n * s.c + c] = static_cast<float>(sum / static_cast<double>(s.plane()));
            } else {
                const auto it = std::max_element(p, p + s.plane());
                argmax_[n * s.c + c] = static_cast<std::uint32_t>(it - p);
                y[n * s.c + c] = *it;
            }
        }
    }
    return y;
}

Tensor GlobalPool::backward(const Tensor& dy) const {
    Tensor dx(in_shape_);
    const std::size_t hw = in_shape_.plane();
    for (std::size_t n = 0; n < in_shape_.n; ++n) {
        for (std::size_t c = 0; c < in_shape_.c; ++c) {
            const float g = dy[n * in_shape_.c + c];
            float* d = dx.plane(n, c);
            if (kind_ == PoolKind::Average) {
                const float v = g / static_cast<float>(hw);
                for (std::size_t i = 0; i < hw; ++i) d[i] = v;
            } else {
                d[argmax_[n * in_shape_.c + c]] = g;
            }
        }
    }
    return dx;
}

namespace {

struct Tap {
    std::size_t i0, i1;
    float w1;
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double c = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(c));
        taps[i] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(c - static_cast<double>(i0))};
    }
    return taps;
}

}  // namespace

Tensor BilinearResize::forward(const Tensor& x, const Context&) {
    in_shape_ = x.shape();
    if (in_shape_.h == out_h_ && in_shape_.w == out_w_) return x;
    const auto ty = resize_taps(in_shape_.h, out_h_);
    const auto tx = resize_taps(in_shape_.w, out_w_);
    Tensor y(Shape{in_shape_.n, in_shape_.c, out_h_, out_w_});
    for (std::size_t n = 0; n < in_shape_.n; ++n) {
        for (std::size_t c = 0; c < in_shape_.c; ++c) {
            const float* p = x.plane(n, c);
            float* q = y.plane(n, c);
            for (std::size_t i = 0; i < out_h_; ++i) {
                const float* r0 = p + ty[i].i0 * in_shape_.w;
                const float* r1 = p + ty[i].i1 * in_shape_.w;
                for (std::size_t j = 0; j < out_w_; ++j) {
                    const float a = r0[tx[j].i0] * (1.0f - tx[j].w1) + r0[tx[j].i1] * tx[j].w1;
                    const float b = r1[tx[j].i0] * (1.0f - tx[j].w1) + r1[tx[j].i1] * tx[j].w1;
                    q[i * out_w_ + j] = a * (1.0f - ty[i].w1) + b * ty[i].w1;
                }
            }
        }
    }
    return y;
}

Tensor BilinearResize::backward(const Tensor& dy) const {
    if (in_shape_.h == out_h_ && in_shape_.w == out_w_) return dy;
    const auto ty = resize_taps(in_shape_.h, out_h_);
    const auto tx = resize_taps(in_shape_.w, out_w_);
    Tensor dx(in_shape_);
    for (std::size_t n = 0; n < in_shape_.n; ++n) {
        for (std::size_t c = 0; c < in_shape_.c; ++c) {
            const float* g = dy.plane(n, c);
            float* d = dx.plane(n, c);
            for (std::size_t i = 0; i < out_h_; ++i) {
                float* r0 = d + ty[i].i0 * in_shape_.w;
                float* r1 = d + ty[i].i1 * in_shape_.w;
                for (std::size_t j = 0; j < out_w_; ++j) {
                    const float v = g[i * out_w_ + j];
                    const float a = v * (1.0f - ty[i].w1), b = v * ty[i].w1;
                    r0[tx[j].i0] += a * (1.0f - tx[j].w1);
                    r0[tx[j].i1] += a * tx[j].w1;
                    r1[tx[j].i0] += b * (1.0f - tx[j].w1);
                    r1[tx[j].i1] += b * tx[j].w1;
                }
            }
        }
    }
    return dx;
}

}  // namespace dgmnet::nn
