#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dgmnet/nn/tensor.hpp"

namespace dgmnet::nn {

/// Trainable tensor with its accumulated gradient. Frozen parameters never accumulate.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool frozen = false;

    explicit Parameter(Shape s = {}) : value(s), grad(s) {}
};

using ParameterFn = std::function<void(const std::string& name, Parameter& p)>;
using BufferFn = std::function<void(const std::string& name, Tensor& t)>;

/// Per-call forward state. `rng` drives dropout and must be set when training with dropout > 0.
/// `record` keeps activations for a backward pass without switching layers to training
/// behaviour (used to backpropagate through frozen sub-networks).
struct Context {
    bool training = false;
    std::mt19937_64* rng = nullptr;
    bool record = false;

    bool caches() const noexcept { return training || record; }
};

/// Anything owning parameters or buffers. Names are dotted paths built from `prefix`.
class Module {
public:
    virtual ~Module() = default;
    virtual void visit_parameters(const std::string& prefix, const ParameterFn& fn) = 0;
    virtual void visit_buffers(const std::string& /*prefix*/, const BufferFn& /*fn*/) {}
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

/// Weight initialisation draws from this generator.
using InitRng = std::mt19937_64;

class Conv2d : public Module {
public:
    /// Square kernel with "same" zero padding (kernel 1 or 3).
    Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, InitRng& rng, bool with_bias = true);

    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy);
    void visit_parameters(const std::string& prefix, const ParameterFn& fn) override;

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    bool has_bias() const { return with_bias_; }
    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }

private:
    std::size_t in_, out_, k_;
    bool with_bias_;
    Parameter weight_;  // (out, in, k, k)
    Parameter bias_;    // (out)
    Shape in_shape_{};
    FloatBuffer cols_;  // im2col per sample, cached for backward
    Tensor input_;             // cached for 1x1 kernels
};

/// 2x2 transposed convolution, stride 2. Weight layout (in, out, 2, 2).
class ConvTranspose2x2 : public Module {
public:
    ConvTranspose2x2(std::size_t in_ch, std::size_t out_ch, InitRng& rng);

    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy);
    void visit_parameters(const std::string& prefix, const ParameterFn& fn) override;

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t in_, out_;
    Parameter weight_;
    Parameter bias_;
    Tensor input_;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(std::size_t channels, float momentum = 0.1f, float eps = 1e-5f);

    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy);
    void visit_parameters(const std::string& prefix, const ParameterFn& fn) override;
    void visit_buffers(const std::string& prefix, const BufferFn& fn) override;

    Parameter& gamma() { return gamma_; }
    Parameter& beta() { return beta_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }

private:
    std::size_t c_;
    float momentum_, eps_;
    Parameter gamma_, beta_;
    Tensor running_mean_, running_var_;
    Tensor xhat_;
    std::vector<float> inv_std_;
    bool last_training_ = false;
};

class Linear : public Module {
public:
    Linear(std::size_t in_features, std::size_t out_features, InitRng& rng);

    /// Input (N, in, 1, 1) or any tensor with sample() == in.
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy);
    void visit_parameters(const std::string& prefix, const ParameterFn& fn) override;

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t in_, out_;
    Parameter weight_;  // (out, in)
    Parameter bias_;
    Tensor input_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    Tensor input_;
};

class LeakyReLU {
public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    float slope_;
    Tensor input_;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    Tensor output_;
};

class MaxPool2x2 {
public:
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    Shape in_shape_{};
    std::vector<std::uint32_t> argmax_;
};

/// Inverted dropout; identity outside training.
class Dropout {
public:
    explicit Dropout(float rate) : rate_(rate) {}
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;
    float rate() const { return rate_; }

private:
    float rate_;
    std::vector<float> keep_;
};

enum class PoolKind { Average, Max };

/// (N, C, H, W) -> (N, C, 1, 1).
class GlobalPool {
public:
    explicit GlobalPool(PoolKind kind = PoolKind::Average) : kind_(kind) {}
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    PoolKind kind_;
    Shape in_shape_{};
    std::vector<std::uint32_t> argmax_;
};

/// Bilinear resize with half-pixel centres and edge clamping.
class BilinearResize {
public:
    BilinearResize(std::size_t out_h, std::size_t out_w) : out_h_(out_h), out_w_(out_w) {}
    Tensor forward(const Tensor& x, const Context& ctx);
    Tensor backward(const Tensor& dy) const;

private:
    std::size_t out_h_, out_w_;
    Shape in_shape_{};
};

}  // namespace dgmnet::nn
