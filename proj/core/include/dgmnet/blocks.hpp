#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "dgmnet/nn/layers.hpp"

namespace dgmnet {

enum class Variant { Unet, ResUnet, SeResUnet, SeUnet, DgmNet };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Which optional mechanisms a variant's conv block carries.
struct BlockStyle {
    bool squeeze_excite = false;
    bool residual = false;
};

BlockStyle block_style(Variant v);

/// Channel recalibration: global average pool -> FC(C, C/r) -> ReLU -> FC(C/r, C) -> sigmoid -> scale.
class SqueezeExcite : public nn::Module {
public:
    SqueezeExcite(std::size_t channels, std::size_t reduction, nn::InitRng& rng);

    nn::Tensor forward(const nn::Tensor& x, const nn::Context& ctx);
    nn::Tensor backward(const nn::Tensor& dy);
    void visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) override;

    /// Replace the learned gate by a constant (testing hook). nullopt restores the learned gate.
    void force_gate(std::optional<float> value) { forced_ = value; }
    std::size_t hidden() const { return hidden_; }

private:
    std::size_t channels_, hidden_;
    nn::GlobalPool squeeze_;
    nn::Linear fc1_;
    nn::ReLU relu_;
    nn::Linear fc2_;
    nn::Sigmoid gate_act_;
    std::optional<float> forced_;
    nn::Tensor input_;
    nn::Tensor gate_;
};

/// [3x3 conv -> ReLU -> BN] x 2, optionally followed by SE, optionally with a residual skip
/// (1x1 conv -> BN projection of the block input).
class ConvBlock : public nn::Module {
public:
    ConvBlock(std::size_t in_ch, std::size_t out_ch, BlockStyle style, std::size_t se_reduction, nn::InitRng& rng);

    nn::Tensor forward(const nn::Tensor& x, const nn::Context& ctx);
    nn::Tensor backward(const nn::Tensor& dy);
    void visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) override;
    void visit_buffers(const std::string& prefix, const nn::BufferFn& fn) override;

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }
    nn::Conv2d& conv1() { return conv1_; }
    nn::Conv2d& conv2() { return conv2_; }
    SqueezeExcite* squeeze_excite() { return se_.get(); }
    nn::Conv2d* projection() { return proj_.get(); }
    /// Skip path alone (residual styles only).
    nn::Tensor skip(const nn::Tensor& x, const nn::Context& ctx);
    const BlockStyle& style() const { return style_; }

private:
    std::size_t in_, out_;
    BlockStyle style_;
    nn::Conv2d conv1_;
    nn::ReLU relu1_;
    nn::BatchNorm2d bn1_;
    nn::Conv2d conv2_;
    nn::ReLU relu2_;
    nn::BatchNorm2d bn2_;
    std::unique_ptr<SqueezeExcite> se_;
    std::unique_ptr<nn::Conv2d> proj_;
    std::unique_ptr<nn::BatchNorm2d> proj_bn_;
};

/// 2x2 up-convolution (halving channels) -> concat with the encoder skip -> ConvBlock.
class DecoderStage : public nn::Module {
public:
    DecoderStage(std::size_t in_ch, std::size_t skip_ch, std::size_t out_ch, BlockStyle style,
                 std::size_t se_reduction, nn::InitRng& rng);

    nn::Tensor forward(const nn::Tensor& x, const nn::Tensor& skip, const nn::Context& ctx);
    /// Returns (d input, d skip).
    std::pair<nn::Tensor, nn::Tensor> backward(const nn::Tensor& dy);
    void visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) override;
    void visit_buffers(const std::string& prefix, const nn::BufferFn& fn) override;

    std::size_t concat_channels() const { return up_ch_ + skip_ch_; }
    ConvBlock& block() { return block_; }

private:
    std::size_t up_ch_, skip_ch_;
    nn::ConvTranspose2x2 up_;
    ConvBlock block_;
};

}  // namespace dgmnet
