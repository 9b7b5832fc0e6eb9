#include "dgmnet/blocks.hpp"

#include <algorithm>

#include "dgmnet/errors.hpp"

namespace dgmnet {

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Unet: return "UNET";
        case Variant::ResUnet: return "RESUNET";
        case Variant::SeResUnet: return "SE_RESUNET";
        case Variant::SeUnet: return "SE_UNET";
        case Variant::DgmNet: return "DGMNET";
    }
    return "?";
}

Variant variant_from_string(std::string_view s) {
    if (s == "UNET") return Variant::Unet;
    if (s == "RESUNET") return Variant::ResUnet;
    if (s == "SE_RESUNET") return Variant::SeResUnet;
    if (s == "SE_UNET") return Variant::SeUnet;
    if (s == "DGMNET") return Variant::DgmNet;
    throw ValidationError("unknown variant '" + std::string(s) + "'");
}

BlockStyle block_style(Variant v) {
    switch (v) {
        case Variant::Unet: return {false, false};
        case Variant::ResUnet: return {false, true};
        case Variant::SeResUnet: return {true, true};
        case Variant::SeUnet:
        case Variant::DgmNet: return {true, false};
    }
    return {};
}

// ---------------------------------------------------------------------------------------------

SqueezeExcite::SqueezeExcite(std::size_t channels, std::size_t reduction, nn::InitRng& rng)
    : channels_(channels),
      hidden_(std::max<std::size_t>(1, channels / std::max<std::size_t>(1, reduction))),
      fc1_(channels, hidden_, rng),
      fc2_(hidden_, channels, rng) {}

nn::Tensor SqueezeExcite::forward(const nn::Tensor& x, const nn::Context& ctx) {
    const nn::Shape s = x.shape();
    if (ctx.caches()) input_ = x;
    if (forced_) {
        gate_ = nn::Tensor(nn::Shape{s.n, s.c, 1, 1}, *forced_);
    } else {
        nn::Tensor z = squeeze_.forward(x, ctx);
        z = relu_.forward(fc1_.forward(z, ctx), ctx);
        gate_ = gate_act_.forward(fc2_.forward(z, ctx), ctx);
    }
    nn::Tensor y(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const float g = gate_[n * s.c + c];
            const float* p = x.plane(n, c);
            float* q = y.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) q[i] = p[i] * g;
        }
    }
    return y;
}

nn::Tensor SqueezeExcite::backward(const nn::Tensor& dy) {
    const nn::Shape s = input_.shape();
    nn::Tensor dx(s);
    nn::Tensor dgate(nn::Shape{s.n, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const float g = gate_[n * s.c + c];
            const float* gy = dy.plane(n, c);
            const float* p = input_.plane(n, c);
            float* d = dx.plane(n, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) {
                d[i] = gy[i] * g;
                acc += static_cast<double>(gy[i]) * p[i];
            }
            dgate[n * s.c + c] = static_cast<float>(acc);
        }
    }
    if (!forced_) {
        nn::Tensor dz = fc2_.backward(gate_act_.backward(dgate));
        dz = fc1_.backward(relu_.backward(dz));
        dx += squeeze_.backward(dz);
    }
    return dx;
}

void SqueezeExcite::visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) {
    fc1_.visit_parameters(nn::join_name(prefix, "fc1"), fn);
    fc2_.visit_parameters(nn::join_name(prefix, "fc2"), fn);
}

// ---------------------------------------------------------------------------------------------

ConvBlock::ConvBlock(std::size_t in_ch, std::size_t out_ch, BlockStyle style, std::size_t se_reduction,
                     nn::InitRng& rng)
    : in_(in_ch),
      out_(out_ch),
      style_(style),
      conv1_(in_ch, out_ch, 3, rng),
      bn1_(out_ch),
      conv2_(out_ch, out_ch, 3, rng),
      bn2_(out_ch) {
    if (style.squeeze_excite) se_ = std::make_unique<SqueezeExcite>(out_ch, se_reduction, rng);
    if (style.residual) {
        proj_ = std::make_unique<nn::Conv2d>(in_ch, out_ch, 1, rng, false);
        proj_bn_ = std::make_unique<nn::BatchNorm2d>(out_ch);
    }
}

nn::Tensor ConvBlock::forward(const nn::Tensor& x, const nn::Context& ctx) {
    nn::Tensor h = bn1_.forward(relu1_.forward(conv1_.forward(x, ctx), ctx), ctx);
    h = bn2_.forward(relu2_.forward(conv2_.forward(h, ctx), ctx), ctx);
    if (se_) h = se_->forward(h, ctx);
    if (style_.residual) h += skip(x, ctx);
    return h;
}

nn::Tensor ConvBlock::skip(const nn::Tensor& x, const nn::Context& ctx) {
    if (!proj_) throw ValidationError("block has no residual skip");
    return proj_bn_->forward(proj_->forward(x, ctx), ctx);
}

nn::Tensor ConvBlock::backward(const nn::Tensor& dy) {
    nn::Tensor g = se_ ? se_->backward(dy) : dy;
    g = conv2_.backward(relu2_.backward(bn2_.backward(g)));
    nn::Tensor dx = conv1_.backward(relu1_.backward(bn1_.backward(g)));
    if (style_.residual) dx += proj_->backward(proj_bn_->backward(dy));
    return dx;
}

void ConvBlock::visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) {
    conv1_.visit_parameters(nn::join_name(prefix, "conv1"), fn);
    bn1_.visit_parameters(nn::join_name(prefix, "bn1"), fn);
    conv2_.visit_parameters(nn::join_name(prefix, "conv2"), fn);
    bn2_.visit_parameters(nn::join_name(prefix, "bn2"), fn);
    if (se_) se_->visit_parameters(nn::join_name(prefix, "se"), fn);
    if (proj_) {
        proj_->visit_parameters(nn::join_name(prefix, "proj"), fn);
        proj_bn_->visit_parameters(nn::join_name(prefix, "proj_bn"), fn);
    }
}

void ConvBlock::visit_buffers(const std::string& prefix, const nn::BufferFn& fn) {
    bn1_.visit_buffers(nn::join_name(prefix, "bn1"), fn);
    bn2_.visit_buffers(nn::join_name(prefix, "bn2"), fn);
    if (proj_bn_) proj_bn_->visit_buffers(nn::join_name(prefix, "proj_bn"), fn);
}

// ---------------------------------------------------------------------------------------------

DecoderStage::DecoderStage(std::size_t in_ch, std::size_t skip_ch, std::size_t out_ch, BlockStyle style,
                           std::size_t se_reduction, nn::InitRng& rng)
    : up_ch_(std::max<std::size_t>(1, in_ch / 2)),
      skip_ch_(skip_ch),
      up_(in_ch, up_ch_, rng),
      block_(up_ch_ + skip_ch, out_ch, style, se_reduction, rng) {}

nn::Tensor DecoderStage::forward(const nn::Tensor& x, const nn::Tensor& skip, const nn::Context& ctx) {
    nn::Tensor up = up_.forward(x, ctx);
    if (up.shape().h != skip.shape().h || up.shape().w != skip.shape().w) {
        throw ValidationError("decoder skip mismatch: upsampled " + nn::to_string(up.shape()) + " vs skip " +
                              nn::to_string(skip.shape()));
    }
    if (skip.shape().c != skip_ch_) throw ValidationError("decoder skip has wrong channel count");
    return block_.forward(nn::concat_channels(up, skip), ctx);
}

std::pair<nn::Tensor, nn::Tensor> DecoderStage::backward(const nn::Tensor& dy) {
    nn::Tensor g = block_.backward(dy);
    nn::Tensor dup, dskip;
    nn::split_channels(g, up_ch_, dup, dskip);
    return {up_.backward(dup), std::move(dskip)};
}

void DecoderStage::visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) {
    up_.visit_parameters(nn::join_name(prefix, "up"), fn);
    block_.visit_parameters(nn::join_name(prefix, "block"), fn);
}

void DecoderStage::visit_buffers(const std::string& prefix, const nn::BufferFn& fn) {
    block_.visit_buffers(nn::join_name(prefix, "block"), fn);
}

}  // namespace dgmnet
