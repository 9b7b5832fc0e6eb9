#include "dgmnet/architectures.hpp"

#include <cmath>
#include <map>

#include "dgmnet/errors.hpp"
#include "dgmnet/landmarks.hpp"
#include "dgmnet/rng.hpp"

namespace dgmnet {

void ModelSpec::validate() const {
    if (levels < 3) throw ValidationError("model.levels must be >= 3");
    if (base_filters < 4) throw ValidationError("model.base_filters must be >= 4");
    if (se_reduction < 2) throw ValidationError("model.se_reduction must be >= 2");
    if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f)) throw ValidationError("model.dropout_rate must be in [0, 1)");
    const std::size_t div = std::size_t{1} << levels;
    if (input_height == 0 || input_width == 0 || input_height % div != 0 || input_width % div != 0) {
        throw ValidationError("model input size must be divisible by 2^levels = " + std::to_string(div));
    }
    if (max_slices == 0) throw ValidationError("model.max_slices must be positive");
    if (fc_hidden == 0) throw ValidationError("model.fc_hidden must be positive");
}

GeneratorSpec generator_spec_for(const ModelSpec& spec) {
    GeneratorSpec g;
    g.landmark_dim = spec.landmark_dim();
    return g;
}

SegmentationModel::SegmentationModel(const ModelSpec& spec, std::unique_ptr<ShapeGenerator> generator)
    : spec_(spec), dropout_(spec.dropout_rate), generator_(std::move(generator)),
      dropout_rng_(derive_seed(spec.seed, "dropout")) {
    spec_.validate();
    const bool dgm = spec_.variant == Variant::DgmNet;
    if (dgm && !generator_) throw ValidationError("DGMNET requires a shape generator");
    if (!dgm && generator_) throw ValidationError(std::string(to_string(spec_.variant)) + " does not take a generator");
    if (dgm && generator_->spec().landmark_dim != spec_.landmark_dim()) {
        throw ValidationError("generator landmark_dim " + std::to_string(generator_->spec().landmark_dim) +
                              " != model landmark_dim " + std::to_string(spec_.landmark_dim()));
    }

    nn::InitRng rng(derive_seed(spec_.seed, "init"));
    const BlockStyle style = block_style(spec_.variant);
    const std::size_t L = spec_.levels;
    std::size_t in = 1;
    for (std::size_t i = 0; i < L; ++i) {
        encoders_.push_back(std::make_unique<ConvBlock>(in, spec_.channels(i), style, spec_.se_reduction, rng));
        in = spec_.channels(i);
    }
    pools_.resize(L);
    bottleneck_ = std::make_unique<ConvBlock>(in, spec_.channels(L), style, spec_.se_reduction, rng);
    decoders_.resize(L);
    for (std::size_t i = L; i-- > 0;) {
        decoders_[i] = std::make_unique<DecoderStage>(spec_.channels(i + 1), spec_.channels(i), spec_.channels(i),
                                                      style, spec_.se_reduction, rng);
    }
    if (dgm || spec_.extra_head_block) {
        extra_ = std::make_unique<ConvBlock>(spec_.channels(0), spec_.channels(0), style, spec_.se_reduction, rng);
    }
    head_ = std::make_unique<nn::Conv2d>(spec_.channels(0), 1, 1, rng);

    if (dgm) {
        lm_pool_ = std::make_unique<nn::GlobalPool>(spec_.model_path_pool);
        lm_fc1_ = std::make_unique<nn::Linear>(spec_.channels(L), spec_.fc_hidden, rng);
        lm_fc2_ = std::make_unique<nn::Linear>(spec_.fc_hidden, spec_.landmark_dim(), rng);
        generator_->freeze();
        resize_ = std::make_unique<nn::BilinearResize>(spec_.input_height, spec_.input_width);
    }
}

SegmentationModel::Output SegmentationModel::forward(const nn::Tensor& images, std::span<const float> slice_positions,
                                                     const nn::Context& ctx_in) {
    const nn::Shape s = images.shape();
    if (s.c != 1 || s.h != spec_.input_height || s.w != spec_.input_width) {
        throw ValidationError("model expects (N, 1, " + std::to_string(spec_.input_height) + ", " +
                              std::to_string(spec_.input_width) + "), got " + nn::to_string(s));
    }
    if (!slice_positions.empty() && slice_positions.size() != s.n) {
        throw ValidationError("slice position count does not match the batch");
    }
    nn::Context ctx = ctx_in;
    if (ctx.training && !ctx.rng) ctx.rng = &dropout_rng_;

    const std::size_t L = spec_.levels;
    std::vector<nn::Tensor> skips(L);
    nn::Tensor x = images;
    for (std::size_t i = 0; i < L; ++i) {
        skips[i] = encoders_[i]->forward(x, ctx);
        x = pools_[i].forward(skips[i], ctx);
    }
    nn::Tensor b = dropout_.forward(bottleneck_->forward(x, ctx), ctx);

    Output out;
    nn::Tensor h = b;
    for (std::size_t i = L; i-- > 0;) h = decoders_[i]->forward(h, skips[i], ctx);

    if (generator_) {
        nn::Tensor z = lm_fc2_->forward(lm_relu_.forward(lm_fc1_->forward(lm_pool_->forward(b, ctx), ctx), ctx), ctx);
        const std::size_t dim = spec_.landmark_dim();
        for (std::size_t n = 0; n < s.n; ++n) {
            float* row = z.sample(n);
            for (std::size_t k = 0; k < dim; k += kLandmarkStride) row[k] = 1.0f / (1.0f + std::exp(-row[k]));
        }
        landmarks_ = z;
        out.landmarks = z;

        std::vector<float> pos(s.n, 0.0f);
        if (!slice_positions.empty()) std::copy(slice_positions.begin(), slice_positions.end(), pos.begin());
        const nn::Context gctx{false, nullptr, ctx.caches()};
        nn::Tensor g = generator_->forward(make_generator_input(z.values(), pos, dim), gctx);
        shape_map_ = resize_->forward(g, gctx);
        if (zero_shape_) shape_map_.zero();
        for (std::size_t n = 0; n < s.n; ++n) {
            const float* m = shape_map_.plane(n, 0);
            for (std::size_t c = 0; c < h.shape().c; ++c) {
                float* p = h.plane(n, c);
                for (std::size_t i = 0; i < h.shape().plane(); ++i) p[i] += m[i];
            }
        }
    }
    if (extra_) h = extra_->forward(h, ctx);
    out.mask = head_act_.forward(head_->forward(h, ctx), ctx);
    return out;
}

void SegmentationModel::backward(const nn::Tensor& dmask, const nn::Tensor* dlandmarks) {
    const std::size_t L = spec_.levels;
    nn::Tensor g = head_->backward(head_act_.backward(dmask));
    if (extra_) g = extra_->backward(g);

    nn::Tensor dbottleneck_lm;
    if (generator_) {
        const nn::Shape gs = g.shape();
        const std::size_t dim = spec_.landmark_dim();
        nn::Tensor dz(landmarks_.shape());
        if (dlandmarks) {
            if (!(dlandmarks->shape().n == gs.n && dlandmarks->shape().sample() == dim)) {
                throw ValidationError("landmark gradient has wrong shape " + nn::to_string(dlandmarks->shape()));
            }
            std::copy(dlandmarks->values().begin(), dlandmarks->values().end(), dz.data());
        }
        if (!zero_shape_) {
            nn::Tensor dshape(nn::Shape{gs.n, 1, gs.h, gs.w});
            for (std::size_t n = 0; n < gs.n; ++n) {
                float* d = dshape.plane(n, 0);
                for (std::size_t c = 0; c < gs.c; ++c) {
                    const float* p = g.plane(n, c);
                    for (std::size_t i = 0; i < gs.plane(); ++i) d[i] += p[i];
                }
            }
            const nn::Tensor din = generator_->backward(resize_->backward(dshape));
            for (std::size_t n = 0; n < gs.n; ++n) {
                for (std::size_t k = 0; k < dim; ++k) dz.sample(n)[k] += din.sample(n)[k];
            }
        }
        for (std::size_t n = 0; n < gs.n; ++n) {
            for (std::size_t k = 0; k < dim; k += kLandmarkStride) {
                const float p = landmarks_.sample(n)[k];
                dz.sample(n)[k] *= p * (1.0f - p);
            }
        }
        dbottleneck_lm = lm_pool_->backward(lm_fc1_->backward(lm_relu_.backward(lm_fc2_->backward(dz))));
    }

    std::vector<nn::Tensor> dskips(L);
    for (std::size_t i = 0; i < L; ++i) {
        auto [dx, dskip] = decoders_[i]->backward(g);
        g = std::move(dx);
        dskips[i] = std::move(dskip);
    }
    if (!dbottleneck_lm.empty()) g += dbottleneck_lm;
    g = bottleneck_->backward(dropout_.backward(g));
    for (std::size_t i = L; i-- > 0;) {
        g = pools_[i].backward(g);
        g += dskips[i];
        g = encoders_[i]->backward(g);
    }
}

void SegmentationModel::visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) {
    for (std::size_t i = 0; i < encoders_.size(); ++i) {
        encoders_[i]->visit_parameters(nn::join_name(prefix, "enc" + std::to_string(i)), fn);
    }
    bottleneck_->visit_parameters(nn::join_name(prefix, "bottleneck"), fn);
    for (std::size_t i = decoders_.size(); i-- > 0;) {
        decoders_[i]->visit_parameters(nn::join_name(prefix, "dec" + std::to_string(i)), fn);
    }
    if (extra_) extra_->visit_parameters(nn::join_name(prefix, "extra"), fn);
    head_->visit_parameters(nn::join_name(prefix, "head"), fn);
    if (generator_) {
        lm_fc1_->visit_parameters(nn::join_name(prefix, "landmark_head.fc1"), fn);
        lm_fc2_->visit_parameters(nn::join_name(prefix, "landmark_head.fc2"), fn);
        generator_->visit_parameters(nn::join_name(prefix, "generator"), fn);
    }
}

void SegmentationModel::visit_buffers(const std::string& prefix, const nn::BufferFn& fn) {
    for (std::size_t i = 0; i < encoders_.size(); ++i) {
        encoders_[i]->visit_buffers(nn::join_name(prefix, "enc" + std::to_string(i)), fn);
    }
    bottleneck_->visit_buffers(nn::join_name(prefix, "bottleneck"), fn);
    for (std::size_t i = decoders_.size(); i-- > 0;) {
        decoders_[i]->visit_buffers(nn::join_name(prefix, "dec" + std::to_string(i)), fn);
    }
    if (extra_) extra_->visit_buffers(nn::join_name(prefix, "extra"), fn);
    if (generator_) generator_->visit_buffers(nn::join_name(prefix, "generator"), fn);
}

std::unique_ptr<SegmentationModel> build_model(const ModelSpec& spec, ShapeGenerator* generator) {
    return std::make_unique<SegmentationModel>(spec, generator ? generator->clone() : nullptr);
}

std::size_t copy_shared_state(nn::Network& dst, nn::Network& src) {
    std::map<std::string, nn::Parameter*> sp;
    for (const auto& [name, p] : src.named_parameters()) sp[name] = p;
    std::map<std::string, nn::Tensor*> sb;
    for (const auto& [name, t] : src.named_buffers()) sb[name] = t;
    std::size_t copied = 0;
    for (const auto& [name, p] : dst.named_parameters()) {
        auto it = sp.find(name);
        if (it != sp.end() && it->second->value.shape() == p->value.shape()) {
            p->value = it->second->value;
            ++copied;
        }
    }
    for (const auto& [name, t] : dst.named_buffers()) {
        auto it = sb.find(name);
        if (it != sb.end() && it->second->shape() == t->shape()) {
            *t = *it->second;
            ++copied;
        }
    }
    return copied;
}

}  // namespace dgmnet
