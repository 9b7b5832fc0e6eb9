#include "dgmnet/shape_generator.hpp"

#include <algorithm>
#include <numeric>

#include "dgmnet/landmarks.hpp"
#include "dgmnet/losses.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/rng.hpp"

namespace dgmnet {

void GeneratorSpec::validate() const {
    if (landmark_dim == 0 || landmark_dim % kLandmarkStride != 0) {
        throw ValidationError("generator landmark_dim must be a positive multiple of 9");
    }
    if (projection_channels == 0) throw ValidationError("generator projection channels must be positive");
    if (projection_height < 4 || projection_width < 4) throw ValidationError("generator projection must be >= 4x4");
    if (upconv_stages < 2) throw ValidationError("generator needs at least 2 up-convolution stages");
    if ((projection_height << upconv_stages) != output_height || (projection_width << upconv_stages) != output_width) {
        throw ValidationError("generator projection size * 2^stages must equal the output size");
    }
}

std::size_t GeneratorSpec::stage_channels(std::size_t s) const {
    if (s + 1 == upconv_stages) return 1;
    return std::max<std::size_t>(4, projection_channels >> (s + 1));
}

float slice_position(std::size_t u, std::size_t max_slices) {
    return max_slices > 1 ? static_cast<float>(u) / static_cast<float>(max_slices - 1) : 0.0f;
}

ShapeGenerator::ShapeGenerator(const GeneratorSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec_.validate();
    nn::InitRng rng(seed);
    const std::size_t proj = spec_.projection_channels * spec_.projection_height * spec_.projection_width;
    projection_ = std::make_unique<nn::Linear>(spec_.input_dim() + kLandmarkStride, proj, rng);
    std::size_t in = spec_.projection_channels;
    for (std::size_t s = 0; s < spec_.upconv_stages; ++s) {
        const std::size_t out = spec_.stage_channels(s);
        stages_.push_back(std::make_unique<Stage>(in, out, rng));
        in = out;
    }
}

nn::Tensor ShapeGenerator::forward(const nn::Tensor& input, const nn::Context& ctx) {
    if (input.shape().sample() != spec_.input_dim()) {
        throw ValidationError("generator input has " + std::to_string(input.shape().sample()) +
                              " features, expected " + std::to_string(spec_.input_dim()));
    }
    const std::size_t n = input.shape().n;
    const std::size_t dim = spec_.landmark_dim, slices = spec_.max_slices(), in_dim = spec_.input_dim();
    // Interpolated read-out of the landmark row at the slice position, appended to the FC input.
    std::vector<float> weights(n * slices, 0.0f);
    nn::Tensor x(nn::Shape{n, in_dim + kLandmarkStride, 1, 1});
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = input.sample(i);
        float* dst = x.sample(i);
        std::copy_n(src, in_dim, dst);
        const float u = src[dim] * static_cast<float>(slices - 1);
        for (std::size_t k = 0; k < slices; ++k) {
            const float w = std::max(0.0f, 1.0f - std::abs(u - static_cast<float>(k)));
            weights[i * slices + k] = w;
            if (w == 0.0f) continue;
            for (std::size_t j = 0; j < kLandmarkStride; ++j) dst[in_dim + j] += w * src[k * kLandmarkStride + j];
        }
    }
    if (ctx.caches()) readout_weights_ = std::move(weights);
    nn::Tensor h = projection_->forward(x, ctx).reshaped(
        nn::Shape{n, spec_.projection_channels, spec_.projection_height, spec_.projection_width});
    for (auto& st : stages_) {
        h = st->up.forward(st->bn.forward(st->act.forward(h, ctx), ctx), ctx);
    }
    return out_act_.forward(h, ctx);
}

nn::Tensor ShapeGenerator::backward(const nn::Tensor& dy) {
    nn::Tensor g = out_act_.backward(dy);
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
        g = (*it)->act.backward((*it)->bn.backward((*it)->up.backward(g)));
    }
    const std::size_t n = g.shape().n;
    const nn::Tensor dx = projection_->backward(g.reshaped(nn::Shape{n, g.shape().sample(), 1, 1}));
    const std::size_t slices = spec_.max_slices(), in_dim = spec_.input_dim();
    nn::Tensor din(nn::Shape{n, in_dim, 1, 1});
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = dx.sample(i);
        float* dst = din.sample(i);
        std::copy_n(src, in_dim, dst);
        for (std::size_t k = 0; k < slices; ++k) {
            const float w = readout_weights_[i * slices + k];
            if (w == 0.0f) continue;
            for (std::size_t j = 0; j < kLandmarkStride; ++j) dst[k * kLandmarkStride + j] += w * src[in_dim + j];
        }
    }
    return din;
}

void ShapeGenerator::visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) {
    projection_->visit_parameters(nn::join_name(prefix, "projection"), fn);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        const std::string p = nn::join_name(prefix, "stage" + std::to_string(s));
        stages_[s]->bn.visit_parameters(nn::join_name(p, "bn"), fn);
        stages_[s]->up.visit_parameters(nn::join_name(p, "up"), fn);
    }
}

void ShapeGenerator::visit_buffers(const std::string& prefix, const nn::BufferFn& fn) {
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        stages_[s]->bn.visit_buffers(nn::join_name(nn::join_name(prefix, "stage" + std::to_string(s)), "bn"), fn);
    }
}

std::unique_ptr<ShapeGenerator> ShapeGenerator::clone() {
    auto g = std::make_unique<ShapeGenerator>(spec_, 0);
    g->copy_state_from(*this);
    g->training_modality = training_modality;
    auto src = named_parameters();
    auto dst = g->named_parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].second->frozen = src[i].second->frozen;
    return g;
}

std::unique_ptr<ShapeGenerator> build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
    return std::make_unique<ShapeGenerator>(spec, seed);
}

nn::Tensor make_generator_input(std::span<const float> landmark_rows, std::span<const float> positions,
                                std::size_t landmark_dim) {
    const std::size_t n = positions.size();
    if (landmark_rows.size() != n * landmark_dim) throw ValidationError("generator input rows have wrong length");
    nn::Tensor in(nn::Shape{n, landmark_dim + 1, 1, 1});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(landmark_rows.data() + i * landmark_dim, landmark_dim, in.sample(i));
        in.sample(i)[landmark_dim] = positions[i];
    }
    return in;
}

nn::Tensor generate_shape(ShapeGenerator& g, std::span<const float> landmark_vec, std::size_t slice_index) {
    if (!g.fully_frozen()) throw ValidationError("generate_shape requires a frozen generator");
    if (landmark_vec.size() != g.spec().landmark_dim) {
        throw ValidationError("landmark vector length " + std::to_string(landmark_vec.size()) + " != landmark_dim " +
                              std::to_string(g.spec().landmark_dim));
    }
    const float pos = slice_position(slice_index, g.spec().max_slices());
    return g.forward(make_generator_input(landmark_vec, std::span<const float>(&pos, 1), g.spec().landmark_dim),
                     nn::Context{});
}

double GeneratorTrainResult::mean_fold_dsc() const {
    if (folds.empty()) return 0.0;
    double s = 0.0;
    for (const auto& f : folds) s += f.reconstruction_dsc;
    return s / static_cast<double>(folds.size());
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds == 0) throw ValidationError("fold count must be positive");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "folds"));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold(n);
    for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % folds;
    return fold;
}

namespace {

struct GeneratorSample {
    const std::vector<float>* landmarks;
    const Volume* mask;
    std::size_t slice;
};

void require_output_grid(const Volume& mask, const GeneratorSpec& spec) {
    if (mask.width() != spec.output_width || mask.height() != spec.output_height) {
        throw ValidationError("generator training masks must match the generator output size");
    }
    if (mask.depth() > spec.max_slices()) throw ValidationError("mask depth exceeds generator max_slices");
}

}  // namespace

std::unique_ptr<ShapeGenerator> fit_generator(std::span<const CaseRecord* const> cases, const GeneratorSpec& spec,
                                              const GeneratorTrainConfig& config, std::uint64_t seed) {
    if (cases.empty()) throw ValidationError("fit_generator needs at least one case");
    for (const CaseRecord* c : cases) require_output_grid(c->mask, spec);
    auto g = build_generator(spec, derive_seed(seed, "generator-init"));

    nn::Adam adam(nn::AdamConfig{config.learning_rate});
    const auto params = g->named_parameters();
    const std::size_t plane = spec.output_height * spec.output_width;
    const std::size_t bs = std::max<std::size_t>(1, config.batch_size);

    std::vector<std::vector<float>> encoded;
    for (const CaseRecord* c : cases) encoded.push_back(encode_landmarks(extract_landmarks(c->mask), spec.max_slices()));
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<GeneratorSample> samples;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            for (std::size_t u = 0; u < cases[i]->mask.depth(); ++u) {
                samples.push_back({&encoded[i], &cases[i]->mask, u});
            }
        }
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(seed, "generator-epoch", epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t n = std::min(bs, order.size() - start);
            std::vector<float> rows, pos;
            std::vector<double> target(n * plane), pred(n * plane), grad(n * plane);
            for (std::size_t i = 0; i < n; ++i) {
                const GeneratorSample& s = samples[order[start + i]];
                rows.insert(rows.end(), s.landmarks->begin(), s.landmarks->end());
                pos.push_back(slice_position(s.slice, spec.max_slices()));
                const auto sl = s.mask->slice(s.slice);
                std::copy(sl.begin(), sl.end(), target.begin() + static_cast<std::ptrdiff_t>(i * plane));
            }
            const nn::Context ctx{true, nullptr};
            const nn::Tensor out = g->forward(make_generator_input(rows, pos, spec.landmark_dim), ctx);
            std::copy(out.values().begin(), out.values().end(), pred.begin());
            binary_cross_entropy<double>(pred, target, grad);
            nn::Tensor dy(out.shape());
            for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = static_cast<float>(grad[i]);
            g->zero_grad();
            g->backward(dy);
            adam.step(params);
        }
    }
    return g;
}

double reconstruction_dsc(ShapeGenerator& g, const Volume& mask) {
    const GeneratorSpec& spec = g.spec();
    require_output_grid(mask, spec);
    const auto vec = encode_landmarks(extract_landmarks(mask), spec.max_slices());
    const std::size_t depth = mask.depth();
    std::vector<float> rows, pos;
    for (std::size_t u = 0; u < depth; ++u) {
        rows.insert(rows.end(), vec.begin(), vec.end());
        pos.push_back(slice_position(u, spec.max_slices()));
    }
    const nn::Tensor out = g.forward(make_generator_input(rows, pos, spec.landmark_dim), nn::Context{});
    std::vector<float> bin(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) bin[i] = out[i] > 0.5f ? 1.0f : 0.0f;
    const Volume pred(mask.dims(), mask.spacing(), VolumeKind::Mask, std::move(bin));
    return overlap_metrics(pred, mask).dsc;
}

GeneratorTrainResult train_generator(std::span<const CaseRecord> cases, const GeneratorSpec& spec,
                                     const GeneratorTrainConfig& config) {
    if (cases.size() < config.folds) {
        throw ValidationError("train_generator needs at least " + std::to_string(config.folds) + " cases, got " +
                              std::to_string(cases.size()));
    }
    for (const CaseRecord& c : cases) {
        if (c.mask.count_foreground() == 0) throw ValidationError(c.case_id + ": empty mask in generator training set");
    }
    GeneratorTrainResult result;
    const auto fold = fold_assignment(cases.size(), config.folds, config.seed);
    for (std::size_t k = 0; k < config.folds; ++k) {
        std::vector<const CaseRecord*> train;
        GeneratorFoldResult fr;
        fr.fold = k;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            if (fold[i] == k) fr.held_out.push_back(cases[i].case_id);
            else train.push_back(&cases[i]);
        }
        auto g = fit_generator(train, spec, config, derive_seed(config.seed, "fold", k));
        double sum = 0.0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            if (fold[i] == k) sum += reconstruction_dsc(*g, cases[i].mask);
        }
        fr.reconstruction_dsc = sum / static_cast<double>(fr.held_out.size());
        result.folds.push_back(std::move(fr));
    }
    std::vector<const CaseRecord*> all;
    for (const CaseRecord& c : cases) all.push_back(&c);
    result.generator = fit_generator(all, spec, config, derive_seed(config.seed, "final"));
    result.generator->freeze();
    result.generator->training_modality = std::string(to_string(cases.front().modality));
    return result;
}

}  // namespace dgmnet
