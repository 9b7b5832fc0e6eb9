#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dgmnet/landmarks.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/shape_generator.hpp"
#include "gradcheck.hpp"

using namespace dgmnet;
using nn::Shape;
using nn::Tensor;

namespace {

GeneratorSpec small_spec() {
    GeneratorSpec s;
    s.landmark_dim = 4 * 9;
    s.projection_channels = 8;
    s.projection_height = s.projection_width = 4;
    s.upconv_stages = 2;
    s.output_height = s.output_width = 16;
    return s;
}

// 16x16x4 blob, first and last slice empty.
CaseRecord blob_case(const std::string& id) {
    const Dims d{16, 16, 4};
    std::vector<float> m(d.voxels(), 0.0f), img(d.voxels(), 0.0f);
    for (std::size_t z = 1; z < 3; ++z) {
        for (std::size_t y = 4; y < 12; ++y) {
            for (std::size_t x = 5; x < 11 + z; ++x) m[(z * 16 + y) * 16 + x] = img[(z * 16 + y) * 16 + x] = 1.0f;
        }
    }
    return CaseRecord{id, Volume(d, {}, VolumeKind::Image, img), Volume(d, {}, VolumeKind::Mask, m),
                      Modality::HighContrast};
}

}  // namespace

TEST(GeneratorSpec, Validation) {
    EXPECT_NO_THROW(small_spec().validate());
    GeneratorSpec s = small_spec();
    s.output_width = 32;
    EXPECT_THROW(s.validate(), ValidationError);
    s = small_spec();
    s.projection_height = 2;
    s.output_height = 8;
    EXPECT_THROW(s.validate(), ValidationError);
    s = small_spec();
    s.upconv_stages = 1;
    s.output_height = s.output_width = 8;
    EXPECT_THROW(s.validate(), ValidationError);
    s = small_spec();
    s.landmark_dim = 20;
    EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Generator, OutputShapeAndRange) {
    GeneratorSpec s;
    s.landmark_dim = 36;
    s.projection_channels = 32;
    s.projection_height = s.projection_width = 8;
    s.upconv_stages = 3;
    s.output_height = s.output_width = 64;
    auto g = build_generator(s, 4);
    std::mt19937_64 rng(1);
    std::vector<float> rows(3 * 36), pos{0.0f, 0.5f, 1.0f};
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : rows) v = u(rng);
    const Tensor y = g->forward(make_generator_input(rows, pos, 36), nn::Context{});
    EXPECT_EQ(y.shape(), (Shape{3, 1, 64, 64}));
    for (float v : y.values()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(Generator, ParameterCountMatchesHandCount) {
    const GeneratorSpec s = small_spec();
    auto g = build_generator(s, 0);
    const std::size_t proj = s.projection_channels * s.projection_height * s.projection_width;
    // FC sees the input plus the nine interpolated landmark values of the current slice.
    std::size_t expected = (s.input_dim() + 9) * proj + proj;
    std::size_t in = s.projection_channels;
    for (std::size_t st = 0; st < s.upconv_stages; ++st) {
        const std::size_t out = s.stage_channels(st);
        expected += 2 * in;            // batch-norm gamma, beta
        expected += in * out * 4 + out;  // 2x2 up-conv
        in = out;
    }
    EXPECT_EQ(in, 1u);
    EXPECT_EQ(g->parameter_count(), expected);
}

TEST(Generator, ZeroInputDeterministicInEval) {
    auto g = build_generator(small_spec(), 2);
    const std::vector<float> rows(2 * 36, 0.0f), pos{0.0f, 0.0f};
    const Tensor a = g->forward(make_generator_input(rows, pos, 36), nn::Context{});
    const Tensor b = g->forward(make_generator_input(rows, pos, 36), nn::Context{});
    EXPECT_EQ(a, b);
    for (float v : a.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Generator, InputGradientThroughReadout) {
    std::mt19937_64 rng(6);
    auto g = build_generator(small_spec(), 7);
    const std::vector<float> pos{0.2f, 0.55f, 0.9f};
    const nn::Context ctx{false, nullptr, true};
    auto forward = [&](const Tensor& lm) { return g->forward(make_generator_input(lm.values(), pos, 36), ctx); };
    auto backward = [&](const Tensor& dy) {
        const Tensor din = g->backward(dy);
        Tensor d(Shape{3, 36, 1, 1});
        for (std::size_t n = 0; n < 3; ++n) std::copy_n(din.sample(n), 36, d.sample(n));
        return d;
    };
    std::vector<nn::Parameter*> params;
    for (auto& [name, p] : g->named_parameters()) params.push_back(p);
    const auto r = check::gradient_check(forward, backward, check::random_tensor(Shape{3, 36, 1, 1}, rng, 0.5f),
                                         params, rng, 1e-3f, 36);
    EXPECT_LT(r.input_error, 2e-2);
    EXPECT_LT(r.param_error, 2e-2);
}

TEST(Generator, FrozenAccumulatesNoGradient) {
    auto g = build_generator(small_spec(), 1);
    g->freeze();
    EXPECT_TRUE(g->fully_frozen());
    const std::vector<float> rows(2 * 36, 0.3f), pos{0.1f, 0.7f};
    const nn::Context ctx{false, nullptr, true};
    const Tensor y = g->forward(make_generator_input(rows, pos, 36), ctx);
    Tensor dy(y.shape());
    dy.fill(1.0f);
    const Tensor din = g->backward(dy);
    double mass = 0;
    for (float v : din.values()) mass += std::abs(v);
    EXPECT_GT(mass, 0.0);
    for (auto& [name, p] : g->named_parameters()) {
        for (float v : p->grad.values()) ASSERT_EQ(v, 0.0f) << name;
    }
}

TEST(Generator, GenerateShapeContract) {
    auto g = build_generator(small_spec(), 3);
    const std::vector<float> vec(36, 0.25f);
    EXPECT_THROW(generate_shape(*g, vec, 1), ValidationError);
    g->freeze();
    const Tensor a = generate_shape(*g, vec, 1);
    EXPECT_EQ(a, generate_shape(*g, vec, 1));
    EXPECT_EQ(a.shape(), (Shape{1, 1, 16, 16}));
    for (float v : a.values()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
    EXPECT_THROW(generate_shape(*g, std::vector<float>(35, 0.0f), 1), ValidationError);
}

TEST(Generator, CloneCopiesStateAndFreeze) {
    auto g = build_generator(small_spec(), 3);
    g->freeze();
    auto c = g->clone();
    EXPECT_TRUE(c->fully_frozen());
    const std::vector<float> vec(36, 0.4f);
    EXPECT_EQ(generate_shape(*g, vec, 2), generate_shape(*c, vec, 2));
}

TEST(Folds, DeterministicAndBalanced) {
    const auto a = fold_assignment(23, 5, 9);
    EXPECT_EQ(a, fold_assignment(23, 5, 9));
    EXPECT_NE(a, fold_assignment(23, 5, 10));
    std::vector<std::size_t> sizes(5, 0);
    for (std::size_t f : a) {
        ASSERT_LT(f, 5u);
        ++sizes[f];
    }
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_THROW(fold_assignment(3, 0, 1), ValidationError);
}

TEST(TrainGenerator, RejectsTooFewCasesAndEmptyMasks) {
    std::vector<CaseRecord> cases{blob_case("a"), blob_case("b")};
    GeneratorTrainConfig cfg;
    cfg.folds = 3;
    EXPECT_THROW(train_generator(cases, small_spec(), cfg), ValidationError);
    CaseRecord empty = blob_case("c");
    empty.mask = Volume::zeros(empty.mask.dims(), {}, VolumeKind::Mask);
    cases.push_back(empty);
    EXPECT_THROW(train_generator(cases, small_spec(), cfg), ValidationError);
}

TEST(TrainGenerator, DuplicatedCaseOverfitsAndAbsentSlicesStayDark) {
    std::vector<CaseRecord> cases;
    for (int i = 0; i < 5; ++i) cases.push_back(blob_case("dup" + std::to_string(i)));
    GeneratorTrainConfig cfg;
    cfg.folds = 5;
    cfg.epochs = 150;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-3;
    cfg.seed = 1;
    const auto result = train_generator(cases, small_spec(), cfg);
    ASSERT_EQ(result.folds.size(), 5u);
    std::set<std::string> held;
    for (const auto& f : result.folds) {
        EXPECT_GE(f.reconstruction_dsc, 0.95) << "fold " << f.fold;
        held.insert(f.held_out.begin(), f.held_out.end());
    }
    EXPECT_EQ(held.size(), 5u);
    EXPECT_TRUE(result.generator->fully_frozen());
    EXPECT_GE(reconstruction_dsc(*result.generator, cases[0].mask), 0.95);

    const std::vector<float> absent(36, 0.0f);
    for (std::size_t u = 0; u < 4; ++u) {
        const Tensor shape = generate_shape(*result.generator, absent, u);
        const double mean = std::accumulate(shape.values().begin(), shape.values().end(), 0.0) / shape.size();
        EXPECT_LT(mean, 0.5) << "slice " << u;
    }
}
