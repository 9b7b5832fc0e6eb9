#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dgmnet/preprocess.hpp"

using namespace dgmnet;

namespace {

std::pair<double, double> mean_std(const Volume& v) {
    double s = 0.0, ss = 0.0;
    for (float x : v.data()) s += x;
    const double n = static_cast<double>(v.data().size());
    const double m = s / n;
    for (float x : v.data()) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / n)};
}

Volume random_image(std::mt19937_64& rng, Dims d, Spacing sp) {
    std::normal_distribution<float> g(50.0f, 12.0f);
    std::vector<float> data(d.voxels());
    for (float& x : data) x = g(rng);
    return Volume(d, sp, VolumeKind::Image, std::move(data));
}

Volume random_mask(std::mt19937_64& rng, Dims d, Spacing sp) {
    std::vector<float> data(d.voxels());
    for (float& x : data) x = static_cast<float>(rng() % 3 == 0);
    return Volume(d, sp, VolumeKind::Mask, std::move(data));
}

bool binary(const Volume& v) {
    return std::all_of(v.data().begin(), v.data().end(), [](float x) { return x == 0.0f || x == 1.0f; });
}

}  // namespace

TEST(Resample, IdentityAtSameSpacing) {
    std::mt19937_64 rng(1);
    const Volume v = random_image(rng, Dims{5, 6, 7}, Spacing{1, 1, 1});
    EXPECT_EQ(resample(v, Spacing{1, 1, 1}), v);
}

TEST(Resample, HalvingDims) {
    const Volume v = Volume::zeros(Dims{4, 4, 4}, {}, VolumeKind::Image);
    const Volume r = resample(v, Spacing{2, 2, 2});
    EXPECT_EQ(r.dims(), (Dims{2, 2, 2}));
    EXPECT_EQ(r.spacing(), (Spacing{2, 2, 2}));
}

TEST(Resample, LinearRampMatchesInterpolationOracle) {
    std::vector<float> ramp(8);
    std::iota(ramp.begin(), ramp.end(), 0.0f);
    const Volume v(Dims{8, 1, 1}, Spacing{1, 1, 1}, VolumeKind::Image, ramp);
    const Volume r = resample(v, Spacing{2, 1, 1});
    ASSERT_EQ(r.width(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        // centre of output voxel i in mm, back to a continuous input index
        const double phys = (static_cast<double>(i) + 0.5) * 2.0;
        const double expected = std::clamp(phys / 1.0 - 0.5, 0.0, 7.0);
        EXPECT_NEAR(r.at(i, 0, 0), expected, 1e-6);
    }
}

TEST(Resample, ZeroSizedOutputIsAnError) {
    const Volume v = Volume::zeros(Dims{1, 4, 4}, {}, VolumeKind::Image);
    EXPECT_THROW(resample(v, Spacing{10, 1, 1}), ValidationError);
}

TEST(Resample, RoundTripDimsWithinOne) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> d(2, 20);
    std::uniform_real_distribution<float> s(0.3f, 3.0f);
    for (int i = 0; i < 50; ++i) {
        const Dims dims{d(rng), d(rng), d(rng)};
        const Spacing sp{s(rng), s(rng), s(rng)};
        // Rounding loses up to half an output voxel; mapped back that stays within one input
        // voxel only while each axis shrinks by at most 2x.
        std::uniform_real_distribution<float> ratio(0.5f, 2.0f);
        const Spacing target{sp.x * ratio(rng), sp.y * ratio(rng), sp.z * ratio(rng)};
        const Volume v = random_image(rng, dims, sp);
        const Volume there = resample(v, target);
        const Volume back = resample(there, sp);
        EXPECT_LE(std::abs(static_cast<long>(back.width()) - static_cast<long>(dims.width)), 1);
        EXPECT_LE(std::abs(static_cast<long>(back.height()) - static_cast<long>(dims.height)), 1);
        EXPECT_LE(std::abs(static_cast<long>(back.depth()) - static_cast<long>(dims.depth)), 1);
    }
}

TEST(CenterCropResize, IdentityAtSameSize) {
    std::mt19937_64 rng(2);
    const Volume v = random_image(rng, Dims{32, 32, 2}, Spacing{1, 1, 2});
    EXPECT_EQ(center_crop_resize(v, 32, 32), v);
}

TEST(CenterCropResize, CropsToCentredSquare) {
    std::vector<float> data(30 * 20);
    for (std::size_t y = 0; y < 20; ++y) {
        for (std::size_t x = 0; x < 30; ++x) data[y * 30 + x] = static_cast<float>(x * 100 + y);
    }
    const Volume v(Dims{30, 20, 1}, Spacing{1, 1, 1}, VolumeKind::Image, data);
    const Volume r = center_crop_resize(v, 20, 20);
    EXPECT_EQ(r.dims(), (Dims{20, 20, 1}));
    for (std::size_t y = 0; y < 20; ++y) {
        for (std::size_t x = 0; x < 20; ++x) EXPECT_EQ(r.at(x, y, 0), static_cast<float>((x + 5) * 100 + y));
    }
}

TEST(CenterCropResize, SpacingTracksScale) {
    const Volume v = Volume::zeros(Dims{300, 200, 3}, Spacing{0.5f, 0.5f, 2.0f}, VolumeKind::Image);
    const Volume r = center_crop_resize(v, 100, 100);
    EXPECT_FLOAT_EQ(r.spacing().x, 1.0f);
    EXPECT_FLOAT_EQ(r.spacing().y, 1.0f);
    EXPECT_FLOAT_EQ(r.spacing().z, 2.0f);
    EXPECT_EQ(r.depth(), 3u);
}

TEST(CenterCropResize, BrightCentreStaysCentred) {
    std::vector<float> data(64 * 64, 0.0f);
    data[32 * 64 + 32] = 1.0f;
    const Volume v(Dims{64, 64, 1}, {}, VolumeKind::Image, data);
    const Volume r = center_crop_resize(v, 32, 32);
    const auto it = std::max_element(r.data().begin(), r.data().end());
    const auto idx = static_cast<std::size_t>(it - r.data().begin());
    EXPECT_GT(*it, 0.0f);
    EXPECT_LE(std::abs(static_cast<long>(idx % 32) - 16), 1);
    EXPECT_LE(std::abs(static_cast<long>(idx / 32) - 16), 1);
}

TEST(Normalize, ConstantGivesZeros) {
    const Volume v(Dims{3, 3, 3}, {}, VolumeKind::Image, std::vector<float>(27, 7.0f));
    const Volume n = normalize(v);
    EXPECT_TRUE(std::all_of(n.data().begin(), n.data().end(), [](float x) { return x == 0.0f; }));
}

TEST(Normalize, TwoValues) {
    const Volume v(Dims{4, 1, 1}, {}, VolumeKind::Image, {0, 2, 0, 2});
    const Volume n = normalize(v);
    EXPECT_EQ(std::vector<float>(n.data().begin(), n.data().end()), (std::vector<float>{-1, 1, -1, 1}));
}

TEST(Normalize, RandomStatisticsAndIdempotence) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) {
        const Volume v = random_image(rng, Dims{9, 8, 7}, {});
        const Volume n = normalize(v);
        const auto [m, s] = mean_std(n);
        EXPECT_NEAR(m, 0.0, 1e-5);
        EXPECT_NEAR(s, 1.0, 1e-5);
        const Volume nn = normalize(n);
        for (std::size_t k = 0; k < n.data().size(); ++k) EXPECT_NEAR(nn.data()[k], n.data()[k], 1e-5);
    }
}

TEST(Normalize, RejectsMasks) {
    const Volume m = Volume::zeros(Dims{2, 2, 2}, {}, VolumeKind::Mask);
    EXPECT_THROW(normalize(m), ValidationError);
}

TEST(Preprocess, MasksStayBinary) {
    std::mt19937_64 rng(4);
    PreprocessConfig cfg;
    cfg.target_width = cfg.target_height = 16;
    cfg.target_spacing = Spacing{0.7f, 0.9f, 1.3f};
    for (int i = 0; i < 10; ++i) {
        const Spacing sp{0.5f + 0.1f * static_cast<float>(i), 1.0f, 1.25f};
        CaseRecord c{"c", random_image(rng, Dims{20, 24, 6}, sp), random_mask(rng, Dims{20, 24, 6}, sp),
                     Modality::LowContrast};
        EXPECT_TRUE(binary(resample(c.mask, cfg.target_spacing)));
        EXPECT_TRUE(binary(center_crop_resize(c.mask, 16, 16)));
        const CaseRecord p = preprocess_case(c, cfg);
        EXPECT_TRUE(p.mask.is_mask());
        EXPECT_TRUE(binary(p.mask));
        EXPECT_EQ(p.image.dims(), p.mask.dims());
        EXPECT_EQ(p.image.width(), 16u);
    }
}

TEST(Preprocess, DatasetScopeUsesGivenStats) {
    std::mt19937_64 rng(6);
    PreprocessConfig cfg;
    cfg.target_width = cfg.target_height = 8;
    cfg.normalization_scope = NormalizationScope::Dataset;
    const Volume img(Dims{8, 8, 1}, {}, VolumeKind::Image, std::vector<float>(64, 5.0f));
    const CaseRecord c{"c", img, Volume::zeros(img.dims(), {}, VolumeKind::Mask), Modality::HighContrast};
    const IntensityStats stats{3.0, 2.0};
    const CaseRecord p = preprocess_case(c, cfg, &stats);
    EXPECT_FLOAT_EQ(p.image.at(0, 0, 0), 1.0f);
}

TEST(PreprocessConfig, Validation) {
    PreprocessConfig cfg;
    cfg.target_width = 7;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg.target_width = 64;
    cfg.target_spacing.z = 0.0f;
    EXPECT_THROW(cfg.validate(), ValidationError);
}
