#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dgmnet/landmarks.hpp"
#include "test_support.hpp"

using namespace dgmnet;

namespace {

Volume mask_from(Dims d, const std::vector<std::array<std::size_t, 3>>& on) {
    std::vector<float> data(d.voxels(), 0.0f);
    for (const auto& p : on) data[(p[2] * d.height + p[1]) * d.width + p[0]] = 1.0f;
    return Volume(d, {}, VolumeKind::Mask, std::move(data));
}

Volume random_blob_mask(std::mt19937_64& rng, Dims d) {
    std::vector<float> data(d.voxels(), 0.0f);
    for (std::size_t z = 0; z < d.depth; ++z) {
        if (rng() % 4 == 0) continue;
        const long cx = static_cast<long>(rng() % d.width), cy = static_cast<long>(rng() % d.height);
        const long r = 1 + static_cast<long>(rng() % 4);
        for (std::size_t y = 0; y < d.height; ++y) {
            for (std::size_t x = 0; x < d.width; ++x) {
                const long dx = static_cast<long>(x) - cx, dy = static_cast<long>(y) - cy;
                if (dx * dx + dy * dy <= r * r || rng() % 50 == 0) data[(z * d.height + y) * d.width + x] = 1.0f;
            }
        }
    }
    return Volume(d, {}, VolumeKind::Mask, std::move(data));
}

// Scan-based reference: collect the extreme column/row and take the lower median of its other coordinate.
LandmarkRecord reference(const Volume& m, std::size_t z) {
    LandmarkRecord r;
    r.slice = z;
    std::vector<std::pair<std::size_t, std::size_t>> fg;
    for (std::size_t y = 0; y < m.height(); ++y) {
        for (std::size_t x = 0; x < m.width(); ++x) {
            if (m.at(x, y, z) == 1.0f) fg.emplace_back(x, y);
        }
    }
    if (fg.empty()) return r;
    r.present = true;
    const float sx = static_cast<float>(m.width() - 1), sy = static_cast<float>(m.height() - 1);
    auto lower_median = [](std::vector<std::size_t> v) {
        std::sort(v.begin(), v.end());
        return v[(v.size() - 1) / 2];
    };
    std::size_t minx = m.width(), maxx = 0, miny = m.height(), maxy = 0;
    for (auto [x, y] : fg) {
        minx = std::min(minx, x), maxx = std::max(maxx, x), miny = std::min(miny, y), maxy = std::max(maxy, y);
    }
    auto column = [&](std::size_t cx) {
        std::vector<std::size_t> ys;
        for (auto [x, y] : fg) if (x == cx) ys.push_back(y);
        return lower_median(ys);
    };
    auto row = [&](std::size_t cy) {
        std::vector<std::size_t> xs;
        for (auto [x, y] : fg) if (y == cy) xs.push_back(x);
        return lower_median(xs);
    };
    auto pt = [&](std::size_t x, std::size_t y) {
        return Point2{m.width() > 1 ? static_cast<float>(x) / sx : 0.0f, m.height() > 1 ? static_cast<float>(y) / sy : 0.0f};
    };
    r.points = {pt(minx, column(minx)), pt(maxx, column(maxx)), pt(row(miny), miny), pt(row(maxy), maxy)};
    return r;
}

}  // namespace

TEST(Landmarks, SingleVoxel) {
    const Volume m = mask_from(Dims{16, 16, 1}, {{5, 9, 0}});
    const LandmarkSet ls = extract_landmarks(m);
    ASSERT_EQ(ls.records.size(), 1u);
    EXPECT_TRUE(ls.records[0].present);
    for (const Point2& p : ls.records[0].points) {
        EXPECT_FLOAT_EQ(p.x, 5.0f / 15.0f);
        EXPECT_FLOAT_EQ(p.y, 9.0f / 15.0f);
    }
}

TEST(Landmarks, EmptySliceHasSentinels) {
    const Volume m = Volume::zeros(Dims{8, 8, 3}, {}, VolumeKind::Mask);
    const LandmarkSet ls = extract_landmarks(m);
    EXPECT_EQ(ls.present_count(), 0u);
    for (const auto& r : ls.records) {
        EXPECT_FALSE(r.present);
        for (const Point2& p : r.points) EXPECT_EQ(p, kLandmarkSentinel);
    }
}

TEST(Landmarks, FilledRectangle) {
    std::vector<std::array<std::size_t, 3>> on;
    for (std::size_t y = 6; y <= 10; ++y) {
        for (std::size_t x = 4; x <= 8; ++x) on.push_back({x, y, 0});
    }
    const LandmarkRecord r = extract_landmarks(mask_from(Dims{16, 16, 1}, on)).records[0];
    EXPECT_EQ(r[Landmark::Left], (Point2{4.0f / 15, 8.0f / 15}));
    EXPECT_EQ(r[Landmark::Right], (Point2{8.0f / 15, 8.0f / 15}));
    EXPECT_EQ(r[Landmark::Top], (Point2{6.0f / 15, 6.0f / 15}));
    EXPECT_EQ(r[Landmark::Bottom], (Point2{6.0f / 15, 10.0f / 15}));
    EXPECT_EQ(r, reference(mask_from(Dims{16, 16, 1}, on), 0));
}

TEST(Landmarks, MatchesScanReference) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 40; ++i) {
        const Volume m = random_blob_mask(rng, Dims{12 + rng() % 10, 9 + rng() % 10, 5});
        const LandmarkSet ls = extract_landmarks(m);
        ASSERT_EQ(ls.records.size(), m.depth());
        for (std::size_t z = 0; z < m.depth(); ++z) EXPECT_EQ(ls.records[z], reference(m, z));
    }
}

TEST(Landmarks, PointsLieOnForegroundAndOrdered) {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 40; ++i) {
        const Volume m = random_blob_mask(rng, Dims{17, 13, 6});
        for (const LandmarkRecord& r : extract_landmarks(m).records) {
            if (!r.present) continue;
            EXPECT_LE(r[Landmark::Left].x, r[Landmark::Right].x);
            EXPECT_LE(r[Landmark::Top].y, r[Landmark::Bottom].y);
            for (const Point2& p : r.points) {
                const auto x = static_cast<std::size_t>(std::lround(p.x * 16.0f));
                const auto y = static_cast<std::size_t>(std::lround(p.y * 12.0f));
                EXPECT_EQ(m.at(x, y, r.slice), 1.0f);
            }
        }
    }
}

TEST(Landmarks, InvariantToInteriorAdditions) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 30; ++i) {
        const Volume m = random_blob_mask(rng, Dims{15, 15, 4});
        const LandmarkSet before = extract_landmarks(m);
        std::vector<float> data(m.data().begin(), m.data().end());
        for (const LandmarkRecord& r : before.records) {
            if (!r.present) continue;
            const auto x0 = static_cast<std::size_t>(std::lround(r[Landmark::Left].x * 14)) + 1;
            const auto x1 = static_cast<std::size_t>(std::lround(r[Landmark::Right].x * 14));
            const auto y0 = static_cast<std::size_t>(std::lround(r[Landmark::Top].y * 14)) + 1;
            const auto y1 = static_cast<std::size_t>(std::lround(r[Landmark::Bottom].y * 14));
            for (std::size_t y = y0; y < y1; ++y) {
                for (std::size_t x = x0; x < x1; ++x) data[m.index(x, y, r.slice)] = 1.0f;
            }
        }
        const Volume filled(m.dims(), m.spacing(), VolumeKind::Mask, data);
        EXPECT_EQ(extract_landmarks(filled), before);
    }
}

TEST(Landmarks, EncodeLayout) {
    LandmarkSet empty{Dims{4, 4, 0}, {}};
    EXPECT_EQ(encode_landmarks(empty, 4), std::vector<float>(36, 0.0f));

    const Volume m = mask_from(Dims{8, 8, 4}, {{2, 3, 2}});
    const auto v = encode_landmarks(extract_landmarks(m), 4);
    ASSERT_EQ(v.size(), 36u);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i < 18 || i >= 27) {
            EXPECT_EQ(v[i], 0.0f) << i;
        }
    }
    EXPECT_EQ(v[18], 1.0f);
    EXPECT_FLOAT_EQ(v[19], 2.0f / 7.0f);
    EXPECT_FLOAT_EQ(v[20], 3.0f / 7.0f);
    EXPECT_THROW(encode_landmarks(extract_landmarks(m), 3), ValidationError);
}

TEST(Landmarks, DecodeRoundTripAndThreshold) {
    std::mt19937_64 rng(24);
    for (int i = 0; i < 30; ++i) {
        const Volume m = random_blob_mask(rng, Dims{11, 14, 5});
        const LandmarkSet ls = extract_landmarks(m);
        EXPECT_EQ(decode_landmarks(encode_landmarks(ls, 8), m.dims()), ls);
    }
    EXPECT_EQ(decode_landmarks(std::vector<float>(27, 0.0f), Dims{4, 4, 3}).present_count(), 0u);
    std::vector<float> v(9, 0.0f);
    v[0] = 0.7f;
    EXPECT_TRUE(decode_landmarks(v, Dims{4, 4, 1}).records[0].present);
    EXPECT_THROW(decode_landmarks(std::vector<float>(10, 0.0f), Dims{4, 4, 1}), ValidationError);
}

TEST(Landmarks, CsvRoundTrip) {
    test::TempDir dir;
    std::mt19937_64 rng(25);
    const Volume m = random_blob_mask(rng, Dims{10, 10, 6});
    const LandmarkSet ls = extract_landmarks(m);
    write_landmarks_csv(ls, dir.path() / "lm.csv");
    EXPECT_EQ(read_landmarks_csv(dir.path() / "lm.csv", m.dims()), ls);
}
