#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "dgmnet/volume.hpp"

namespace dgmnet {

struct Point2 {
    float x = -1.0f;
    float y = -1.0f;
    friend bool operator==(const Point2&, const Point2&) = default;
};

enum class Landmark : std::size_t { Left = 0, Right = 1, Top = 2, Bottom = 3 };

inline constexpr Point2 kLandmarkSentinel{-1.0f, -1.0f};
/// Entries per slice in the encoded vector: presence + 4 (x, y) pairs.
inline constexpr std::size_t kLandmarkStride = 9;

/// Four extreme boundary points of one slice's foreground, in [0,1] coordinates
/// (x / (W-1), y / (H-1)). Absent slices carry sentinels.
struct LandmarkRecord {
    std::size_t slice = 0;
    bool present = false;
    std::array<Point2, 4> points{kLandmarkSentinel, kLandmarkSentinel, kLandmarkSentinel, kLandmarkSentinel};

    const Point2& operator[](Landmark l) const { return points[static_cast<std::size_t>(l)]; }
    friend bool operator==(const LandmarkRecord&, const LandmarkRecord&) = default;
};

struct LandmarkSet {
    Dims dims;
    std::vector<LandmarkRecord> records;  // one per slice

    std::size_t present_count() const;
    friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

/// Per-slice extremes: left/right are the min/max-x foreground voxels, top/bottom the min/max-y.
/// Ties along the orthogonal axis resolve to the lower median index.
LandmarkSet extract_landmarks(const Volume& mask);

/// Flat [z, xl, yl, xr, yr, xt, yt, xb, yb] per slice, zero-padded to max_slices.
std::vector<float> encode_landmarks(const LandmarkSet& ls, std::size_t max_slices);

/// Inverse of encode_landmarks. Presence entries above 0.5 count as present.
LandmarkSet decode_landmarks(std::span<const float> vec, const Dims& dims);

void write_landmarks_csv(const LandmarkSet& ls, const std::filesystem::path& path);
LandmarkSet read_landmarks_csv(const std::filesystem::path& path, const Dims& dims);

}  // namespace dgmnet
