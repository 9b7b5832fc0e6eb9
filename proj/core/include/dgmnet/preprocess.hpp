#pragma once

#include <cstddef>
#include <span>

#include "dgmnet/volume.hpp"

namespace dgmnet {

enum class NormalizationScope { PerVolume, Dataset };

struct PreprocessConfig {
    Spacing target_spacing{1.0f, 1.0f, 1.0f};
    std::size_t target_width = 256;
    std::size_t target_height = 256;
    NormalizationScope normalization_scope = NormalizationScope::PerVolume;

    void validate() const;
};

/// Intensity statistics for zero-centre / unit-std normalisation.
struct IntensityStats {
    double mean = 0.0;
    double stddev = 1.0;
};

inline constexpr double kNormalizeEpsilon = 1e-8;

/// Resample onto target_spacing. Output dims are round(dim * spacing / target) per axis.
/// Images use trilinear interpolation, masks nearest neighbour; samples outside the grid clamp
/// to the boundary voxel. Throws ValidationError if an axis rounds to zero voxels.
Volume resample(const Volume& v, Spacing target_spacing);

/// Crop every slice to its centred min(W,H) square, then resize in-plane to width x height
/// (bilinear for images, nearest for masks). Depth is unchanged; in-plane spacing is rescaled.
Volume center_crop_resize(const Volume& v, std::size_t width, std::size_t height);

IntensityStats intensity_stats(const Volume& v);
/// Pooled statistics over several image volumes.
IntensityStats intensity_stats(std::span<const Volume* const> volumes);

/// (x - mean) / max(std, eps) using the volume's own statistics.
Volume normalize(const Volume& v);
Volume normalize(const Volume& v, const IntensityStats& stats);

/// resample -> center_crop_resize -> normalize (images only); masks stay binary.
/// `dataset_stats` is used when the config asks for dataset-scope normalisation.
CaseRecord preprocess_case(const CaseRecord& c, const PreprocessConfig& config,
                           const IntensityStats* dataset_stats = nullptr);

}  // namespace dgmnet
