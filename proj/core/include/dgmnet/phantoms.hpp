#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgmnet/volume.hpp"

namespace dgmnet {

struct ContrastParams {
    double foreground = 1.0;
    double background = 0.2;
    double noise_std = 0.05;
    double blur_sigma = 0.5;  // in-plane Gaussian, voxels
};

struct PhantomConfig {
    std::size_t n_cases = 40;
    Dims dims{64, 64, 16};
    Spacing spacing{1.0f, 1.0f, 1.0f};
    std::uint64_t rng_seed = 0;

    // In-plane semi-axes as fractions of the in-plane extent, z semi-axis as a fraction of depth.
    double semi_axis_min = 0.18;
    double semi_axis_max = 0.28;
    double z_semi_axis_min = 0.28;
    double z_semi_axis_max = 0.40;
    double center_jitter = 0.06;   // fraction of the in-plane extent
    double z_center_jitter = 1.0;  // voxels
    double perturbation = 0.12;    // relative radial amplitude of the angular harmonics

    ContrastParams high{1.0, 0.2, 0.05, 0.5};
    ContrastParams low{0.55, 0.40, 0.08, 1.2};

    std::size_t seeds_min = 3;
    std::size_t seeds_max = 6;
    double seed_intensity = 1.6;

    void validate() const;
};

/// Analytic shape of one phantom: ellipsoid with angular harmonics of order 2 and 3.
struct PhantomShape {
    std::array<double, 3> center{};      // voxel coordinates (x, y, z)
    std::array<double, 3> semi_axes{};   // voxels
    std::array<double, 4> harmonics{};   // cos2, sin2, cos3, sin3 weights, |sum| <= 1
    double amplitude = 0.0;

    bool inside(double x, double y, double z) const;
};

struct PhantomPair {
    CaseRecord high;
    CaseRecord low;
    PhantomShape shape;
    std::vector<std::array<std::size_t, 3>> seed_voxels;  // (x, y, z) of LOW_CONTRAST artifacts
};

std::string phantom_case_id(std::size_t case_index);

/// Fully determined by (config.rng_seed, case_index).
PhantomPair generate_phantom(const PhantomConfig& config, std::size_t case_index);

/// |mean_fg - mean_bg| / std_bg over an image and its mask.
double contrast_to_noise(const Volume& image, const Volume& mask);

struct ManifestRow {
    std::string case_id;
    Modality modality = Modality::HighContrast;
    std::string image_path;  // relative to the manifest directory
    std::string mask_path;
    std::uint64_t rng_seed = 0;
    std::size_t case_index = 0;
};

/// Writes `<root>/<case_id>/<MODALITY>_{image,mask}.dgmv` and `<root>/manifest.csv`.
/// Returns the manifest path.
std::filesystem::path generate_dataset(const PhantomConfig& config, const std::filesystem::path& root);

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);

/// Load every case of one modality listed in a manifest, ordered by case_index.
std::vector<CaseRecord> load_cases(const std::filesystem::path& manifest, Modality modality);

}  // namespace dgmnet
