#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dgmnet/volume.hpp"

namespace dgmnet {

/// 8-bit RGB image, row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width * height * 3
};

void write_png(const RgbImage& img, const std::filesystem::path& path);

/// Grey-scale slice (min/max windowed) with the truth contour in red and the predicted
/// contour in green (yellow where they coincide), upscaled by `scale`.
RgbImage render_overlay(const Volume& image, const Volume& truth, const Volume& pred, std::size_t slice,
                        std::size_t scale = 4);

/// One PNG per slice whose truth mask is non-empty, named `<case_id>_s<slice:03>.png`.
/// Returns the number written.
std::size_t write_overlays(const Volume& image, const Volume& truth, const Volume& pred,
                           const std::filesystem::path& dir, const std::string& case_id);

}  // namespace dgmnet
