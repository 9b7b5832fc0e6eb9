#include "dgmnet/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace dgmnet {

void PreprocessConfig::validate() const {
    auto size_ok = [](std::size_t s) { return s >= 8 && s % 2 == 0; };
    if (!size_ok(target_width) || !size_ok(target_height)) {
        throw ValidationError("preprocess target size components must be >= 8 and even");
    }
    auto sp_ok = [](float s) { return std::isfinite(s) && s > 0.0f; };
    if (!sp_ok(target_spacing.x) || !sp_ok(target_spacing.y) || !sp_ok(target_spacing.z)) {
        throw ValidationError("preprocess target spacing must be positive");
    }
}

namespace {

// Maps output voxel centres onto continuous input indices, clamped to the grid.
struct AxisMap {
    std::size_t in_size;
    double scale;   // input voxels per output voxel
    double offset;  // added to the input index (crop origin)

    double at(std::size_t i) const {
        const double c = (static_cast<double>(i) + 0.5) * scale - 0.5;
        return std::clamp(c, 0.0, static_cast<double>(in_size - 1)) + offset;
    }
};

struct LinearTap {
    std::size_t i0, i1;
    double w1;
};

LinearTap linear_tap(double c, std::size_t limit) {
    const auto i0 = static_cast<std::size_t>(std::floor(c));
    const std::size_t i1 = std::min(i0 + 1, limit - 1);
    return {i0, i1, c - static_cast<double>(i0)};
}

std::size_t nearest_tap(double c, std::size_t limit) {
    // round-half-up keeps the mapping symmetric with the output grid
    return std::min(static_cast<std::size_t>(std::floor(c + 0.5)), limit - 1);
}

}  // namespace

Volume resample(const Volume& v, Spacing target) {
    const Spacing& src = v.spacing();
    const double rx = static_cast<double>(src.x) / target.x;
    const double ry = static_cast<double>(src.y) / target.y;
    const double rz = static_cast<double>(src.z) / target.z;
    auto out_dim = [](std::size_t n, double r) {
        return static_cast<std::size_t>(std::llround(static_cast<double>(n) * r));
    };
    const Dims od{out_dim(v.width(), rx), out_dim(v.height(), ry), out_dim(v.depth(), rz)};
    if (od.width == 0 || od.height == 0 || od.depth == 0) {
        throw ValidationError("resample produces a zero-sized axis");
    }
    const AxisMap mx{v.width(), 1.0 / rx, 0.0};
    const AxisMap my{v.height(), 1.0 / ry, 0.0};
    const AxisMap mz{v.depth(), 1.0 / rz, 0.0};

    std::vector<float> out(od.voxels());
    std::size_t o = 0;
    if (v.is_mask()) {
        for (std::size_t z = 0; z < od.depth; ++z) {
            const std::size_t iz = nearest_tap(mz.at(z), v.depth());
            for (std::size_t y = 0; y < od.height; ++y) {
                const std::size_t iy = nearest_tap(my.at(y), v.height());
                for (std::size_t x = 0; x < od.width; ++x) {
                    out[o++] = v.at(nearest_tap(mx.at(x), v.width()), iy, iz);
                }
            }
        }
    } else {
        for (std::size_t z = 0; z < od.depth; ++z) {
            const LinearTap tz = linear_tap(mz.at(z), v.depth());
            for (std::size_t y = 0; y < od.height; ++y) {
                const LinearTap ty = linear_tap(my.at(y), v.height());
                for (std::size_t x = 0; x < od.width; ++x) {
                    const LinearTap tx = linear_tap(mx.at(x), v.width());
                    auto plane = [&](std::size_t iz) {
                        const double a = v.at(tx.i0, ty.i0, iz) * (1.0 - tx.w1) + v.at(tx.i1, ty.i0, iz) * tx.w1;
                        const double b = v.at(tx.i0, ty.i1, iz) * (1.0 - tx.w1) + v.at(tx.i1, ty.i1, iz) * tx.w1;
                        return a * (1.0 - ty.w1) + b * ty.w1;
                    };
                    out[o++] = static_cast<float>(plane(tz.i0) * (1.0 - tz.w1) + plane(tz.i1) * tz.w1);
                }
            }
        }
    }
    return Volume(od, target, v.kind(), std::move(out));
}

Volume center_crop_resize(const Volume& v, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) throw ValidationError("center_crop_resize target must be positive");
    const std::size_t side = std::min(v.width(), v.height());
    const double x0 = static_cast<double>((v.width() - side) / 2);
    const double y0 = static_cast<double>((v.height() - side) / 2);
    const AxisMap mx{side, static_cast<double>(side) / static_cast<double>(width), x0};
    const AxisMap my{side, static_cast<double>(side) / static_cast<double>(height), y0};

    const Dims od{width, height, v.depth()};
    std::vector<float> out(od.voxels());
    std::size_t o = 0;
    for (std::size_t z = 0; z < od.depth; ++z) {
        for (std::size_t y = 0; y < height; ++y) {
            const double cy = my.at(y);
            for (std::size_t x = 0; x < width; ++x) {
                const double cx = mx.at(x);
                if (v.is_mask()) {
                    out[o++] = v.at(nearest_tap(cx, v.width()), nearest_tap(cy, v.height()), z);
                } else {
                    const LinearTap tx = linear_tap(cx, v.width());
                    const LinearTap ty = linear_tap(cy, v.height());
                    const double a = v.at(tx.i0, ty.i0, z) * (1.0 - tx.w1) + v.at(tx.i1, ty.i0, z) * tx.w1;
                    const double b = v.at(tx.i0, ty.i1, z) * (1.0 - tx.w1) + v.at(tx.i1, ty.i1, z) * tx.w1;
                    out[o++] = static_cast<float>(a * (1.0 - ty.w1) + b * ty.w1);
                }
            }
        }
    }
    const Spacing sp{v.spacing().x * static_cast<float>(side) / static_cast<float>(width),
                     v.spacing().y * static_cast<float>(side) / static_cast<float>(height), v.spacing().z};
    return Volume(od, sp, v.kind(), std::move(out));
}

IntensityStats intensity_stats(const Volume& v) {
    const Volume* one[] = {&v};
    return intensity_stats(one);
}

IntensityStats intensity_stats(std::span<const Volume* const> volumes) {
    double sum = 0.0;
    double n = 0.0;
    for (const Volume* v : volumes) {
        for (float x : v->data()) sum += x;
        n += static_cast<double>(v->data().size());
    }
    if (n == 0.0) throw ValidationError("intensity_stats over no voxels");
    const double mean = sum / n;
    double ss = 0.0;
    for (const Volume* v : volumes) {
        for (float x : v->data()) ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / n)};
}

Volume normalize(const Volume& v) { return normalize(v, intensity_stats(v)); }

Volume normalize(const Volume& v, const IntensityStats& stats) {
    if (v.kind() != VolumeKind::Image) throw ValidationError("normalize expects an IMAGE volume");
    const double denom = std::max(stats.stddev, kNormalizeEpsilon);
    std::vector<float> out(v.data().size());
    std::transform(v.data().begin(), v.data().end(), out.begin(),
                   [&](float x) { return static_cast<float>((x - stats.mean) / denom); });
    return Volume(v.dims(), v.spacing(), VolumeKind::Image, std::move(out));
}

CaseRecord preprocess_case(const CaseRecord& c, const PreprocessConfig& config, const IntensityStats* dataset_stats) {
    c.validate();
    CaseRecord out;
    out.case_id = c.case_id;
    out.modality = c.modality;
    const Volume image = center_crop_resize(resample(c.image, config.target_spacing), config.target_width,
                                            config.target_height);
    out.mask = center_crop_resize(resample(c.mask, config.target_spacing), config.target_width,
                                  config.target_height);
    if (config.normalization_scope == NormalizationScope::Dataset) {
        if (!dataset_stats) throw ValidationError("dataset-scope normalisation needs dataset statistics");
        out.image = normalize(image, *dataset_stats);
    } else {
        out.image = normalize(image);
    }
    return out;
}

}  // namespace dgmnet
