#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgmnet/errors.hpp"

namespace dgmnet {

enum class VolumeKind : std::uint8_t { Image = 0, Mask = 1 };

enum class Modality { HighContrast, LowContrast };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Voxel extents: width (x), height (y), depth (z, slice count).
struct Dims {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t depth = 0;

    std::size_t voxels() const noexcept { return width * height * depth; }
    std::size_t slice_voxels() const noexcept { return width * height; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Physical voxel size in millimetres. Stored as f32 so on-disk round trips are exact.
struct Spacing {
    float x = 1.0f;
    float y = 1.0f;
    float z = 1.0f;

    friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Dense 3D scalar grid indexed (z, y, x) with x fastest.
///
/// Volumes are immutable once built; every transformation returns a new one.
/// Construction validates the invariants: data size matches dims, spacing is
/// finite and positive, and mask volumes hold only 0 and 1.
class Volume {
public:
    Volume() = default;
    Volume(Dims dims, Spacing spacing, VolumeKind kind, std::vector<float> data);

    /// Zero-filled volume.
    static Volume zeros(Dims dims, Spacing spacing, VolumeKind kind);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t width() const noexcept { return dims_.width; }
    std::size_t height() const noexcept { return dims_.height; }
    std::size_t depth() const noexcept { return dims_.depth; }
    const Spacing& spacing() const noexcept { return spacing_; }
    VolumeKind kind() const noexcept { return kind_; }
    bool is_mask() const noexcept { return kind_ == VolumeKind::Mask; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<const float> slice(std::size_t z) const;

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return (z * dims_.height + y) * dims_.width + x;
    }
    float at(std::size_t x, std::size_t y, std::size_t z) const noexcept { return data_[index(x, y, z)]; }

    /// Same voxels reinterpreted under another kind (re-validated).
    Volume with_kind(VolumeKind kind) const;
    Volume with_spacing(Spacing spacing) const;

    /// Number of voxels with value exactly 1 (meaningful for masks).
    std::size_t count_foreground() const noexcept;

    friend bool operator==(const Volume&, const Volume&) = default;

private:
    Dims dims_{};
    Spacing spacing_{};
    VolumeKind kind_ = VolumeKind::Image;
    std::vector<float> data_;
};

/// Image paired with its ground-truth mask.
struct CaseRecord {
    std::string case_id;
    Volume image;
    Volume mask;
    Modality modality = Modality::HighContrast;

    /// Throws ValidationError unless image/mask kinds, dims and spacing agree.
    void validate() const;
};

// DGMV binary format:
//   "DGMV" | version u8 = 1 | kind u8 | W u32 | H u32 | C u32 | sx f32 | sy f32 | sz f32
// followed by W*H*C f32 voxels, x fastest, then y, then z. Everything little-endian.
inline constexpr std::size_t kDgmvHeaderSize = 30;
inline constexpr std::uint8_t kDgmvVersion = 1;

class VolumeFormatError : public Error {
public:
    enum class Kind { BadMagic, BadVersion, BadKind, ZeroDims, BadSpacing, Truncated, TrailingData, NonBinaryMask };

    VolumeFormatError(Kind kind, const std::string& path, const std::string& what)
        : Error(what + ": " + path), kind_(kind), path_(path) {}

    Kind kind() const noexcept { return kind_; }
    const std::string& path() const noexcept { return path_; }

private:
    Kind kind_;
    std::string path_;
};

std::vector<std::uint8_t> encode_volume(const Volume& v);
Volume decode_volume(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

void write_volume(const Volume& v, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);

/// Mask with voxel = 1 iff the image voxel is strictly greater than threshold.
Volume binarize(const Volume& v, float threshold = 0.5f);

}  // namespace dgmnet
