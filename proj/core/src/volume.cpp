#include "dgmnet/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dgmnet {

std::string_view to_string(Modality m) {
    return m == Modality::HighContrast ? "HIGH_CONTRAST" : "LOW_CONTRAST";
}

Modality modality_from_string(std::string_view s) {
    if (s == "HIGH_CONTRAST" || s == "high") return Modality::HighContrast;
    if (s == "LOW_CONTRAST" || s == "low") return Modality::LowContrast;
    throw ValidationError("unknown modality '" + std::string(s) + "'");
}

namespace {

bool spacing_valid(const Spacing& s) {
    auto ok = [](float v) { return std::isfinite(v) && v > 0.0f; };
    return ok(s.x) && ok(s.y) && ok(s.z);
}

bool all_binary(std::span<const float> data) {
    return std::all_of(data.begin(), data.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, VolumeKind kind, std::vector<float> data)
    : dims_(dims), spacing_(spacing), kind_(kind), data_(std::move(data)) {
    if (dims_.width == 0 || dims_.height == 0 || dims_.depth == 0) {
        throw ValidationError("volume dims must be positive");
    }
    if (data_.size() != dims_.voxels()) {
        throw ValidationError("volume data size " + std::to_string(data_.size()) + " does not match dims " +
                              std::to_string(dims_.voxels()));
    }
    if (!spacing_valid(spacing_)) {
        throw ValidationError("volume spacing must be finite and positive");
    }
    if (kind_ == VolumeKind::Mask && !all_binary(data_)) {
        throw ValidationError("mask volume contains values other than 0 and 1");
    }
}

Volume Volume::zeros(Dims dims, Spacing spacing, VolumeKind kind) {
    return Volume(dims, spacing, kind, std::vector<float>(dims.voxels(), 0.0f));
}

std::span<const float> Volume::slice(std::size_t z) const {
    if (z >= dims_.depth) throw ValidationError("slice index out of range");
    return std::span<const float>(data_).subspan(z * dims_.slice_voxels(), dims_.slice_voxels());
}

Volume Volume::with_kind(VolumeKind kind) const { return Volume(dims_, spacing_, kind, data_); }

Volume Volume::with_spacing(Spacing spacing) const { return Volume(dims_, spacing, kind_, data_); }

std::size_t Volume::count_foreground() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1.0f));
}

void CaseRecord::validate() const {
    if (image.kind() != VolumeKind::Image) throw ValidationError(case_id + ": image volume has kind MASK");
    if (mask.kind() != VolumeKind::Mask) throw ValidationError(case_id + ": mask volume has kind IMAGE");
    if (image.dims() != mask.dims()) throw ValidationError(case_id + ": image and mask dims differ");
    if (!(image.spacing() == mask.spacing())) throw ValidationError(case_id + ": image and mask spacing differ");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

std::vector<std::uint8_t> encode_volume(const Volume& v) {
    std::vector<std::uint8_t> out;
    out.reserve(kDgmvHeaderSize + v.dims().voxels() * 4);
    out.insert(out.end(), {'D', 'G', 'M', 'V'});
    out.push_back(kDgmvVersion);
    out.push_back(static_cast<std::uint8_t>(v.kind()));
    put_u32(out, static_cast<std::uint32_t>(v.width()));
    put_u32(out, static_cast<std::uint32_t>(v.height()));
    put_u32(out, static_cast<std::uint32_t>(v.depth()));
    put_f32(out, v.spacing().x);
    put_f32(out, v.spacing().y);
    put_f32(out, v.spacing().z);
    for (float f : v.data()) put_f32(out, f);
    return out;
}

Volume decode_volume(std::span<const std::uint8_t> bytes, const std::string& source) {
    using K = VolumeFormatError::Kind;
    if (bytes.size() < kDgmvHeaderSize) {
        if (bytes.size() >= 4 && std::memcmp(bytes.data(), "DGMV", 4) != 0) {
            throw VolumeFormatError(K::BadMagic, source, "bad magic");
        }
        throw VolumeFormatError(K::Truncated, source, "truncated header");
    }
    const std::uint8_t* p = bytes.data();
    if (std::memcmp(p, "DGMV", 4) != 0) throw VolumeFormatError(K::BadMagic, source, "bad magic");
    if (p[4] != kDgmvVersion) throw VolumeFormatError(K::BadVersion, source, "unsupported version");
    if (p[5] > 1) throw VolumeFormatError(K::BadKind, source, "unknown volume kind");
    const auto kind = static_cast<VolumeKind>(p[5]);
    const Dims dims{get_u32(p + 6), get_u32(p + 10), get_u32(p + 14)};
    if (dims.width == 0 || dims.height == 0 || dims.depth == 0) {
        throw VolumeFormatError(K::ZeroDims, source, "zero dimension");
    }
    const Spacing spacing{get_f32(p + 18), get_f32(p + 22), get_f32(p + 26)};
    if (!spacing_valid(spacing)) throw VolumeFormatError(K::BadSpacing, source, "non-positive spacing");

    const std::size_t payload = bytes.size() - kDgmvHeaderSize;
    const std::size_t expected = dims.voxels() * 4;
    if (payload < expected) {
        throw VolumeFormatError(K::Truncated, source,
                                "truncated payload (" + std::to_string(payload) + " of " +
                                    std::to_string(expected) + " bytes)");
    }
    if (payload > expected) throw VolumeFormatError(K::TrailingData, source, "trailing bytes after payload");

    std::vector<float> data(dims.voxels());
    const std::uint8_t* q = p + kDgmvHeaderSize;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f32(q + 4 * i);
    if (kind == VolumeKind::Mask && !all_binary(data)) {
        throw VolumeFormatError(K::NonBinaryMask, source, "mask payload is not binary");
    }
    return Volume(dims, spacing, kind, std::move(data));
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
    const auto bytes = encode_volume(v);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(path.string(), "cannot open volume for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError(path.string(), "failed writing volume");
}

Volume read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string(), "cannot open volume for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_volume(bytes, path.string());
}

Volume binarize(const Volume& v, float threshold) {
    if (v.kind() != VolumeKind::Image) throw ValidationError("binarize expects an IMAGE volume");
    if (!(threshold > 0.0f && threshold < 1.0f)) throw ValidationError("binarize threshold must lie in (0,1)");
    std::vector<float> out(v.data().size());
    std::transform(v.data().begin(), v.data().end(), out.begin(),
                   [threshold](float x) { return x > threshold ? 1.0f : 0.0f; });
    return Volume(v.dims(), v.spacing(), VolumeKind::Mask, std::move(out));
}

}  // namespace dgmnet
