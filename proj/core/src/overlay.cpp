#include "dgmnet/overlay.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>

#include <png.h>

#include "dgmnet/errors.hpp"

namespace dgmnet {

namespace {

bool on_contour(const Volume& m, std::size_t x, std::size_t y, std::size_t z) {
    if (m.at(x, y, z) != 1.0f) return false;
    if (x == 0 || y == 0 || x + 1 == m.width() || y + 1 == m.height()) return true;
    return m.at(x - 1, y, z) != 1.0f || m.at(x + 1, y, z) != 1.0f || m.at(x, y - 1, z) != 1.0f ||
           m.at(x, y + 1, z) != 1.0f;
}

}  // namespace

void write_png(const RgbImage& img, const std::filesystem::path& path) {
    if (img.pixels.size() != img.width * img.height * 3) throw ValidationError("RGB buffer size mismatch");
    std::unique_ptr<FILE, decltype(&std::fclose)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) throw IoError(path.string(), "cannot open PNG for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string(), "libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(path.string(), "PNG encoding failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

RgbImage render_overlay(const Volume& image, const Volume& truth, const Volume& pred, std::size_t slice,
                        std::size_t scale) {
    if (image.dims() != truth.dims() || image.dims() != pred.dims()) throw ValidationError("overlay inputs differ in dims");
    if (slice >= image.depth()) throw ValidationError("overlay slice out of range");
    scale = std::max<std::size_t>(1, scale);
    const auto sl = image.slice(slice);
    const auto [lo_it, hi_it] = std::minmax_element(sl.begin(), sl.end());
    const float lo = *lo_it, range = std::max(*hi_it - *lo_it, 1e-12f);
    RgbImage out{image.width() * scale, image.height() * scale, {}};
    out.pixels.resize(out.width * out.height * 3);
    for (std::size_t y = 0; y < image.height(); ++y) {
        for (std::size_t x = 0; x < image.width(); ++x) {
            const auto g = static_cast<std::uint8_t>(std::clamp((image.at(x, y, slice) - lo) / range, 0.0f, 1.0f) * 255.0f);
            std::uint8_t rgb[3] = {g, g, g};
            const bool t = on_contour(truth, x, y, slice), p = on_contour(pred, x, y, slice);
            if (t || p) {
                rgb[0] = t ? 255 : 0;
                rgb[1] = p ? 255 : 0;
                rgb[2] = 0;
            }
            for (std::size_t dy = 0; dy < scale; ++dy) {
                for (std::size_t dx = 0; dx < scale; ++dx) {
                    std::uint8_t* px = out.pixels.data() + ((y * scale + dy) * out.width + x * scale + dx) * 3;
                    std::copy(rgb, rgb + 3, px);
                }
            }
        }
    }
    return out;
}

std::size_t write_overlays(const Volume& image, const Volume& truth, const Volume& pred,
                           const std::filesystem::path& dir, const std::string& case_id) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), "cannot create overlay directory (" + ec.message() + ")");
    std::size_t written = 0;
    for (std::size_t z = 0; z < truth.depth(); ++z) {
        const auto m = truth.slice(z);
        if (std::none_of(m.begin(), m.end(), [](float v) { return v == 1.0f; })) continue;
        char name[64];
        std::snprintf(name, sizeof(name), "_s%03zu.png", z);
        write_png(render_overlay(image, truth, pred, z), dir / (case_id + name));
        ++written;
    }
    return written;
}

}  // namespace dgmnet
