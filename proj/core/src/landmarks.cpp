#include "dgmnet/landmarks.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace dgmnet {

std::size_t LandmarkSet::present_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const LandmarkRecord& r) { return r.present; }));
}

namespace {

std::size_t lower_median(std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

float norm_coord(std::size_t i, std::size_t extent) {
    return extent > 1 ? static_cast<float>(i) / static_cast<float>(extent - 1) : 0.0f;
}

}  // namespace

LandmarkSet extract_landmarks(const Volume& mask) {
    if (!mask.is_mask()) throw ValidationError("extract_landmarks expects a MASK volume");
    const std::size_t W = mask.width();
    const std::size_t H = mask.height();
    LandmarkSet ls{mask.dims(), {}};
    ls.records.reserve(mask.depth());

    for (std::size_t z = 0; z < mask.depth(); ++z) {
        LandmarkRecord rec;
        rec.slice = z;
        std::size_t min_x = std::numeric_limits<std::size_t>::max(), max_x = 0;
        std::size_t min_y = std::numeric_limits<std::size_t>::max(), max_y = 0;
        bool any = false;
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                if (mask.at(x, y, z) != 1.0f) continue;
                any = true;
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
        }
        if (any) {
            std::vector<std::size_t> left, right, top, bottom;
            for (std::size_t y = 0; y < H; ++y) {
                if (mask.at(min_x, y, z) == 1.0f) left.push_back(y);
                if (mask.at(max_x, y, z) == 1.0f) right.push_back(y);
            }
            for (std::size_t x = 0; x < W; ++x) {
                if (mask.at(x, min_y, z) == 1.0f) top.push_back(x);
                if (mask.at(x, max_y, z) == 1.0f) bottom.push_back(x);
            }
            rec.present = true;
            rec.points[0] = {norm_coord(min_x, W), norm_coord(lower_median(left), H)};
            rec.points[1] = {norm_coord(max_x, W), norm_coord(lower_median(right), H)};
            rec.points[2] = {norm_coord(lower_median(top), W), norm_coord(min_y, H)};
            rec.points[3] = {norm_coord(lower_median(bottom), W), norm_coord(max_y, H)};
        }
        ls.records.push_back(rec);
    }
    return ls;
}

std::vector<float> encode_landmarks(const LandmarkSet& ls, std::size_t max_slices) {
    if (ls.records.size() > max_slices) {
        throw ValidationError("landmark set has " + std::to_string(ls.records.size()) +
                              " slices, more than max_slices " + std::to_string(max_slices));
    }
    std::vector<float> out(max_slices * kLandmarkStride, 0.0f);
    for (std::size_t u = 0; u < ls.records.size(); ++u) {
        const LandmarkRecord& r = ls.records[u];
        if (!r.present) continue;
        float* row = out.data() + u * kLandmarkStride;
        row[0] = 1.0f;
        for (std::size_t k = 0; k < 4; ++k) {
            row[1 + 2 * k] = r.points[k].x;
            row[2 + 2 * k] = r.points[k].y;
        }
    }
    return out;
}

LandmarkSet decode_landmarks(std::span<const float> vec, const Dims& dims) {
    if (vec.size() % kLandmarkStride != 0 || vec.size() / kLandmarkStride < dims.depth) {
        throw ValidationError("landmark vector length " + std::to_string(vec.size()) +
                              " does not fit depth " + std::to_string(dims.depth));
    }
    LandmarkSet ls{dims, {}};
    ls.records.resize(dims.depth);
    for (std::size_t u = 0; u < dims.depth; ++u) {
        LandmarkRecord& r = ls.records[u];
        r.slice = u;
        const float* row = vec.data() + u * kLandmarkStride;
        r.present = row[0] > 0.5f;
        if (!r.present) continue;
        for (std::size_t k = 0; k < 4; ++k) r.points[k] = {row[1 + 2 * k], row[2 + 2 * k]};
    }
    return ls;
}

void write_landmarks_csv(const LandmarkSet& ls, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(path.string(), "cannot open landmark CSV for writing");
    os << "slice,z,xl,yl,xr,yr,xt,yt,xb,yb\n";
    os << std::setprecision(9);
    for (const LandmarkRecord& r : ls.records) {
        os << r.slice << ',' << (r.present ? 1 : 0);
        for (const Point2& p : r.points) os << ',' << p.x << ',' << p.y;
        os << '\n';
    }
    if (!os) throw IoError(path.string(), "failed writing landmark CSV");
}

LandmarkSet read_landmarks_csv(const std::filesystem::path& path, const Dims& dims) {
    std::ifstream is(path);
    if (!is) throw IoError(path.string(), "cannot open landmark CSV");
    std::string line;
    std::getline(is, line);
    if (line != "slice,z,xl,yl,xr,yr,xt,yt,xb,yb") throw ValidationError("unexpected landmark CSV header");
    LandmarkSet ls{dims, {}};
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        LandmarkRecord r;
        int z = 0;
        row >> r.slice >> z;
        for (Point2& p : r.points) row >> p.x >> p.y;
        if (!row) throw ValidationError("malformed landmark CSV row in " + path.string());
        r.present = z == 1;
        ls.records.push_back(r);
    }
    if (ls.records.size() != dims.depth) throw ValidationError("landmark CSV row count does not match depth");
    return ls;
}

}  // namespace dgmnet
