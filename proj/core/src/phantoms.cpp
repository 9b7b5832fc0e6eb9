#include "dgmnet/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "dgmnet/errors.hpp"
#include "dgmnet/rng.hpp"

namespace dgmnet {

namespace fs = std::filesystem;

namespace {

constexpr int kMaxShapeAttempts = 10;

// Platform-independent draws: the standard distributions are not bit-stable across libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double normal(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void check_contrast(const ContrastParams& c, const char* name) {
    const std::string n(name);
    if (!std::isfinite(c.foreground) || !std::isfinite(c.background)) throw ValidationError(n + " means must be finite");
    if (!(c.noise_std >= 0.0)) throw ValidationError(n + ".noise_std must be >= 0");
    if (!(c.blur_sigma >= 0.0)) throw ValidationError(n + ".blur_sigma must be >= 0");
}

PhantomShape draw_shape(const PhantomConfig& cfg, std::mt19937_64& rng) {
    const double W = static_cast<double>(cfg.dims.width);
    const double H = static_cast<double>(cfg.dims.height);
    const double D = static_cast<double>(cfg.dims.depth);
    const double side = std::min(W, H);
    PhantomShape s;
    s.amplitude = cfg.perturbation;
    s.center[0] = (W - 1.0) / 2.0 + uniform(rng, -1.0, 1.0) * cfg.center_jitter * side;
    s.center[1] = (H - 1.0) / 2.0 + uniform(rng, -1.0, 1.0) * cfg.center_jitter * side;
    s.center[2] = (D - 1.0) / 2.0 + uniform(rng, -1.0, 1.0) * cfg.z_center_jitter;
    s.semi_axes[0] = uniform(rng, cfg.semi_axis_min, cfg.semi_axis_max) * side;
    s.semi_axes[1] = uniform(rng, cfg.semi_axis_min, cfg.semi_axis_max) * side;
    // Keep the first and last slice empty even at the largest radial excursion.
    const double z_room = std::min(s.center[2] - 1.0, D - 2.0 - s.center[2]) / (1.0 + s.amplitude) - 0.05;
    s.semi_axes[2] = std::min(uniform(rng, cfg.z_semi_axis_min, cfg.z_semi_axis_max) * D, z_room);
    double norm = 0.0;
    for (double& h : s.harmonics) {
        h = normal(rng);
        norm += std::abs(h);
    }
    for (double& h : s.harmonics) h = norm > 0.0 ? h / norm : 0.0;
    return s;
}

bool mask_is_usable(const Volume& mask) {
    const std::size_t depth = mask.depth();
    std::vector<bool> nonempty(depth, false);
    for (std::size_t z = 0; z < depth; ++z) {
        const auto sl = mask.slice(z);
        nonempty[z] = std::any_of(sl.begin(), sl.end(), [](float v) { return v == 1.0f; });
    }
    if (nonempty.front() || nonempty.back()) return false;
    std::size_t run = 0, best = 0;
    for (bool b : nonempty) {
        run = b ? run + 1 : 0;
        best = std::max(best, run);
    }
    return best >= 3;
}

std::vector<float> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0f};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}

// Separable in-plane blur with edge clamping.
void blur_slices(std::vector<float>& data, const Dims& dims, double sigma) {
    const auto k = gaussian_kernel(sigma);
    if (k.size() == 1) return;
    const long r = static_cast<long>(k.size() / 2);
    const long W = static_cast<long>(dims.width), H = static_cast<long>(dims.height);
    std::vector<float> tmp(dims.slice_voxels());
    for (std::size_t z = 0; z < dims.depth; ++z) {
        float* s = data.data() + z * dims.slice_voxels();
        for (long y = 0; y < H; ++y) {
            for (long x = 0; x < W; ++x) {
                float acc = 0.0f;
                for (long i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * s[y * W + std::clamp(x + i, 0L, W - 1)];
                tmp[static_cast<std::size_t>(y * W + x)] = acc;
            }
        }
        for (long y = 0; y < H; ++y) {
            for (long x = 0; x < W; ++x) {
                float acc = 0.0f;
                for (long i = -r; i <= r; ++i) acc += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0L, H - 1) * W + x)];
                s[y * W + x] = acc;
            }
        }
    }
}

Volume render_image(const Volume& mask, const ContrastParams& c, std::mt19937_64& noise_rng,
                    const std::vector<std::array<std::size_t, 3>>& seeds, double seed_intensity) {
    std::vector<float> img(mask.data().size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        img[i] = static_cast<float>(mask.data()[i] == 1.0f ? c.foreground : c.background);
    }
    blur_slices(img, mask.dims(), c.blur_sigma);
    for (const auto& s : seeds) img[mask.index(s[0], s[1], s[2])] = static_cast<float>(seed_intensity);
    for (float& v : img) v += static_cast<float>(c.noise_std * normal(noise_rng));
    return Volume(mask.dims(), mask.spacing(), VolumeKind::Image, std::move(img));
}

bool strictly_inside(const Volume& m, std::size_t x, std::size_t y, std::size_t z) {
    if (x == 0 || y == 0 || z == 0 || x + 1 >= m.width() || y + 1 >= m.height() || z + 1 >= m.depth()) return false;
    return m.at(x, y, z) == 1.0f && m.at(x - 1, y, z) == 1.0f && m.at(x + 1, y, z) == 1.0f &&
           m.at(x, y - 1, z) == 1.0f && m.at(x, y + 1, z) == 1.0f && m.at(x, y, z - 1) == 1.0f &&
           m.at(x, y, z + 1) == 1.0f;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace

void PhantomConfig::validate() const {
    if (n_cases == 0) throw ValidationError("phantom.n_cases must be positive");
    if (dims.width < 16 || dims.height < 16) throw ValidationError("phantom in-plane size must be >= 16");
    if (dims.depth < 5) throw ValidationError("phantom depth must be >= 5");
    for (float s : {spacing.x, spacing.y, spacing.z}) {
        if (!std::isfinite(s) || !(s > 0.0f)) throw ValidationError("phantom spacing must be finite and positive");
    }
    if (!(semi_axis_min > 0.0 && semi_axis_min <= semi_axis_max)) throw ValidationError("phantom semi-axis range invalid");
    if (!(z_semi_axis_min > 0.0 && z_semi_axis_min <= z_semi_axis_max)) throw ValidationError("phantom z semi-axis range invalid");
    if (!(perturbation >= 0.0 && perturbation < 0.5)) throw ValidationError("phantom.perturbation must be in [0, 0.5)");
    if (!(center_jitter >= 0.0) || !(z_center_jitter >= 0.0)) throw ValidationError("phantom jitter must be >= 0");
    const double side = static_cast<double>(std::min(dims.width, dims.height));
    const double reach = semi_axis_max * side * (1.0 + perturbation) + center_jitter * side;
    if (reach > (side - 1.0) / 2.0 - 2.0) {
        throw ValidationError("phantom semi-axes do not fit inside the volume with a 2-voxel margin");
    }
    if (seeds_min > seeds_max) throw ValidationError("phantom seed count range invalid");
    check_contrast(high, "phantom.high");
    check_contrast(low, "phantom.low");
}

bool PhantomShape::inside(double x, double y, double z) const {
    const double dx = (x - center[0]) / semi_axes[0];
    const double dy = (y - center[1]) / semi_axes[1];
    const double dz = (z - center[2]) / semi_axes[2];
    const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
    const double t = std::atan2(dy, dx);
    const double boundary = 1.0 + amplitude * (harmonics[0] * std::cos(2 * t) + harmonics[1] * std::sin(2 * t) +
                                               harmonics[2] * std::cos(3 * t) + harmonics[3] * std::sin(3 * t));
    return rho <= boundary;
}

std::string phantom_case_id(std::size_t case_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "case_%03zu", case_index);
    return buf;
}

PhantomPair generate_phantom(const PhantomConfig& config, std::size_t case_index) {
    config.validate();
    const Dims& d = config.dims;
    PhantomPair out;
    Volume mask;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxShapeAttempts && !ok; ++attempt) {
        std::mt19937_64 rng(derive_seed(config.rng_seed, "shape", case_index, static_cast<std::uint64_t>(attempt)));
        out.shape = draw_shape(config, rng);
        std::vector<float> m(d.voxels(), 0.0f);
        for (std::size_t z = 0; z < d.depth; ++z) {
            for (std::size_t y = 0; y < d.height; ++y) {
                for (std::size_t x = 0; x < d.width; ++x) {
                    if (out.shape.inside(static_cast<double>(x), static_cast<double>(y), static_cast<double>(z))) {
                        m[(z * d.height + y) * d.width + x] = 1.0f;
                    }
                }
            }
        }
        mask = Volume(d, config.spacing, VolumeKind::Mask, std::move(m));
        ok = mask_is_usable(mask);
    }
    if (!ok) {
        throw ValidationError("phantom " + phantom_case_id(case_index) + ": no usable mask after " +
                              std::to_string(kMaxShapeAttempts) + " attempts");
    }

    std::vector<std::array<std::size_t, 3>> interior;
    for (std::size_t z = 0; z < d.depth; ++z) {
        for (std::size_t y = 0; y < d.height; ++y) {
            for (std::size_t x = 0; x < d.width; ++x) {
                if (strictly_inside(mask, x, y, z)) interior.push_back({x, y, z});
            }
        }
    }
    std::mt19937_64 seed_rng(derive_seed(config.rng_seed, "seeds", case_index));
    const std::size_t span = config.seeds_max - config.seeds_min + 1;
    std::size_t count = config.seeds_min + static_cast<std::size_t>(uniform01(seed_rng) * static_cast<double>(span));
    count = std::min({count, config.seeds_max, interior.size()});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform01(seed_rng) * static_cast<double>(interior.size() - i));
        std::swap(interior[i], interior[std::min(j, interior.size() - 1)]);
        out.seed_voxels.push_back(interior[i]);
    }

    const std::string id = phantom_case_id(case_index);
    std::mt19937_64 high_rng(derive_seed(config.rng_seed, "noise-high", case_index));
    std::mt19937_64 low_rng(derive_seed(config.rng_seed, "noise-low", case_index));
    out.high = CaseRecord{id, render_image(mask, config.high, high_rng, {}, 0.0), mask, Modality::HighContrast};
    out.low = CaseRecord{id, render_image(mask, config.low, low_rng, out.seed_voxels, config.seed_intensity), mask,
                         Modality::LowContrast};
    return out;
}

double contrast_to_noise(const Volume& image, const Volume& mask) {
    double sf = 0, sb = 0, sb2 = 0;
    std::size_t nf = 0, nb = 0;
    for (std::size_t i = 0; i < image.data().size(); ++i) {
        const double v = image.data()[i];
        if (mask.data()[i] == 1.0f) {
            sf += v;
            ++nf;
        } else {
            sb += v;
            sb2 += v * v;
            ++nb;
        }
    }
    if (nf == 0 || nb == 0) throw ValidationError("contrast_to_noise needs foreground and background voxels");
    const double mf = sf / static_cast<double>(nf), mb = sb / static_cast<double>(nb);
    const double var = std::max(0.0, sb2 / static_cast<double>(nb) - mb * mb);
    return std::abs(mf - mb) / std::max(std::sqrt(var), 1e-12);
}

fs::path generate_dataset(const PhantomConfig& config, const fs::path& root) {
    config.validate();
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError(root.string(), "cannot create dataset directory (" + ec.message() + ")");
    std::ostringstream csv;
    csv << "case_id,modality,image_path,mask_path,rng_seed,case_index\n";
    for (std::size_t i = 0; i < config.n_cases; ++i) {
        const PhantomPair p = generate_phantom(config, i);
        fs::create_directories(root / p.high.case_id, ec);
        if (ec) throw IoError((root / p.high.case_id).string(), "cannot create case directory (" + ec.message() + ")");
        for (const CaseRecord* c : {&p.high, &p.low}) {
            const std::string mod(to_string(c->modality));
            const std::string image_rel = c->case_id + "/" + mod + "_image.dgmv";
            const std::string mask_rel = c->case_id + "/" + mod + "_mask.dgmv";
            write_volume(c->image, root / image_rel);
            write_volume(c->mask, root / mask_rel);
            csv << csv_field(c->case_id) << ',' << mod << ',' << csv_field(image_rel) << ',' << csv_field(mask_rel)
                << ',' << config.rng_seed << ',' << i << '\n';
        }
    }
    const fs::path manifest = root / "manifest.csv";
    std::ofstream os(manifest, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(manifest.string(), "cannot open for writing");
    os << csv.str();
    if (!os) throw IoError(manifest.string(), "write failed");
    return manifest;
}

std::vector<ManifestRow> read_manifest(const fs::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw IoError(manifest.string(), "cannot open manifest");
    std::string line;
    std::getline(is, line);
    if (line != "case_id,modality,image_path,mask_path,rng_seed,case_index") {
        throw IoError(manifest.string(), "unexpected manifest header");
    }
    std::vector<ManifestRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 6) throw IoError(manifest.string(), "malformed manifest row: " + line);
        ManifestRow r;
        r.case_id = f[0];
        r.modality = modality_from_string(f[1]);
        r.image_path = f[2];
        r.mask_path = f[3];
        r.rng_seed = std::stoull(f[4]);
        r.case_index = std::stoull(f[5]);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<CaseRecord> load_cases(const fs::path& manifest, Modality modality) {
    auto rows = read_manifest(manifest);
    std::stable_sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) { return a.case_index < b.case_index; });
    const fs::path dir = manifest.parent_path();
    std::vector<CaseRecord> out;
    for (const ManifestRow& r : rows) {
        if (r.modality != modality) continue;
        CaseRecord c{r.case_id, read_volume(dir / r.image_path), read_volume(dir / r.mask_path), modality};
        c.validate();
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace dgmnet
