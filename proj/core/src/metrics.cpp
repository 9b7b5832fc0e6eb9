#include "dgmnet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dgmnet {

namespace {

void require_same_dims(const Volume& a, const Volume& b) {
    if (a.dims() != b.dims()) throw ValidationError("metric inputs have different dims");
    if (!a.is_mask() || !b.is_mask()) throw ValidationError("metric inputs must be MASK volumes");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1D squared-distance transform (lower envelope of parabolas) over sites at i * step.
void distance_1d(const double* f, std::size_t n, std::size_t stride, double step, double* out,
                 std::vector<std::size_t>& v, std::vector<double>& z, std::vector<double>& buf) {
    buf.resize(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = f[i * stride];
    v.resize(n);
    z.resize(n + 1);
    long k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        if (buf[q] == kInf) continue;
        const double pq = static_cast<double>(q) * step;
        while (true) {
            if (k < 0) {
                k = 0;
                v[0] = q;
                z[0] = -kInf;
                z[1] = kInf;
                break;
            }
            const std::size_t r = v[static_cast<std::size_t>(k)];
            const double pr = static_cast<double>(r) * step;
            const double s = ((buf[q] + pq * pq) - (buf[r] + pr * pr)) / (2.0 * (pq - pr));
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
                if (k < 0) {
                    k = 0;
                    v[0] = q;
                    z[0] = -kInf;
                    z[1] = kInf;
                    break;
                }
                continue;
            }
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = s;
            z[static_cast<std::size_t>(k) + 1] = kInf;
            break;
        }
    }
    if (k < 0) {
        for (std::size_t i = 0; i < n; ++i) out[i * stride] = kInf;
        return;
    }
    std::size_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double pq = static_cast<double>(q) * step;
        while (z[j + 1] < pq) ++j;
        const double d = (static_cast<double>(q) - static_cast<double>(v[j])) * step;
        out[q * stride] = d * d + buf[v[j]];
    }
}

// Squared distance (mm^2) from every voxel to the nearest marked site.
std::vector<double> squared_distance_map(const Dims& dims, const Spacing& sp,
                                         const std::vector<std::array<std::size_t, 3>>& sites) {
    const std::size_t W = dims.width, H = dims.height, D = dims.depth;
    std::vector<double> f(dims.voxels(), kInf);
    for (const auto& s : sites) f[(s[2] * H + s[1]) * W + s[0]] = 0.0;
    std::vector<std::size_t> v;
    std::vector<double> z, buf;
    for (std::size_t zz = 0; zz < D; ++zz) {
        for (std::size_t y = 0; y < H; ++y) {
            double* row = f.data() + (zz * H + y) * W;
            distance_1d(row, W, 1, sp.x, row, v, z, buf);
        }
    }
    for (std::size_t zz = 0; zz < D; ++zz) {
        for (std::size_t x = 0; x < W; ++x) {
            double* col = f.data() + zz * H * W + x;
            distance_1d(col, H, W, sp.y, col, v, z, buf);
        }
    }
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            double* col = f.data() + y * W + x;
            distance_1d(col, D, W * H, sp.z, col, v, z, buf);
        }
    }
    return f;
}

double mean_directed(const std::vector<std::array<std::size_t, 3>>& from, const std::vector<double>& dist2,
                     const Dims& dims) {
    double sum = 0.0;
    for (const auto& s : from) sum += std::sqrt(dist2[(s[2] * dims.height + s[1]) * dims.width + s[0]]);
    return sum / static_cast<double>(from.size());
}

double brute_directed(const std::vector<std::array<std::size_t, 3>>& from,
                      const std::vector<std::array<std::size_t, 3>>& to, const Spacing& sp) {
    double sum = 0.0;
    for (const auto& a : from) {
        double best = kInf;
        for (const auto& b : to) {
            const double dx = (static_cast<double>(a[0]) - static_cast<double>(b[0])) * sp.x;
            const double dy = (static_cast<double>(a[1]) - static_cast<double>(b[1])) * sp.y;
            const double dz = (static_cast<double>(a[2]) - static_cast<double>(b[2])) * sp.z;
            best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        sum += std::sqrt(best);
    }
    return sum / static_cast<double>(from.size());
}

}  // namespace

ConfusionCounts confusion_counts(const Volume& pred, const Volume& truth) {
    require_same_dims(pred, truth);
    ConfusionCounts c;
    const auto p = pred.data();
    const auto t = truth.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pi = p[i] == 1.0f, ti = t[i] == 1.0f;
        if (pi && ti) ++c.tp;
        else if (pi) ++c.fp;
        else if (ti) ++c.fn;
        else ++c.tn;
    }
    return c;
}

OverlapMetrics overlap_from_counts(const ConfusionCounts& c) {
    if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0, 1.0};
    auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
    return {ratio(2.0 * tp, 2.0 * tp + fp + fn), ratio(tp, tp + fn), ratio(tp, tp + fp)};
}

OverlapMetrics overlap_metrics(const Volume& pred, const Volume& truth) {
    return overlap_from_counts(confusion_counts(pred, truth));
}

std::vector<std::array<std::size_t, 3>> surface_voxels(const Volume& mask) {
    if (!mask.is_mask()) throw ValidationError("surface_voxels expects a MASK volume");
    const std::size_t W = mask.width(), H = mask.height(), D = mask.depth();
    auto fg = [&](std::size_t x, std::size_t y, std::size_t z) { return mask.at(x, y, z) == 1.0f; };
    std::vector<std::array<std::size_t, 3>> out;
    for (std::size_t z = 0; z < D; ++z) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                if (!fg(x, y, z)) continue;
                const bool border = x == 0 || y == 0 || z == 0 || x + 1 == W || y + 1 == H || z + 1 == D;
                if (border || !fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                    !fg(x, y, z - 1) || !fg(x, y, z + 1)) {
                    out.push_back({x, y, z});
                }
            }
        }
    }
    return out;
}

std::optional<double> average_surface_distance(const Volume& pred, const Volume& truth) {
    require_same_dims(pred, truth);
    if (!(pred.spacing() == truth.spacing())) throw ValidationError("ASD inputs have different spacing");
    const auto sa = surface_voxels(pred);
    const auto sb = surface_voxels(truth);
    if (sa.empty() || sb.empty()) return std::nullopt;
    const auto da = squared_distance_map(pred.dims(), pred.spacing(), sa);
    const auto db = squared_distance_map(pred.dims(), pred.spacing(), sb);
    return (mean_directed(sa, db, pred.dims()) + mean_directed(sb, da, pred.dims())) / 2.0;
}

std::optional<double> asd_oracle(const Volume& pred, const Volume& truth) {
    require_same_dims(pred, truth);
    if (!(pred.spacing() == truth.spacing())) throw ValidationError("ASD inputs have different spacing");
    const auto sa = surface_voxels(pred);
    const auto sb = surface_voxels(truth);
    if (sa.empty() || sb.empty()) return std::nullopt;
    return (brute_directed(sa, sb, pred.spacing()) + brute_directed(sb, sa, pred.spacing())) / 2.0;
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

void MetricReport::aggregate() {
    std::vector<double> d, se, pp, as;
    for (const CaseMetrics& r : rows) {
        if (!r.error.empty()) continue;
        d.push_back(r.dsc);
        se.push_back(r.sen);
        pp.push_back(r.ppv);
        if (r.asd_mm) as.push_back(*r.asd_mm);
    }
    dsc = summarize(d);
    sen = summarize(se);
    ppv = summarize(pp);
    asd = summarize(as);
}

MetricReport evaluate_cases(const CasePredictor& predict, std::span<const CaseRecord> cases,
                            const PreprocessConfig& preprocess, bool already_preprocessed) {
    if (cases.empty()) throw ValidationError("evaluate_cases needs at least one case");
    MetricReport report;
    for (const CaseRecord& c : cases) {
        CaseMetrics row;
        row.case_id = c.case_id;
        try {
            const CaseRecord pre = already_preprocessed ? c : preprocess_case(c, preprocess);
            const Volume pred = predict(pre);
            const OverlapMetrics o = overlap_metrics(pred, pre.mask);
            row.dsc = o.dsc;
            row.sen = o.sen;
            row.ppv = o.ppv;
            row.asd_mm = average_surface_distance(pred, pre.mask);
            if (!row.asd_mm) report.warnings.push_back(c.case_id + ": ASD undefined (empty mask), excluded");
        } catch (const std::exception& e) {
            row.error = e.what();
            report.warnings.push_back(c.case_id + ": " + e.what());
        }
        report.rows.push_back(std::move(row));
    }
    report.aggregate();
    return report;
}

void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(path.string(), "cannot open metrics CSV for writing");
    os << "case_id,dsc,sen,ppv,asd_mm\n";
    os << std::setprecision(10);
    for (const CaseMetrics& r : report.rows) {
        if (!r.error.empty()) {
            os << r.case_id << ",NA,NA,NA,NA\n";
            continue;
        }
        os << r.case_id << ',' << r.dsc << ',' << r.sen << ',' << r.ppv << ',';
        if (r.asd_mm) os << *r.asd_mm;
        else os << "NA";
        os << '\n';
    }
    os << "mean," << report.dsc.mean << ',' << report.sen.mean << ',' << report.ppv.mean << ',' << report.asd.mean
       << '\n';
    os << "std," << report.dsc.std << ',' << report.sen.std << ',' << report.ppv.std << ',' << report.asd.std << '\n';
    if (!os) throw IoError(path.string(), "failed writing metrics CSV");
}

MetricReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError(path.string(), "cannot open metrics CSV");
    std::string line;
    std::getline(is, line);
    if (line != "case_id,dsc,sen,ppv,asd_mm") throw ValidationError("unexpected metrics CSV header in " + path.string());
    MetricReport report;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw ValidationError("malformed metrics CSV row in " + path.string());
        if (f[0] == "mean" || f[0] == "std") continue;
        CaseMetrics r;
        r.case_id = f[0];
        if (f[1] == "NA") {
            r.error = "missing";
        } else {
            r.dsc = std::stod(f[1]);
            r.sen = std::stod(f[2]);
            r.ppv = std::stod(f[3]);
            if (f[4] != "NA") r.asd_mm = std::stod(f[4]);
        }
        report.rows.push_back(std::move(r));
    }
    report.aggregate();
    return report;
}

std::string format_mean_std(const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s.mean << " ± " << s.std;
    return os.str();
}

}  // namespace dgmnet
