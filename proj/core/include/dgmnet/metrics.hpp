#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgmnet/preprocess.hpp"
#include "dgmnet/volume.hpp"

namespace dgmnet {

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
};

struct OverlapMetrics {
    double dsc = 0.0;
    double sen = 0.0;
    double ppv = 0.0;
};

ConfusionCounts confusion_counts(const Volume& pred, const Volume& truth);

/// DSC, sensitivity and PPV from voxel counts. Both masks empty gives (1, 1, 1); any other
/// zero denominator gives 0 for that metric.
OverlapMetrics overlap_from_counts(const ConfusionCounts& c);
OverlapMetrics overlap_metrics(const Volume& pred, const Volume& truth);

/// Foreground voxels with at least one 6-connected background or out-of-bounds neighbour.
std::vector<std::array<std::size_t, 3>> surface_voxels(const Volume& mask);

/// Symmetric average surface distance in mm: mean of the A->B and B->A mean nearest
/// surface-to-surface distances. Empty on either side yields nullopt.
/// Uses an exact separable Euclidean distance transform of each surface.
std::optional<double> average_surface_distance(const Volume& pred, const Volume& truth);

/// Same definition by exhaustive all-pairs search. Intended for small volumes.
std::optional<double> asd_oracle(const Volume& pred, const Volume& truth);

struct CaseMetrics {
    std::string case_id;
    double dsc = 0.0;
    double sen = 0.0;
    double ppv = 0.0;
    std::optional<double> asd_mm;
    std::string error;  // set when the case failed before metrics could be computed
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population formula (divisor n)
    std::size_t count = 0;
};

MetricSummary summarize(std::span<const double> values);

struct MetricReport {
    std::vector<CaseMetrics> rows;
    MetricSummary dsc, sen, ppv, asd;
    std::vector<std::string> warnings;
    std::string grid = "preprocessed";

    /// Recompute aggregates over rows without errors; missing ASD values are excluded.
    void aggregate();
};

/// Produces a binary mask volume for a preprocessed case.
using CasePredictor = std::function<Volume(const CaseRecord& preprocessed)>;

/// Preprocess each case, predict, compute the four metrics in the preprocessed grid and
/// aggregate. Per-case failures are recorded with their case_id and do not stop the loop.
MetricReport evaluate_cases(const CasePredictor& predict, std::span<const CaseRecord> cases,
                            const PreprocessConfig& preprocess, bool already_preprocessed = false);

/// CSV: header `case_id,dsc,sen,ppv,asd_mm`, one row per case, then `mean,...` and `std,...`.
/// Missing ASD is written as `NA`.
void write_report_csv(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report_csv(const std::filesystem::path& path);

/// "0.89 ± 0.02"
std::string format_mean_std(const MetricSummary& s);

}  // namespace dgmnet
