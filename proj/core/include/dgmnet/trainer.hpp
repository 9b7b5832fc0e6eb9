#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgmnet/architectures.hpp"
#include "dgmnet/losses.hpp"
#include "dgmnet/metrics.hpp"
#include "dgmnet/preprocess.hpp"
#include "dgmnet/shape_generator.hpp"
#include "dgmnet/volume.hpp"

namespace dgmnet {

enum class TrainStage { Generator, Full };

struct TrainConfig {
    TrainStage stage = TrainStage::Full;
    Variant variant = Variant::DgmNet;
    double learning_rate = 1e-3;
    std::size_t batch_size = 10;
    std::size_t epochs = 100;
    double validation_fraction = 0.25;
    double test_fraction = 0.25;
    std::uint64_t rng_seed = 0;
    LossConfig loss;
    std::size_t early_stop_patience = 15;
    bool deterministic = true;

    void validate() const;
};

/// Case-level partition. No case id appears in more than one list.
struct CaseSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    /// SHA-256 over the three sorted id lists.
    std::string hash() const;
};

/// Seeded shuffle of the ids, then test = round(n * test_fraction) and
/// val = round(n * validation_fraction) cases (at least one each), train the rest.
CaseSplit split_cases(std::span<const std::string> case_ids, double validation_fraction, double test_fraction,
                      std::uint64_t seed);

void write_split_csv(const CaseSplit& split, const std::filesystem::path& path);
CaseSplit read_split_csv(const std::filesystem::path& path);

/// Cases whose id is in `ids`, in the order of `ids`.
std::vector<CaseRecord> select_cases(std::span<const CaseRecord> cases, std::span<const std::string> ids);

struct SliceRef {
    std::size_t case_index = 0;
    std::size_t slice = 0;
    friend bool operator==(const SliceRef&, const SliceRef&) = default;
};

/// Every slice of every case exactly once, shuffled by (seed, epoch), grouped into batches
/// (the last batch may be short).
std::vector<std::vector<SliceRef>> make_slice_batches(std::span<const CaseRecord> cases, std::size_t batch_size,
                                                      std::uint64_t seed, std::size_t epoch);

/// One training batch: image and mask slices plus per-slice presence, slice position and the
/// case's whole-volume encoded landmark vector.
struct SliceBatch {
    nn::Tensor images;                   // (N, 1, H, W)
    nn::Tensor masks;                    // (N, 1, H, W)
    std::vector<float> presence;         // z for the slice itself
    std::vector<float> positions;        // normalised slice index
    std::vector<float> landmark_targets; // N * landmark_dim
    std::vector<SliceRef> refs;
};

/// `encoded[i]` is encode_landmarks(extract_landmarks(cases[i].mask), max_slices).
SliceBatch assemble_batch(std::span<const CaseRecord> cases, std::span<const SliceRef> refs,
                          std::span<const std::vector<float>> encoded, std::size_t max_slices);

std::vector<std::vector<float>> encode_case_landmarks(std::span<const CaseRecord> cases, std::size_t max_slices);

/// Eval-mode prediction of a whole preprocessed case, slice by slice, binarised at 0.5.
Volume predict_volume(SegmentationModel& model, const CaseRecord& c, std::size_t batch_size = 16);

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown mean_loss;
    double val_dsc = 0.0;
    double seconds = 0.0;
};

struct RunOptions {
    std::filesystem::path out_dir;  // empty: keep everything in memory
    bool resume = false;            // continue from out_dir/last when present
    std::optional<std::size_t> stop_after_epoch;  // leave the run resumable after this epoch
    std::string config_snapshot;    // written verbatim to config.txt
    /// Replace landmark targets with seeded uniform noise (gradient-isolation experiments).
    bool landmark_noise = false;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

struct RunRecord {
    TrainConfig config;
    ModelSpec model_spec;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_dsc = -1.0;
    std::filesystem::path best_checkpoint;
    double wall_seconds = 0.0;
    std::size_t steps = 0;
    std::string generator_hash_before;
    std::string generator_hash_after;
    bool stopped_early = false;
    std::unique_ptr<SegmentationModel> model;  // best weights
};

/// Optimise total_loss over slice batches with Adam; validate per epoch on `val` (DSC via
/// evaluate_cases); keep the best model; verify the generator hash at the end.
/// Cases must already be preprocessed to the model's input size.
/// Throws NumericError on a non-finite loss (a nan_abort.json diagnostic is written when
/// persisting) and Error when the generator changed.
RunRecord train_full(std::span<const CaseRecord> train, std::span<const CaseRecord> val,
                     ShapeGenerator* generator, const ModelSpec& spec, const TrainConfig& config,
                     const RunOptions& options = {});

/// Resize masks to the generator output grid when needed (nearest neighbour).
std::vector<CaseRecord> generator_cases(std::span<const CaseRecord> cases, const GeneratorSpec& spec);

/// Preprocess every case. Dataset-scope normalisation uses statistics pooled over `stats_ids`.
std::vector<CaseRecord> preprocess_all(std::span<const CaseRecord> cases, const PreprocessConfig& config,
                                       std::span<const std::string> stats_ids = {});

struct AblationConfig {
    PreprocessConfig preprocess;
    ModelSpec model;  // variant is overridden per row
    GeneratorSpec generator;
    GeneratorTrainConfig generator_train;
    TrainConfig train;
    std::vector<Variant> variants{Variant::Unet, Variant::ResUnet, Variant::SeResUnet, Variant::SeUnet,
                                  Variant::DgmNet};
    bool include_high_contrast_row = true;
};

struct AblationRow {
    std::string method;
    Modality modality = Modality::LowContrast;
    MetricReport report;
    std::string split_hash;
    std::string error;
    std::filesystem::path run_dir;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    double generator_mean_fold_dsc = 0.0;

    /// Rows: method,modality,dsc,sen,asd_mm,ppv (cells "mean ± std").
    void write_csv(const std::filesystem::path& path) const;
    /// Table-1 style text table.
    std::string format_text() const;
};

/// Train the generator on HIGH_CONTRAST non-test cases, every requested variant on
/// LOW_CONTRAST, plus DGMNET on HIGH_CONTRAST; evaluate on the shared test split.
/// Per-method failures are recorded in their row. Run directories go under `out_dir`
/// when it is non-empty.
AblationTable run_ablation(const std::filesystem::path& manifest, const AblationConfig& config,
                           const std::filesystem::path& out_dir = {});

/// Rebuild an ablation table from run directories written by run_ablation.
AblationTable load_ablation(const std::filesystem::path& out_dir);

}  // namespace dgmnet
