#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgmnet/nn/network.hpp"
#include "dgmnet/volume.hpp"

namespace dgmnet {

/// Shape decoder geometry. The FC input is landmark_dim + 1 (the normalised slice position).
struct GeneratorSpec {
    std::size_t landmark_dim = 16 * 9;
    std::size_t projection_channels = 32;
    std::size_t projection_height = 8;
    std::size_t projection_width = 8;
    std::size_t upconv_stages = 3;
    std::size_t output_height = 64;
    std::size_t output_width = 64;

    void validate() const;
    std::size_t input_dim() const { return landmark_dim + 1; }
    std::size_t max_slices() const { return landmark_dim / 9; }
    /// Output channels of stage `s` (the last stage emits one channel).
    std::size_t stage_channels(std::size_t s) const;
};

/// Position of slice u among max_slices, mapped to [0, 1].
float slice_position(std::size_t u, std::size_t max_slices);

/// G: [landmark vector, slice position] -> single-channel shape map in (0,1).
///
/// The landmark row at the slice position (linear interpolation between neighbouring slices) is
/// appended to the input before the FC projection. The interpolation weights are treated as
/// constants in backward.
///
/// FC projection -> reshape -> stages of [LeakyReLU(0.2) -> BN -> 2x2 up-conv], sigmoid on the
/// last stage's single output channel.
class ShapeGenerator : public nn::Network {
public:
    ShapeGenerator(const GeneratorSpec& spec, std::uint64_t seed);

    const GeneratorSpec& spec() const { return spec_; }

    /// `input` is (N, input_dim); returns (N, 1, output_height, output_width).
    nn::Tensor forward(const nn::Tensor& input, const nn::Context& ctx);
    /// Gradient w.r.t. the input. Parameter gradients accumulate only when not frozen.
    nn::Tensor backward(const nn::Tensor& dy);

    void visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) override;
    void visit_buffers(const std::string& prefix, const nn::BufferFn& fn) override;

    /// Modality the generator was trained on (recorded in checkpoints).
    std::string training_modality = "HIGH_CONTRAST";

    /// Fresh generator with the same spec and a copy of this one's state and freeze flags.
    std::unique_ptr<ShapeGenerator> clone();

private:
    struct Stage {
        nn::LeakyReLU act{0.2f};
        nn::BatchNorm2d bn;
        nn::ConvTranspose2x2 up;
        Stage(std::size_t in, std::size_t out, nn::InitRng& rng) : bn(in), up(in, out, rng) {}
    };

    GeneratorSpec spec_;
    std::unique_ptr<nn::Linear> projection_;
    std::vector<std::unique_ptr<Stage>> stages_;
    nn::Sigmoid out_act_;
    std::vector<float> readout_weights_;
};

std::unique_ptr<ShapeGenerator> build_generator(const GeneratorSpec& spec, std::uint64_t seed = 0);

/// Stack per-sample landmark vectors and slice positions into the generator input (N, input_dim).
nn::Tensor make_generator_input(std::span<const float> landmark_rows, std::span<const float> positions,
                                std::size_t landmark_dim);

/// Eval-mode shape map for one slice. Requires a fully frozen generator.
nn::Tensor generate_shape(ShapeGenerator& g, std::span<const float> landmark_vec, std::size_t slice_index);

struct GeneratorTrainConfig {
    std::size_t folds = 5;
    std::size_t epochs = 60;
    std::size_t batch_size = 10;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct GeneratorFoldResult {
    std::size_t fold = 0;
    std::vector<std::string> held_out;
    double reconstruction_dsc = 0.0;  // mean over held-out cases
};

struct GeneratorTrainResult {
    std::unique_ptr<ShapeGenerator> generator;  // retrained on all cases, fully frozen
    std::vector<GeneratorFoldResult> folds;
    double mean_fold_dsc() const;
};

/// Deterministic assignment of `n` items to `folds` folds (shuffled by seed, round-robin).
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Fit G on `cases` (landmarks extracted from each mask -> per-slice mask, binary cross-entropy)
/// for every fold of a k-fold split, report held-out reconstruction DSC, then retrain on all
/// cases and freeze. Masks must already be at the generator's output size.
GeneratorTrainResult train_generator(std::span<const CaseRecord> cases, const GeneratorSpec& spec,
                                     const GeneratorTrainConfig& config);

/// Fit one generator on the given cases (no folds). Returned generator is not frozen.
std::unique_ptr<ShapeGenerator> fit_generator(std::span<const CaseRecord* const> cases, const GeneratorSpec& spec,
                                              const GeneratorTrainConfig& config, std::uint64_t seed);

/// Reconstruct a whole mask volume from its own landmarks with G; returns the DSC against it.
double reconstruction_dsc(ShapeGenerator& g, const Volume& mask);

}  // namespace dgmnet
