#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "dgmnet/blocks.hpp"
#include "dgmnet/nn/network.hpp"
#include "dgmnet/shape_generator.hpp"

namespace dgmnet {

struct ModelSpec {
    Variant variant = Variant::DgmNet;
    std::size_t levels = 3;
    std::size_t base_filters = 8;
    std::size_t se_reduction = 4;
    float dropout_rate = 0.5f;
    std::size_t input_height = 64;
    std::size_t input_width = 64;
    std::size_t max_slices = 16;
    std::size_t fc_hidden = 256;
    nn::PoolKind model_path_pool = nn::PoolKind::Average;
    /// Append the post-merge conv block to a non-DGMNET variant (DGMNET always has it).
    bool extra_head_block = false;
    std::uint64_t seed = 0;

    std::size_t landmark_dim() const { return max_slices * 9; }
    std::size_t channels(std::size_t level) const { return base_filters << level; }
    void validate() const;
};

/// Encoder-decoder segmentation network for every ablation variant.
///
/// Parameter names: enc<i>, bottleneck, dec<i>, [extra], head; DGMNET adds
/// landmark_head.fc1/fc2 and the frozen generator under "generator".
class SegmentationModel : public nn::Network {
public:
    struct Output {
        nn::Tensor mask;                      // (N, 1, H, W), sigmoid
        std::optional<nn::Tensor> landmarks;  // (N, landmark_dim, 1, 1), DGMNET only
    };

    SegmentationModel(const ModelSpec& spec, std::unique_ptr<ShapeGenerator> generator);

    const ModelSpec& spec() const { return spec_; }

    /// `slice_positions` holds one normalised slice position per sample (empty means all 0).
    Output forward(const nn::Tensor& images, std::span<const float> slice_positions, const nn::Context& ctx);
    /// Backpropagate d loss / d mask and, for DGMNET, d loss / d landmarks (may be null).
    void backward(const nn::Tensor& dmask, const nn::Tensor* dlandmarks);

    void visit_parameters(const std::string& prefix, const nn::ParameterFn& fn) override;
    void visit_buffers(const std::string& prefix, const nn::BufferFn& fn) override;

    ShapeGenerator* generator() { return generator_.get(); }
    ConvBlock& encoder_block(std::size_t level) { return *encoders_.at(level); }
    ConvBlock& bottleneck() { return *bottleneck_; }

    /// Testing hook: replace the generator's shape map with zeros before the merge.
    void zero_shape_map(bool on) { zero_shape_ = on; }
    /// Shape map added in the last forward pass (DGMNET only), (N, 1, H, W).
    const nn::Tensor& last_shape_map() const { return shape_map_; }

    /// Dropout stream; persisted by checkpoints so resumed runs continue it.
    std::mt19937_64& dropout_rng() { return dropout_rng_; }

private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<ConvBlock>> encoders_;
    std::vector<nn::MaxPool2x2> pools_;
    std::unique_ptr<ConvBlock> bottleneck_;
    nn::Dropout dropout_;
    std::vector<std::unique_ptr<DecoderStage>> decoders_;
    std::unique_ptr<ConvBlock> extra_;
    std::unique_ptr<nn::Conv2d> head_;
    nn::Sigmoid head_act_;

    std::unique_ptr<nn::GlobalPool> lm_pool_;
    std::unique_ptr<nn::Linear> lm_fc1_;
    nn::ReLU lm_relu_;
    std::unique_ptr<nn::Linear> lm_fc2_;
    std::unique_ptr<ShapeGenerator> generator_;
    std::unique_ptr<nn::BilinearResize> resize_;
    nn::Tensor landmarks_;  // post-activation landmark prediction, kept for backward
    nn::Tensor shape_map_;
    std::size_t merged_channels_ = 0;
    bool zero_shape_ = false;

    std::mt19937_64 dropout_rng_;
};

/// Build a model. DGMNET requires `generator` (cloned and frozen inside the model); the
/// other variants reject one.
std::unique_ptr<SegmentationModel> build_model(const ModelSpec& spec, ShapeGenerator* generator = nullptr);

/// Generator geometry matching a model spec (output resized to the input size at merge time).
GeneratorSpec generator_spec_for(const ModelSpec& spec);

/// Copy every parameter and buffer whose name exists in both networks with equal shape.
/// Returns the number of tensors copied.
std::size_t copy_shared_state(nn::Network& dst, nn::Network& src);

}  // namespace dgmnet
