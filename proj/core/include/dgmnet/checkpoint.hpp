#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dgmnet/architectures.hpp"
#include "dgmnet/nn/adam.hpp"
#include "dgmnet/shape_generator.hpp"

namespace dgmnet {

// Checkpoint directory layout:
//   manifest.json  kind, specs, tensor table (name, role, shape, offset), frozen_names,
//                  frozen flag, training modality, sha256 of params.bin
//   params.bin     every tensor's f32 values back to back, little-endian, table order
inline constexpr const char* kCheckpointManifest = "manifest.json";
inline constexpr const char* kCheckpointPayload = "params.bin";

struct CheckpointInfo {
    std::string kind;  // "generator", "model" or "oracle"
    std::string modality;
    bool frozen = false;
    std::vector<std::string> frozen_names;
    std::string payload_sha256;
};

void save_generator(ShapeGenerator& g, const std::filesystem::path& dir);
std::unique_ptr<ShapeGenerator> load_generator(const std::filesystem::path& dir);

void save_model(SegmentationModel& m, const std::filesystem::path& dir);
std::unique_ptr<SegmentationModel> load_model(const std::filesystem::path& dir);

/// Marker checkpoint whose predictor returns the ground-truth mask (pipeline testing).
void save_oracle_checkpoint(const std::filesystem::path& dir);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Adam moments and step count, keyed by parameter name.
void save_optimizer(const nn::Adam& adam, const std::filesystem::path& path);
void load_optimizer(nn::Adam& adam, const std::filesystem::path& path);

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace dgmnet
