#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "mtu/pipeline.hpp"

namespace mtu {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned container: the model config, a step counter, named float32
/// arrays and named text blobs (optimizer and RNG state when training).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor<float>> arrays;
  std::map<std::string, std::string> texts;
};

/// Written atomically (temporary file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model weights under their parameter names.
Checkpoint make_checkpoint(const StackedModel<float>& model, std::int64_t step = 0);

/// Rebuilds the model described by the embedded config. Missing, extra or
/// mis-shaped arrays are errors.
StackedModel<float> model_from_checkpoint(const Checkpoint& ckpt);

/// As above, and additionally rejects a checkpoint whose config differs
/// from `expected`.
StackedModel<float> model_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& expected);

StackedModel<float> load_model(const std::filesystem::path& path);

}  // namespace mtu
