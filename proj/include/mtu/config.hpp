#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mtu {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { full, half };

std::string to_string(Precision p);
Precision parse_precision(const std::string& text);

/// Model hyperparameters and the ablation switches. Immutable once
/// validated.
struct ModelConfig {
  static constexpr int kFormatVersion = 1;
  static constexpr int kMotionStride = 4;

  int num_stacks = 2;
  int feature_channels = 26;
  int max_displacement = 10;
  int motion_stride = kMotionStride;
  double alpha = 0.01;
  std::vector<double> lambdas{0.1, 1.0};
  bool skip_matching = false;
  Precision precision = Precision::full;

  bool enable_residual_learning = true;
  bool enable_motion_compensation = true;
  bool enable_motion_loss = true;
  bool enable_structure_injection_addition = true;
  bool enable_motion_layer = true;

  /// Convenience: structure injection as a whole (addition and motion layer).
  bool structure_injection() const { return enable_structure_injection_addition && enable_motion_layer; }

  bool operator==(const ModelConfig&) const = default;
};

/// 0.1 for every intermediate stack and 1.0 for the last one.
std::vector<double> default_lambdas(int num_stacks);

/// A config with `num_stacks` stacks and default lambdas, everything else
/// at the defaults.
ModelConfig make_config(int num_stacks, int feature_channels, int max_displacement);

/// Throws ConfigError naming the first violated invariant.
ModelConfig validate_config(const ModelConfig& cfg);

/// Flat `key = value` text with a leading `format_version`. Doubles are
/// written in shortest round-trip form.
std::string serialize_config(const ModelConfig& cfg);

/// Parses and validates. Unknown keys, duplicate keys, malformed values and
/// unsupported versions are errors. Missing keys keep their defaults.
ModelConfig parse_config(const std::string& text);

ModelConfig load_config_file(const std::string& path);
void save_config_file(const ModelConfig& cfg, const std::string& path);

}  // namespace mtu
