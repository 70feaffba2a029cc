#pragma once

#include <cstdint>
#include <string>

#include "episodica/augment.hpp"
#include "episodica/contrastive.hpp"
#include "episodica/encoder.hpp"
#include "episodica/episodic.hpp"

namespace episodica::config {

enum class Variant { kSimclr, kMoco };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

enum class LrSchedule { kConstant, kCosine };

struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
  LrSchedule schedule = LrSchedule::kConstant;
  friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct RunConfig {
  Variant variant = Variant::kSimclr;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;

  augment::AugmentConfig augment;
  contrastive::LossConfig loss;
  std::size_t queue_capacity = 1024;
  double key_momentum = 0.999;

  std::vector<model::LayerSpec> backbone;
  std::vector<model::LayerSpec> projection_head;

  OptimConfig optim;

  episodic::TaskSpec task;
  episodic::Classifier classifier = episodic::Classifier::kAttention;
  bool eval_l2_normalize = false;
  std::size_t workers = 1;

  /// Defaults for a variant (temperature and similarity depend on it).
  static RunConfig defaults(Variant variant = Variant::kSimclr);

  model::EncoderArch arch() const;
  void validate() const;
};

/// `key = value` lines, '#' comments. Unknown keys and unparsable values raise
/// ConfigError naming the line.
RunConfig parse_config(const std::string& text);
/// Canonical text: every key in fixed order, doubles in shortest round-trip form.
std::string serialize(const RunConfig& cfg);
/// Key reference with defaults, for --help.
std::string help_text();

}  // namespace episodica::config
