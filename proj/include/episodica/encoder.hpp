#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "episodica/autodiff.hpp"
#include "episodica/tensor.hpp"

namespace episodica::model {

enum class LayerKind { kDense, kConv3x3, kRelu, kGlobalAvgPool, kL2Normalize };

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in = 0;      // dense: in features; conv: input channels
  std::size_t out = 0;     // dense: out features; conv: output channels
  std::size_t stride = 1;  // conv only

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::kDense, in, out, 1}; }
  static LayerSpec conv3x3(std::size_t cin, std::size_t cout, std::size_t stride) {
    return {LayerKind::kConv3x3, cin, cout, stride};
  }
  static LayerSpec relu() { return {LayerKind::kRelu, 0, 0, 1}; }
  static LayerSpec global_avg_pool() { return {LayerKind::kGlobalAvgPool, 0, 0, 1}; }
  static LayerSpec l2_normalize_output() { return {LayerKind::kL2Normalize, 0, 0, 1}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// "dense 4 2", "conv3x3 3 16 2", "relu", "global_avg_pool", "l2_normalize_output".
std::string to_string(const LayerSpec& layer);
LayerSpec parse_layer(const std::string& text);
/// `sep`-separated layer list; "none" or blank yields an empty list.
std::vector<LayerSpec> parse_layers(const std::string& text, char sep = ';');
std::string layers_to_string(std::span<const LayerSpec> layers, const char* sep = "; ");

struct EncoderArch {
  Shape input;                      // per-sample shape: {C,H,W} or {D}
  std::vector<LayerSpec> backbone;  // produces the evaluation embedding
  std::vector<LayerSpec> head;      // projection used only inside the loss

  friend bool operator==(const EncoderArch&, const EncoderArch&) = default;
};

/// Per-sample output shape of `layers` applied to `input`; throws ConfigError if they do not compose.
Shape infer_output(const Shape& input, std::span<const LayerSpec> layers);
void validate(const EncoderArch& arch);

/// conv3x3 blocks with stride 2, global average pooling, optional 2-layer projection head.
EncoderArch conv_arch(std::size_t channels, std::size_t image_size, std::span<const std::size_t> widths,
                      std::size_t projection_dim);

using ParamMap = std::map<std::string, Tensor>;

struct EncoderModel {
  EncoderArch arch;
  ParamMap params;

  std::size_t embed_dim() const;
  /// Dimension after the projection head (embed_dim when there is none).
  std::size_t projection_dim() const;
};

/// He-normal weights, zero biases; deterministic in `seed`.
EncoderModel init_encoder(const EncoderArch& arch, std::uint64_t seed);

enum class Stage { kBackbone, kProjection };

using BoundParams = std::map<std::string, ad::Var>;
/// Places every parameter on the tape, as leaves when `trainable`, constants otherwise.
BoundParams bind_params(ad::Tape& tape, const EncoderModel& model, bool trainable);

ad::Var forward(const EncoderModel& model, const BoundParams& params, ad::Var batch, Stage stage);
/// Eager forward, evaluated in chunks of `chunk` samples.
Tensor forward(const EncoderModel& model, const Tensor& batch, Stage stage = Stage::kBackbone,
               std::size_t chunk = 256);

bool congruent(const ParamMap& a, const ParamMap& b);

// Checkpoint layout: arch.txt plus one ETEN1 file per parameter.
std::string arch_manifest(const EncoderArch& arch);
EncoderArch parse_arch_manifest(const std::string& text);
void save_encoder(const EncoderModel& model, const std::filesystem::path& dir);
EncoderModel load_encoder(const std::filesystem::path& dir);

}  // namespace episodica::model
