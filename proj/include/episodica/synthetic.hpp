#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "episodica/image.hpp"
#include "episodica/manifest.hpp"

namespace episodica::data {

// Class-coded oriented sinusoid gratings. Each class has its own
// (orientation, frequency); images of a class differ by a random phase and
// additive Gaussian pixel noise. The last n_test_classes ids form the test split.
struct SyntheticSpec {
  std::size_t n_classes = 10;
  std::size_t n_test_classes = 5;
  std::size_t per_class = 120;
  std::size_t image_size = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassPattern {
  double angle = 0.0;      // radians, within [0, pi/2]
  double frequency = 0.0;  // cycles per image width
  friend bool operator==(const ClassPattern&, const ClassPattern&) = default;
};

ClassPattern class_pattern(std::size_t class_id, std::size_t n_classes);

/// Noise-free grating for `pattern` at the given phase, gray replicated to 3 channels.
Image render_grating(const ClassPattern& pattern, std::size_t size, double phase);

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<Split> splits;

  std::size_t size() const noexcept { return images.size(); }
};

LabeledImages generate_synthetic(const SyntheticSpec& spec);

/// Writes images/c<class>_<index>.ppm and manifest.csv under `dir`; returns the manifest.
DatasetManifest write_dataset(const LabeledImages& data, const std::filesystem::path& dir);

}  // namespace episodica::data
