#include "episodica/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "episodica/error.hpp"
#include "episodica/rng.hpp"

namespace episodica::data {

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic: need at least 2 classes");
  if (n_test_classes == 0 || n_test_classes >= n_classes)
    throw ConfigError("synthetic: n_test_classes must lie in [1, n_classes)");
  if (per_class == 0) throw ConfigError("synthetic: per_class must be positive");
  if (image_size < 8) throw ConfigError("synthetic: image_size must be at least 8");
  if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be nonnegative");
}

ClassPattern class_pattern(std::size_t class_id, std::size_t n_classes) {
  // angles on a grid over [0, pi/2] (a horizontal flip maps theta to pi - theta,
  // so this half-range keeps every class distinct under flips); frequency band per row
  const auto n_angles = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_classes)) * 1.5));
  const std::size_t a = class_id % n_angles, f = class_id / n_angles;
  ClassPattern p;
  p.angle = n_angles == 1 ? 0.0 : (std::numbers::pi / 2.0) * static_cast<double>(a) / static_cast<double>(n_angles - 1);
  p.frequency = 3.0 + 2.5 * static_cast<double>(f);
  return p;
}

Image render_grating(const ClassPattern& pattern, std::size_t size, double phase) {
  Image img(3, size, size);
  const double c = std::cos(pattern.angle), s = std::sin(pattern.angle);
  const double k = 2.0 * std::numbers::pi * pattern.frequency / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double v = 0.5 + 0.4 * std::sin(k * (static_cast<double>(x) * c + static_cast<double>(y) * s) + phase);
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, y, x) = static_cast<float>(v);
    }
  return img;
}

LabeledImages generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  LabeledImages out;
  const std::size_t first_test = spec.n_classes - spec.n_test_classes;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const ClassPattern pattern = class_pattern(c, spec.n_classes);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Rng rng({spec.seed, c, i, 0x73796eULL});
      Image img = render_grating(pattern, spec.image_size, rng.uniform(0.0, 2.0 * std::numbers::pi));
      if (spec.noise > 0.0)
        for (float& v : img.data) v = static_cast<float>(std::clamp(v + spec.noise * rng.normal(), 0.0, 1.0));
      out.images.push_back(std::move(img));
      out.labels.push_back(static_cast<int>(c));
      out.splits.push_back(c < first_test ? Split::kTrain : Split::kTest);
    }
  }
  return out;
}

DatasetManifest write_dataset(const LabeledImages& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  DatasetManifest m;
  m.root = dir;
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "images/c%03d_%05zu.ppm", data.labels[i], i);
    save_ppm_pgm(data.images[i], dir / name);
    m.entries.push_back({name, data.labels[i], data.splits[i]});
  }
  m.save(dir / "manifest.csv");
  return m;
}

}  // namespace episodica::data
