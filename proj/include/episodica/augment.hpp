#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "episodica/image.hpp"
#include "episodica/rng.hpp"
#include "episodica/tensor.hpp"

// Stochastic augmentation producing aligned query/key views of a minibatch.
// Each transform is split into a sampler (draws every random decision) and a
// deterministic apply step, so tests can pin individual branches.
namespace episodica::augment {

enum class TransformPair { kCropDistort, kCropBlur, kDistortBlur };

std::string to_string(TransformPair pair);
/// Accepts "crop+distort", "crop+blur", "distort+blur" (case-insensitive).
TransformPair parse_transform_pair(const std::string& text);

struct AugmentConfig {
  std::size_t image_size = 32;
  double jitter_strength = 1.0;
  std::vector<double> image_mean{0.5, 0.5, 0.5};
  std::vector<double> image_std{0.25, 0.25, 0.25};
  TransformPair transform_pair = TransformPair::kCropDistort;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError on non-positive std, negative or too large jitter, tiny image size.
  void validate() const;
};

// --- RandomResizedCrop + horizontal flip -----------------------------------

inline constexpr double kCropAreaMin = 0.08;
inline constexpr double kCropAreaMax = 1.0;
inline constexpr double kCropAspectMin = 3.0 / 4.0;
inline constexpr double kCropAspectMax = 4.0 / 3.0;
inline constexpr double kFlipProbability = 0.5;

struct CropBox {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

struct CropDraw {
  CropBox box;
  bool flip = false;
};

/// Ten attempts at a box with area fraction in [0.08, 1] and aspect in [3/4, 4/3];
/// falls back to a center crop clamped to that aspect range.
CropBox sample_crop_box(std::size_t height, std::size_t width, Rng& rng);
CropDraw sample_crop(std::size_t height, std::size_t width, Rng& rng);

/// Bilinear (half-pixel centers) resample of `box` to out_h x out_w.
Image crop_resize(const Image& img, const CropBox& box, std::size_t out_h, std::size_t out_w);
Image resize(const Image& img, std::size_t out_h, std::size_t out_w);
Image hflip(const Image& img);
Image apply_crop(const Image& img, const CropDraw& draw, std::size_t image_size);
Image random_resized_crop(const Image& img, std::size_t image_size, Rng& rng);

// --- Color distortion -----------------------------------------------------

inline constexpr double kJitterProbability = 0.8;
inline constexpr double kGrayscaleProbability = 0.2;

struct JitterStrengths {
  double brightness, contrast, saturation, hue;
};
/// (0.8s, 0.8s, 0.8s, 0.2s)
JitterStrengths jitter_strengths(double s);

struct JitterParams {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_shift = 0.0;  // fraction of a full turn
};

struct DistortionDraw {
  bool jitter = false;
  JitterParams params;
  bool grayscale = false;
};

DistortionDraw sample_color_distortion(double s, Rng& rng);
/// brightness -> contrast -> saturation -> hue, clamping to [0,1] after each step.
Image color_jitter(const Image& img, const JitterParams& params);
/// Luminance 0.299 R + 0.587 G + 0.114 B replicated to three channels.
Image to_grayscale(const Image& img);
Image apply_color_distortion(const Image& img, const DistortionDraw& draw);
Image color_distortion(const Image& img, double s, Rng& rng);

// --- Gaussian blur ----------------------------------------------------------

inline constexpr double kBlurProbability = 0.5;
inline constexpr double kBlurSigmaMin = 0.1;
inline constexpr double kBlurSigmaMax = 2.0;

/// 10% of the image size, rounded to the nearest integer, bumped to odd, at least 3.
std::size_t blur_kernel_size(std::size_t image_size);
std::vector<double> gaussian_kernel(std::size_t size, double sigma);

struct BlurDraw {
  bool apply = false;
  double sigma = 1.0;
};

BlurDraw sample_blur(Rng& rng);
/// Separable convolution with reflect padding.
Image blur(const Image& img, std::size_t kernel_size, double sigma);
Image apply_blur(const Image& img, const BlurDraw& draw, std::size_t image_size);
Image gaussian_blur(const Image& img, std::size_t image_size, Rng& rng);

// --- Normalization ----------------------------------------------------------

/// Per-channel (x - mean) / std; a single mean/std value applies to every channel.
Image normalize(const Image& img, std::span<const double> mean, std::span<const double> std);
Image denormalize(const Image& img, std::span<const double> mean, std::span<const double> std);

// --- Pipeline -----------------------------------------------------------------

/// Stream for one view of one image: keyed by (seed, epoch, batch, image, view).
Rng view_rng(const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t batch, std::uint64_t image,
             std::uint64_t view);

/// The configured pair of transforms (listed order) followed by Normalize.
Image augment_view(const Image& img, const AugmentConfig& cfg, Rng& rng);

/// Normalize only, with a resize when the image does not already match image_size.
Image prepare_eval(const Image& img, const AugmentConfig& cfg);

struct AugmentedPair {
  Tensor query;  // [n, 3, size, size]
  Tensor key;
};

/// One view per image, image i drawing from `streams[i]`.
Tensor augment_batch(std::span<const Image> batch, const AugmentConfig& cfg, std::span<Rng> streams);

/// Two independent views per image: query = view 0, key = view 1. Row i of both
/// derives from batch[i].
AugmentedPair make_pair(std::span<const Image> batch, const AugmentConfig& cfg, std::uint64_t epoch,
                        std::uint64_t batch_index);

}  // namespace episodica::augment
