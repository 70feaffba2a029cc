#include "episodica/augment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "episodica/error.hpp"

namespace episodica::augment {

std::string to_string(TransformPair pair) {
  switch (pair) {
    case TransformPair::kCropDistort: return "crop+distort";
    case TransformPair::kCropBlur: return "crop+blur";
    case TransformPair::kDistortBlur: return "distort+blur";
  }
  return "?";
}

TransformPair parse_transform_pair(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "crop+distort") return TransformPair::kCropDistort;
  if (t == "crop+blur") return TransformPair::kCropBlur;
  if (t == "distort+blur") return TransformPair::kDistortBlur;
  throw ConfigError("unknown transform pair '" + text + "' (expected crop+distort, crop+blur or distort+blur)");
}

void AugmentConfig::validate() const {
  if (image_size < 10) throw ConfigError("image_size must be at least 10, got " + std::to_string(image_size));
  if (!(jitter_strength >= 0.0)) throw ConfigError("jitter_strength must be nonnegative");
  // hue shift is limited to half a turn
  if (jitter_strength > 2.5) throw ConfigError("jitter_strength above 2.5 gives a hue range beyond 0.5");
  if (image_mean.empty() || image_mean.size() != image_std.size())
    throw ConfigError("image_mean and image_std must be nonempty and of equal length");
  for (double s : image_std)
    if (!(s > 0.0)) throw ConfigError("image_std entries must be positive");
}

// --- crop ---------------------------------------------------------------------

CropBox sample_crop_box(std::size_t height, std::size_t width, Rng& rng) {
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(kCropAspectMin), log_hi = std::log(kCropAspectMax);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(kCropAreaMin, kCropAreaMax);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<long>(std::lround(std::sqrt(target * aspect)));
    const auto h = static_cast<long>(std::lround(std::sqrt(target / aspect)));
    if (w > 0 && h > 0 && w <= static_cast<long>(width) && h <= static_cast<long>(height)) {
      CropBox box;
      box.height = static_cast<std::size_t>(h);
      box.width = static_cast<std::size_t>(w);
      box.top = rng.below(height - box.height + 1);
      box.left = rng.below(width - box.width + 1);
      return box;
    }
  }
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  CropBox box{0, 0, height, width};
  if (in_ratio < kCropAspectMin) {
    box.height = static_cast<std::size_t>(std::lround(static_cast<double>(width) / kCropAspectMin));
  } else if (in_ratio > kCropAspectMax) {
    box.width = static_cast<std::size_t>(std::lround(static_cast<double>(height) * kCropAspectMax));
  }
  box.top = (height - box.height) / 2;
  box.left = (width - box.width) / 2;
  return box;
}

CropDraw sample_crop(std::size_t height, std::size_t width, Rng& rng) {
  CropDraw d;
  d.box = sample_crop_box(height, width, rng);
  d.flip = rng.bernoulli(kFlipProbability);
  return d;
}

Image crop_resize(const Image& img, const CropBox& box, std::size_t out_h, std::size_t out_w) {
  if (box.height == 0 || box.width == 0 || box.top + box.height > img.height || box.left + box.width > img.width)
    throw ContractError("crop_resize: box outside the image");
  Image out(img.channels, out_h, out_w);
  const double sy = static_cast<double>(box.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(box.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(box.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, box.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(box.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, box.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double a = img.at(c, box.top + y0, box.left + x0);
        const double b = img.at(c, box.top + y0, box.left + x1);
        const double d = img.at(c, box.top + y1, box.left + x0);
        const double e = img.at(c, box.top + y1, box.left + x1);
        const double top = a + (b - a) * wx;
        const double bottom = d + (e - d) * wx;
        out.at(c, y, x) = static_cast<float>(top + (bottom - top) * wy);
      }
    }
  }
  return out;
}

Image resize(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  return crop_resize(img, CropBox{0, 0, img.height, img.width}, out_h, out_w);
}

Image hflip(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image apply_crop(const Image& img, const CropDraw& draw, std::size_t image_size) {
  Image out = crop_resize(img, draw.box, image_size, image_size);
  return draw.flip ? hflip(out) : out;
}

Image random_resized_crop(const Image& img, std::size_t image_size, Rng& rng) {
  if (img.height < 8 || img.width < 8) throw ContractError("random_resized_crop: image smaller than 8x8");
  return apply_crop(img, sample_crop(img.height, img.width, rng), image_size);
}

// --- color --------------------------------------------------------------------

JitterStrengths jitter_strengths(double s) { return {0.8 * s, 0.8 * s, 0.8 * s, 0.2 * s}; }

DistortionDraw sample_color_distortion(double s, Rng& rng) {
  if (!(s >= 0.0)) throw ConfigError("color_distortion: jitter strength must be nonnegative");
  const JitterStrengths js = jitter_strengths(s);
  DistortionDraw d;
  d.jitter = rng.bernoulli(kJitterProbability);
  d.params.brightness = rng.uniform(std::max(0.0, 1.0 - js.brightness), 1.0 + js.brightness);
  d.params.contrast = rng.uniform(std::max(0.0, 1.0 - js.contrast), 1.0 + js.contrast);
  d.params.saturation = rng.uniform(std::max(0.0, 1.0 - js.saturation), 1.0 + js.saturation);
  d.params.hue_shift = rng.uniform(-js.hue, js.hue);
  d.grayscale = rng.bernoulli(kGrayscaleProbability);
  return d;
}

namespace {

void require_rgb(const Image& img, const char* op) {
  if (img.channels != 3) throw ContractError(std::string(op) + ": expects a 3-channel image");
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// blend(img, other, f) = f * img + (1 - f) * other, clamped
void blend_with_gray(Image& img, double factor, bool use_mean) {
  const std::size_t plane = img.height * img.width;
  std::vector<double> gray(plane);
  double mean = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    gray[p] = luminance(img.data[p], img.data[plane + p], img.data[2 * plane + p]);
    mean += gray[p];
  }
  mean /= static_cast<double>(plane);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < plane; ++p) {
      float& v = img.data[c * plane + p];
      const double other = use_mean ? mean : gray[p];
      v = clamp01(factor * v + (1.0 - factor) * other);
    }
}

void shift_hue(Image& img, double shift) {
  const std::size_t plane = img.height * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    const double r = img.data[p], g = img.data[plane + p], b = img.data[2 * plane + p];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        h = std::fmod((g - b) / delta, 6.0);
      } else if (mx == g) {
        h = (b - r) / delta + 2.0;
      } else {
        h = (r - g) / delta + 4.0;
      }
      h /= 6.0;
    }
    const double s = mx > 0.0 ? delta / mx : 0.0;
    const double v = mx;
    h = h + shift;
    h -= std::floor(h);
    const double h6 = h * 6.0;
    const auto sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double pp = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
    std::array<double, 3> rgb{};
    switch (sector) {
      case 0: rgb = {v, t, pp}; break;
      case 1: rgb = {q, v, pp}; break;
      case 2: rgb = {pp, v, t}; break;
      case 3: rgb = {pp, q, v}; break;
      case 4: rgb = {t, pp, v}; break;
      default: rgb = {v, pp, q}; break;
    }
    for (std::size_t c = 0; c < 3; ++c) img.data[c * plane + p] = clamp01(rgb[c]);
  }
}

}  // namespace

Image color_jitter(const Image& img, const JitterParams& params) {
  require_rgb(img, "color_jitter");
  Image out = img;
  if (params.brightness != 1.0)
    for (float& v : out.data) v = clamp01(params.brightness * v);
  if (params.contrast != 1.0) blend_with_gray(out, params.contrast, true);
  if (params.saturation != 1.0) blend_with_gray(out, params.saturation, false);
  if (params.hue_shift != 0.0) shift_hue(out, params.hue_shift);
  return out;
}

Image to_grayscale(const Image& img) {
  require_rgb(img, "to_grayscale");
  Image out = img;
  const std::size_t plane = img.height * img.width;
  for (std::size_t p = 0; p < plane; ++p) {
    const float l = clamp01(luminance(img.data[p], img.data[plane + p], img.data[2 * plane + p]));
    out.data[p] = out.data[plane + p] = out.data[2 * plane + p] = l;
  }
  return out;
}

Image apply_color_distortion(const Image& img, const DistortionDraw& draw) {
  require_rgb(img, "color_distortion");
  Image out = draw.jitter ? color_jitter(img, draw.params) : img;
  if (draw.grayscale) out = to_grayscale(out);
  for (float& v : out.data) v = clamp01(v);
  return out;
}

Image color_distortion(const Image& img, double s, Rng& rng) {
  return apply_color_distortion(img, sample_color_distortion(s, rng));
}

// --- blur -------------------------------------------------------------------------

std::size_t blur_kernel_size(std::size_t image_size) {
  auto k = static_cast<std::size_t>(std::lround(static_cast<double>(image_size) / 10.0));
  if (k % 2 == 0) ++k;
  return std::max<std::size_t>(k, 3);
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  if (size % 2 == 0 || !(sigma > 0.0)) throw ConfigError("gaussian_kernel: size must be odd and sigma positive");
  const double radius = static_cast<double>(size / 2);
  std::vector<double> k(size);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - radius;
    total += (k[i] = std::exp(-x * x / (2.0 * sigma * sigma)));
  }
  for (double& v : k) v /= total;
  return k;
}

BlurDraw sample_blur(Rng& rng) {
  BlurDraw d;
  d.apply = rng.bernoulli(kBlurProbability);
  d.sigma = rng.uniform(kBlurSigmaMin, kBlurSigmaMax);
  return d;
}

Image blur(const Image& img, std::size_t kernel_size, double sigma) {
  const auto kernel = gaussian_kernel(kernel_size, sigma);
  const long radius = static_cast<long>(kernel_size / 2);
  if (radius >= static_cast<long>(img.height) || radius >= static_cast<long>(img.width))
    throw ContractError("blur: kernel larger than the image");
  auto reflect = [](long i, long n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  Image tmp(img.channels, img.height, img.width);
  Image out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double s = 0.0;
        for (long t = -radius; t <= radius; ++t)
          s += kernel[static_cast<std::size_t>(t + radius)] * img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(reflect(x + t, w)));
        tmp.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(s);
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double s = 0.0;
        for (long t = -radius; t <= radius; ++t)
          s += kernel[static_cast<std::size_t>(t + radius)] * tmp.at(c, static_cast<std::size_t>(reflect(y + t, h)), static_cast<std::size_t>(x));
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(s);
      }
  }
  return out;
}

Image apply_blur(const Image& img, const BlurDraw& draw, std::size_t image_size) {
  if (!draw.apply) return img;
  return blur(img, blur_kernel_size(image_size), draw.sigma);
}

Image gaussian_blur(const Image& img, std::size_t image_size, Rng& rng) {
  return apply_blur(img, sample_blur(rng), image_size);
}

// --- normalize ----------------------------------------------------------------------

namespace {

double channel_value(std::span<const double> v, std::size_t c) { return v.size() == 1 ? v[0] : v[c]; }

void check_stats(const Image& img, std::span<const double> mean, std::span<const double> std) {
  const auto ok = [&](std::size_t n) { return n == 1 || n == img.channels; };
  if (!ok(mean.size()) || !ok(std.size()))
    throw ConfigError("normalize: mean/std length does not match " + std::to_string(img.channels) + " channels");
  for (double s : std)
    if (!(s > 0.0)) throw ConfigError("normalize: std must be positive");
}

}  // namespace

Image normalize(const Image& img, std::span<const double> mean, std::span<const double> std) {
  check_stats(img, mean, std);
  Image out = img;
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double m = channel_value(mean, c), s = channel_value(std, c);
    for (std::size_t p = 0; p < plane; ++p) out.data[c * plane + p] = static_cast<float>((img.data[c * plane + p] - m) / s);
  }
  return out;
}

Image denormalize(const Image& img, std::span<const double> mean, std::span<const double> std) {
  check_stats(img, mean, std);
  Image out = img;
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double m = channel_value(mean, c), s = channel_value(std, c);
    for (std::size_t p = 0; p < plane; ++p) out.data[c * plane + p] = static_cast<float>(img.data[c * plane + p] * s + m);
  }
  return out;
}

// --- pipeline -------------------------------------------------------------------------

namespace {
enum TransformId : std::uint64_t { kCrop = 1, kDistort = 2, kBlur = 3 };
}

Rng view_rng(const AugmentConfig& cfg, std::uint64_t epoch, std::uint64_t batch, std::uint64_t image,
             std::uint64_t view) {
  return Rng({cfg.rng_seed, epoch, batch, image, view});
}

Image augment_view(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  Image x = to_rgb(img);
  Rng crop_rng = rng.split(kCrop), distort_rng = rng.split(kDistort), blur_rng = rng.split(kBlur);
  switch (cfg.transform_pair) {
    case TransformPair::kCropDistort:
      x = random_resized_crop(x, cfg.image_size, crop_rng);
      x = color_distortion(x, cfg.jitter_strength, distort_rng);
      break;
    case TransformPair::kCropBlur:
      x = random_resized_crop(x, cfg.image_size, crop_rng);
      x = gaussian_blur(x, cfg.image_size, blur_rng);
      break;
    case TransformPair::kDistortBlur:
      x = resize(x, cfg.image_size, cfg.image_size);
      x = color_distortion(x, cfg.jitter_strength, distort_rng);
      x = gaussian_blur(x, cfg.image_size, blur_rng);
      break;
  }
  return normalize(x, cfg.image_mean, cfg.image_std);
}

Image prepare_eval(const Image& img, const AugmentConfig& cfg) {
  return normalize(resize(to_rgb(img), cfg.image_size, cfg.image_size), cfg.image_mean, cfg.image_std);
}

Tensor augment_batch(std::span<const Image> batch, const AugmentConfig& cfg, std::span<Rng> streams) {
  if (batch.empty()) throw ContractError("augment_batch: empty batch");
  if (streams.size() != batch.size()) throw ContractError("augment_batch: one rng stream per image required");
  std::vector<Image> views;
  views.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) views.push_back(augment_view(batch[i], cfg, streams[i]));
  return stack_images(views);
}

AugmentedPair make_pair(std::span<const Image> batch, const AugmentConfig& cfg, std::uint64_t epoch,
                        std::uint64_t batch_index) {
  if (batch.empty()) throw ContractError("make_pair: empty batch");
  AugmentedPair out;
  for (std::uint64_t view = 0; view < 2; ++view) {
    std::vector<Rng> streams;
    streams.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) streams.push_back(view_rng(cfg, epoch, batch_index, i, view));
    (view == 0 ? out.query : out.key) = augment_batch(batch, cfg, streams);
  }
  return out;
}

}  // namespace episodica::augment
