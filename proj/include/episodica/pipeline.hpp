#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "episodica/config.hpp"
#include "episodica/contrastive.hpp"
#include "episodica/encoder.hpp"
#include "episodica/image.hpp"

// Pre-training loop, checkpoints, and embedding extraction.
namespace episodica::pipeline {

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t steps = 0;  // optimizer steps taken (moco warm-up batches excluded)
  double lr = 0.0;
};

struct Checkpoint {
  config::RunConfig config;
  model::EncoderModel encoder;                      // f
  std::optional<model::EncoderModel> key_encoder;   // g, moco only
  std::optional<contrastive::KeyQueue> queue;       // moco only
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs cfg.epochs of contrastive pre-training on `images` (unlabeled).
/// Minibatches come from a per-epoch shuffle; a trailing batch smaller than 2 is
/// dropped. For moco, a batch that meets an empty queue only fills it.
/// Errors are re-thrown with epoch/batch context, keeping their category.
Checkpoint pretrain(const config::RunConfig& cfg, std::span<const Image> images, const EpochCallback& on_epoch = {});

/// Layout: config.txt, history.csv, encoder/, and for moco key_encoder/ and queue.eten.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Normalized (not augmented) images through the encoder, one row per image.
/// Throws ConfigError when image dims differ from the encoder input.
Tensor embed_images(const model::EncoderModel& encoder, const augment::AugmentConfig& augment,
                    std::span<const Image> images, model::Stage stage = model::Stage::kBackbone);

/// Label CSV: header "index,class_id", row i labels embedding row i.
std::string labels_to_csv(std::span<const int> labels);
std::vector<int> parse_labels_csv(const std::string& text);
void save_labels(std::span<const int> labels, const std::filesystem::path& path);
std::vector<int> load_labels(const std::filesystem::path& path);

}  // namespace episodica::pipeline
