#include "episodica/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "episodica/augment.hpp"
#include "episodica/error.hpp"
#include "episodica/eten.hpp"
#include "episodica/optim.hpp"

namespace episodica::pipeline {

namespace {

constexpr std::uint64_t kShuffleTag = 0x7368756666ULL;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng({seed, epoch, kShuffleTag});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

// Same category, added context.
[[noreturn]] void rethrow_with(const Error& e, const std::string& where) {
  const std::string what = where + ": " + e.what();
  switch (e.category()) {
    case ErrorCategory::kConfig: throw ConfigError(what);
    case ErrorCategory::kData: throw DataError(what);
    case ErrorCategory::kNumeric: throw NumericError(what);
    case ErrorCategory::kContract: throw ContractError(what);
  }
  throw ContractError(what);
}

model::ParamMap gradients_of(const ad::Gradients& grads, const model::BoundParams& params) {
  model::ParamMap out;
  for (const auto& [name, var] : params) out.emplace(name, grads.of(var));
  return out;
}

void check_finite(const model::EncoderModel& m) {
  for (const auto& [name, t] : m.params)
    if (!t.all_finite()) throw NumericError("parameter " + name + " became non-finite");
}

double simclr_step(model::EncoderModel& f, optim::OptimState& opt, const augment::AugmentedPair& pair,
                   const contrastive::LossConfig& loss_cfg) {
  ad::Tape tape;
  const auto params = model::bind_params(tape, f, true);
  const ad::Var x = tape.constant(concat_rows(pair.query, pair.key));
  const ad::Var z = model::forward(f, params, x, model::Stage::kProjection);
  const ad::Var loss = contrastive::ntxent_simclr(z, loss_cfg);
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw NumericError("loss is not finite");
  optim::sgd_step(f, gradients_of(tape.backward(loss), params), opt);
  return value;
}

}  // namespace

Checkpoint pretrain(const config::RunConfig& cfg, std::span<const Image> images, const EpochCallback& on_epoch) {
  cfg.validate();
  if (images.size() < 2) throw DataError("pretrain: need at least 2 images, got " + std::to_string(images.size()));
  const model::EncoderArch arch = cfg.arch();
  Checkpoint ck{cfg, model::init_encoder(arch, cfg.seed), std::nullopt, std::nullopt, {}};
  const bool moco = cfg.variant == config::Variant::kMoco;
  if (moco) {
    ck.key_encoder = ck.encoder;
    ck.queue.emplace(cfg.queue_capacity, ck.encoder.projection_dim());
  }
  optim::OptimState opt = optim::make_state(ck.encoder, cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay,
                                            cfg.optim.nesterov);
  const std::size_t n = images.size();
  std::size_t batches = n / cfg.batch_size;
  if (n % cfg.batch_size >= 2) ++batches;
  const std::size_t total_steps = cfg.epochs * batches;
  augment::AugmentConfig aug = cfg.augment;
  aug.rng_seed = cfg.seed;

  std::vector<Image> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    EpochLog log{epoch, 0.0, 0, cfg.optim.lr};
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size, end = std::min(n, begin + cfg.batch_size);
      try {
        if (cfg.optim.schedule == config::LrSchedule::kCosine)
          opt.lr = optim::cosine_lr(cfg.optim.lr, epoch * batches + b, total_steps);
        if (b == 0) log.lr = opt.lr;
        batch.clear();
        for (std::size_t i = begin; i < end; ++i) batch.push_back(images[order[i]]);
        const augment::AugmentedPair pair = augment::make_pair(batch, aug, epoch, b);
        if (!moco) {
          loss_sum += simclr_step(ck.encoder, opt, pair, cfg.loss);
          ++log.steps;
        } else {
          const Tensor k = model::forward(*ck.key_encoder, pair.key, model::Stage::kProjection);
          if (!ck.queue->empty()) {
            ad::Tape tape;
            const auto params = model::bind_params(tape, ck.encoder, true);
            const ad::Var q = model::forward(ck.encoder, params, tape.constant(pair.query), model::Stage::kProjection);
            const ad::Var loss = contrastive::moco_loss(q, tape.constant(k), *ck.queue, cfg.loss);
            const double value = loss.value().item();
            if (!std::isfinite(value)) throw NumericError("loss is not finite");
            optim::sgd_step(ck.encoder, gradients_of(tape.backward(loss), params), opt);
            optim::momentum_update(*ck.key_encoder, ck.encoder, cfg.key_momentum);
            loss_sum += value;
            ++log.steps;
          }
          ck.queue->push(k);
        }
        check_finite(ck.encoder);
      } catch (const Error& e) {
        rethrow_with(e, "pretrain epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
    }
    log.mean_loss = log.steps ? loss_sum / static_cast<double>(log.steps) : 0.0;
    ck.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return ck;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.txt", config::serialize(ckpt.config));
  std::string hist = "epoch,mean_loss,steps,lr\n";
  for (const auto& h : ckpt.history)
    hist += std::to_string(h.epoch) + "," + fmt(h.mean_loss) + "," + std::to_string(h.steps) + "," + fmt(h.lr) + "\n";
  write_text(dir / "history.csv", hist);
  model::save_encoder(ckpt.encoder, dir / "encoder");
  if (ckpt.key_encoder) model::save_encoder(*ckpt.key_encoder, dir / "key_encoder");
  if (ckpt.queue && !ckpt.queue->empty()) eten::save(ckpt.queue->entries(), dir / "queue.eten");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory not found: " + dir.string());
  Checkpoint ck{config::parse_config(read_text(dir / "config.txt")), model::load_encoder(dir / "encoder"),
                std::nullopt, std::nullopt, {}};
  if (std::filesystem::exists(dir / "history.csv")) {
    std::istringstream is(read_text(dir / "history.csv"));
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      EpochLog h;
      std::istringstream row(line);
      std::string a, b, c, d;
      std::getline(row, a, ',');
      std::getline(row, b, ',');
      std::getline(row, c, ',');
      std::getline(row, d, ',');
      auto num = [&](const std::string& s, auto& out) {
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc() || end != s.data() + s.size()) throw DataError("history.csv: bad row '" + line + "'");
      };
      num(a, h.epoch);
      num(b, h.mean_loss);
      num(c, h.steps);
      num(d, h.lr);
      ck.history.push_back(h);
    }
  }
  if (ck.config.variant == config::Variant::kMoco) {
    ck.key_encoder = model::load_encoder(dir / "key_encoder");
    if (!model::congruent(ck.key_encoder->params, ck.encoder.params) || ck.key_encoder->arch != ck.encoder.arch)
      throw DataError("checkpoint: key encoder does not match the query encoder");
    ck.queue.emplace(ck.config.queue_capacity, ck.encoder.projection_dim());
    if (std::filesystem::exists(dir / "queue.eten")) {
      const Tensor entries = eten::load(dir / "queue.eten");
      if (entries.rank() != 2 || entries.dim(1) != ck.queue->dim() || entries.dim(0) > ck.queue->capacity())
        throw DataError("checkpoint: queue.eten has shape " + shape_to_string(entries.shape()));
      ck.queue->push(entries);
    }
  }
  return ck;
}

Tensor embed_images(const model::EncoderModel& encoder, const augment::AugmentConfig& augment,
                    std::span<const Image> images, model::Stage stage) {
  if (images.empty()) throw DataError("embed: no images");
  const Shape& in = encoder.arch.input;
  std::vector<Image> prepared;
  prepared.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image img = to_rgb(images[i]);
    if (in.size() != 3 || in[0] != img.channels || in[1] != img.height || in[2] != img.width)
      throw ConfigError("embed: image " + std::to_string(i) + " is " + std::to_string(img.channels) + "x" +
                        std::to_string(img.height) + "x" + std::to_string(img.width) + " but the encoder expects " +
                        shape_to_string(in));
    prepared.push_back(augment::normalize(img, augment.image_mean, augment.image_std));
  }
  return model::forward(encoder, stack_images(prepared), stage);
}

std::string labels_to_csv(std::span<const int> labels) {
  std::string out = "index,class_id\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + std::to_string(labels[i]) + "\n";
  return out;
}

std::vector<int> parse_labels_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || (line != "index,class_id" && line != "index,class_id\r"))
    throw DataError("label csv: expected header 'index,class_id'");
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t index = 0;
    int label = 0;
    const char* s = line.data();
    auto r1 = std::from_chars(s, s + (comma == std::string::npos ? 0 : comma), index);
    auto r2 = std::from_chars(s + comma + 1, s + line.size(), label);
    if (comma == std::string::npos || r1.ec != std::errc() || r1.ptr != s + comma || r2.ec != std::errc() ||
        r2.ptr != s + line.size())
      throw DataError("label csv line " + std::to_string(lineno) + ": malformed row '" + line + "'");
    if (index != labels.size())
      throw DataError("label csv line " + std::to_string(lineno) + ": expected index " +
                      std::to_string(labels.size()) + ", got " + std::to_string(index));
    labels.push_back(label);
  }
  return labels;
}

void save_labels(std::span<const int> labels, const std::filesystem::path& path) {
  write_text(path, labels_to_csv(labels));
}

std::vector<int> load_labels(const std::filesystem::path& path) { return parse_labels_csv(read_text(path)); }

}  // namespace episodica::pipeline
