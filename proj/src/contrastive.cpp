#include "episodica/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "episodica/error.hpp"

namespace episodica::contrastive {

std::string to_string(Similarity s) { return s == Similarity::kCosine ? "cosine" : "dot"; }

Similarity parse_similarity(const std::string& text) {
  if (text == "cosine") return Similarity::kCosine;
  if (text == "dot") return Similarity::kDot;
  throw ConfigError("unknown similarity '" + text + "' (expected cosine or dot)");
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("temperature must be positive, got " + std::to_string(temperature));
}

double anchor_loss(double positive_sim, std::span<const double> negative_sims, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("anchor_loss: temperature must be positive");
  double mx = positive_sim / temperature;
  for (double s : negative_sims) mx = std::max(mx, s / temperature);
  double total = std::exp(positive_sim / temperature - mx);
  for (double s : negative_sims) total += std::exp(s / temperature - mx);
  return mx + std::log(total) - positive_sim / temperature;
}

ad::Var ntxent_simclr(ad::Var reps, const LossConfig& cfg) {
  cfg.validate();
  const Shape& s = reps.shape();
  if (s.size() != 2) throw DimensionError("ntxent_simclr: representations must be [2N x d], got " + shape_to_string(s));
  if (s[0] % 2 != 0)
    throw ContractError("ntxent_simclr: " + std::to_string(s[0]) + " rows cannot be split into two views");
  const std::size_t rows = s[0], pairs = rows / 2;
  ad::Var z = cfg.similarity == Similarity::kCosine ? ad::l2_normalize(reps) : reps;
  ad::Var logits = ad::scale(ad::matmul(z, ad::transpose(z)), static_cast<float>(1.0 / cfg.temperature));
  std::vector<std::size_t> positive(rows);
  std::vector<std::uint8_t> include(rows * rows, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    positive[i] = partner(i, pairs);
    include[i * rows + i] = 0;  // an anchor is never its own negative
  }
  return ad::mean(ad::contrastive_ce(logits, positive, include));
}

KeyQueue::KeyQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0 || dim == 0) throw ConfigError("KeyQueue: capacity and dim must be positive");
  ring_.assign(capacity * dim, 0.0f);
}

void KeyQueue::push(const Tensor& keys) {
  if (keys.rank() != 2 || keys.dim(1) != dim_)
    throw ContractError("KeyQueue::push: keys " + shape_to_string(keys.shape()) + " do not have dimension " +
                        std::to_string(dim_));
  for (std::size_t r = 0; r < keys.dim(0); ++r) {
    const std::size_t slot = (head_ + fill_) % capacity_;
    auto src = keys.row(r);
    std::copy(src.begin(), src.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
    if (fill_ < capacity_) {
      ++fill_;
    } else {
      head_ = (head_ + 1) % capacity_;  // overwrote the oldest
    }
  }
}

Tensor KeyQueue::entries() const {
  if (fill_ == 0) throw ContractError("KeyQueue::entries: queue is empty");
  Tensor out({fill_, dim_});
  for (std::size_t i = 0; i < fill_; ++i) {
    const std::size_t slot = (head_ + i) % capacity_;
    std::copy_n(ring_.begin() + static_cast<std::ptrdiff_t>(slot * dim_), dim_, out.row(i).begin());
  }
  return out;
}

ad::Var moco_loss(ad::Var queries, ad::Var positive_keys, const KeyQueue& queue, const LossConfig& cfg) {
  cfg.validate();
  if (queue.empty()) throw ContractError("moco_loss: the key queue is empty");
  const Shape& qs = queries.shape();
  if (qs.size() != 2 || positive_keys.shape() != qs || qs[1] != queue.dim())
    throw DimensionError("moco_loss: queries " + shape_to_string(qs) + ", keys " +
                         shape_to_string(positive_keys.shape()) + ", queue dim " + std::to_string(queue.dim()));
  const std::size_t n = qs[0], z = queue.size();
  ad::Tape& tape = *queries.tape;
  // dictionary = [k+ of the batch ; queue], held constant
  Tensor dict = concat_rows(positive_keys.value(), queue.entries());
  ad::Var q = queries;
  if (cfg.similarity == Similarity::kCosine) {
    q = ad::l2_normalize(q);
    dict = l2_normalize(dict);
  }
  ad::Var keys_t = tape.constant(transpose(dict));
  ad::Var logits = ad::scale(ad::matmul(q, keys_t), static_cast<float>(1.0 / cfg.temperature));
  const std::size_t m = n + z;
  std::vector<std::size_t> positive(n);
  std::vector<std::uint8_t> include(n * m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    positive[i] = i;
    include[i * m + i] = 1;
    std::fill_n(include.begin() + static_cast<std::ptrdiff_t>(i * m + n), z, std::uint8_t{1});
  }
  return ad::mean(ad::contrastive_ce(logits, positive, include));
}

}  // namespace episodica::contrastive
