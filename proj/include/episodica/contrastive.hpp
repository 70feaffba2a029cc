#pragma once

#include <span>
#include <string>

#include "episodica/autodiff.hpp"
#include "episodica/tensor.hpp"

namespace episodica::contrastive {

enum class Similarity { kCosine, kDot };

std::string to_string(Similarity s);
Similarity parse_similarity(const std::string& text);

struct LossConfig {
  double temperature = 0.5;
  Similarity similarity = Similarity::kCosine;

  void validate() const;  // temperature > 0
};

inline constexpr double kSimclrTemperature = 0.5;
inline constexpr double kMocoTemperature = 0.2;

/// Contrastive loss of one anchor:
///   -log( e^{s+/t} / (e^{s+/t} + sum_j e^{s-_j/t}) ), evaluated with max subtraction.
double anchor_loss(double positive_sim, std::span<const double> negative_sims, double temperature);

/// Partner row of view i when the batch is [view A of 0..N-1 ; view B of 0..N-1].
constexpr std::size_t partner(std::size_t i, std::size_t n_pairs) { return (i + n_pairs) % (2 * n_pairs); }

/// In-batch NT-Xent over 2N rows: every row is an anchor, its partner the
/// positive and the remaining 2N-2 rows negatives. Returns the mean over anchors.
ad::Var ntxent_simclr(ad::Var reps, const LossConfig& cfg);

// Fixed-capacity FIFO of key embeddings.
class KeyQueue {
 public:
  KeyQueue(std::size_t capacity, std::size_t dim);

  /// Appends rows of keys [n x dim], evicting the oldest entries once full.
  void push(const Tensor& keys);
  /// Entries oldest first, [size x dim]. Throws ContractError when empty.
  Tensor entries() const;

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return fill_; }
  bool empty() const noexcept { return fill_ == 0; }
  bool full() const noexcept { return fill_ == capacity_; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::vector<float> ring_;
  std::size_t head_ = 0;  // slot of the oldest entry
  std::size_t fill_ = 0;
};

/// Dictionary-lookup loss: anchor q_i, positive k+_i, negatives all queue entries.
/// Keys and queue are treated as constants; gradients reach only `queries`.
ad::Var moco_loss(ad::Var queries, ad::Var positive_keys, const KeyQueue& queue, const LossConfig& cfg);

}  // namespace episodica::contrastive
