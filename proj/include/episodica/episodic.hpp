#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "episodica/rng.hpp"
#include "episodica/tensor.hpp"

// N-way K-shot episodic evaluation with label-free classifiers. Classifiers
// see feature matrices only and answer with key indices; labels live inside
// Episode and are read solely by the scorer and the centroid ablation.
namespace episodica::episodic {

struct TaskSpec {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t n_query = 15;
  std::size_t n_tasks = 10000;

  void validate() const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

// Feature rows with their class ids.
class FeaturePool {
 public:
  FeaturePool(Tensor features, std::vector<int> labels);

  const Tensor& features() const noexcept { return features_; }
  std::span<const int> labels() const noexcept { return labels_; }
  /// Sorted distinct class ids.
  const std::vector<int>& classes() const noexcept { return classes_; }
  const std::vector<std::size_t>& members(int class_id) const { return members_.at(class_id); }

 private:
  Tensor features_;
  std::vector<int> labels_;
  std::vector<int> classes_;
  std::map<int, std::vector<std::size_t>> members_;
};

class Episode {
 public:
  /// Assembles an episode from explicit parts (tests, ablations).
  static Episode from_parts(Tensor key_features, std::vector<int> key_labels, Tensor query_features,
                            std::vector<int> query_labels);

  const Tensor& key_features() const noexcept { return keys_; }
  const Tensor& query_features() const noexcept { return queries_; }
  std::size_t n_keys() const { return keys_.dim(0); }
  std::size_t n_queries() const { return queries_.dim(0); }
  /// Pool rows the keys/queries were drawn from (empty for from_parts episodes).
  const std::vector<std::size_t>& key_rows() const noexcept { return key_rows_; }
  const std::vector<std::size_t>& query_rows() const noexcept { return query_rows_; }

 private:
  friend struct LabelAccess;
  friend Episode sample_task(const FeaturePool&, const TaskSpec&, Rng&);
  Episode() = default;

  Tensor keys_;
  Tensor queries_;
  std::vector<int> key_labels_;
  std::vector<int> query_labels_;
  std::vector<std::size_t> key_rows_;
  std::vector<std::size_t> query_rows_;
};

// Explicit grant of label access: used by scoring and the centroid ablation.
struct LabelAccess {
  static std::span<const int> key_labels(const Episode& e) noexcept { return e.key_labels_; }
  static std::span<const int> query_labels(const Episode& e) noexcept { return e.query_labels_; }
};

/// N classes uniformly without replacement, then per class K keys and Q queries
/// without replacement. Keys and queries are grouped by class in draw order.
/// Throws SamplingError when the pool has fewer than N classes or any class
/// holds fewer than K+Q items.
Episode sample_task(const FeaturePool& pool, const TaskSpec& spec, Rng& rng);

/// argmin_j ||q - k_j||^2, lowest index on ties.
std::vector<std::size_t> classify_1nn(const Tensor& query_features, const Tensor& key_features);
/// Row-wise softmax over the cosine similarity to every key.
Tensor attention_weights(const Tensor& query_features, const Tensor& key_features);
/// argmax_j of attention_weights, lowest index on ties.
std::vector<std::size_t> classify_attn(const Tensor& query_features, const Tensor& key_features);

struct Centroids {
  Tensor features;              // [classes x d]
  std::vector<int> class_order;  // class id of each centroid row
};

/// Mean key feature per class, classes in order of first appearance.
Centroids centroid_reduce(const Tensor& key_features, std::span<const int> key_labels);
/// The same episode with each class's keys replaced by their centroid.
Episode with_centroid_keys(const Episode& episode);

/// Fraction of queries whose chosen key carries the query's label.
double score_task(const Episode& episode, std::span<const std::size_t> predictions);

enum class Classifier { kNearest, kAttention, kNearestCentroid, kAttentionCentroid };

std::string to_string(Classifier c);
/// "1nn", "attn", "1nn-centroid", "attn-centroid".
Classifier parse_classifier(const std::string& text);

/// Classifies every query of `episode` and scores the predictions.
double evaluate_task(const Episode& episode, Classifier classifier);

struct EvalReport {
  std::vector<double> per_task_accuracy;
  double mean = 0.0;
  double ci95_halfwidth = 0.0;
  TaskSpec spec;
  Classifier classifier = Classifier::kAttention;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json(bool include_per_task = false) const;
  /// One-line human summary.
  std::string summary() const;
};

inline constexpr const char* kCiFormula = "1.96 * stddev(per_task) / sqrt(n_tasks)";

/// Mean and 1.96 * s / sqrt(n) with the (n-1)-normalized standard deviation.
void aggregate(EvalReport& report);

struct ProtocolOptions {
  Classifier classifier = Classifier::kAttention;
  std::uint64_t seed = 0;
  bool l2_normalize = false;  // normalize features before sampling
  std::size_t workers = 1;
};

/// Samples spec.n_tasks episodes (task t drawing from Rng{seed, t}), classifies and aggregates.
EvalReport run_protocol(const FeaturePool& pool, const TaskSpec& spec, const ProtocolOptions& options);

}  // namespace episodica::episodic
