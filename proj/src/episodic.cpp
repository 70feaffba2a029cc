#include "episodica/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "episodica/error.hpp"

namespace episodica::episodic {

void TaskSpec::validate() const {
  if (n_way == 0 || k_shot == 0 || n_query == 0 || n_tasks == 0)
    throw ConfigError("task spec: n_way, k_shot, n_query and n_tasks must all be positive");
}

FeaturePool::FeaturePool(Tensor features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (features_.rank() != 2) throw DimensionError("feature pool: features must be [n x d]");
  if (features_.dim(0) != labels_.size())
    throw DataError("feature pool: " + std::to_string(features_.dim(0)) + " feature rows but " +
                    std::to_string(labels_.size()) + " labels");
  for (std::size_t i = 0; i < labels_.size(); ++i) members_[labels_[i]].push_back(i);
  for (const auto& [c, rows] : members_) classes_.push_back(c);
}

Episode Episode::from_parts(Tensor key_features, std::vector<int> key_labels, Tensor query_features,
                            std::vector<int> query_labels) {
  if (key_features.rank() != 2 || query_features.rank() != 2 || key_features.dim(1) != query_features.dim(1))
    throw DimensionError("episode: key and query features must be [n x d] with equal d");
  if (key_labels.size() != key_features.dim(0) || query_labels.size() != query_features.dim(0))
    throw ContractError("episode: one label per feature row required");
  Episode e;
  e.keys_ = std::move(key_features);
  e.queries_ = std::move(query_features);
  e.key_labels_ = std::move(key_labels);
  e.query_labels_ = std::move(query_labels);
  return e;
}

namespace {

// first `k` entries of `items` become a uniform sample without replacement
template <class T>
void partial_shuffle(std::vector<T>& items, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
  const std::size_t d = src.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(src.row(rows[i]).begin(), d, out.row(i).begin());
  return out;
}

}  // namespace

Episode sample_task(const FeaturePool& pool, const TaskSpec& spec, Rng& rng) {
  spec.validate();
  const auto& classes = pool.classes();
  if (classes.size() < spec.n_way)
    throw SamplingError("pool has " + std::to_string(classes.size()) + " classes, need " + std::to_string(spec.n_way));
  const std::size_t per_class = spec.k_shot + spec.n_query;
  for (int c : classes)
    if (pool.members(c).size() < per_class)
      throw SamplingError("class " + std::to_string(c) + " has " + std::to_string(pool.members(c).size()) +
                          " items, need " + std::to_string(per_class) + " (K+Q)");

  std::vector<int> chosen(classes);
  partial_shuffle(chosen, spec.n_way, rng);
  chosen.resize(spec.n_way);

  Episode e;
  for (int c : chosen) {
    std::vector<std::size_t> rows = pool.members(c);
    partial_shuffle(rows, per_class, rng);
    for (std::size_t i = 0; i < spec.k_shot; ++i) {
      e.key_rows_.push_back(rows[i]);
      e.key_labels_.push_back(c);
    }
    for (std::size_t i = spec.k_shot; i < per_class; ++i) {
      e.query_rows_.push_back(rows[i]);
      e.query_labels_.push_back(c);
    }
  }
  e.keys_ = gather_rows(pool.features(), e.key_rows_);
  e.queries_ = gather_rows(pool.features(), e.query_rows_);
  return e;
}

namespace {

void check_features(const Tensor& queries, const Tensor& keys, const char* op) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.dim(1) != keys.dim(1))
    throw DimensionError(std::string(op) + ": query features " + shape_to_string(queries.shape()) +
                         " and key features " + shape_to_string(keys.shape()) + " are incompatible");
}

std::vector<double> row_norms(const Tensor& x, const char* op, const char* what) {
  std::vector<double> norms(x.dim(0));
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    double ss = 0.0;
    for (float v : x.row(r)) ss += static_cast<double>(v) * v;
    norms[r] = std::sqrt(ss);
    if (!(norms[r] > 0.0)) throw NumericError(std::string(op) + ": " + what + " row " + std::to_string(r) + " has zero norm");
  }
  return norms;
}

}  // namespace

std::vector<std::size_t> classify_1nn(const Tensor& query_features, const Tensor& key_features) {
  check_features(query_features, key_features, "classify_1nn");
  const std::size_t nk = key_features.dim(0), d = key_features.dim(1);
  std::vector<std::size_t> out(query_features.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto q = query_features.row(i);
    double best = INFINITY;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < nk; ++j) {
      auto k = key_features.row(j);
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = static_cast<double>(q[c]) - k[c];
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

namespace {

// softmax over cosine similarities, kept in double
std::vector<double> attention_row(std::span<const float> q, double qnorm, const Tensor& keys,
                                  std::span<const double> knorms) {
  const std::size_t nk = keys.dim(0);
  std::vector<double> a(nk);
  double mx = -INFINITY;
  for (std::size_t j = 0; j < nk; ++j) {
    auto k = keys.row(j);
    double dot = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) dot += static_cast<double>(q[c]) * k[c];
    a[j] = dot / (qnorm * knorms[j]);
    mx = std::max(mx, a[j]);
  }
  double total = 0.0;
  for (double& v : a) total += (v = std::exp(v - mx));
  for (double& v : a) v /= total;
  return a;
}

}  // namespace

Tensor attention_weights(const Tensor& query_features, const Tensor& key_features) {
  check_features(query_features, key_features, "attention_weights");
  const auto qn = row_norms(query_features, "attention_weights", "query");
  const auto kn = row_norms(key_features, "attention_weights", "key");
  Tensor out({query_features.dim(0), key_features.dim(0)});
  for (std::size_t i = 0; i < qn.size(); ++i) {
    const auto a = attention_row(query_features.row(i), qn[i], key_features, kn);
    for (std::size_t j = 0; j < a.size(); ++j) out.at(i, j) = static_cast<float>(a[j]);
  }
  return out;
}

std::vector<std::size_t> classify_attn(const Tensor& query_features, const Tensor& key_features) {
  check_features(query_features, key_features, "classify_attn");
  const auto qn = row_norms(query_features, "classify_attn", "query");
  const auto kn = row_norms(key_features, "classify_attn", "key");
  std::vector<std::size_t> out(qn.size());
  for (std::size_t i = 0; i < qn.size(); ++i) {
    const auto a = attention_row(query_features.row(i), qn[i], key_features, kn);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < a.size(); ++j)
      if (a[j] > a[arg]) arg = j;
    out[i] = arg;
  }
  return out;
}

Centroids centroid_reduce(const Tensor& key_features, std::span<const int> key_labels) {
  if (key_features.rank() != 2 || key_labels.size() != key_features.dim(0))
    throw ContractError("centroid_reduce: one label per key row required");
  Centroids out;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < key_labels.size(); ++i) {
    auto it = std::find(out.class_order.begin(), out.class_order.end(), key_labels[i]);
    if (it == out.class_order.end()) {
      out.class_order.push_back(key_labels[i]);
      groups.emplace_back();
      it = out.class_order.end() - 1;
    }
    groups[static_cast<std::size_t>(it - out.class_order.begin())].push_back(i);
  }
  const std::size_t d = key_features.dim(1);
  out.features = Tensor({groups.size(), d});
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> acc(d, 0.0);
    for (std::size_t r : groups[g]) {
      auto row = key_features.row(r);
      for (std::size_t c = 0; c < d; ++c) acc[c] += row[c];
    }
    for (std::size_t c = 0; c < d; ++c)
      out.features.at(g, c) = static_cast<float>(acc[c] / static_cast<double>(groups[g].size()));
  }
  return out;
}

Episode with_centroid_keys(const Episode& episode) {
  Centroids c = centroid_reduce(episode.key_features(), LabelAccess::key_labels(episode));
  const auto ql = LabelAccess::query_labels(episode);
  return Episode::from_parts(std::move(c.features), std::move(c.class_order), episode.query_features(),
                             std::vector<int>(ql.begin(), ql.end()));
}

double score_task(const Episode& episode, std::span<const std::size_t> predictions) {
  const auto kl = LabelAccess::key_labels(episode);
  const auto ql = LabelAccess::query_labels(episode);
  if (predictions.size() != ql.size())
    throw ContractError("score_task: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(ql.size()) + " queries");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ql.size(); ++i) {
    if (predictions[i] >= kl.size())
      throw ContractError("score_task: prediction " + std::to_string(predictions[i]) + " out of range for " +
                          std::to_string(kl.size()) + " keys");
    if (kl[predictions[i]] == ql[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ql.size());
}

std::string to_string(Classifier c) {
  switch (c) {
    case Classifier::kNearest: return "1nn";
    case Classifier::kAttention: return "attn";
    case Classifier::kNearestCentroid: return "1nn-centroid";
    case Classifier::kAttentionCentroid: return "attn-centroid";
  }
  return "?";
}

Classifier parse_classifier(const std::string& text) {
  for (auto c : {Classifier::kNearest, Classifier::kAttention, Classifier::kNearestCentroid,
                 Classifier::kAttentionCentroid})
    if (text == to_string(c)) return c;
  throw ConfigError("unknown classifier '" + text + "' (expected 1nn, attn, 1nn-centroid or attn-centroid)");
}

double evaluate_task(const Episode& episode, Classifier classifier) {
  switch (classifier) {
    case Classifier::kNearest:
      return score_task(episode, classify_1nn(episode.query_features(), episode.key_features()));
    case Classifier::kAttention:
      return score_task(episode, classify_attn(episode.query_features(), episode.key_features()));
    case Classifier::kNearestCentroid:
    case Classifier::kAttentionCentroid: {
      const Episode reduced = with_centroid_keys(episode);
      return evaluate_task(reduced, classifier == Classifier::kNearestCentroid ? Classifier::kNearest
                                                                                : Classifier::kAttention);
    }
  }
  throw ContractError("evaluate_task: unknown classifier");
}

void aggregate(EvalReport& report) {
  const auto& acc = report.per_task_accuracy;
  const double n = static_cast<double>(acc.size());
  if (acc.empty()) throw ContractError("aggregate: no task accuracies");
  // shifted by the first value: exact for constant inputs, stable otherwise
  const double shift = acc.front();
  double s = 0.0;
  for (double a : acc) s += a - shift;
  const double mean_shifted = s / n;
  report.mean = shift + mean_shifted;
  double ss = 0.0;
  for (double a : acc) ss += (a - shift - mean_shifted) * (a - shift - mean_shifted);
  const double stddev = acc.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  report.ci95_halfwidth = 1.96 * stddev / std::sqrt(n);
}

nlohmann::ordered_json EvalReport::to_json(bool include_per_task) const {
  nlohmann::ordered_json j;
  j["mean"] = mean;
  j["ci95"] = ci95_halfwidth;
  j["n_tasks"] = per_task_accuracy.size();
  j["spec"] = {{"n_way", spec.n_way}, {"k_shot", spec.k_shot}, {"n_query", spec.n_query}, {"n_tasks", spec.n_tasks}};
  j["seed"] = seed;
  j["classifier"] = to_string(classifier);
  j["ci95_formula"] = kCiFormula;
  if (include_per_task) j["per_task_accuracy"] = per_task_accuracy;
  return j;
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << spec.n_way << "-way " << spec.k_shot << "-shot " << to_string(classifier) << ": " << 100.0 * mean << " +- "
     << 100.0 * ci95_halfwidth << " % over " << per_task_accuracy.size() << " tasks (seed " << seed << ")";
  return os.str();
}

EvalReport run_protocol(const FeaturePool& pool, const TaskSpec& spec, const ProtocolOptions& options) {
  spec.validate();
  const FeaturePool normalized = options.l2_normalize
                                     ? FeaturePool(l2_normalize(pool.features()),
                                                   std::vector<int>(pool.labels().begin(), pool.labels().end()))
                                     : pool;
  EvalReport report;
  report.spec = spec;
  report.classifier = options.classifier;
  report.seed = options.seed;
  report.per_task_accuracy.assign(spec.n_tasks, 0.0);

  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      try {
        Rng rng({options.seed, static_cast<std::uint64_t>(t)});
        const Episode e = sample_task(normalized, spec, rng);
        report.per_task_accuracy[t] = evaluate_task(e, options.classifier);
      } catch (const SamplingError& err) {
        throw SamplingError("task " + std::to_string(t) + ": " + err.what());
      } catch (const NumericError& err) {
        throw NumericError("task " + std::to_string(t) + ": " + err.what());
      } catch (const ContractError& err) {
        throw ContractError("task " + std::to_string(t) + ": " + err.what());
      }
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(options.workers, spec.n_tasks));
  if (workers == 1) {
    run_range(0, spec.n_tasks);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool_threads;
      const std::size_t chunk = (spec.n_tasks + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk, end = std::min(spec.n_tasks, begin + chunk);
        pool_threads.emplace_back([&, w, begin, end] {
          try {
            run_range(begin, end);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  aggregate(report);
  return report;
}

}  // namespace episodica::episodic
