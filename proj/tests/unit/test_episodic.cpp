#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <type_traits>

#include "episodica/episodic.hpp"
#include "episodica/error.hpp"
#include "support/shadow.hpp"

using namespace episodica;
using namespace episodica::episodic;

namespace {

// `classes` classes of `per_class` rows each; row features are random, labels grouped.
FeaturePool random_pool(std::size_t classes, std::size_t per_class, std::size_t d, Rng& rng) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) labels.push_back(static_cast<int>(c));
  return FeaturePool(shadow::random_tensor({classes * per_class, d}, rng), std::move(labels));
}

// Features whose row index is recoverable from the first coordinate.
FeaturePool indexed_pool(std::size_t classes, std::size_t per_class) {
  const std::size_t n = classes * per_class;
  Tensor f({n, 2});
  std::vector<int> labels;
  for (std::size_t i = 0; i < n; ++i) {
    f.at(i, 0) = static_cast<float>(i);
    f.at(i, 1) = 1.0f;
    labels.push_back(static_cast<int>(i / per_class) * 10 + 3);
  }
  return FeaturePool(std::move(f), std::move(labels));
}

std::vector<std::size_t> brute_1nn(const Tensor& q, const Tensor& k) {
  const shadow::Mat qm = shadow::from_tensor(q), km = shadow::from_tensor(k);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < qm.rows; ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t j = 0; j < km.rows; ++j) {
      double dist = 0.0;
      for (std::size_t c = 0; c < qm.cols; ++c) dist += (qm(i, c) - km(j, c)) * (qm(i, c) - km(j, c));
      if (dist < best_d) best_d = dist, best = j;
    }
    out.push_back(best);
  }
  return out;
}

Tensor transform(const Tensor& x, const shadow::Mat& rot, double scale, std::span<const double> shift) {
  shadow::Mat m = shadow::matmul(shadow::from_tensor(x), rot);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = scale * m(r, c) + (shift.empty() ? 0.0 : shift[c]);
  return shadow::to_tensor(m);
}

}  // namespace

// Classifiers take feature matrices only: there is no parameter through which labels could flow.
static_assert(std::is_same_v<decltype(&classify_1nn), std::vector<std::size_t> (*)(const Tensor&, const Tensor&)>);
static_assert(std::is_same_v<decltype(&classify_attn), std::vector<std::size_t> (*)(const Tensor&, const Tensor&)>);
static_assert(std::is_same_v<decltype(&attention_weights), Tensor (*)(const Tensor&, const Tensor&)>);
template <class E>
concept ExposesLabels = requires(const E& e) { e.key_labels(); } || requires(const E& e) { e.query_labels(); } ||
                        requires(const E& e) { e.key_labels_; } || requires(const E& e) { e.query_labels_; };
static_assert(!ExposesLabels<Episode>);

TEST(Sampling, EpisodeSizes) {
  Rng rng(51);
  const FeaturePool pool = random_pool(10, 20, 4, rng);
  for (auto [k, q] : {std::pair<std::size_t, std::size_t>{1, 15}, {5, 15}}) {
    const TaskSpec spec{5, k, q, 1};
    Rng task_rng(52);
    const Episode e = sample_task(pool, spec, task_rng);
    EXPECT_EQ(e.n_keys(), 5 * k);
    EXPECT_EQ(e.n_queries(), 75u);
    EXPECT_EQ(LabelAccess::key_labels(e).size(), 5 * k);
    std::set<int> classes(LabelAccess::key_labels(e).begin(), LabelAccess::key_labels(e).end());
    EXPECT_EQ(classes.size(), 5u);
    for (int c : LabelAccess::query_labels(e)) EXPECT_TRUE(classes.contains(c));
  }
}

TEST(Sampling, KeysAndQueriesAreDisjointEvenAtTheBoundary) {
  const FeaturePool pool = indexed_pool(6, 4);
  const TaskSpec spec{6, 1, 3, 1};  // K + Q equals the class size
  for (std::uint64_t t = 0; t < 200; ++t) {
    Rng rng({53, t});
    const Episode e = sample_task(pool, spec, rng);
    std::set<std::size_t> rows(e.key_rows().begin(), e.key_rows().end());
    rows.insert(e.query_rows().begin(), e.query_rows().end());
    ASSERT_EQ(rows.size(), 24u);
    for (std::size_t i = 0; i < e.n_keys(); ++i)
      ASSERT_EQ(e.key_features().at(i, 0), static_cast<float>(e.key_rows()[i]));
    for (std::size_t i = 0; i < e.n_queries(); ++i) {
      ASSERT_EQ(e.query_features().at(i, 0), static_cast<float>(e.query_rows()[i]));
      ASSERT_EQ(LabelAccess::query_labels(e)[i], pool.labels()[e.query_rows()[i]]);
    }
  }
}

TEST(Sampling, ErrorsNameTheShortfall) {
  Rng rng(54);
  std::vector<int> labels = {0, 0, 0, 1, 1, 1, 7, 7};
  const FeaturePool pool(shadow::random_tensor({8, 2}, rng), labels);
  try {
    sample_task(pool, {3, 1, 2, 1}, rng);
    FAIL() << "expected SamplingError";
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("class 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_task(pool, {4, 1, 1, 1}, rng), SamplingError);
  EXPECT_THROW(sample_task(pool, {2, 0, 1, 1}, rng), ConfigError);
}

TEST(Sampling, Deterministic) {
  const FeaturePool pool = indexed_pool(8, 10);
  Rng a({55, 3}), b({55, 3});
  const Episode e1 = sample_task(pool, {5, 2, 3, 1}, a), e2 = sample_task(pool, {5, 2, 3, 1}, b);
  EXPECT_EQ(e1.key_rows(), e2.key_rows());
  EXPECT_EQ(e1.query_rows(), e2.query_rows());
}

TEST(Pool, LabelCountMismatchRejected) {
  EXPECT_THROW(FeaturePool(Tensor({3, 2}), {0, 1}), DataError);
  EXPECT_THROW(FeaturePool(Tensor({3}), {0, 1, 2}), DimensionError);
}

TEST(Classify, NearestNeighbourExample) {
  const Tensor keys = Tensor::from_rows({{0, 0}, {10, 0}, {0, 10}});
  const Tensor queries = Tensor::from_rows({{1, 1}, {9, 2}, {2, 7}, {6, 6}});
  // (6,6) is equidistant from keys 1 and 2: the lower index wins
  EXPECT_EQ(classify_1nn(queries, keys), (std::vector<std::size_t>{0, 1, 2, 1}));
}

TEST(Classify, AttentionExample) {
  // Cosine ignores magnitude: a far key in the same direction still wins.
  const Tensor keys = Tensor::from_rows({{100, 1}, {0, 1}});
  const Tensor queries = Tensor::from_rows({{1, 0}, {0.1f, 5}});
  EXPECT_EQ(classify_attn(queries, keys), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(classify_1nn(queries, keys), (std::vector<std::size_t>{1, 1}));
  const Tensor w = attention_weights(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{1, 0}, {0, 1}}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(w[0], e / (e + 1.0), 1e-6);
  EXPECT_NEAR(w[1], 1.0 / (e + 1.0), 1e-6);
}

TEST(Classify, AttentionRowsAreDistributions) {
  Rng rng(56);
  const Tensor w = attention_weights(shadow::random_tensor({6, 4}, rng), shadow::random_tensor({9, 4}, rng));
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) {
      EXPECT_GT(w.at(r, c), 0.0f);
      s += w.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Classify, NearestMatchesBruteForce) {
  Rng rng(57);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor k = shadow::random_tensor({25, 8}, rng), q = shadow::random_tensor({40, 8}, rng);
    ASSERT_EQ(classify_1nn(q, k), brute_1nn(q, k));
  }
}

TEST(Classify, NearestEqualsAttentionOnUnitNorm) {
  Rng rng(58);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor k = l2_normalize(shadow::random_tensor({25, 8}, rng));
    const Tensor q = l2_normalize(shadow::random_tensor({40, 8}, rng));
    ASSERT_EQ(classify_1nn(q, k), classify_attn(q, k));
  }
}

TEST(Classify, Invariances) {
  Rng rng(59);
  const std::size_t d = 6;
  const Tensor k = shadow::random_tensor({20, d}, rng), q = shadow::random_tensor({30, d}, rng);
  const shadow::Mat rot = shadow::random_orthogonal(d, rng);
  const std::vector<double> shift = {3, -1, 2, 0.5, -4, 1};
  // 1NN: rigid motions and uniform positive scaling
  EXPECT_EQ(classify_1nn(transform(q, rot, 2.5, shift), transform(k, rot, 2.5, shift)), classify_1nn(q, k));
  // Attn: rotations and per-row positive scaling
  EXPECT_EQ(classify_attn(transform(q, rot, 1.0, {}), transform(k, rot, 1.0, {})), classify_attn(q, k));
  Tensor scaled = k;
  for (std::size_t r = 0; r < scaled.dim(0); ++r)
    for (float& v : scaled.row(r)) v *= static_cast<float>(0.5 + r);
  EXPECT_EQ(classify_attn(q, scaled), classify_attn(q, k));
  // permuting keys permutes the answers
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  Tensor pk({20, d});
  for (std::size_t i = 0; i < 20; ++i) std::copy_n(k.row(perm[i]).begin(), d, pk.row(i).begin());
  const auto base = classify_1nn(q, k), permuted = classify_1nn(q, pk);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(perm[permuted[i]], base[i]);
}

TEST(Classify, Errors) {
  EXPECT_THROW(classify_1nn(Tensor({2, 3}), Tensor({2, 4})), DimensionError);
  EXPECT_THROW(classify_attn(Tensor::from_rows({{0, 0}}), Tensor::from_rows({{1, 0}})), NumericError);
  EXPECT_THROW(attention_weights(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0, 0}})), NumericError);
}

TEST(Centroids, MeansInFirstAppearanceOrder) {
  const Tensor keys = Tensor::from_rows({{1, 0}, {5, 5}, {3, 2}, {7, 1}});
  const std::vector<int> labels = {4, 9, 4, 9};
  const Centroids c = centroid_reduce(keys, labels);
  EXPECT_EQ(c.class_order, (std::vector<int>{4, 9}));
  EXPECT_EQ(c.features, Tensor::from_rows({{2, 1}, {6, 3}}));
}

TEST(Centroids, OneShotIsIdentity) {
  Rng rng(60);
  const FeaturePool pool = random_pool(6, 10, 5, rng);
  const Episode e = sample_task(pool, {5, 1, 4, 1}, rng);
  const Episode r = with_centroid_keys(e);
  EXPECT_EQ(r.key_features(), e.key_features());
  EXPECT_DOUBLE_EQ(evaluate_task(e, Classifier::kNearest), evaluate_task(e, Classifier::kNearestCentroid));
}

TEST(Scoring, Cases) {
  const Episode e = Episode::from_parts(Tensor({3, 1}), {0, 1, 2}, Tensor({4, 1}), {0, 1, 2, 2});
  const std::size_t all[] = {0, 1, 2, 2}, none[] = {1, 2, 0, 1}, half[] = {0, 0, 2, 0};
  EXPECT_DOUBLE_EQ(score_task(e, all), 1.0);
  EXPECT_DOUBLE_EQ(score_task(e, none), 0.0);
  EXPECT_DOUBLE_EQ(score_task(e, half), 0.5);
  const std::size_t short_list[] = {0};
  EXPECT_THROW(score_task(e, short_list), ContractError);
  const std::size_t out_of_range[] = {0, 1, 2, 3};
  EXPECT_THROW(score_task(e, out_of_range), ContractError);
}

TEST(Scoring, MultiShotKeysShareLabels) {
  // two keys per class: either key of the right class counts
  const Episode e = Episode::from_parts(Tensor({4, 1}), {0, 0, 1, 1}, Tensor({2, 1}), {0, 1});
  const std::size_t p[] = {1, 2};
  EXPECT_DOUBLE_EQ(score_task(e, p), 1.0);
}

TEST(Scoring, UniformRandomPredictionsScoreOneOverN) {
  Rng rng(61);
  const FeaturePool pool = random_pool(10, 20, 3, rng);
  const TaskSpec spec{5, 1, 15, 1};
  double total = 0.0;
  const int tasks = 4000;
  for (int t = 0; t < tasks; ++t) {
    const Episode e = sample_task(pool, spec, rng);
    std::vector<std::size_t> p(e.n_queries());
    for (auto& x : p) x = rng.below(e.n_keys());
    total += score_task(e, p);
  }
  EXPECT_NEAR(total / tasks, 0.2, 0.005);
}

TEST(Aggregate, MeanAndInterval) {
  EvalReport r;
  r.per_task_accuracy = {0.5, 0.5, 0.5};
  aggregate(r);
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
  EXPECT_DOUBLE_EQ(r.ci95_halfwidth, 0.0);
  r.per_task_accuracy = {0.0, 1.0, 0.5, 0.5};
  aggregate(r);
  EXPECT_DOUBLE_EQ(r.mean, 0.5);
  // sample sd = sqrt(0.5 / 3)
  EXPECT_NEAR(r.ci95_halfwidth, 1.96 * std::sqrt(0.5 / 3.0) / 2.0, 1e-12);
  r.per_task_accuracy.clear();
  EXPECT_THROW(aggregate(r), ContractError);
}

TEST(Protocol, PerfectFeaturesGiveFullAccuracy) {
  // one-hot class features: every classifier is exact and the interval collapses
  std::vector<int> labels;
  Tensor f({60, 6});
  for (std::size_t i = 0; i < 60; ++i) {
    labels.push_back(static_cast<int>(i / 10));
    f.at(i, i / 10) = 1.0f;
  }
  const FeaturePool pool(f, labels);
  for (auto c : {Classifier::kNearest, Classifier::kAttention, Classifier::kNearestCentroid,
                 Classifier::kAttentionCentroid}) {
    const EvalReport r = run_protocol(pool, {5, 1, 5, 200}, {c, 7});
    EXPECT_DOUBLE_EQ(r.mean, 1.0);
    EXPECT_DOUBLE_EQ(r.ci95_halfwidth, 0.0);
  }
}

TEST(Protocol, DeterministicAndWorkerIndependent) {
  Rng rng(62);
  const FeaturePool pool = random_pool(8, 25, 6, rng);
  const TaskSpec spec{5, 1, 15, 500};
  const EvalReport a = run_protocol(pool, spec, {Classifier::kAttention, 3});
  const EvalReport b = run_protocol(pool, spec, {Classifier::kAttention, 3});
  const EvalReport c = run_protocol(pool, spec, {Classifier::kAttention, 3, false, 4});
  EXPECT_EQ(a.per_task_accuracy, b.per_task_accuracy);
  EXPECT_EQ(a.per_task_accuracy, c.per_task_accuracy);
  EXPECT_EQ(a.to_json(true).dump(), c.to_json(true).dump());
  const EvalReport d = run_protocol(pool, spec, {Classifier::kAttention, 4});
  EXPECT_NE(a.per_task_accuracy, d.per_task_accuracy);
}

TEST(Protocol, L2NormalizeMakesNearestMatchAttention) {
  Rng rng(63);
  const FeaturePool pool = random_pool(8, 25, 6, rng);
  const TaskSpec spec{5, 1, 15, 200};
  const EvalReport nn = run_protocol(pool, spec, {Classifier::kNearest, 5, true});
  const EvalReport at = run_protocol(pool, spec, {Classifier::kAttention, 5, true});
  EXPECT_EQ(nn.per_task_accuracy, at.per_task_accuracy);
}

TEST(Protocol, SamplingErrorsCarryTaskIndex) {
  Rng rng(64);
  const FeaturePool pool = random_pool(4, 25, 3, rng);
  try {
    run_protocol(pool, {5, 1, 15, 10}, {});
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("task 0:", 0), 0u) << e.what();
  }
}

TEST(Report, JsonAndSummary) {
  EvalReport r;
  r.per_task_accuracy = {0.6, 0.8};
  r.spec = {5, 1, 15, 2};
  r.seed = 9;
  aggregate(r);
  const auto j = r.to_json();
  EXPECT_DOUBLE_EQ(j["mean"].get<double>(), 0.7);
  EXPECT_EQ(j["classifier"], "attn");
  EXPECT_EQ(j["ci95_formula"], kCiFormula);
  EXPECT_FALSE(j.contains("per_task_accuracy"));
  EXPECT_EQ(r.to_json(true)["per_task_accuracy"].size(), 2u);
  EXPECT_EQ(r.summary().rfind("5-way 1-shot attn: 70.00 +- ", 0), 0u) << r.summary();
}

TEST(Report, ClassifierNames) {
  for (auto c : {Classifier::kNearest, Classifier::kAttention, Classifier::kNearestCentroid,
                 Classifier::kAttentionCentroid})
    EXPECT_EQ(parse_classifier(to_string(c)), c);
  EXPECT_THROW(parse_classifier("svm"), ConfigError);
}

TEST(Classify, TenKeyEpisodesMatchBruteForce) {
  Rng rng(65);
  const FeaturePool pool = random_pool(10, 20, 7, rng);
  for (int t = 0; t < 200; ++t) {
    const Episode e = sample_task(pool, {10, 1, 5, 1}, rng);
    ASSERT_EQ(e.n_keys(), 10u);
    ASSERT_EQ(classify_1nn(e.query_features(), e.key_features()), brute_1nn(e.query_features(), e.key_features()));
  }
}

TEST(Centroids, HelpOnSeparableClusters) {
  // isotropic Gaussian clusters: averaging 5 keys denoises the class representative
  Rng rng(66);
  const std::size_t classes = 10, per_class = 40, d = 8;
  Tensor f({classes * per_class, d});
  std::vector<int> labels;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> centre(d);
    for (double& x : centre) x = 1.5 * rng.normal();
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < d; ++j) f.at(c * per_class + i, j) = static_cast<float>(centre[j] + rng.normal());
      labels.push_back(static_cast<int>(c));
    }
  }
  const FeaturePool pool(f, labels);
  const TaskSpec spec{5, 5, 15, 2000};
  const double plain = run_protocol(pool, spec, {Classifier::kNearest, 8}).mean;
  const double centroid = run_protocol(pool, spec, {Classifier::kNearestCentroid, 8}).mean;
  EXPECT_GE(centroid, plain);
}
