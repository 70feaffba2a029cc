#include "episodica/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "episodica/error.hpp"
#include "episodica/eten.hpp"

namespace episodica::pca {

SymmetricEigen jacobi_eigen(std::vector<double> a, std::size_t n, double tol, std::size_t max_sweeps) {
  if (a.size() != n * n) throw DimensionError("jacobi_eigen: matrix is not n x n");
  std::vector<double> v(n * n, 0.0);  // columns accumulate eigenvectors
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };

  double frob = 0.0;
  for (double x : a) frob += x * x;
  frob = std::sqrt(frob);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c)
        if (r != c) s += at(r, c) * at(r, c);
    return std::sqrt(s);
  };

  SymmetricEigen out;
  while (frob > 0.0 && off_norm() >= tol * frob) {
    if (out.sweeps == max_sweeps) throw NumericError("jacobi_eigen: no convergence after max sweeps");
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {  // A <- A J
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {  // A <- J^T A
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return at(i, i) > at(j, j); });
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = at(order[r], order[r]);
    for (std::size_t k = 0; k < n; ++k) out.vectors[r * n + k] = v[k * n + order[r]];
  }
  return out;
}

namespace {

std::vector<double> column_means(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= static_cast<double>(n);
  return mean;
}

}  // namespace

double total_variance(const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) < 2) throw ContractError("total_variance: need [n x d] with n >= 2");
  const auto mean = column_means(x);
  double s = 0.0;
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < mean.size(); ++c) s += (row[c] - mean[c]) * (row[c] - mean[c]);
  }
  return s / static_cast<double>(x.dim(0) - 1);
}

PcaModel pca_fit(const Tensor& x, std::size_t k) {
  if (x.rank() != 2) throw DimensionError("pca_fit: data must be [n x d], got " + shape_to_string(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (n < 2) throw ConfigError("pca_fit: need at least 2 samples");
  if (k < 1 || k > std::min(n - 1, d))
    throw ConfigError("pca_fit: out_dim " + std::to_string(k) + " outside [1, " + std::to_string(std::min(n - 1, d)) + "]");
  const auto mean = column_means(x);
  std::vector<double> cov(d * d, 0.0);
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) centered[c] = row[c] - mean[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = centered[i];
      for (std::size_t j = i; j < d; ++j) cov[i * d + j] += ci * centered[j];
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) cov[j * d + i] = cov[i * d + j] = cov[i * d + j] / static_cast<double>(n - 1);
    trace += cov[i * d + i];
  }
  if (!(trace > 0.0)) throw NumericError("pca_fit: data has zero variance");

  const SymmetricEigen eig = jacobi_eigen(std::move(cov), d);
  PcaModel m;
  m.mean = Tensor({d});
  for (std::size_t c = 0; c < d; ++c) m.mean[c] = static_cast<float>(mean[c]);
  m.components = Tensor({k, d});
  m.explained_variance = Tensor({k});
  for (std::size_t r = 0; r < k; ++r) {
    const double* vec = eig.vectors.data() + r * d;
    std::size_t big = 0;
    for (std::size_t c = 1; c < d; ++c)
      if (std::abs(vec[c]) > std::abs(vec[big])) big = c;
    const double sign = vec[big] < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < d; ++c) m.components.at(r, c) = static_cast<float>(sign * vec[c]);
    // roundoff can leave tiny negative eigenvalues on rank-deficient data
    m.explained_variance[r] = static_cast<float>(std::max(0.0, eig.values[r]));
  }
  return m;
}

Tensor pca_transform(const PcaModel& model, const Tensor& x) {
  if (x.rank() != 2 || x.dim(1) != model.in_dim())
    throw ContractError("pca_transform: data " + shape_to_string(x.shape()) + " does not have dimension " +
                        std::to_string(model.in_dim()));
  const std::size_t n = x.dim(0), d = model.in_dim(), k = model.out_dim();
  Tensor out({n, k});
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) centered[c] = static_cast<double>(row[c]) - model.mean[c];
    for (std::size_t j = 0; j < k; ++j) {
      auto comp = model.components.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += centered[c] * comp[c];
      out.at(r, j) = static_cast<float>(s);
    }
  }
  return out;
}

Tensor pca_lift(const PcaModel& model, const Tensor& y) {
  if (y.rank() != 2 || y.dim(1) != model.out_dim())
    throw ContractError("pca_lift: data " + shape_to_string(y.shape()) + " does not have dimension " +
                        std::to_string(model.out_dim()));
  const std::size_t n = y.dim(0), d = model.in_dim(), k = model.out_dim();
  Tensor out({n, d});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      double s = model.mean[c];
      for (std::size_t j = 0; j < k; ++j) s += static_cast<double>(y.at(r, j)) * model.components.at(j, c);
      out.at(r, c) = static_cast<float>(s);
    }
  return out;
}

void save_pca(const PcaModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  eten::save(model.mean, dir / "mean.eten");
  eten::save(model.components, dir / "components.eten");
  eten::save(model.explained_variance, dir / "explained_variance.eten");
}

PcaModel load_pca(const std::filesystem::path& dir) {
  PcaModel m{eten::load(dir / "mean.eten"), eten::load(dir / "components.eten"),
             eten::load(dir / "explained_variance.eten")};
  if (m.mean.rank() != 1 || m.components.rank() != 2 || m.explained_variance.rank() != 1 ||
      m.components.dim(1) != m.mean.dim(0) || m.components.dim(0) != m.explained_variance.dim(0))
    throw DataError("PCA model in " + dir.string() + " has inconsistent shapes");
  return m;
}

}  // namespace episodica::pca
