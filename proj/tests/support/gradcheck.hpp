#pragma once

// Analytic tape gradients versus central differences of the double-precision
// shadow. Each primitive case reduces its output to a scalar through a fixed
// random weighting so every output entry influences the loss.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "episodica/autodiff.hpp"
#include "episodica/contrastive.hpp"
#include "episodica/encoder.hpp"
#include "shadow.hpp"

namespace gradcheck {

using episodica::Rng;
using episodica::Shape;
using episodica::Tensor;
namespace ad = episodica::ad;

using Inputs = std::vector<std::vector<double>>;
using Build = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;
using Shadow = std::function<double(const Inputs&)>;

// Worst relative error over all differentiable inputs of one instance.
inline double compare(const std::vector<Tensor>& inputs, const Build& build, const Shadow& shadow_fn,
                      double h = 1e-3) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  const ad::Var loss = build(tape, leaves);
  const ad::Gradients grads = tape.backward(loss);
  Inputs x;
  for (const auto& t : inputs) x.push_back(shadow::to_doubles(t));
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto numeric = shadow::fd_gradient(
        [&](const std::vector<double>& xk) {
          Inputs copy = x;
          copy[k] = xk;
          return shadow_fn(copy);
        },
        x[k], h);
    worst = std::max(worst, shadow::rel_error(grads.of(leaves[k]), numeric));
  }
  return worst;
}

inline double weighted(const std::vector<double>& y, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

inline ad::Var weighted(ad::Tape& tape, ad::Var y, const Tensor& w) { return ad::sum(ad::mul(y, tape.constant(w))); }

// Draws avoiding a neighbourhood of zero, so relu kinks stay out of the difference stencil.
inline Tensor away_from_zero(Shape shape, Rng& rng, double margin = 0.05) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) {
    const double m = rng.uniform(margin, 1.0);
    v = static_cast<float>(rng.bernoulli(0.5) ? m : -m);
  }
  return t;
}

struct Case {
  std::string name;
  std::function<double(Rng&)> instance;  // worst relative error of one random instance
};

inline std::vector<Case> primitive_cases() {
  using shadow::random_tensor;
  std::vector<Case> cases;

  cases.push_back({"matmul", [](Rng& rng) {
                     const Tensor a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
                     const Tensor w = random_tensor({4, 3}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a, b}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::matmul(v[0], v[1]), w); },
                         [&](const Inputs& x) {
                           std::vector<double> y(12, 0.0);
                           for (std::size_t i = 0; i < 4; ++i)
                             for (std::size_t j = 0; j < 3; ++j)
                               for (std::size_t k = 0; k < 5; ++k) y[i * 3 + j] += x[0][i * 5 + k] * x[1][k * 3 + j];
                           return weighted(y, wd);
                         });
                   }});

  cases.push_back({"transpose", [](Rng& rng) {
                     const Tensor a = random_tensor({3, 4}, rng), w = random_tensor({4, 3}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::transpose(v[0]), w); },
                         [&](const Inputs& x) {
                           std::vector<double> y(12);
                           for (std::size_t i = 0; i < 3; ++i)
                             for (std::size_t j = 0; j < 4; ++j) y[j * 3 + i] = x[0][i * 4 + j];
                           return weighted(y, wd);
                         });
                   }});

  auto binary = [&](const char* name, std::function<ad::Var(ad::Var, ad::Var)> op,
                    std::function<double(double, double)> f) {
    cases.push_back({name, [op, f](Rng& rng) {
                       const Tensor a = random_tensor({3, 3}, rng), b = random_tensor({3, 3}, rng);
                       const Tensor w = random_tensor({3, 3}, rng);
                       const auto wd = shadow::to_doubles(w);
                       return compare(
                           {a, b}, [&](ad::Tape& t, const auto& v) { return weighted(t, op(v[0], v[1]), w); },
                           [&](const Inputs& x) {
                             std::vector<double> y(9);
                             for (std::size_t i = 0; i < 9; ++i) y[i] = f(x[0][i], x[1][i]);
                             return weighted(y, wd);
                           });
                     }});
  };
  binary("add", [](ad::Var a, ad::Var b) { return ad::add(a, b); }, [](double a, double b) { return a + b; });
  binary("sub", [](ad::Var a, ad::Var b) { return ad::sub(a, b); }, [](double a, double b) { return a - b; });
  binary("mul", [](ad::Var a, ad::Var b) { return ad::mul(a, b); }, [](double a, double b) { return a * b; });

  cases.push_back({"mul_scalar_broadcast", [](Rng& rng) {
                     const Tensor a = random_tensor({}, rng), b = random_tensor({3, 3}, rng);
                     const Tensor w = random_tensor({3, 3}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a, b}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::mul(v[0], v[1]), w); },
                         [&](const Inputs& x) {
                           std::vector<double> y(9);
                           for (std::size_t i = 0; i < 9; ++i) y[i] = x[0][0] * x[1][i];
                           return weighted(y, wd);
                         });
                   }});

  auto unary = [&](const char* name, std::function<ad::Var(ad::Var)> op, std::function<double(double)> f,
                   std::function<Tensor(Rng&)> draw) {
    cases.push_back({name, [op, f, draw](Rng& rng) {
                       const Tensor a = draw(rng), w = random_tensor(a.shape(), rng);
                       const auto wd = shadow::to_doubles(w);
                       return compare(
                           {a}, [&](ad::Tape& t, const auto& v) { return weighted(t, op(v[0]), w); },
                           [&](const Inputs& x) {
                             std::vector<double> y(x[0].size());
                             for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[0][i]);
                             return weighted(y, wd);
                           });
                     }});
  };
  auto plain = [](Rng& rng) { return random_tensor({3, 4}, rng); };
  unary("scale", [](ad::Var a) { return ad::scale(a, 2.5f); }, [](double a) { return 2.5 * a; }, plain);
  unary("add_scalar", [](ad::Var a) { return ad::add_scalar(a, -0.75f); }, [](double a) { return a - 0.75; }, plain);
  unary("relu", [](ad::Var a) { return ad::relu(a); }, [](double a) { return a > 0.0 ? a : 0.0; },
        [](Rng& rng) { return away_from_zero({3, 4}, rng); });
  unary("exp", [](ad::Var a) { return ad::exp(a); }, [](double a) { return std::exp(a); }, plain);
  unary("log", [](ad::Var a) { return ad::log(a); }, [](double a) { return std::log(a); },
        [](Rng& rng) { return random_tensor({3, 4}, rng, 0.2, 2.0); });

  cases.push_back({"l2_normalize", [](Rng& rng) {
                     const Tensor a = random_tensor({2, 4}, rng), w = random_tensor({2, 4}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::l2_normalize(v[0]), w); },
                         [&](const Inputs& x) {
                           shadow::Mat m(2, 4);
                           m.v = x[0];
                           return weighted(shadow::l2_normalize(m).v, wd);
                         });
                   }});

  cases.push_back({"softmax_rows", [](Rng& rng) {
                     const Tensor a = random_tensor({3, 5}, rng, -2.0, 2.0), w = random_tensor({3, 5}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::softmax_rows(v[0]), w); },
                         [&](const Inputs& x) {
                           shadow::Mat m(3, 5);
                           m.v = x[0];
                           return weighted(shadow::softmax_rows(m).v, wd);
                         });
                   }});

  cases.push_back({"sum", [](Rng& rng) {
                     const Tensor a = random_tensor({3, 4}, rng);
                     return compare(
                         {a}, [&](ad::Tape&, const auto& v) { return ad::scale(ad::mul(ad::sum(v[0]), ad::sum(v[0])), 0.5f); },
                         [&](const Inputs& x) {
                           double s = 0.0;
                           for (double e : x[0]) s += e;
                           return 0.5 * s * s;
                         });
                   }});

  cases.push_back({"mean", [](Rng& rng) {
                     const Tensor a = random_tensor({3, 4}, rng), w = random_tensor({3, 4}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a}, [&](ad::Tape& t, const auto& v) { return ad::mean(ad::mul(v[0], t.constant(w))); },
                         [&](const Inputs& x) { return weighted(x[0], wd) / 12.0; });
                   }});

  cases.push_back({"add_row_bias", [](Rng& rng) {
                     const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
                     const Tensor w = random_tensor({3, 4}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {a, b}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::add_row_bias(v[0], v[1]), w); },
                         [&](const Inputs& x) {
                           std::vector<double> y(12);
                           for (std::size_t i = 0; i < 3; ++i)
                             for (std::size_t j = 0; j < 4; ++j) y[i * 4 + j] = x[0][i * 4 + j] + x[1][j];
                           return weighted(y, wd);
                         });
                   }});

  for (std::size_t stride : {1u, 2u}) {
    cases.push_back({"conv3x3_stride" + std::to_string(stride), [stride](Rng& rng) {
                       const Tensor x = random_tensor({2, 2, 5, 5}, rng), wt = random_tensor({3, 2, 3, 3}, rng);
                       const Tensor b = random_tensor({3}, rng);
                       const std::size_t o = (5 - 1) / stride + 1;
                       const Tensor w = random_tensor({2, 3, o, o}, rng);
                       const auto wd = shadow::to_doubles(w);
                       return compare(
                           {x, wt, b},
                           [&](ad::Tape& t, const auto& v) { return weighted(t, ad::conv3x3(v[0], v[1], v[2], stride), w); },
                           [&](const Inputs& in) {
                             const shadow::Maps m{2, 2, 5, 5, in[0]};
                             return weighted(shadow::conv3x3(m, in[1], in[2], 3, stride).v, wd);
                           });
                     }});
  }

  cases.push_back({"global_avg_pool", [](Rng& rng) {
                     const Tensor x = random_tensor({2, 3, 4, 4}, rng), w = random_tensor({2, 3}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {x}, [&](ad::Tape& t, const auto& v) { return weighted(t, ad::global_avg_pool(v[0]), w); },
                         [&](const Inputs& in) {
                           std::vector<double> y(6, 0.0);
                           for (std::size_t i = 0; i < 6; ++i)
                             for (std::size_t p = 0; p < 16; ++p) y[i] += in[0][i * 16 + p] / 16.0;
                           return weighted(y, wd);
                         });
                   }});

  cases.push_back({"contrastive_ce", [](Rng& rng) {
                     const Tensor logits = random_tensor({3, 5}, rng, -2.0, 2.0);
                     const std::vector<std::size_t> pos{1, 4, 0};
                     std::vector<std::uint8_t> include(15, 1);
                     include[0 * 5 + 3] = 0;
                     include[2 * 5 + 2] = 0;
                     const Tensor w = random_tensor({3}, rng);
                     const auto wd = shadow::to_doubles(w);
                     return compare(
                         {logits},
                         [&](ad::Tape& t, const auto& v) { return weighted(t, ad::contrastive_ce(v[0], pos, include), w); },
                         [&](const Inputs& in) {
                           std::vector<double> y(3);
                           for (std::size_t i = 0; i < 3; ++i) {
                             double z = 0.0;
                             for (std::size_t j = 0; j < 5; ++j)
                               if (include[i * 5 + j]) z += std::exp(in[0][i * 5 + j]);
                             y[i] = std::log(z) - in[0][i * 5 + pos[i]];
                           }
                           return weighted(y, wd);
                         });
                   }});
  return cases;
}

// Small conv encoder with projection head under NT-Xent: tape gradients of every
// parameter against differences of the double-precision encoder and loss.
struct CompositeResult {
  double rel_error = 0.0;
  std::size_t checked = 0;   // coordinates compared
  std::size_t excluded = 0;  // coordinates skipped at relu kinks
};

inline CompositeResult composite_instance(Rng& rng) {
  std::size_t excluded = 0;
  using namespace episodica;
  model::EncoderArch arch;
  arch.input = {3, 6, 6};
  arch.backbone = {model::LayerSpec::conv3x3(3, 4, 2), model::LayerSpec::relu(), model::LayerSpec::conv3x3(4, 5, 1),
                   model::LayerSpec::relu(), model::LayerSpec::global_avg_pool()};
  arch.head = {model::LayerSpec::dense(5, 5), model::LayerSpec::relu(), model::LayerSpec::dense(5, 4)};
  model::EncoderModel m = model::init_encoder(arch, rng.next_u64());
  for (auto& [name, t] : m.params)
    if (name.ends_with("bias"))
      for (float& v : t.data()) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  const Tensor batch = shadow::random_tensor({4, 3, 6, 6}, rng);
  const contrastive::LossConfig cfg{0.5, contrastive::Similarity::kCosine};

  ad::Tape tape;
  const auto params = model::bind_params(tape, m, true);
  const ad::Var loss =
      contrastive::ntxent_simclr(model::forward(m, params, tape.constant(batch), model::Stage::kProjection), cfg);
  const ad::Gradients grads = tape.backward(loss);

  // Coordinates whose difference stencil moves any relu input across zero are
  // excluded: the one-sided slopes differ there and the central difference
  // estimates neither.
  std::vector<double> analytic, numeric;
  const shadow::DParams dp = shadow::to_dparams(m.params);
  std::vector<bool> base_pattern;
  shadow::encoder_forward(arch, dp, batch, true, &base_pattern);
  const double h = 1e-3;
  for (const auto& [name, var] : params) {
    const Tensor g = grads.of(var);
    shadow::DParams probe = dp;
    for (std::size_t i = 0; i < g.size(); ++i) {
      double sides[2];
      bool smooth = true;
      for (int s = 0; s < 2; ++s) {
        probe[name][i] = dp.at(name)[i] + (s == 0 ? h : -h);
        std::vector<bool> pattern;
        sides[s] = shadow::ntxent(shadow::encoder_forward(arch, probe, batch, true, &pattern), cfg.temperature);
        smooth = smooth && pattern == base_pattern;
      }
      probe[name][i] = dp.at(name)[i];
      if (!smooth) {
        ++excluded;
        continue;
      }
      analytic.push_back(g[i]);
      numeric.push_back((sides[0] - sides[1]) / (2.0 * h));
    }
  }
  return {shadow::rel_error(analytic, numeric), analytic.size(), excluded};
}

}  // namespace gradcheck
