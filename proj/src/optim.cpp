#include "episodica/optim.hpp"

#include <cmath>
#include <numbers>

#include "episodica/error.hpp"

namespace episodica::optim {

OptimState make_state(const model::EncoderModel& model, double lr, double momentum, double weight_decay,
                      bool nesterov) {
  OptimState s{lr, momentum, weight_decay, nesterov, {}};
  for (const auto& [name, value] : model.params) s.velocity.emplace(name, Tensor(value.shape()));
  return s;
}

void sgd_step(model::EncoderModel& model, const model::ParamMap& grads, OptimState& state) {
  if (!model::congruent(model.params, grads))
    throw ContractError("sgd_step: gradient keys/shapes do not match the parameters");
  if (!model::congruent(model.params, state.velocity))
    throw ContractError("sgd_step: velocity keys/shapes do not match the parameters");
  const double lr = state.lr, mu = state.momentum, wd = state.weight_decay;
  for (auto& [name, theta] : model.params) {
    auto p = theta.data();
    auto g = grads.at(name).data();
    auto v = state.velocity.at(name).data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = static_cast<double>(g[i]) + wd * p[i];
      const double vel = mu * v[i] + d;
      v[i] = static_cast<float>(vel);
      const double step = state.nesterov ? d + mu * vel : vel;
      p[i] = static_cast<float>(p[i] - lr * step);
    }
  }
}

void momentum_update(model::EncoderModel& key_model, const model::EncoderModel& query_model, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("momentum_update: m must lie in [0, 1]");
  if (!model::congruent(key_model.params, query_model.params))
    throw ContractError("momentum_update: key and query encoders are not congruent");
  for (auto& [name, theta] : key_model.params) {
    auto k = theta.data();
    auto q = query_model.params.at(name).data();
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<float>(m * k[i] + (1.0 - m) * q[i]);
  }
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace episodica::optim
