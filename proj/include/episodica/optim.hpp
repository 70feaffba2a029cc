#pragma once

#include "episodica/encoder.hpp"

namespace episodica::optim {

struct OptimState {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool nesterov = true;
  model::ParamMap velocity;  // same keys and shapes as the parameters
};

/// Zero velocity for every parameter of `model`.
OptimState make_state(const model::EncoderModel& model, double lr, double momentum, double weight_decay,
                      bool nesterov);

// With d = g + weight_decay * theta:
//   v     <- momentum * v + d
//   theta <- theta - lr * (d + momentum * v)   (nesterov)
//   theta <- theta - lr * v                    (otherwise)
// Throws ContractError when gradient or velocity keys differ from the parameters.
void sgd_step(model::EncoderModel& model, const model::ParamMap& grads, OptimState& state);

/// theta_key <- m * theta_key + (1 - m) * theta_query, elementwise. Requires 0 <= m <= 1.
void momentum_update(model::EncoderModel& key_model, const model::EncoderModel& query_model, double m);

/// Cosine decay from `base` to 0 over `total` steps.
double cosine_lr(double base, std::size_t step, std::size_t total);

}  // namespace episodica::optim
