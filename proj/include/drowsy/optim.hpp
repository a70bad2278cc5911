#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

/// Adam moments plus the learning-rate schedule for one parameter tensor.
struct AdamState {
  Tensor m;  // first moment, same shape as the parameter
  Tensor v;  // second moment, same shape as the parameter
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr0 = 1e-4;
  double decay_power = 0.9;
  long total_steps = 1;

  static AdamState for_param(const Tensor& param, double lr0, double decay_power,
                             long total_steps) {
    AdamState s;
    s.m = Tensor(param.shape());
    s.v = Tensor(param.shape());
    s.lr0 = lr0;
    s.decay_power = decay_power;
    s.total_steps = total_steps;
    s.validate();
    return s;
  }

  void validate() const {
    if (t < 0) throw ValidationError("adam step counter must be >= 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw ValidationError("adam betas must lie in (0,1)");
    if (total_steps < 1) throw ValidationError("adam total_steps must be >= 1");
    check_same_shape(m, v, "adam moments");
  }
};

/// Polynomial decay: lr(t) = lr0 * (1 - t/total_steps)^power, zero once
/// t reaches total_steps.
inline double poly_decay_lr(long t, const AdamState& state) {
  if (t >= state.total_steps) return 0.0;
  const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(state.total_steps);
  return state.lr0 * std::pow(frac, state.decay_power);
}

/// One bias-corrected Adam update in place. The learning rate is taken from
/// the schedule at the pre-increment step count, so the first step runs at
/// lr0.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  check_same_shape(param, grad, "adam_step");
  check_same_shape(param, state.m, "adam_step");
  const double lr = poly_decay_lr(state.t, state);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  double* p = param.data();
  double* m = state.m.data();
  double* v = state.v.data();
  const double* g = grad.data();
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
    v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

/// lambda * sum of squared entries over the given weight tensors (callers
/// pass convolution/dense weights only, never biases or gate weights).
inline double l2_penalty(const std::vector<const Tensor*>& params, double lambda) {
  double acc = 0;
  for (const Tensor* p : params) acc += sum_squares(*p);
  return lambda * acc;
}

/// Analytic gradient of l2_penalty for one tensor: grad += 2*lambda*W.
inline void l2_grad_acc(const Tensor& param, double lambda, Tensor& grad) {
  check_same_shape(param, grad, "l2_grad_acc");
  const double k = 2.0 * lambda;
  for (std::size_t i = 0; i < param.numel(); ++i) grad[i] += k * param[i];
}

}  // namespace drowsy
