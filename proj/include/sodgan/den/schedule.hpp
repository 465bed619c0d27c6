#pragma once

// Variance schedule and the fixed noising chain. The schedule is linear in
// beta; alpha_bar is the running product, computed and stored in double.
//
//   step:        x_t = x_{t-1} * sqrt(1 - beta_t) + sqrt(beta_t) * eps
//   closed form: x_t = x_0 * sqrt(alpha_bar_t) + sqrt(1 - alpha_bar_t) * eps
//
// Iterating the step t times matches the closed form in distribution; the
// test suite checks the first two moments by Monte-Carlo.

#include <cmath>
#include <functional>
#include <vector>

#include "sodgan/common.hpp"

namespace sodgan {

struct DiffusionSchedule {
  int T = 0;
  std::vector<double> beta;       // beta_1..beta_T (index 0 is t=1)
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // running product of alpha

  double beta_at(int t) const {
    require(t >= 1 && t <= T, ErrKind::invalid_argument, "schedule: t out of range");
    return beta[t - 1];
  }
  double alpha_at(int t) const {
    require(t >= 1 && t <= T, ErrKind::invalid_argument, "schedule: t out of range");
    return alpha[t - 1];
  }
  double alpha_bar_at(int t) const {
    require(t >= 1 && t <= T, ErrKind::invalid_argument, "schedule: t out of range");
    return alpha_bar[t - 1];
  }
};

inline DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
  require(T >= 1, ErrKind::invalid_argument, "make_schedule: T must be >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrKind::invalid_argument,
          "make_schedule: need 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.beta[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

// One forward noising step. beta_t = 0 is the identity (used by tests).
template <class T>
std::vector<T> diffusion_step(const std::vector<T>& x_prev, double beta_t,
                              const std::vector<T>& noise) {
  require(beta_t >= 0.0 && beta_t < 1.0, ErrKind::invalid_argument,
          "diffusion_step: beta_t must lie in [0,1)");
  require(x_prev.size() == noise.size(), ErrKind::invalid_argument,
          "diffusion_step: shape mismatch");
  const T a = static_cast<T>(std::sqrt(1.0 - beta_t));
  const T b = static_cast<T>(std::sqrt(beta_t));
  std::vector<T> out(x_prev.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * noise[i];
  return out;
}

// Closed-form sample of x_t given x_0.
template <class T>
std::vector<T> q_sample(const std::vector<T>& x0, int t, const DiffusionSchedule& sched,
                        const std::vector<T>& noise) {
  require(t >= 1 && t <= sched.T, ErrKind::invalid_argument, "q_sample: t out of range");
  require(x0.size() == noise.size(), ErrKind::invalid_argument, "q_sample: shape mismatch");
  const double ab = sched.alpha_bar_at(t);
  const T a = static_cast<T>(std::sqrt(ab));
  const T b = static_cast<T>(std::sqrt(1.0 - ab));
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

// One learned reverse transition given an explicit mean and stddev.
template <class T>
std::vector<T> reverse_step_from_mu(const std::vector<T>& mu, double sigma,
                                    const std::vector<T>& noise) {
  require(mu.size() == noise.size(), ErrKind::invalid_argument, "reverse_step: shape mismatch");
  std::vector<T> out(mu.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mu[i] + static_cast<T>(sigma) * noise[i];
  return out;
}

// Posterior mean reconstructed from a noise prediction:
//   mu = (x_t - beta_t / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
template <class T>
std::vector<T> reverse_mean_from_eps(const std::vector<T>& x_t, int t,
                                     const DiffusionSchedule& sched,
                                     const std::vector<T>& eps_hat) {
  require(t >= 1 && t <= sched.T, ErrKind::invalid_argument, "reverse_step: t out of range");
  require(x_t.size() == eps_hat.size(), ErrKind::invalid_argument, "reverse_step: shape mismatch");
  const double beta = sched.beta_at(t);
  const double scale = beta / std::sqrt(1.0 - sched.alpha_bar_at(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
  std::vector<T> mu(x_t.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    mu[i] = static_cast<T>((x_t[i] - scale * eps_hat[i]) * inv_sqrt_alpha);
  return mu;
}

// Full reverse step with the fixed variance choice sigma_t^2 = beta_t.
// The noise vector is supplied explicitly for determinism; pass zeros at t=1.
template <class T>
std::vector<T> reverse_step(const std::vector<T>& x_t, int t, const DiffusionSchedule& sched,
                            const std::function<std::vector<T>(const std::vector<T>&, int)>& eps_fn,
                            const std::vector<T>& noise) {
  const auto eps_hat = eps_fn(x_t, t);
  const auto mu = reverse_mean_from_eps(x_t, t, sched, eps_hat);
  const double sigma = t > 1 ? std::sqrt(sched.beta_at(t)) : 0.0;
  return reverse_step_from_mu(mu, sigma, noise);
}

}  // namespace sodgan
