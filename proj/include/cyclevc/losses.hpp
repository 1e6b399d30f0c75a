#pragma once

// Least-squares adversarial, cycle-consistency and identity-mapping
// objectives. Expectations are minibatch means; L1 norms are means over
// elements so the trade-off weights do not depend on crop length.

#include <span>
#include <vector>

#include "cyclevc/autograd.hpp"
#include "cyclevc/error.hpp"

namespace cyclevc {

/// mean((real - 1)²) + mean(fake²)
template <typename Scalar>
Var<Scalar> adv_loss_discriminator(const Var<Scalar>& real_scores, const Var<Scalar>& fake_scores) {
  if (real_scores.value().empty() || fake_scores.value().empty())
    throw ValidationError("adversarial loss over an empty score set");
  return weighted_sum<Scalar>({mean_squared_offset(real_scores, Scalar(1)), mean_squared_offset(fake_scores, Scalar(0))},
                              {Scalar(1), Scalar(1)});
}

/// mean((fake - 1)²)
template <typename Scalar>
Var<Scalar> adv_loss_generator(const Var<Scalar>& fake_scores) {
  if (fake_scores.value().empty()) throw ValidationError("adversarial loss over an empty score set");
  return mean_squared_offset(fake_scores, Scalar(1));
}

/// mean|G_yx(G_xy(x)) - x| + mean|G_xy(G_yx(y)) - y|
template <typename Scalar>
Var<Scalar> cycle_loss(const Var<Scalar>& x, const Var<Scalar>& x_roundtrip, const Var<Scalar>& y,
                       const Var<Scalar>& y_roundtrip) {
  return weighted_sum<Scalar>({mean_abs_diff(x_roundtrip, x), mean_abs_diff(y_roundtrip, y)}, {Scalar(1), Scalar(1)});
}

/// mean|G_xy(y) - y| + mean|G_yx(x) - x|
template <typename Scalar>
Var<Scalar> identity_loss(const Var<Scalar>& y, const Var<Scalar>& g_xy_of_y, const Var<Scalar>& x,
                          const Var<Scalar>& g_yx_of_x) {
  return weighted_sum<Scalar>({mean_abs_diff(g_xy_of_y, y), mean_abs_diff(g_yx_of_x, x)}, {Scalar(1), Scalar(1)});
}

/// adv_xy + adv_yx + λ_cyc·cyc + λ_id·id
template <typename Scalar>
Var<Scalar> generator_objective(const Var<Scalar>& adv_xy, const Var<Scalar>& adv_yx, const Var<Scalar>& cyc,
                                const Var<Scalar>& id, Scalar lambda_cyc, Scalar lambda_id) {
  if (lambda_cyc < 0 || lambda_id < 0) throw ValidationError("loss weights must be non-negative");
  return weighted_sum<Scalar>({adv_xy, adv_yx, cyc, id}, {Scalar(1), Scalar(1), lambda_cyc, lambda_id});
}

// Plain-value conveniences for reporting and tests.

namespace detail {
inline Var<double> as_var(std::span<const double> v) {
  return constant(Tensor<double>({v.size()}, std::vector<double>(v.begin(), v.end())));
}
}  // namespace detail

inline double adv_loss_discriminator(std::span<const double> real, std::span<const double> fake) {
  return adv_loss_discriminator(detail::as_var(real), detail::as_var(fake)).item();
}
inline double adv_loss_generator(std::span<const double> fake) {
  return adv_loss_generator(detail::as_var(fake)).item();
}

struct LossParts {
  double adv_g_xy = 0, adv_g_yx = 0, adv_d_x = 0, adv_d_y = 0, cyc = 0, id = 0;
};

struct LossBreakdown {
  double adv_g_xy = 0, adv_g_yx = 0, adv_d_x = 0, adv_d_y = 0, cyc = 0, id = 0;
  double total_g = 0, total_d_x = 0, total_d_y = 0;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

inline LossBreakdown total_losses(const LossParts& p, double lambda_cyc, double lambda_id) {
  if (lambda_cyc < 0 || lambda_id < 0) throw ValidationError("loss weights must be non-negative");
  LossBreakdown b{p.adv_g_xy, p.adv_g_yx, p.adv_d_x, p.adv_d_y, p.cyc, p.id, 0, 0, 0};
  b.total_g = p.adv_g_xy + p.adv_g_yx + lambda_cyc * p.cyc + lambda_id * p.id;
  b.total_d_x = p.adv_d_x;
  b.total_d_y = p.adv_d_y;
  return b;
}

}  // namespace cyclevc
