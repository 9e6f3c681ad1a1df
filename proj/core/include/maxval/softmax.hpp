#pragma once

#include <span>
#include <vector>

#include "maxval/linalg.hpp"

namespace maxval {

using Vec = std::vector<double>;

// Smoothing level. beta = 0 is admitted where the operator degrades to a
// uniform-weight average (value/gradient/Hessian); operations dividing by
// beta reject it.
struct Temperature {
  double beta = 0.0;
  void validate() const;
};

// Parameters of the polynomial density condition on sub-optimality gaps:
// the gap restricted to (0, c) has Lebesgue density f(u) <= H u^{delta-1}.
struct MarginParams {
  double delta = 1.0;
  double c = 1.0;
  double H = 1.0;
  void validate() const;
};

// sm_beta(u) = sum_i u_i e^{beta u_i} / sum_j e^{beta u_j}, computed after
// subtracting max(u) so beta * range(u) beyond ~700 cannot overflow.
double softmax_value(std::span<const double> u, Temperature beta);

// Entry k: w_k(u) [1 + beta (u_k - sm(u))] with w_k = e^{beta u_k}/sum e^{beta u_j}.
// Entries sum to 1; each is bounded by 1 + log N in magnitude.
Vec softmax_grad(std::span<const double> u, Temperature beta);

// Symmetric N x N matrix with operator norm at most 6 beta + 4 beta log N.
Matrix softmax_hessian(std::span<const double> u, Temperature beta);

// Hard-max share: entry k is 1/|A| when u_k >= max(u) - tie_tol, else 0.
// The overload without a tolerance uses 1e-12 * max(1, |max(u)|).
Vec argmax_share(std::span<const double> u, double tie_tol);
Vec argmax_share(std::span<const double> u);

// Log-sum-exp smoother (1/beta) log sum_i e^{beta u_i}; requires beta > 0.
// Satisfies max(u) <= result <= max(u) + log(N)/beta.
double softplus_max(std::span<const double> u, Temperature beta);

// sum_i gap_i e^{-beta gap_i}; with gap_i = max(u) - u_i this upper-bounds
// max(u) - sm_beta(u).
double bias_envelope(std::span<const double> gaps, Temperature beta);

// Envelope (H Gamma(1+delta) + 1) (1/beta)^(1+delta) for E[U e^{-beta U}]
// under the polynomial density condition; requires beta > 0.
double margin_bias_rate(const MarginParams& m, Temperature beta);

// Helper: gaps_i = max(u) - u_i.
Vec suboptimality_gaps(std::span<const double> u);

}  // namespace maxval
