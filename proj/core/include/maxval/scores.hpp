#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>

#include "maxval/dataset.hpp"
#include "maxval/softmax.hpp"

namespace maxval {

// Fitted or true outcome regression Q(a, x); action indices are 1-based.
// clamp_events counts predictions the learner had to pull back into its
// declared range (shared so copies of the surface keep one tally).
struct OutcomeSurface {
  std::function<double(int a, const Vec& x)> q;
  int n_actions = 0;
  double bound = 0.0;
  std::shared_ptr<std::int64_t> clamp_events;

  double operator()(int a, const Vec& x) const;  // throws NuisanceError if non-finite
  Vec at(const Vec& x) const;                    // all actions at one covariate
};

// Propensity model p(a | x) with positivity floor eta. Fits clip into
// [eta, 1 - eta]; at() verifies the floor and that entries sum to one.
struct PropensityModel {
  std::function<Vec(const Vec& x)> probs;
  int n_actions = 0;
  double eta = 0.01;
  std::shared_ptr<std::int64_t> clip_events;

  Vec at(const Vec& x) const;
};

// Debiasing weight surface alpha_k(a, x).
struct RepresenterSurface {
  std::function<double(int k, int a, const Vec& x)> alpha;
  int n_actions = 0;
};

// Representer vector for the policy-value score at one covariate:
// entry k = d_k sm_beta(q_at_x) * 1{a = k} / p_k. Only entry a can be
// nonzero. Throws PositivityError if p_a < eta.
Vec riesz_policy(Temperature beta, std::span<const double> q_at_x,
                 std::span<const double> p_at_x, int a, double eta = 0.01);

// Canonical representer built from an outcome surface and propensities.
RepresenterSurface canonical_representer(const OutcomeSurface& q,
                                         const PropensityModel& p, Temperature beta);

// Smoothed debiased policy-value score
//   sm_beta{q(., x)} + sum_l alpha_l(a, x) (y - q(a, x)).
double score_policy(const Observation& z, const OutcomeSurface& q,
                    const RepresenterSurface& alpha, Temperature beta);

// Fast path used in hot loops: the same score with the canonical representer
// computed inline from (q_at_x, p_at_x).
double score_policy_canonical(std::span<const double> q_at_x,
                              std::span<const double> p_at_x, int a, double y,
                              Temperature beta, double eta = 0.01);

// beta -> infinity limit: max_l q(l, x) + argmax-share-weighted IPW residual.
// A negative tie_tol selects the relative default of argmax_share.
double score_policy_limit(const Observation& z, const OutcomeSurface& q_true,
                          const PropensityModel& p, double tie_tol = -1.0);

// Two-action convenience score (actions coded 0/1, mapped to indices 1/2):
//   phi_beta(tau(x)) + q(0, x) + alpha(a, x) (y - q(a, x)),
// phi_beta(u) = u sigma(beta u). Equals score_policy with the canonical
// two-entry representer summed into a scalar.
double score_two_action(const Observation& z, const OutcomeSurface& q,
                        const std::function<double(int a, const Vec& x)>& alpha_scalar,
                        Temperature beta);

// phi_beta(u) = u sigma(beta u) and its derivative (exposed for tests and the
// Riesz identities of the two-action reduction).
double softmax_binary(double u, double beta);
double softmax_binary_deriv(double u, double beta);

}  // namespace maxval
