#pragma once

#include <cstdint>
#include <span>

#include "maxval/dataset.hpp"
#include "maxval/irregular.hpp"
#include "maxval/scores.hpp"

namespace maxval {

enum class LearnerKind { knn, ridge_poly, empirical_bin, oracle_noise };

struct LearnerSpec {
  LearnerKind kind = LearnerKind::knn;
  // knn
  int k = 5;
  // ridge_poly
  int degree = 1;
  double penalty = 0.0;
  // empirical_bin
  int bins = 8;
  // oracle_noise: L2 error is exactly amplitude * n^{-rate} by construction
  double rate = 0.45;
  double amplitude = 1.0;
  std::uint64_t direction_seed = 0;

  void validate() const;
};

// Fits Q-hat on the rows selected by idx. Deterministic given (data, idx,
// spec); predictions are clamped to the observed outcome range extended by
// 10% and clamp events are counted on the returned surface.
OutcomeSurface fit_outcome(const Dataset& data, std::span<const std::size_t> idx,
                           const LearnerSpec& spec);

// truth + amplitude * n^{-rate} * h(a, x) where h is a fixed smooth direction
// with unit L2(P_W) norm under a uniform-covariate, uniform-action design.
OutcomeSurface fit_oracle_noise(const OutcomeSurface& truth, std::int64_t n,
                                const LearnerSpec& spec);

// Fits p-hat(a | x); probabilities are clipped into [eta, 1 - eta] and
// renormalized, with clip events counted.
PropensityModel fit_propensity(const Dataset& data, std::span<const std::size_t> idx,
                               const LearnerSpec& spec, double eta = 0.01);

// Fits the IV joint-cell surface q_{ya}(x, v) per instrument stratum;
// cell probabilities are normalized to sum to one at every (x, v).
QJointSurface fit_q_joint(const IvDataset& data, std::span<const std::size_t> idx,
                          const LearnerSpec& spec);

// Fits the instrument propensity P(V = 1 | x), clipped into [eta, 1 - eta].
std::function<double(const Vec&)> fit_instrument_propensity(
    const IvDataset& data, std::span<const std::size_t> idx, const LearnerSpec& spec,
    double eta = 0.01);

}  // namespace maxval
