#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <utility>

#include "maxval/dataset.hpp"
#include "maxval/softmax.hpp"

namespace maxval {

// g_k : W -> R^{d_k}, a nuisance regression evaluated at an extended
// covariate vector w. Each problem instantiation owns its packing convention
// for w (policy value: w = [a, x...]; IV bounds: w = [x..., v]).
using NuisanceFn = std::function<Vec(const Vec& w)>;
using RepresenterFn = std::function<Vec(const Vec& w)>;

// One observation in the general framework, split into the nested views
// x (covariates) within w (extended features) within z (everything).
struct GenericObs {
  Vec z;
  Vec x;
  Vec w;
};

// A constituent score psi_k with its conditional Riesz representer zeta_k and
// regression target U_k. eval must be affine or twice differentiable in g_k
// along any direction; gamma is the declared mean-squared-continuity
// exponent.
struct ConstituentScore {
  std::function<double(const Vec& x, const NuisanceFn& g)> eval;
  std::function<Vec(const Vec& w)> riesz;
  std::function<Vec(const Vec& z)> target;
  int dim = 1;
  double ms_continuity_exponent = 1.0;
};

// General smoothed debiased score
//   sm_beta{psi_l(x; g_l)} + sum_l alpha_l(w)^T (u_l - g_l(w)).
double score_irregular(const GenericObs& obs,
                       std::span<const ConstituentScore> scores,
                       std::span<const NuisanceFn> g,
                       std::span<const RepresenterFn> alpha, Temperature beta);

// alpha_k(w) = d_k sm_beta(psi_at_x) * zeta_k(w), one vector per score.
std::vector<Vec> riesz_irregular(Temperature beta, std::span<const double> psi_at_x,
                                 std::span<const Vec> zeta_at_w);

// Probe of the ConstituentScore contract: max |second difference| of
// eval along a direction, which is ~0 for affine scores.
double second_difference_probe(const ConstituentScore& score, const Vec& x,
                               const NuisanceFn& g, const NuisanceFn& direction,
                               double step);

// ---------------------------------------------------------------------------
// Balke-Pearl instantiation: eight covariate-conditional scores whose
// expected maximum lower-bounds the ATE in the binary-IV model.

// Joint cell probabilities q_{ya}(x, v) = P(Y = y, A = a | X = x, V = v).
struct QJointSurface {
  std::function<double(int y, int a, const Vec& x, int v)> q;
  std::shared_ptr<std::int64_t> clamp_events;

  double operator()(int y, int a, const Vec& x, int v) const;
};

// Lower bounds use the scores as printed; upper bounds run the same
// machinery on the negated-outcome transformation.
enum class BpSide { lower, upper };

inline constexpr int kBpScoreCount = 8;

// One q_{ya}(x, v) term of a Balke-Pearl score.
struct BpTerm {
  int y, a, v, sign;
};

// Term table for score k (0-based) and its additive constant. This is the
// single source of truth: index sets, signs, targets, and representers are
// all derived from it.
std::span<const BpTerm> bp_terms(int k);
double bp_constant(int k);

// Index set I_k: the distinct (y, a) pairs appearing in score k, in a fixed
// order. Entry i of the per-score vectors below refers to pair i of I_k.
std::span<const std::pair<int, int>> bp_index_set(int k);

// (psi_1, ..., psi_8) evaluated exactly as printed; throws InvalidArgument
// if any q value lies outside [0, 1].
Vec balke_pearl_scores(const QJointSurface& q, const Vec& x);

// Representer vectors zeta_k(x, v_obs): per pair (y, a) in I_k the signed
// inverse-instrument-propensity sgn_k(y, a, v_obs) / p(v_obs | x), zero when
// the pair does not appear at the observed instrument arm.
std::array<Vec, kBpScoreCount> balke_pearl_riesz(
    const Vec& x, int v_obs, const std::function<double(const Vec&)>& p_instrument_1,
    double eta = 0.01);

// Targets U_k = (1{Y = y, A = a} : (y, a) in I_k).
std::array<Vec, kBpScoreCount> balke_pearl_targets(const IvObservation& z);

// Nuisance vectors g_k(w) = (q_{ya}(x, v) : (y, a) in I_k).
std::array<Vec, kBpScoreCount> balke_pearl_nuisance_at(const QJointSurface& q,
                                                       const Vec& x, int v);

// Per-observation smoothed debiased score for the Balke-Pearl bound.
double score_balke_pearl(const IvObservation& z, const QJointSurface& q,
                         const std::function<double(const Vec&)>& p_instrument_1,
                         Temperature beta, double eta = 0.01);

}  // namespace maxval
