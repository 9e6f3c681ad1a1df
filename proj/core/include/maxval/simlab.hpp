#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>

#include "maxval/dataset.hpp"
#include "maxval/estimator.hpp"
#include "maxval/irregular.hpp"
#include "maxval/scores.hpp"

namespace maxval {

enum class DgpFamily {
  binary_uniform,
  delta_family,
  discrete_exact,
  n_action_gaussian,
  iv_discrete,
};

enum class BaselineShape { constant_half, sine };

// One covariate cell of a finite-support policy design: population
// expectations over these designs are exact finite sums.
struct DiscreteCell {
  double prob = 0.0;
  Vec q;  // Q(a, cell), one entry per action
  Vec p;  // p(a | cell)
};

// One covariate cell of a discrete IV design, described by its joint
// distribution over compliance types (A(0), A(1)) and outcome types
// (Y(0), Y(1)). Row index encodes 2 A(0) + A(1); column 2 Y(0) + Y(1).
struct IvCell {
  double prob = 0.0;
  double p_v1 = 0.5;
  std::array<std::array<double, 4>, 4> type_prob{};
};

struct DgpSpec {
  DgpFamily family = DgpFamily::binary_uniform;
  double noise_sd = 0.3;  // outcomes get bounded uniform noise with this sd

  // delta_family: |tau(x)| = c * x1^(1/delta) on the responder region,
  // point mass p0 of non-responders, baseline Q0 shape on [0,1]^2.
  double delta = 1.0;
  double c = 1.0;
  double p0 = 0.0;
  BaselineShape baseline = BaselineShape::sine;

  // n_action_gaussian: Q(a, x) = base[a] + amp[a] sin(2 pi x + phase[a])
  Vec base;
  Vec amp;
  Vec phase;

  std::vector<DiscreteCell> cells;
  std::vector<IvCell> iv_cells;

  void validate() const;
  bool is_iv() const { return family == DgpFamily::iv_discrete; }
  int n_actions() const;
  double bound() const;  // declared |Y| bound B
};

// Sampler plus true surfaces for the policy families.
class PolicyDgp {
 public:
  explicit PolicyDgp(DgpSpec spec);

  Observation draw(std::mt19937_64& rng) const;
  Dataset sample(std::size_t n, std::mt19937_64& rng) const;

  double q_true(int a, const Vec& x) const;
  Vec q_vector(const Vec& x) const;
  Vec p_true(const Vec& x) const;
  double tau_true(const Vec& x) const;  // two-action families only

  int n_actions() const { return spec_.n_actions(); }
  const DgpSpec& spec() const { return spec_; }

  OutcomeSurface truth_surface() const;
  PropensityModel truth_propensity() const;

 private:
  DgpSpec spec_;
};

// Sampler plus exact counterfactual bookkeeping for the IV design.
class IvDgp {
 public:
  explicit IvDgp(DgpSpec spec);

  IvObservation draw(std::mt19937_64& rng) const;
  IvDataset sample(std::size_t n, std::mt19937_64& rng) const;

  double q_true(int y, int a, const Vec& x, int v) const;
  double p_instrument(const Vec& x) const;
  QJointSurface truth_qjoint() const;

  double exact_ate() const;
  // E[max_l psi_l(X; q*)] by enumeration over cells; the upper side applies
  // the negated-outcome transformation.
  double exact_bound(BpSide side) const;
  Vec cell_scores(std::size_t cell, BpSide side) const;
  // smallest positive sub-optimality gap among the cell score vectors
  double min_positive_gap(BpSide side) const;

  const DgpSpec& spec() const { return spec_; }

 private:
  DgpSpec spec_;
};

// V* = E[max_l Q(l, X)] (analytic where available, adaptive quadrature
// otherwise; the IV family returns the exact lower Balke-Pearl bound).
double true_value(const DgpSpec& spec);

// V_beta = E[sm_beta{Q(., X)}], same evaluation strategy.
double smoothed_value(const DgpSpec& spec, Temperature beta);

// E[max - sm] computed as a single integral/sum of the pointwise gap, so the
// result keeps relative precision even when the bias is tiny.
double smoothing_bias(const DgpSpec& spec, Temperature beta);

// E[sum_k gap_k e^{-beta gap_k}] with gap_k = max_l Q(l,X) - Q(k,X).
double envelope_value(const DgpSpec& spec, Temperature beta);

struct BiasDecay {
  Vec betas;          // points that survived the 1e-12 floor
  Vec bias;
  double slope = 0.0;       // log-log fit over the largest decade
  double intercept = 0.0;
  Vec residuals;
  int points_used = 0;
};

BiasDecay bias_decay_experiment(const DgpSpec& spec, std::span<const double> betas);

struct ParkCurve {
  Vec betas;
  Vec variance;         // Var[Psi^beta(Z; Q*, alpha^beta)]
  Vec scaled_variance;  // Var[(1/beta) Psi^beta]
  double first_last_ratio = 0.0;
};

// Monte-Carlo scaled-variance curve with common random draws across the
// beta grid.
ParkCurve park_variance_diagnostic(const DgpSpec& spec, std::span<const double> betas,
                                   std::size_t n_mc, std::uint64_t seed);

struct OrthoProbe {
  double max_abs_derivative = 0.0;
  Vec per_direction;
};

// Exact-population central difference of the smoothed debiased score in
// random bounded Q-directions (discrete_exact designs only).
OrthoProbe orthogonality_probe(const DgpSpec& spec, Temperature beta,
                               int n_directions, double step, std::uint64_t seed,
                               double amplitude = 1.0);

// The same probe without the correction term, along the all-ones direction;
// demonstrates the non-orthogonality of the naive plug-in.
double plugin_probe(const DgpSpec& spec, Temperature beta, double step);

// General-score orthogonality probe in q-directions on a discrete IV design.
OrthoProbe orthogonality_probe_bp(const DgpSpec& spec, Temperature beta,
                                  int n_directions, double step, std::uint64_t seed,
                                  double amplitude = 0.1);

struct McConfig {
  std::size_t n = 1000;
  int reps = 100;
  std::uint64_t seed = 1;
  bool parallel = true;
};

struct McReport {
  int reps = 0;
  int failures = 0;
  double true_value = 0.0;
  double coverage = 0.0;
  double mean_bias = 0.0;
  double rmse = 0.0;
  Vec standardized_errors;  // sqrt(n) (v_hat - V*) / sqrt(sigma_hat), per rep
  double ks_distance = 0.0;
  double mean_sigma_hat = 0.0;
  double beta_n = 0.0;
  double runtime_seconds = 0.0;
};

// Repeated synthetic-data estimation. Per-rep RNG streams are derived by
// counter-based splitting, so results do not depend on scheduling. With an
// oracle_noise outcome spec the nuisances are built from the DGP truth; the
// propensity (or instrument) model is then the known design.
McReport run_monte_carlo(const DgpSpec& spec, const CrossFitConfig& cfg,
                         const McConfig& mc);

// Var[Psi*(Z; Q*, alpha*)] by plain Monte Carlo with the true surfaces.
double oracle_limit_variance(const DgpSpec& spec, std::size_t n_mc,
                             std::uint64_t seed);

// Kolmogorov-Smirnov distance of a sample to the standard normal.
double ks_distance_normal(std::span<const double> sample);

}  // namespace maxval
