#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "maxval/dataset.hpp"
#include "maxval/irregular.hpp"
#include "maxval/nuisance.hpp"
#include "maxval/scores.hpp"

namespace maxval {

enum class Growth { loglog, sqrtlog, constant_one };

// beta_n = beta0 * n^{1/(2(1+delta))} * f(n). constant_one keeps f = 1 and is
// admitted for diagnostics only (it violates the required growth condition
// and is flagged in reports).
struct SmoothingConfig {
  double delta = 1.0;
  double beta0 = 4.0;
  Growth growth = Growth::loglog;
};

double beta_schedule(std::int64_t n, const SmoothingConfig& cfg);

enum class RepresenterMode { canonical, direct };

struct CrossFitConfig {
  int folds = 5;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  double eta = 0.01;
  SmoothingConfig smoothing;
  LearnerSpec outcome_spec;
  LearnerSpec propensity_spec;
  RepresenterMode representer = RepresenterMode::canonical;
  LearnerSpec alpha_outcome_spec;     // direct mode only
  LearnerSpec alpha_propensity_spec;  // direct mode only
  bool keep_scores = false;           // retain per-observation scores in the report
};

// Fitted nuisances for one fold, trained on the fold's complement.
struct NuisanceFit {
  OutcomeSurface q_hat;
  PropensityModel p_hat;
  RepresenterSurface alpha_hat;  // populated in direct representer mode
  int fold_id = 0;
  std::size_t training_size = 0;
};

struct FoldDiagnostics {
  int fold = 0;
  std::size_t size = 0;
  double mean_score = 0.0;
  std::int64_t outcome_clamp_events = 0;
  std::int64_t propensity_clip_events = 0;
};

struct EstimateReport {
  double v_hat = 0.0;
  double sigma_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  double beta_n = 0.0;
  double delta = 1.0;
  int folds = 0;
  double ci_level = 0.95;
  std::uint64_t seed = 0;
  bool growth_condition_violated = false;
  std::vector<FoldDiagnostics> per_fold;
  std::vector<double> per_obs_scores;
  std::vector<std::string> warnings;
};

struct VarianceCi {
  double sigma_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// sigma_hat = mean squared deviation of the scores about v_hat; the interval
// is v_hat +/- z * sqrt(sigma_hat / n) at the standard-normal quantile.
VarianceCi variance_and_ci(std::span<const double> per_obs_scores, double v_hat,
                           double level);

// Standard-normal quantile (rational approximation, refined to ~1e-15).
double normal_quantile(double p);
double normal_cdf(double x);

// Seeded uniform permutation followed by the canonical modular rule: the row
// at permuted position m lands in fold m mod K. Returns a fold id per row.
std::vector<int> crossfit_folds(std::size_t n, int folds, std::uint64_t seed);

// Fold-wise nuisance construction for the policy problem. Implementations
// receive the full dataset plus the training row indices for the fold.
struct PolicyLearners {
  std::function<OutcomeSurface(const Dataset&, std::span<const std::size_t>)> outcome;
  std::function<PropensityModel(const Dataset&, std::span<const std::size_t>)> propensity;
  // direct-representer mode: an independently fitted alpha surface
  std::function<RepresenterSurface(const Dataset&, std::span<const std::size_t>, Temperature)>
      representer;
};

// Builds data-driven learners from the config specs. Oracle-noise specs are
// rejected here; the simulation lab wires those against the true surfaces.
PolicyLearners make_policy_learners(const CrossFitConfig& cfg);

EstimateReport crossfit_policy(const Dataset& data, const CrossFitConfig& cfg,
                               const PolicyLearners& learners);

// Same estimator with an externally supplied fold assignment (one id per
// row). crossfit_policy derives the assignment from the seed and calls this.
EstimateReport crossfit_policy_with_folds(const Dataset& data, const CrossFitConfig& cfg,
                                          const PolicyLearners& learners,
                                          std::span<const int> fold_of);

struct BpLearners {
  std::function<QJointSurface(const IvDataset&, std::span<const std::size_t>)> qjoint;
  std::function<std::function<double(const Vec&)>(const IvDataset&, std::span<const std::size_t>)>
      instrument;
};

BpLearners make_bp_learners(const CrossFitConfig& cfg);

// Cross-fitted Balke-Pearl bound. The upper bound runs the lower-bound
// machinery on the negated-outcome transformation and flips the interval.
EstimateReport crossfit_balke_pearl(const IvDataset& data, const CrossFitConfig& cfg,
                                    const BpLearners& learners,
                                    BpSide side = BpSide::lower);

}  // namespace maxval
