#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "maxval/errors.hpp"
#include "maxval/estimator.hpp"
#include "maxval/rng.hpp"
#include "maxval/simlab.hpp"

using namespace maxval;

namespace {

// Inverse normal CDF by bisection on erfc, the independent oracle for the
// rational approximation.
double quantile_by_bisection(double p) {
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Dataset constant_dataset(std::size_t n, double y0) {
  Dataset data;
  data.n_actions = 2;
  data.bound = std::abs(y0) + 1.0;
  std::mt19937_64 rng = make_stream(100, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    data.rows.push_back(Observation{{unif(rng)}, 1 + static_cast<int>(i % 2), y0});
  }
  return data;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("beta_schedule: closed-form spot values") {
  SmoothingConfig one;
  one.delta = 2.0;
  one.beta0 = 3.5;
  one.growth = Growth::constant_one;
  CHECK(beta_schedule(1, one) == doctest::Approx(3.5).epsilon(1e-15));

  SmoothingConfig loglog;
  loglog.delta = 1.0;
  loglog.beta0 = 1.0;
  loglog.growth = Growth::loglog;
  const double expected = 10.0 * std::log(1.0 + std::log(10001.0));
  CHECK(beta_schedule(10000, loglog) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(beta_schedule(10000, loglog) == doctest::Approx(23.234).epsilon(1e-4));

  SmoothingConfig quarter;
  quarter.delta = 1.0;
  quarter.beta0 = 2.0;
  quarter.growth = Growth::constant_one;
  CHECK(beta_schedule(16 * 500, quarter) / beta_schedule(500, quarter) ==
        doctest::Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(beta_schedule(0, loglog), InvalidArgument);
}

TEST_CASE("normal_quantile: reference values and bisection oracle") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-5));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.9599639845400545).epsilon(1e-9));
  CHECK(normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-9));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  for (double p : {1e-6, 0.01, 0.1, 0.3, 0.6, 0.9, 0.99, 1.0 - 1e-6}) {
    CHECK(normal_quantile(p) == doctest::Approx(quantile_by_bisection(p)).epsilon(1e-8));
    CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidArgument);
  CHECK_THROWS_AS(normal_quantile(1.0), InvalidArgument);
}

TEST_CASE("variance_and_ci: degenerate, two-point, and monotonicity") {
  const std::vector<double> flat(20, 0.4);
  const VarianceCi degenerate = variance_and_ci(flat, 0.4, 0.95);
  CHECK(degenerate.sigma_hat == 0.0);
  CHECK(degenerate.ci_low == 0.4);
  CHECK(degenerate.ci_high == 0.4);

  std::vector<double> half;
  for (int i = 0; i < 50; ++i) half.push_back(i % 2 == 0 ? 0.0 : 1.0);
  CHECK(variance_and_ci(half, 0.5, 0.95).sigma_hat == doctest::Approx(0.25).epsilon(1e-14));

  const VarianceCi narrow = variance_and_ci(half, 0.5, 0.90);
  const VarianceCi wide = variance_and_ci(half, 0.5, 0.99);
  CHECK(wide.ci_high - wide.ci_low > narrow.ci_high - narrow.ci_low);

  CHECK_THROWS_AS(variance_and_ci({}, 0.0, 0.95), InvalidArgument);
  CHECK_THROWS_AS(variance_and_ci(half, 0.5, 1.0), InvalidArgument);
}

TEST_CASE("crossfit_folds: disjoint cover with near-equal sizes") {
  const std::vector<int> fold_of = crossfit_folds(103, 5, 42);
  std::vector<int> counts(5, 0);
  for (int f : fold_of) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[static_cast<std::size_t>(f)];
  }
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  CHECK(*hi - *lo <= 1);
  CHECK(std::accumulate(counts.begin(), counts.end(), 0) == 103);
  CHECK(crossfit_folds(103, 5, 42) == fold_of);       // deterministic
  CHECK(crossfit_folds(103, 5, 43) != fold_of);       // seed-sensitive
  CHECK_THROWS_AS(crossfit_folds(100, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(crossfit_folds(9, 5, 1), InsufficientData);
}

TEST_CASE("crossfit_policy: constant outcomes give the constant and zero variance") {
  const Dataset data = constant_dataset(200, 1.25);
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::knn;
  cfg.outcome_spec.k = 10;
  cfg.propensity_spec.kind = LearnerKind::empirical_bin;
  cfg.propensity_spec.bins = 2;
  const EstimateReport report = crossfit_policy(data, cfg, make_policy_learners(cfg));
  CHECK(report.v_hat == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(report.sigma_hat == doctest::Approx(0.0));
  CHECK(report.ci_low == doctest::Approx(1.25));
  CHECK(report.ci_high == doctest::Approx(1.25));
  CHECK(report.per_fold.size() == 5);
  std::size_t total = 0;
  for (const FoldDiagnostics& d : report.per_fold) total += d.size;
  CHECK(total == 200);
}

TEST_CASE("crossfit_policy: permutation invariance with attached folds") {
  DgpSpec dgp_spec;
  dgp_spec.family = DgpFamily::binary_uniform;
  const PolicyDgp dgp(dgp_spec);
  std::mt19937_64 rng = make_stream(101, 0);
  const Dataset data = dgp.sample(300, rng);

  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::knn;
  cfg.outcome_spec.k = 25;
  cfg.propensity_spec.kind = LearnerKind::empirical_bin;
  cfg.propensity_spec.bins = 1;
  const PolicyLearners learners = make_policy_learners(cfg);

  const std::vector<int> folds = crossfit_folds(data.size(), cfg.folds, cfg.seed);
  const EstimateReport base = crossfit_policy_with_folds(data, cfg, learners, folds);

  // shuffle rows, moving each row's fold id with it
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Dataset shuffled = data;
  std::vector<int> shuffled_folds(data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.rows[i] = data.rows[perm[i]];
    shuffled_folds[i] = folds[perm[i]];
  }
  const EstimateReport moved =
      crossfit_policy_with_folds(shuffled, cfg, learners, shuffled_folds);
  CHECK(moved.v_hat == doctest::Approx(base.v_hat).epsilon(1e-12));
  CHECK(moved.sigma_hat == doctest::Approx(base.sigma_hat).epsilon(1e-12));
}

TEST_CASE("crossfit_policy: oracle nuisances reduce to the plain score mean") {
  DgpSpec dgp_spec;
  dgp_spec.family = DgpFamily::binary_uniform;
  const PolicyDgp dgp(dgp_spec);
  std::mt19937_64 rng = make_stream(102, 0);
  const Dataset data = dgp.sample(400, rng);

  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  cfg.outcome_spec.amplitude = 0.0;  // noise-free oracle
  cfg.propensity_spec.kind = LearnerKind::oracle_noise;
  cfg.keep_scores = true;

  PolicyLearners learners;
  const OutcomeSurface truth = dgp.truth_surface();
  const PropensityModel p_truth = dgp.truth_propensity();
  const LearnerSpec oracle_spec = cfg.outcome_spec;
  learners.outcome = [truth, oracle_spec](const Dataset&, std::span<const std::size_t> idx) {
    return fit_oracle_noise(truth, static_cast<std::int64_t>(idx.size()), oracle_spec);
  };
  learners.propensity = [p_truth](const Dataset&, std::span<const std::size_t>) {
    return p_truth;
  };
  const EstimateReport report = crossfit_policy(data, cfg, learners);

  const Temperature beta{report.beta_n};
  double mean = 0.0;
  for (const Observation& z : data.rows) {
    mean += score_policy_canonical(dgp.q_vector(z.x), dgp.p_true(z.x), z.a, z.y, beta);
  }
  mean /= static_cast<double>(data.size());
  CHECK(report.v_hat == doctest::Approx(mean).epsilon(1e-13));
}

TEST_CASE("crossfit_policy: insufficient data and bad fold counts") {
  const Dataset data = constant_dataset(8, 0.0);
  CrossFitConfig cfg;  // K = 5, n = 8 < 10
  CHECK_THROWS_AS(crossfit_policy(data, cfg, make_policy_learners(cfg)), InsufficientData);
  CrossFitConfig single;
  single.folds = 1;
  CHECK_THROWS_AS(crossfit_policy(constant_dataset(50, 0.0), single, make_policy_learners(single)),
                  InvalidArgument);
}

TEST_CASE("fold fit failures propagate with the fold named") {
  // exactly one action-2 row: its own fold trains on a complement without it
  Dataset data = constant_dataset(40, 0.5);
  for (Observation& z : data.rows) z.a = 1;
  data.rows[7].a = 2;
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::knn;
  cfg.propensity_spec.kind = LearnerKind::empirical_bin;
  cfg.propensity_spec.bins = 1;
  try {
    crossfit_policy(data, cfg, make_policy_learners(cfg));
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(std::string(e.what()).find("fold") != std::string::npos);
    CHECK(std::string(e.what()).find("action 2") != std::string::npos);
  }
}

TEST_CASE("oracle-noise estimate lands within 3 standard errors of 3/4") {
  DgpSpec dgp_spec;
  dgp_spec.family = DgpFamily::binary_uniform;
  dgp_spec.noise_sd = 0.3;
  const PolicyDgp dgp(dgp_spec);
  std::mt19937_64 rng = make_stream(104, 0);
  const Dataset data = dgp.sample(4000, rng);
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  cfg.outcome_spec.rate = 0.45;
  cfg.outcome_spec.amplitude = 0.25;
  cfg.propensity_spec.kind = LearnerKind::oracle_noise;
  PolicyLearners learners;
  const OutcomeSurface truth = dgp.truth_surface();
  const LearnerSpec os = cfg.outcome_spec;
  learners.outcome = [truth, os](const Dataset&, std::span<const std::size_t> idx) {
    return fit_oracle_noise(truth, static_cast<std::int64_t>(idx.size()), os);
  };
  const PropensityModel pt = dgp.truth_propensity();
  learners.propensity = [pt](const Dataset&, std::span<const std::size_t>) { return pt; };
  const EstimateReport report = crossfit_policy(data, cfg, learners);
  const double se = std::sqrt(report.sigma_hat / static_cast<double>(report.n));
  CHECK(std::abs(report.v_hat - 0.75) <= 3.0 * se);
}

TEST_CASE("declared-bound violations surface as report warnings") {
  Dataset data = constant_dataset(60, 5.0);
  data.bound = 1.0;  // every outcome violates the declared B
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::knn;
  cfg.outcome_spec.k = 10;
  cfg.propensity_spec.kind = LearnerKind::empirical_bin;
  cfg.propensity_spec.bins = 1;
  const EstimateReport report = crossfit_policy(data, cfg, make_policy_learners(cfg));
  REQUIRE(!report.warnings.empty());
  CHECK(report.warnings.front().find("bound") != std::string::npos);
}

TEST_CASE("make_policy_learners rejects oracle specs") {
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  CHECK_THROWS_AS(make_policy_learners(cfg), InvalidArgument);
}

TEST_CASE("direct representer mode matches canonical when fitted on the same folds") {
  DgpSpec dgp_spec;
  dgp_spec.family = DgpFamily::binary_uniform;
  const PolicyDgp dgp(dgp_spec);
  std::mt19937_64 rng = make_stream(103, 0);
  const Dataset data = dgp.sample(300, rng);

  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::knn;
  cfg.outcome_spec.k = 40;
  cfg.propensity_spec.kind = LearnerKind::empirical_bin;
  cfg.propensity_spec.bins = 1;
  const EstimateReport canonical = crossfit_policy(data, cfg, make_policy_learners(cfg));

  CrossFitConfig direct = cfg;
  direct.representer = RepresenterMode::direct;
  direct.alpha_outcome_spec = cfg.outcome_spec;
  direct.alpha_propensity_spec = cfg.propensity_spec;
  const EstimateReport report = crossfit_policy(data, direct, make_policy_learners(direct));
  CHECK(report.v_hat == doctest::Approx(canonical.v_hat).epsilon(1e-12));
}

}  // TEST_SUITE
