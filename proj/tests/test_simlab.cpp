#include <cmath>
#include <random>

#include "doctest.h"
#include "maxval/errors.hpp"
#include "maxval/quadrature.hpp"
#include "maxval/rng.hpp"
#include "maxval/simlab.hpp"

using namespace maxval;

namespace {

DgpSpec binary_spec(double noise = 0.3) {
  DgpSpec s;
  s.family = DgpFamily::binary_uniform;
  s.noise_sd = noise;
  return s;
}

DgpSpec delta_spec(double delta, double p0, double noise = 0.3) {
  DgpSpec s;
  s.family = DgpFamily::delta_family;
  s.delta = delta;
  s.c = 1.0;
  s.p0 = p0;
  s.noise_sd = noise;
  return s;
}

DgpSpec random_iv_spec(std::uint64_t seed, std::size_t n_cells) {
  std::mt19937_64 rng = make_stream(seed, 0x697666ull);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  DgpSpec s;
  s.family = DgpFamily::iv_discrete;
  double total = 0.0;
  for (std::size_t c = 0; c < n_cells; ++c) {
    IvCell cell;
    cell.prob = 0.5 + unif(rng);
    total += cell.prob;
    cell.p_v1 = 0.25 + 0.5 * unif(rng);
    double tsum = 0.0;
    for (auto& row : cell.type_prob) {
      for (double& p : row) tsum += p = -std::log(unif(rng));
    }
    for (auto& row : cell.type_prob) {
      for (double& p : row) p /= tsum;
    }
    s.iv_cells.push_back(cell);
  }
  for (IvCell& cell : s.iv_cells) cell.prob /= total;
  return s;
}

}  // namespace

TEST_SUITE("simlab") {

TEST_CASE("binary_uniform: surfaces, propensities, and the analytic target") {
  const PolicyDgp dgp(binary_spec());
  CHECK(dgp.q_true(1, {0.3}) == doctest::Approx(0.7));
  CHECK(dgp.q_true(2, {0.3}) == doctest::Approx(0.3));
  CHECK(dgp.tau_true({0.3}) == doctest::Approx(-0.4));
  CHECK(dgp.p_true({0.9}) == Vec{0.5, 0.5});
  CHECK(true_value(binary_spec()) == doctest::Approx(0.75));
  // quadrature route agrees with the analytic value
  const double quad = integrate([](double x) { return std::max(x, 1.0 - x); }, 0.0, 1.0,
                                QuadOptions{1e-12, 20000})
                          .value;
  CHECK(quad == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("binary_uniform: |tau| is uniform, so delta=1, c=1, H=1") {
  const PolicyDgp dgp(binary_spec(0.0));
  std::mt19937_64 rng = make_stream(31, 0);
  const Dataset data = dgp.sample(200000, rng);
  // empirical CDF of |tau|(X) at a few points vs the U(0,1) CDF
  for (double t : {0.2, 0.5, 0.8}) {
    double frac = 0.0;
    for (const Observation& z : data.rows) {
      if (std::abs(dgp.tau_true(z.x)) <= t) frac += 1.0;
    }
    frac /= static_cast<double>(data.size());
    CHECK(std::abs(frac - t) < 0.01);
  }
}

TEST_CASE("delta_family: non-responder mass and the analytic value") {
  const DgpSpec spec = delta_spec(1.0, 0.4);
  const PolicyDgp dgp(spec);
  std::mt19937_64 rng = make_stream(32, 0);
  const Dataset data = dgp.sample(100000, rng);
  double zero_frac = 0.0;
  for (const Observation& z : data.rows) {
    if (dgp.tau_true(z.x) == 0.0) zero_frac += 1.0;
  }
  zero_frac /= static_cast<double>(data.size());
  CHECK(std::abs(zero_frac - 0.4) < 0.01);

  // V* = E[Q0] + (1 - p0)/2 * c * delta / (1 + delta); E[Q0] = 1/2 for the
  // sine baseline because the x1 factor integrates to zero
  for (double delta : {0.5, 1.0, 2.0}) {
    for (double p0 : {0.0, 0.4, 0.8}) {
      const double expected = 0.5 + 0.5 * (1.0 - p0) * delta / (1.0 + delta);
      CHECK(true_value(delta_spec(delta, p0)) == doctest::Approx(expected).epsilon(1e-8));
    }
  }
}

TEST_CASE("smoothed value: uniform average at beta=0 and the max in the limit") {
  CHECK(smoothed_value(binary_spec(), Temperature{0.0}) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(smoothed_value(binary_spec(), Temperature{4000.0}) ==
        doctest::Approx(0.75).epsilon(1e-4));
  const DgpSpec d = delta_spec(1.0, 0.4);
  CHECK(smoothed_value(d, Temperature{4000.0}) ==
        doctest::Approx(true_value(d)).epsilon(1e-4));
}

TEST_CASE("sandwich: V_beta <= V* with the envelope controlling the gap") {
  for (const DgpSpec& spec : {binary_spec(), delta_spec(0.5, 0.4), delta_spec(2.0, 0.0)}) {
    const double vstar = true_value(spec);
    for (double beta : {2.0, 8.0, 32.0, 128.0}) {
      const double vbeta = smoothed_value(spec, Temperature{beta});
      const double envelope = envelope_value(spec, Temperature{beta});
      CHECK(vbeta <= vstar + 1e-10);
      CHECK(vstar - vbeta <= envelope + 1e-10);
      // two routes to the bias agree
      CHECK(smoothing_bias(spec, Temperature{beta}) ==
            doctest::Approx(vstar - vbeta).epsilon(1e-4).scale(1.0));
    }
  }
}

TEST_CASE("bias decay: slope matches -(1+delta) for the delta family") {
  const Vec betas{4, 8, 16, 32, 64, 128, 256};
  for (double delta : {0.5, 1.0, 2.0}) {
    const BiasDecay result = bias_decay_experiment(delta_spec(delta, 0.4), betas);
    CHECK(std::abs(result.slope - (-(1.0 + delta))) <= 0.3);
    CHECK(result.points_used >= 2);
  }
}

TEST_CASE("bias decay: hard-margin designs decay faster than any polynomial") {
  // all gaps >= 0.5: bias <= gap * e^{-beta gap}
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {DiscreteCell{0.5, {1.0, 0.5}, {0.5, 0.5}},
                DiscreteCell{0.5, {0.2, 1.0}, {0.5, 0.5}}};
  for (double beta : {8.0, 16.0, 32.0}) {
    const double bias = smoothing_bias(spec, Temperature{beta});
    CHECK(bias <= 2.0 * 0.8 * std::exp(-beta * 0.5));
  }
  // the grid collapses below the 1e-12 floor quickly, so the slope fit errors
  const Vec betas{64, 128, 256, 512};
  CHECK_THROWS_AS(bias_decay_experiment(spec, betas), NumericError);
}

TEST_CASE("discrete_exact: orthogonality probe is flat, plug-in is not") {
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {
      DiscreteCell{0.15, {0.0, 0.0}, {0.3, 0.7}},
      DiscreteCell{0.2, {1.0, 1.0}, {0.5, 0.5}},
      DiscreteCell{0.2, {2.0, 0.0}, {0.7, 0.3}},
      DiscreteCell{0.15, {0.0, 2.5}, {0.6, 0.4}},
      DiscreteCell{0.1, {1.5, 1.5}, {0.45, 0.55}},
      DiscreteCell{0.2, {3.0, 0.5}, {0.25, 0.75}},
  };
  for (double beta : {1.0, 10.0, 100.0}) {
    const OrthoProbe probe = orthogonality_probe(spec, Temperature{beta}, 5, 1e-4, 2024);
    CHECK(probe.max_abs_derivative <= 1e-8);
    CHECK(plugin_probe(spec, Temperature{beta}, 1e-4) > 1e-3);
  }
}

TEST_CASE("discrete_exact: zero direction gives a zero derivative") {
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {DiscreteCell{1.0, {0.5, 1.5}, {0.5, 0.5}}};
  const OrthoProbe probe =
      orthogonality_probe(spec, Temperature{5.0}, 3, 1e-4, 7, /*amplitude=*/0.0);
  CHECK(probe.max_abs_derivative == 0.0);
}

TEST_CASE("discrete_exact: sampled mean matches the exact smoothed mean") {
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {
      DiscreteCell{0.4, {0.2, 0.9}, {0.4, 0.6}},
      DiscreteCell{0.6, {1.1, 0.3}, {0.55, 0.45}},
  };
  spec.noise_sd = 0.2;
  const PolicyDgp dgp(spec);
  const Temperature beta{6.0};
  const double exact = smoothed_value(spec, beta);
  std::mt19937_64 rng = make_stream(33, 0);
  const std::size_t n = 200000;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation z = dgp.draw(rng);
    mean += score_policy_canonical(dgp.q_vector(z.x), dgp.p_true(z.x), z.a, z.y, beta);
  }
  mean /= static_cast<double>(n);
  CHECK(mean == doctest::Approx(exact).epsilon(0.01));
}

TEST_CASE("park diagnostic: constant scores give zero variance everywhere") {
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {DiscreteCell{1.0, {0.8, 0.8}, {0.5, 0.5}}};
  spec.noise_sd = 0.0;
  const Vec betas{1.0, 4.0, 16.0};
  const ParkCurve curve = park_variance_diagnostic(spec, betas, 2000, 5);
  for (double v : curve.variance) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("park diagnostic: scaled variance collapses on binary_uniform") {
  const Vec betas{8.0, 32.0, 128.0};
  const ParkCurve curve = park_variance_diagnostic(binary_spec(), betas, 40000, 6);
  CHECK(curve.first_last_ratio > 50.0);
  // unscaled variance stabilizes
  CHECK(std::abs(curve.variance[1] - curve.variance[2]) <=
        0.10 * std::min(curve.variance[1], curve.variance[2]));
}

TEST_CASE("iv_discrete: joint cells sum to one and the bound is valid") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull}) {
    const DgpSpec spec = random_iv_spec(seed, 3);
    const IvDgp dgp(spec);
    for (std::size_t cell = 0; cell < spec.iv_cells.size(); ++cell) {
      for (int v = 0; v < 2; ++v) {
        double sum = 0.0;
        for (int y = 0; y < 2; ++y) {
          for (int a = 0; a < 2; ++a) sum += dgp.q_true(y, a, {double(cell)}, v);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    const double ate = dgp.exact_ate();
    CHECK(dgp.exact_bound(BpSide::lower) <= ate + 1e-12);
    CHECK(dgp.exact_bound(BpSide::upper) >= ate - 1e-12);
  }
}

TEST_CASE("iv_discrete: sampled frequencies match the counterfactual tables") {
  const DgpSpec spec = random_iv_spec(9, 2);
  const IvDgp dgp(spec);
  std::mt19937_64 rng = make_stream(34, 0);
  const IvDataset data = dgp.sample(200000, rng);
  // empirical P(Y=y, A=a | cell, v) vs q_true
  for (int cell = 0; cell < 2; ++cell) {
    for (int v = 0; v < 2; ++v) {
      double n_cv = 0.0;
      double count[2][2] = {{0, 0}, {0, 0}};
      for (const IvObservation& z : data.rows) {
        if (static_cast<int>(z.x[0]) == cell && z.v == v) {
          n_cv += 1.0;
          count[z.y][z.a] += 1.0;
        }
      }
      for (int y = 0; y < 2; ++y) {
        for (int a = 0; a < 2; ++a) {
          CHECK(std::abs(count[y][a] / n_cv - dgp.q_true(y, a, {double(cell)}, v)) < 0.02);
        }
      }
    }
  }
}

TEST_CASE("iv_discrete: general-score orthogonality probe") {
  const DgpSpec spec = random_iv_spec(10, 3);
  for (double beta : {1.0, 4.0}) {
    const OrthoProbe probe =
        orthogonality_probe_bp(spec, Temperature{beta}, 5, 1e-4, 11, 0.1);
    CHECK(probe.max_abs_derivative <= 1e-8);
  }
}

TEST_CASE("run_monte_carlo: degenerate outcomes are covered exactly") {
  DgpSpec spec;
  spec.family = DgpFamily::discrete_exact;
  spec.cells = {DiscreteCell{1.0, {0.9, 0.9}, {0.5, 0.5}}};
  spec.noise_sd = 0.0;
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  cfg.outcome_spec.amplitude = 0.0;
  cfg.propensity_spec.kind = LearnerKind::oracle_noise;
  McConfig mc;
  mc.n = 100;
  mc.reps = 20;
  const McReport report = run_monte_carlo(spec, cfg, mc);
  CHECK(report.coverage == doctest::Approx(1.0));
  CHECK(report.failures == 0);
  CHECK(report.true_value == doctest::Approx(0.9));
}

TEST_CASE("run_monte_carlo: reproducible bit-for-bit and insensitive to threading") {
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  cfg.outcome_spec.rate = 0.45;
  cfg.outcome_spec.amplitude = 0.5;
  cfg.propensity_spec.kind = LearnerKind::oracle_noise;
  McConfig mc;
  mc.n = 200;
  mc.reps = 16;
  mc.seed = 77;
  const McReport a = run_monte_carlo(binary_spec(), cfg, mc);
  const McReport b = run_monte_carlo(binary_spec(), cfg, mc);
  McConfig serial = mc;
  serial.parallel = false;
  const McReport c = run_monte_carlo(binary_spec(), cfg, serial);
  CHECK(a.coverage == b.coverage);
  CHECK(a.mean_bias == b.mean_bias);
  CHECK(a.rmse == c.rmse);
  CHECK(a.ks_distance == c.ks_distance);
  REQUIRE(a.standardized_errors.size() == c.standardized_errors.size());
  for (std::size_t i = 0; i < a.standardized_errors.size(); ++i) {
    CHECK(a.standardized_errors[i] == c.standardized_errors[i]);
  }
}

TEST_CASE("run_monte_carlo: coverage tolerates any non-responder mass") {
  for (double p0 : {0.0, 0.4}) {
    CrossFitConfig cfg;
    cfg.outcome_spec.kind = LearnerKind::oracle_noise;
    cfg.outcome_spec.rate = 0.45;
    cfg.outcome_spec.amplitude = 0.25;
    cfg.propensity_spec.kind = LearnerKind::oracle_noise;
    McConfig mc;
    mc.n = 2000;
    mc.reps = 100;
    mc.seed = 21;
    const McReport r = run_monte_carlo(delta_spec(1.0, p0), cfg, mc);
    CHECK(r.coverage >= 0.88);  // binomial(100, .95) minus 3 sd
    CHECK(r.failures == 0);
  }
}

TEST_CASE("run_monte_carlo: loose coverage sanity at small n") {
  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
  cfg.outcome_spec.rate = 0.45;
  cfg.outcome_spec.amplitude = 0.5;
  cfg.propensity_spec.kind = LearnerKind::oracle_noise;
  McConfig mc;
  mc.n = 500;
  mc.reps = 60;
  mc.seed = 5;
  const McReport report = run_monte_carlo(binary_spec(), cfg, mc);
  CHECK(report.coverage >= 0.80);
  CHECK(report.failures == 0);
  CHECK(std::abs(report.mean_bias) < 0.05);
}

TEST_CASE("ks distance: small for normal draws, large for shifted ones") {
  std::mt19937_64 rng = make_stream(35, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec z(2000);
  for (double& v : z) v = gauss(rng);
  CHECK(ks_distance_normal(z) < 0.05);
  for (double& v : z) v += 1.0;
  CHECK(ks_distance_normal(z) > 0.3);
}

TEST_CASE("oracle_limit_variance: matches the closed-form decomposition") {
  // Var[Psi*] = Var[max(X, 1-X)] + 2 sigma^2 for binary_uniform with p = 1/2
  const double expected = 1.0 / 48.0 + 2.0 * 0.3 * 0.3;
  const double got = oracle_limit_variance(binary_spec(0.3), 400000, 12);
  CHECK(got == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("DgpSpec validation rejects malformed designs") {
  DgpSpec bad;
  bad.family = DgpFamily::delta_family;
  bad.p0 = 1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  DgpSpec ragged;
  ragged.family = DgpFamily::discrete_exact;
  ragged.cells = {DiscreteCell{1.0, {0.1, 0.2}, {0.5, 0.4}}};  // p sums to 0.9
  CHECK_THROWS_AS(ragged.validate(), InvalidArgument);
  CHECK_THROWS_AS(PolicyDgp{random_iv_spec(1, 2)}, InvalidArgument);
  CHECK_THROWS_AS(IvDgp{binary_spec()}, InvalidArgument);
}

}  // TEST_SUITE
