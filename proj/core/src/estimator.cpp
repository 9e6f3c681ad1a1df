#include "maxval/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "maxval/errors.hpp"
#include "maxval/rng.hpp"

namespace maxval {

namespace {

// Neumaier-compensated sum: keeps means of constant score vectors exact, so
// degenerate confidence intervals collapse onto the exact value.
double compensated_sum(std::span<const double> xs) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

}  // namespace

double beta_schedule(std::int64_t n, const SmoothingConfig& cfg) {
  if (n < 1) throw InvalidArgument("beta_schedule: n must be >= 1");
  if (!(cfg.delta > 0.0) || !(cfg.beta0 > 0.0)) {
    throw InvalidArgument("beta_schedule: delta and beta0 must be positive");
  }
  const double nn = static_cast<double>(n);
  const double base = std::pow(nn, 1.0 / (2.0 * (1.0 + cfg.delta)));
  double f = 1.0;
  switch (cfg.growth) {
    case Growth::loglog: f = std::log(1.0 + std::log(1.0 + nn)); break;
    case Growth::sqrtlog: f = std::sqrt(std::log(2.0 + nn)); break;
    case Growth::constant_one: f = 1.0; break;
  }
  return cfg.beta0 * base * f;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

// Acklam's rational approximation to the inverse normal CDF, then one Halley
// refinement through erfc. Accurate to ~1e-15 over (0, 1).
double acklam(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  return x;
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw InvalidArgument("normal_quantile: p must lie in (0, 1)");
  }
  double x = acklam(p);
  // Halley step on f(x) = Phi(x) - p
  const double e = normal_cdf(x) - p;
  const double u = e * std::numbers::sqrt2 * std::sqrt(std::numbers::pi) *
                   std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

VarianceCi variance_and_ci(std::span<const double> per_obs_scores, double v_hat,
                           double level) {
  if (per_obs_scores.empty()) {
    throw InvalidArgument("variance_and_ci: empty score vector");
  }
  if (!(level > 0.0) || !(level < 1.0)) {
    throw InvalidArgument("variance_and_ci: level must lie in (0, 1)");
  }
  const double n = static_cast<double>(per_obs_scores.size());
  std::vector<double> sq(per_obs_scores.size());
  for (std::size_t i = 0; i < per_obs_scores.size(); ++i) {
    const double d = per_obs_scores[i] - v_hat;
    sq[i] = d * d;
  }
  const double sigma = compensated_sum(sq) / n;
  const double z = normal_quantile(1.0 - 0.5 * (1.0 - level));
  const double half = z * std::sqrt(sigma / n);
  return VarianceCi{sigma, v_hat - half, v_hat + half};
}

std::vector<int> crossfit_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("crossfit_folds: need at least 2 folds");
  if (n < 2 * static_cast<std::size_t>(folds)) {
    throw InsufficientData("crossfit_folds: need n >= 2K rows");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng = make_stream(seed, 0x666f6c64ull);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    fold_of[perm[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

PolicyLearners make_policy_learners(const CrossFitConfig& cfg) {
  if (cfg.outcome_spec.kind == LearnerKind::oracle_noise ||
      cfg.propensity_spec.kind == LearnerKind::oracle_noise) {
    throw InvalidArgument(
        "make_policy_learners: oracle_noise learners need a true surface; "
        "use the simulation lab");
  }
  PolicyLearners l;
  const LearnerSpec q_spec = cfg.outcome_spec;
  const LearnerSpec p_spec = cfg.propensity_spec;
  const double eta = cfg.eta;
  l.outcome = [q_spec](const Dataset& d, std::span<const std::size_t> idx) {
    return fit_outcome(d, idx, q_spec);
  };
  l.propensity = [p_spec, eta](const Dataset& d, std::span<const std::size_t> idx) {
    return fit_propensity(d, idx, p_spec, eta);
  };
  if (cfg.representer == RepresenterMode::direct) {
    const LearnerSpec aq = cfg.alpha_outcome_spec;
    const LearnerSpec ap = cfg.alpha_propensity_spec;
    l.representer = [aq, ap, eta](const Dataset& d, std::span<const std::size_t> idx,
                                  Temperature beta) {
      const OutcomeSurface q2 = fit_outcome(d, idx, aq);
      const PropensityModel p2 = fit_propensity(d, idx, ap, eta);
      return canonical_representer(q2, p2, beta);
    };
  }
  return l;
}

namespace {

struct FoldLayout {
  std::vector<int> fold_of;
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::vector<std::size_t>> complements;
};

FoldLayout layout_from(std::vector<int> fold_of, int folds) {
  FoldLayout layout;
  layout.fold_of = std::move(fold_of);
  layout.members.resize(static_cast<std::size_t>(folds));
  layout.complements.resize(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < layout.fold_of.size(); ++i) {
    for (int k = 0; k < folds; ++k) {
      if (layout.fold_of[i] == k) {
        layout.members[static_cast<std::size_t>(k)].push_back(i);
      } else {
        layout.complements[static_cast<std::size_t>(k)].push_back(i);
      }
    }
  }
  return layout;
}

FoldLayout build_folds(std::size_t n, int folds, std::uint64_t seed) {
  return layout_from(crossfit_folds(n, folds, seed), folds);
}

void finalize_report(EstimateReport& report, std::vector<double>& scores,
                     const CrossFitConfig& cfg) {
  const double v = compensated_sum(scores) / static_cast<double>(scores.size());
  const VarianceCi ci = variance_and_ci(scores, v, cfg.ci_level);
  report.v_hat = v;
  report.sigma_hat = ci.sigma_hat;
  report.ci_low = ci.ci_low;
  report.ci_high = ci.ci_high;
  report.n = scores.size();
  report.folds = cfg.folds;
  report.ci_level = cfg.ci_level;
  report.seed = cfg.seed;
  report.delta = cfg.smoothing.delta;
  report.growth_condition_violated = cfg.smoothing.growth == Growth::constant_one;
  if (cfg.keep_scores) report.per_obs_scores = std::move(scores);
}

}  // namespace

EstimateReport crossfit_policy(const Dataset& data, const CrossFitConfig& cfg,
                               const PolicyLearners& learners) {
  const std::vector<int> fold_of = crossfit_folds(data.size(), cfg.folds, cfg.seed);
  return crossfit_policy_with_folds(data, cfg, learners, fold_of);
}

EstimateReport crossfit_policy_with_folds(const Dataset& data, const CrossFitConfig& cfg,
                                          const PolicyLearners& learners,
                                          std::span<const int> fold_of) {
  if (!learners.outcome || !learners.propensity) {
    throw InvalidArgument("crossfit_policy: learners not configured");
  }
  if (cfg.representer == RepresenterMode::direct && !learners.representer) {
    throw InvalidArgument("crossfit_policy: direct representer mode needs a representer learner");
  }
  if (fold_of.size() != data.size()) {
    throw InvalidArgument("crossfit_policy: fold assignment arity mismatch");
  }
  EstimateReport report;
  report.warnings = data.validate();
  const std::size_t n = data.size();
  const FoldLayout layout =
      layout_from(std::vector<int>(fold_of.begin(), fold_of.end()), cfg.folds);
  const double beta_n = beta_schedule(static_cast<std::int64_t>(n), cfg.smoothing);
  report.beta_n = beta_n;
  const Temperature beta{beta_n};

  std::vector<double> scores(n, 0.0);
  for (int k = 0; k < cfg.folds; ++k) {
    const auto& train = layout.complements[static_cast<std::size_t>(k)];
    const auto& eval = layout.members[static_cast<std::size_t>(k)];
    NuisanceFit fit;
    fit.fold_id = k + 1;
    fit.training_size = train.size();
    try {
      fit.q_hat = learners.outcome(data, train);
      fit.p_hat = learners.propensity(data, train);
    } catch (const FitError& e) {
      std::ostringstream msg;
      msg << "fold " << (k + 1) << ": " << e.what();
      throw FitError(msg.str());
    }

    const bool direct = cfg.representer == RepresenterMode::direct;
    if (direct) fit.alpha_hat = learners.representer(data, train, beta);

    double fold_sum = 0.0;
    for (std::size_t i : eval) {
      const Observation& z = data.rows[i];
      double s;
      if (direct) {
        s = score_policy(z, fit.q_hat, fit.alpha_hat, beta);
      } else {
        const Vec qx = fit.q_hat.at(z.x);
        const Vec px = fit.p_hat.at(z.x);
        s = score_policy_canonical(qx, px, z.a, z.y, beta, cfg.eta);
      }
      scores[i] = s;
      fold_sum += s;
    }

    FoldDiagnostics diag;
    diag.fold = fit.fold_id;
    diag.size = eval.size();
    diag.mean_score = fold_sum / static_cast<double>(eval.size());
    diag.outcome_clamp_events = fit.q_hat.clamp_events ? *fit.q_hat.clamp_events : 0;
    diag.propensity_clip_events = fit.p_hat.clip_events ? *fit.p_hat.clip_events : 0;
    report.per_fold.push_back(diag);
  }
  finalize_report(report, scores, cfg);
  return report;
}

BpLearners make_bp_learners(const CrossFitConfig& cfg) {
  BpLearners l;
  const LearnerSpec q_spec = cfg.outcome_spec;
  const LearnerSpec p_spec = cfg.propensity_spec;
  const double eta = cfg.eta;
  l.qjoint = [q_spec](const IvDataset& d, std::span<const std::size_t> idx) {
    return fit_q_joint(d, idx, q_spec);
  };
  l.instrument = [p_spec, eta](const IvDataset& d, std::span<const std::size_t> idx) {
    return fit_instrument_propensity(d, idx, p_spec, eta);
  };
  return l;
}

EstimateReport crossfit_balke_pearl(const IvDataset& data, const CrossFitConfig& cfg,
                                    const BpLearners& learners, BpSide side) {
  if (!learners.qjoint || !learners.instrument) {
    throw InvalidArgument("crossfit_balke_pearl: learners not configured");
  }
  IvDataset working = data;
  working.validate();
  if (side == BpSide::upper) {
    // upper bound on E[Y(1) - Y(0)] = -(lower bound after y -> 1 - y)
    for (IvObservation& z : working.rows) z.y = 1 - z.y;
  }
  EstimateReport report;
  const std::size_t n = working.size();
  const FoldLayout layout = build_folds(n, cfg.folds, cfg.seed);
  const double beta_n = beta_schedule(static_cast<std::int64_t>(n), cfg.smoothing);
  report.beta_n = beta_n;
  const Temperature beta{beta_n};

  std::vector<double> scores(n, 0.0);
  for (int k = 0; k < cfg.folds; ++k) {
    const auto& train = layout.complements[static_cast<std::size_t>(k)];
    const auto& eval = layout.members[static_cast<std::size_t>(k)];
    QJointSurface q;
    std::function<double(const Vec&)> p1;
    try {
      q = learners.qjoint(working, train);
      p1 = learners.instrument(working, train);
    } catch (const FitError& e) {
      std::ostringstream msg;
      msg << "fold " << (k + 1) << ": " << e.what();
      throw FitError(msg.str());
    }
    double fold_sum = 0.0;
    for (std::size_t i : eval) {
      const double s = score_balke_pearl(working.rows[i], q, p1, beta, cfg.eta);
      scores[i] = s;
      fold_sum += s;
    }
    FoldDiagnostics diag;
    diag.fold = k + 1;
    diag.size = eval.size();
    diag.mean_score = fold_sum / static_cast<double>(eval.size());
    report.per_fold.push_back(diag);
  }
  finalize_report(report, scores, cfg);
  if (side == BpSide::upper) {
    report.v_hat = -report.v_hat;
    std::swap(report.ci_low, report.ci_high);
    report.ci_low = -report.ci_low;
    report.ci_high = -report.ci_high;
    for (FoldDiagnostics& d : report.per_fold) d.mean_score = -d.mean_score;
    for (double& s : report.per_obs_scores) s = -s;
  }
  return report;
}

}  // namespace maxval
