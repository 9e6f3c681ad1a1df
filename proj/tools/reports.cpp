#include "reports.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace maxval::cli {

namespace {

const char* kReportVersion = "1";

std::string kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::knn: return "knn";
    case LearnerKind::ridge_poly: return "ridge_poly";
    case LearnerKind::empirical_bin: return "empirical_bin";
    case LearnerKind::oracle_noise: return "oracle_noise";
  }
  return "?";
}

std::string growth_name(Growth growth) {
  switch (growth) {
    case Growth::loglog: return "loglog";
    case Growth::sqrtlog: return "sqrtlog";
    case Growth::constant_one: return "constant-one";
  }
  return "?";
}

}  // namespace

nlohmann::json learner_to_json(const LearnerSpec& spec) {
  nlohmann::json j;
  j["kind"] = kind_name(spec.kind);
  switch (spec.kind) {
    case LearnerKind::knn: j["k"] = spec.k; break;
    case LearnerKind::ridge_poly:
      j["degree"] = spec.degree;
      j["penalty"] = spec.penalty;
      break;
    case LearnerKind::empirical_bin: j["bins"] = spec.bins; break;
    case LearnerKind::oracle_noise:
      j["rate"] = spec.rate;
      j["amplitude"] = spec.amplitude;
      j["direction_seed"] = spec.direction_seed;
      break;
  }
  return j;
}

nlohmann::json meta_to_json(const RunMeta& meta) {
  nlohmann::json j;
  j["version"] = kReportVersion;
  j["command"] = meta.command;
  j["seed"] = meta.seed;
  j["folds"] = meta.cfg.folds;
  j["ci_level"] = meta.cfg.ci_level;
  j["eta"] = meta.cfg.eta;
  j["delta"] = meta.cfg.smoothing.delta;
  j["beta0"] = meta.cfg.smoothing.beta0;
  j["growth"] = growth_name(meta.cfg.smoothing.growth);
  j["outcome_learner"] = learner_to_json(meta.cfg.outcome_spec);
  j["propensity_learner"] = learner_to_json(meta.cfg.propensity_spec);
  j["representer"] =
      meta.cfg.representer == RepresenterMode::canonical ? "canonical" : "direct";
  return j;
}

nlohmann::json report_to_json(const EstimateReport& report, const RunMeta& meta) {
  nlohmann::json j;
  j["meta"] = meta_to_json(meta);
  j["n"] = report.n;
  j["beta_n"] = report.beta_n;
  j["v_hat"] = report.v_hat;
  j["sigma_hat"] = report.sigma_hat;
  j["ci_low"] = report.ci_low;
  j["ci_high"] = report.ci_high;
  j["growth_condition_violated"] = report.growth_condition_violated;
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldDiagnostics& d : report.per_fold) {
    folds.push_back({{"fold", d.fold},
                     {"size", d.size},
                     {"mean_score", d.mean_score},
                     {"outcome_clamp_events", d.outcome_clamp_events},
                     {"propensity_clip_events", d.propensity_clip_events}});
  }
  j["per_fold"] = folds;
  if (!report.per_obs_scores.empty()) j["per_obs_scores"] = report.per_obs_scores;
  if (!report.warnings.empty()) j["warnings"] = report.warnings;
  return j;
}

nlohmann::json mc_report_to_json(const McReport& report, const RunMeta& meta) {
  nlohmann::json j;
  j["meta"] = meta_to_json(meta);
  j["reps"] = report.reps;
  j["failures"] = report.failures;
  j["true_value"] = report.true_value;
  j["coverage"] = report.coverage;
  j["mean_bias"] = report.mean_bias;
  j["rmse"] = report.rmse;
  j["ks_distance"] = report.ks_distance;
  j["mean_sigma_hat"] = report.mean_sigma_hat;
  j["beta_n"] = report.beta_n;
  j["runtime_seconds"] = report.runtime_seconds;
  j["standardized_errors"] = report.standardized_errors;
  return j;
}

void write_curve_csv(std::ostream& out, std::span<const double> betas,
                     std::span<const double> values, const std::string& value_name) {
  out << "beta," << value_name << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    out << betas[i] << "," << values[i] << "\n";
  }
}

void write_curve_svg(std::ostream& out, std::span<const double> betas,
                     std::span<const double> values, const std::string& title) {
  const int w = 480, h = 320, margin = 40;
  auto log_range = [](std::span<const double> v) {
    double lo = 1e300, hi = -1e300;
    for (double x : v) {
      if (x > 0.0) {
        lo = std::min(lo, std::log10(x));
        hi = std::max(hi, std::log10(x));
      }
    }
    if (hi <= lo) hi = lo + 1.0;
    return std::pair<double, double>{lo, hi};
  };
  const auto [bx_lo, bx_hi] = log_range(betas);
  const auto [by_lo, by_hi] = log_range(values);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << w / 2 << "' y='16' text-anchor='middle' font-size='12'>" << title
      << "</text>\n<polyline fill='none' stroke='black' stroke-width='1.5' points='";
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0) || !(values[i] > 0.0)) continue;
    const double px = margin + (std::log10(betas[i]) - bx_lo) / (bx_hi - bx_lo) *
                                   (w - 2 * margin);
    const double py = h - margin - (std::log10(values[i]) - by_lo) / (by_hi - by_lo) *
                                       (h - 2 * margin);
    out << px << "," << py << " ";
  }
  out << "'/>\n</svg>\n";
}

}  // namespace maxval::cli
