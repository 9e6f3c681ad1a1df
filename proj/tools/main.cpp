#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <string>

#include "CLI11.hpp"
#include "csv.hpp"
#include "maxval/errors.hpp"
#include "maxval/linalg.hpp"
#include "maxval/rng.hpp"
#include "maxval/simlab.hpp"
#include "maxval/softmax.hpp"
#include "reports.hpp"

namespace {

using namespace maxval;
using namespace maxval::cli;

constexpr int kExitOk = 0;
constexpr int kExitSchema = 2;
constexpr int kExitFit = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitCheck = 5;

void emit(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open output file: " + path);
  out << j.dump(2) << "\n";
}

struct EstimatorOptions {
  CrossFitConfig cfg;
  std::string growth = "loglog";
  std::string learner = "knn";
  std::string p_learner = "empirical_bin";

  void add_to(CLI::App* cmd) {
    cmd->add_option("--folds,-k", cfg.folds, "cross-fitting folds K")->check(CLI::Range(2, 1000));
    cmd->add_option("--seed", cfg.seed, "master seed");
    cmd->add_option("--delta", cfg.smoothing.delta, "margin exponent delta")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--beta0", cfg.smoothing.beta0, "smoothing base level")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--growth", growth, "beta growth: loglog | sqrtlog | constant-one");
    cmd->add_option("--ci-level", cfg.ci_level, "confidence level")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--eta", cfg.eta, "positivity floor");
    cmd->add_option("--learner", learner, "outcome learner: knn | ridge_poly | empirical_bin | oracle_noise");
    cmd->add_option("--p-learner", p_learner, "propensity learner: knn | empirical_bin | oracle_noise");
    cmd->add_option("--knn-k", cfg.outcome_spec.k, "knn neighbor count");
    cmd->add_option("--degree", cfg.outcome_spec.degree, "ridge_poly degree");
    cmd->add_option("--penalty", cfg.outcome_spec.penalty, "ridge penalty");
    cmd->add_option("--bins", cfg.outcome_spec.bins, "empirical_bin bin count");
    cmd->add_option("--rate", cfg.outcome_spec.rate, "oracle_noise rate r");
    cmd->add_option("--amplitude", cfg.outcome_spec.amplitude, "oracle_noise amplitude");
  }

  LearnerKind parse_kind(const std::string& name) const {
    if (name == "knn") return LearnerKind::knn;
    if (name == "ridge_poly") return LearnerKind::ridge_poly;
    if (name == "empirical_bin") return LearnerKind::empirical_bin;
    if (name == "oracle_noise") return LearnerKind::oracle_noise;
    throw InvalidArgument("unknown learner kind: " + name);
  }

  CrossFitConfig resolve() {
    if (growth == "loglog") {
      cfg.smoothing.growth = Growth::loglog;
    } else if (growth == "sqrtlog") {
      cfg.smoothing.growth = Growth::sqrtlog;
    } else if (growth == "constant-one") {
      cfg.smoothing.growth = Growth::constant_one;
    } else {
      throw InvalidArgument("unknown growth choice: " + growth);
    }
    cfg.outcome_spec.kind = parse_kind(learner);
    cfg.propensity_spec.kind = parse_kind(p_learner);
    // share the bin/knn settings with the propensity learner
    cfg.propensity_spec.k = cfg.outcome_spec.k;
    cfg.propensity_spec.bins = cfg.outcome_spec.bins;
    return cfg;
  }
};

Vec parse_beta_grid(double beta_min, double beta_max, int points) {
  if (!(beta_min > 0.0) || !(beta_max > beta_min) || points < 2) {
    throw InvalidArgument("bad beta grid");
  }
  Vec grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] =
        beta_min * std::pow(beta_max / beta_min, static_cast<double>(i) / (points - 1));
  }
  return grid;
}

// Frozen three-cell IV design used by `simulate --family iv_demo`: one cell
// dominated by compliers with a positive effect, one with many never-takers,
// one with a mild negative effect.
DgpSpec demo_iv_spec() {
  DgpSpec s;
  s.family = DgpFamily::iv_discrete;
  IvCell c0;
  c0.prob = 0.4;
  c0.p_v1 = 0.5;
  c0.type_prob[1][1] = 0.45;  // complier, helped
  c0.type_prob[1][0] = 0.15;  // complier, never-positive
  c0.type_prob[0][0] = 0.25;  // never-taker, never-positive
  c0.type_prob[0][3] = 0.15;  // never-taker, always-positive
  IvCell c1;
  c1.prob = 0.35;
  c1.p_v1 = 0.4;
  c1.type_prob[0][0] = 0.4;
  c1.type_prob[0][2] = 0.2;   // never-taker, hurt-profile outcomes
  c1.type_prob[1][2] = 0.25;  // complier, hurt
  c1.type_prob[3][3] = 0.15;  // always-taker, always-positive
  IvCell c2;
  c2.prob = 0.25;
  c2.p_v1 = 0.6;
  c2.type_prob[1][1] = 0.3;
  c2.type_prob[3][1] = 0.3;
  c2.type_prob[0][0] = 0.3;
  c2.type_prob[3][3] = 0.1;
  s.iv_cells = {c0, c1, c2};
  return s;
}

DgpSpec family_from_flags(const std::string& family, double delta, double c, double p0,
                          double noise_sd) {
  DgpSpec spec;
  if (family == "binary_uniform") {
    spec.family = DgpFamily::binary_uniform;
  } else if (family == "delta_family") {
    spec.family = DgpFamily::delta_family;
    spec.delta = delta;
    spec.c = c;
    spec.p0 = p0;
  } else if (family == "iv_demo") {
    spec = demo_iv_spec();
  } else {
    throw InvalidArgument("unknown family: " + family +
                          " (expected binary_uniform | delta_family | iv_demo)");
  }
  spec.noise_sd = noise_sd;
  return spec;
}

int run_softmax_check(int draws, std::uint64_t seed) {
  std::mt19937_64 rng = make_stream(seed, 0x736d6178ull);
  std::uniform_int_distribution<int> n_dist(2, 8);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> score(-3.0, 3.0);
  int failures = 0;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) {
      ++failures;
      std::cerr << "[fail] " << what << "\n";
    }
  };
  for (int trial = 0; trial < draws; ++trial) {
    const int n = n_dist(rng);
    Vec u(static_cast<std::size_t>(n));
    for (double& v : u) v = score(rng);
    const double beta = unif(rng) < 0.1 ? 0.0 : std::pow(10.0, -2.0 + 5.0 * unif(rng));
    const Temperature t{beta};

    const double sm = softmax_value(u, t);
    const double lo = *std::min_element(u.begin(), u.end());
    const double hi = *std::max_element(u.begin(), u.end());
    expect(sm >= lo - 1e-12 && sm <= hi + 1e-12, "value inside [min, max]");
    expect(hi - sm <= bias_envelope(suboptimality_gaps(u), t) + 1e-12, "envelope bound");

    const Vec g = softmax_grad(u, t);
    double sum = 0.0, linf = 0.0;
    for (double v : g) {
      sum += v;
      linf = std::max(linf, std::abs(v));
    }
    expect(std::abs(sum - 1.0) <= 1e-12, "gradient sums to 1");
    expect(linf <= 1.0 + std::log(n) + 1e-12, "gradient sup bound");

    const double h = 3e-4 / (1.0 + beta);
    for (int k = 0; k < n; ++k) {
      Vec up = u, dn = u;
      up[static_cast<std::size_t>(k)] += h;
      dn[static_cast<std::size_t>(k)] -= h;
      const double fd = (softmax_value(up, t) - softmax_value(dn, t)) / (2.0 * h);
      expect(std::abs(fd - g[static_cast<std::size_t>(k)]) <=
                 1e-5 * std::max(1.0, std::abs(fd)) + 1e-9,
             "gradient matches finite differences");
    }

    const Matrix hess = softmax_hessian(u, t);
    double scale = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) scale = std::max(scale, std::abs(hess(i, j)));
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        expect(std::abs(hess(i, j) - hess(j, i)) <= 1e-10 * std::max(1.0, scale),
               "hessian symmetric");
      }
    }
    expect(operator_norm_sym(hess) <= (6.0 * beta + 4.0 * beta * std::log(n)) + 1e-9,
           "hessian operator norm bound");
  }
  if (failures == 0) {
    std::cout << "softmax-check: " << draws << " randomized draws, all properties hold\n";
    return kExitOk;
  }
  std::cerr << "softmax-check: " << failures << " failures\n";
  return kExitCheck;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"softmax-smoothed debiased estimation of expected-maximum functionals"};
  app.require_subcommand(1);
  app.set_config("--config");

  // ---- estimate ----
  auto* estimate = app.add_subcommand("estimate", "policy value from a policy CSV");
  std::string est_input, est_output;
  bool keep_scores = false;
  double declared_bound = std::numeric_limits<double>::infinity();
  EstimatorOptions est_opts;
  estimate->add_option("--input,-i", est_input, "input CSV (x1..xd,a,y)")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--output,-o", est_output, "output report path (default stdout)");
  estimate->add_option("--bound", declared_bound, "declared |y| bound B (violations warn)");
  estimate->add_flag("--keep-scores", keep_scores, "embed per-observation scores");
  est_opts.add_to(estimate);

  // ---- bp-bounds ----
  auto* bp = app.add_subcommand("bp-bounds", "Balke-Pearl ATE bounds from an IV CSV");
  std::string bp_input, bp_output;
  EstimatorOptions bp_opts;
  bp_opts.learner = "empirical_bin";
  bp->add_option("--input,-i", bp_input, "input CSV (x1..xd,a,v,y)")
      ->required()
      ->check(CLI::ExistingFile);
  bp->add_option("--output,-o", bp_output, "output report path (default stdout)");
  bp_opts.add_to(bp);

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo coverage experiment");
  std::string sim_family = "binary_uniform", sim_output;
  double sim_delta = 1.0, sim_c = 1.0, sim_p0 = 0.0, sim_noise = 0.3;
  std::size_t sim_n = 1000;
  int sim_reps = 100;
  bool sim_serial = false;
  EstimatorOptions sim_opts;
  sim_opts.learner = "oracle_noise";
  sim_opts.p_learner = "oracle_noise";
  simulate->add_option("--family", sim_family, "binary_uniform | delta_family | iv_demo");
  simulate->add_option("--dgp-delta", sim_delta, "delta_family margin exponent");
  simulate->add_option("--dgp-c", sim_c, "delta_family gap scale c");
  simulate->add_option("--p0", sim_p0, "delta_family non-responder mass");
  simulate->add_option("--noise-sd", sim_noise, "outcome noise sd");
  simulate->add_option("--n", sim_n, "sample size per repetition");
  simulate->add_option("--reps", sim_reps, "number of repetitions");
  simulate->add_flag("--serial", sim_serial, "disable parallel repetitions");
  simulate->add_option("--output,-o", sim_output, "output report path (default stdout)");
  sim_opts.add_to(simulate);

  // ---- bias-decay ----
  auto* decay = app.add_subcommand("bias-decay", "quadrature bias curve and log-log slope");
  std::string decay_output, decay_curve;
  double decay_delta = 1.0, decay_c = 1.0, decay_p0 = 0.4;
  double decay_bmin = 4.0, decay_bmax = 256.0;
  int decay_points = 7;
  bool decay_svg = false;
  decay->add_option("--dgp-delta", decay_delta, "margin exponent delta")->check(CLI::PositiveNumber);
  decay->add_option("--dgp-c", decay_c, "gap scale c");
  decay->add_option("--p0", decay_p0, "non-responder mass");
  decay->add_option("--beta-min", decay_bmin, "grid start");
  decay->add_option("--beta-max", decay_bmax, "grid end");
  decay->add_option("--points", decay_points, "grid points (log-spaced)");
  decay->add_option("--output,-o", decay_output, "summary report path (default stdout)");
  decay->add_option("--curve-out", decay_curve, "curve CSV path");
  decay->add_flag("--emit-curves", decay_svg, "also write an SVG plot next to the CSV");

  // ---- park-diagnostic ----
  auto* park = app.add_subcommand("park-diagnostic", "scaled-variance degeneracy curve");
  std::string park_output, park_curve;
  std::size_t park_nmc = 200000;
  double park_bmin = 8.0, park_bmax = 128.0;
  int park_points = 5;
  std::uint64_t park_seed = 1;
  double park_noise = 0.3;
  bool park_svg = false;
  park->add_option("--n-mc", park_nmc, "Monte-Carlo draws");
  park->add_option("--beta-min", park_bmin, "grid start");
  park->add_option("--beta-max", park_bmax, "grid end");
  park->add_option("--points", park_points, "grid points (log-spaced)");
  park->add_option("--noise-sd", park_noise, "outcome noise sd");
  park->add_option("--seed", park_seed, "seed");
  park->add_option("--output,-o", park_output, "summary report path (default stdout)");
  park->add_option("--curve-out", park_curve, "curve CSV path");
  park->add_flag("--emit-curves", park_svg, "also write an SVG plot next to the CSV");

  // ---- softmax-check ----
  auto* check = app.add_subcommand("softmax-check", "randomized softmax property suite");
  int check_draws = 2000;
  std::uint64_t check_seed = 1;
  check->add_option("--draws", check_draws, "randomized draws");
  check->add_option("--seed", check_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  if (estimate->parsed()) {
    CrossFitConfig cfg = est_opts.resolve();
    cfg.keep_scores = keep_scores;
    Dataset data = ingest_csv_policy(est_input);
    data.bound = declared_bound;
    const EstimateReport report = crossfit_policy(data, cfg, make_policy_learners(cfg));
    RunMeta meta{"estimate", cfg.seed, cfg};
    nlohmann::json j = report_to_json(report, meta);
    j["n_actions"] = data.n_actions;
    emit(j, est_output);
    return kExitOk;
  }

  if (bp->parsed()) {
    CrossFitConfig cfg = bp_opts.resolve();
    const IvDataset data = ingest_csv_iv(bp_input);
    const BpLearners learners = make_bp_learners(cfg);
    const EstimateReport lower = crossfit_balke_pearl(data, cfg, learners, BpSide::lower);
    const EstimateReport upper = crossfit_balke_pearl(data, cfg, learners, BpSide::upper);
    RunMeta meta{"bp-bounds", cfg.seed, cfg};
    nlohmann::json j;
    j["meta"] = meta_to_json(meta);
    j["lower"] = report_to_json(lower, meta);
    j["upper"] = report_to_json(upper, meta);
    emit(j, bp_output);
    return kExitOk;
  }

  if (simulate->parsed()) {
    CrossFitConfig cfg = sim_opts.resolve();
    const DgpSpec spec = family_from_flags(sim_family, sim_delta, sim_c, sim_p0, sim_noise);
    McConfig mc;
    mc.n = sim_n;
    mc.reps = sim_reps;
    mc.seed = cfg.seed;
    mc.parallel = !sim_serial;
    const McReport report = run_monte_carlo(spec, cfg, mc);
    RunMeta meta{"simulate", cfg.seed, cfg};
    nlohmann::json j = mc_report_to_json(report, meta);
    j["family"] = sim_family;
    j["n"] = sim_n;
    emit(j, sim_output);
    return kExitOk;
  }

  if (decay->parsed()) {
    DgpSpec spec;
    spec.family = DgpFamily::delta_family;
    spec.delta = decay_delta;
    spec.c = decay_c;
    spec.p0 = decay_p0;
    const Vec grid = parse_beta_grid(decay_bmin, decay_bmax, decay_points);
    const BiasDecay result = bias_decay_experiment(spec, grid);
    nlohmann::json j;
    j["version"] = "1";
    j["command"] = "bias-decay";
    j["delta"] = decay_delta;
    j["p0"] = decay_p0;
    j["slope"] = result.slope;
    j["expected_slope"] = -(1.0 + decay_delta);
    j["intercept"] = result.intercept;
    j["points_used"] = result.points_used;
    j["betas"] = result.betas;
    j["bias"] = result.bias;
    emit(j, decay_output);
    if (!decay_curve.empty()) {
      std::ofstream curve(decay_curve);
      if (!curve) throw ParseError("cannot open curve file: " + decay_curve);
      write_curve_csv(curve, result.betas, result.bias, "bias");
      if (decay_svg) {
        std::ofstream svg(decay_curve + ".svg");
        write_curve_svg(svg, result.betas, result.bias, "smoothing bias vs beta");
      }
    }
    return kExitOk;
  }

  if (park->parsed()) {
    DgpSpec spec;
    spec.family = DgpFamily::binary_uniform;
    spec.noise_sd = park_noise;
    const Vec grid = parse_beta_grid(park_bmin, park_bmax, park_points);
    const ParkCurve curve = park_variance_diagnostic(spec, grid, park_nmc, park_seed);
    nlohmann::json j;
    j["version"] = "1";
    j["command"] = "park-diagnostic";
    j["n_mc"] = park_nmc;
    j["seed"] = park_seed;
    j["betas"] = curve.betas;
    j["variance"] = curve.variance;
    j["scaled_variance"] = curve.scaled_variance;
    j["first_last_ratio"] = curve.first_last_ratio;
    emit(j, park_output);
    if (!park_curve.empty()) {
      std::ofstream out(park_curve);
      if (!out) throw ParseError("cannot open curve file: " + park_curve);
      write_curve_csv(out, curve.betas, curve.scaled_variance, "scaled_variance");
      if (park_svg) {
        std::ofstream svg(park_curve + ".svg");
        write_curve_svg(svg, curve.betas, curve.scaled_variance,
                        "scaled variance vs beta");
      }
    }
    return kExitOk;
  }

  if (check->parsed()) {
    return run_softmax_check(check_draws, check_seed);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitSchema;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kExitFit;
  } catch (const InsufficientData& e) {
    std::cerr << "insufficient data: " << e.what() << "\n";
    return kExitFit;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
