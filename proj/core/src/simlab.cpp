#include "maxval/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "maxval/errors.hpp"
#include "maxval/quadrature.hpp"
#include "maxval/rng.hpp"

namespace maxval {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// Bounded noise with the requested standard deviation.
double noise_draw(std::mt19937_64& rng, double sd) {
  if (sd == 0.0) return 0.0;
  std::uniform_real_distribution<double> u(-std::numbers::sqrt3, std::numbers::sqrt3);
  return sd * u(rng);
}

double q0_shape(BaselineShape shape, double x1, double x2) {
  switch (shape) {
    case BaselineShape::constant_half: return 0.5;
    case BaselineShape::sine:
      return 0.5 + 0.2 * std::sin(kTwoPi * x1) * std::cos(std::numbers::pi * x2);
  }
  return 0.5;
}

// Integrates f over [0, 1], re-running at a relative tolerance when the
// value is tiny so log-scale quantities (bias curves) stay accurate.
double integrate01(const std::function<double(double)>& f) {
  QuadOptions opts;
  opts.abs_tol = 1e-10;
  double v = integrate(f, 0.0, 1.0, opts).value;
  if (v != 0.0 && std::abs(v) < 1e-5) {
    opts.abs_tol = std::max(std::abs(v) * 1e-6, 1e-15);
    v = integrate(f, 0.0, 1.0, opts).value;
  }
  return v;
}

std::size_t pick_cell(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace

void DgpSpec::validate() const {
  if (!(noise_sd >= 0.0)) throw InvalidArgument("dgp: noise sd must be >= 0");
  switch (family) {
    case DgpFamily::binary_uniform:
      break;
    case DgpFamily::delta_family:
      if (!(delta > 0.0) || !(c > 0.0)) throw InvalidArgument("dgp: delta and c must be > 0");
      if (!(p0 >= 0.0) || !(p0 < 1.0)) throw InvalidArgument("dgp: p0 must lie in [0, 1)");
      break;
    case DgpFamily::n_action_gaussian: {
      if (base.size() < 2 || base.size() != amp.size() || base.size() != phase.size()) {
        throw InvalidArgument("dgp: base/amp/phase must share length >= 2");
      }
      break;
    }
    case DgpFamily::discrete_exact: {
      if (cells.empty()) throw InvalidArgument("dgp: no covariate cells");
      const std::size_t n = cells.front().q.size();
      if (n < 2) throw InvalidArgument("dgp: cells need at least 2 actions");
      double total = 0.0;
      for (const DiscreteCell& cell : cells) {
        if (cell.q.size() != n || cell.p.size() != n) {
          throw InvalidArgument("dgp: ragged cell tables");
        }
        double psum = 0.0;
        for (double p : cell.p) {
          if (!(p > 0.0)) throw InvalidArgument("dgp: cell propensities must be positive");
          psum += p;
        }
        if (std::abs(psum - 1.0) > 1e-9) throw InvalidArgument("dgp: cell propensities must sum to 1");
        total += cell.prob;
      }
      if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("dgp: cell probabilities must sum to 1");
      break;
    }
    case DgpFamily::iv_discrete: {
      if (iv_cells.empty()) throw InvalidArgument("dgp: no IV cells");
      double total = 0.0;
      for (const IvCell& cell : iv_cells) {
        if (!(cell.p_v1 > 0.0) || !(cell.p_v1 < 1.0)) {
          throw InvalidArgument("dgp: instrument propensity must lie in (0, 1)");
        }
        double tsum = 0.0;
        for (const auto& row : cell.type_prob) {
          for (double p : row) {
            if (p < 0.0) throw InvalidArgument("dgp: negative type probability");
            tsum += p;
          }
        }
        if (std::abs(tsum - 1.0) > 1e-9) throw InvalidArgument("dgp: type probabilities must sum to 1");
        total += cell.prob;
      }
      if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("dgp: cell probabilities must sum to 1");
      break;
    }
  }
}

int DgpSpec::n_actions() const {
  switch (family) {
    case DgpFamily::binary_uniform:
    case DgpFamily::delta_family: return 2;
    case DgpFamily::n_action_gaussian: return static_cast<int>(base.size());
    case DgpFamily::discrete_exact: return static_cast<int>(cells.front().q.size());
    case DgpFamily::iv_discrete: return 0;
  }
  return 0;
}

double DgpSpec::bound() const {
  const double noise = std::numbers::sqrt3 * noise_sd;
  switch (family) {
    case DgpFamily::binary_uniform: return 1.0 + noise;
    case DgpFamily::delta_family: {
      const double q0 = baseline == BaselineShape::sine ? 0.7 : 0.5;
      return q0 + c + noise;
    }
    case DgpFamily::n_action_gaussian: {
      double m = 0.0;
      for (std::size_t a = 0; a < base.size(); ++a) {
        m = std::max(m, std::abs(base[a]) + std::abs(amp[a]));
      }
      return m + noise;
    }
    case DgpFamily::discrete_exact: {
      double m = 0.0;
      for (const DiscreteCell& cell : cells) {
        for (double q : cell.q) m = std::max(m, std::abs(q));
      }
      return m + noise;
    }
    case DgpFamily::iv_discrete: return 1.0;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// PolicyDgp

PolicyDgp::PolicyDgp(DgpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.is_iv()) throw InvalidArgument("PolicyDgp: iv_discrete needs IvDgp");
}

double PolicyDgp::tau_true(const Vec& x) const {
  switch (spec_.family) {
    case DgpFamily::binary_uniform: return 2.0 * x[0] - 1.0;
    case DgpFamily::delta_family: {
      if (x[1] < spec_.p0) return 0.0;
      const double t = spec_.c * std::pow(x[0], 1.0 / spec_.delta);
      const double split = spec_.p0 + 0.5 * (1.0 - spec_.p0);
      return x[1] < split ? -t : t;
    }
    default:
      throw InvalidArgument("tau_true: only defined for two-action families");
  }
}

double PolicyDgp::q_true(int a, const Vec& x) const {
  switch (spec_.family) {
    case DgpFamily::binary_uniform:
      return a == 1 ? 1.0 - x[0] : x[0];
    case DgpFamily::delta_family: {
      const double q0 = q0_shape(spec_.baseline, x[0], x[1]);
      return a == 1 ? q0 : q0 + tau_true(x);
    }
    case DgpFamily::n_action_gaussian: {
      const std::size_t i = static_cast<std::size_t>(a - 1);
      return spec_.base[i] + spec_.amp[i] * std::sin(kTwoPi * x[0] + spec_.phase[i]);
    }
    case DgpFamily::discrete_exact: {
      const auto& cell = spec_.cells[static_cast<std::size_t>(x[0])];
      return cell.q[static_cast<std::size_t>(a - 1)];
    }
    default:
      throw InvalidArgument("q_true: not a policy family");
  }
}

Vec PolicyDgp::q_vector(const Vec& x) const {
  Vec q(static_cast<std::size_t>(n_actions()));
  for (int a = 1; a <= n_actions(); ++a) q[static_cast<std::size_t>(a - 1)] = q_true(a, x);
  return q;
}

Vec PolicyDgp::p_true(const Vec& x) const {
  if (spec_.family == DgpFamily::discrete_exact) {
    return spec_.cells[static_cast<std::size_t>(x[0])].p;
  }
  return Vec(static_cast<std::size_t>(n_actions()), 1.0 / n_actions());
}

Observation PolicyDgp::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Observation z;
  switch (spec_.family) {
    case DgpFamily::binary_uniform:
    case DgpFamily::n_action_gaussian:
      z.x = {unif(rng)};
      break;
    case DgpFamily::delta_family:
      z.x = {unif(rng), unif(rng)};
      break;
    case DgpFamily::discrete_exact: {
      Vec probs(spec_.cells.size());
      for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = spec_.cells[i].prob;
      z.x = {static_cast<double>(pick_cell(probs, unif(rng)))};
      break;
    }
    default:
      throw InvalidArgument("draw: not a policy family");
  }
  const Vec p = p_true(z.x);
  z.a = 1 + static_cast<int>(pick_cell(p, unif(rng)));
  z.y = q_true(z.a, z.x) + noise_draw(rng, spec_.noise_sd);
  return z;
}

Dataset PolicyDgp::sample(std::size_t n, std::mt19937_64& rng) const {
  Dataset data;
  data.n_actions = n_actions();
  data.bound = spec_.bound();
  data.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.rows.push_back(draw(rng));
  return data;
}

OutcomeSurface PolicyDgp::truth_surface() const {
  OutcomeSurface surf;
  surf.n_actions = n_actions();
  surf.bound = spec_.bound();
  const PolicyDgp self = *this;
  surf.q = [self](int a, const Vec& x) { return self.q_true(a, x); };
  return surf;
}

PropensityModel PolicyDgp::truth_propensity() const {
  PropensityModel p;
  p.n_actions = n_actions();
  p.eta = 0.01;
  const PolicyDgp self = *this;
  p.probs = [self](const Vec& x) { return self.p_true(x); };
  return p;
}

// ---------------------------------------------------------------------------
// IvDgp

IvDgp::IvDgp(DgpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (!spec_.is_iv()) throw InvalidArgument("IvDgp: spec is not iv_discrete");
}

double IvDgp::q_true(int y, int a, const Vec& x, int v) const {
  const IvCell& cell = spec_.iv_cells[static_cast<std::size_t>(x[0])];
  double q = 0.0;
  for (int at = 0; at < 4; ++at) {
    const int action = (v == 0) ? (at >> 1) : (at & 1);
    if (action != a) continue;
    for (int yt = 0; yt < 4; ++yt) {
      const int outcome = (action == 0) ? (yt >> 1) : (yt & 1);
      if (outcome != y) continue;
      q += cell.type_prob[static_cast<std::size_t>(at)][static_cast<std::size_t>(yt)];
    }
  }
  return q;
}

double IvDgp::p_instrument(const Vec& x) const {
  return spec_.iv_cells[static_cast<std::size_t>(x[0])].p_v1;
}

QJointSurface IvDgp::truth_qjoint() const {
  QJointSurface surf;
  const IvDgp self = *this;
  surf.q = [self](int y, int a, const Vec& x, int v) { return self.q_true(y, a, x, v); };
  return surf;
}

IvObservation IvDgp::draw(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec probs(spec_.iv_cells.size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = spec_.iv_cells[i].prob;
  const std::size_t ci = pick_cell(probs, unif(rng));
  const IvCell& cell = spec_.iv_cells[ci];

  IvObservation z;
  z.x = {static_cast<double>(ci)};
  z.v = unif(rng) < cell.p_v1 ? 1 : 0;
  // joint type draw
  Vec flat(16);
  for (int at = 0; at < 4; ++at) {
    for (int yt = 0; yt < 4; ++yt) {
      flat[static_cast<std::size_t>(at * 4 + yt)] =
          cell.type_prob[static_cast<std::size_t>(at)][static_cast<std::size_t>(yt)];
    }
  }
  const std::size_t t = pick_cell(flat, unif(rng));
  const int at = static_cast<int>(t / 4);
  const int yt = static_cast<int>(t % 4);
  z.a = (z.v == 0) ? (at >> 1) : (at & 1);
  z.y = (z.a == 0) ? (yt >> 1) : (yt & 1);
  return z;
}

IvDataset IvDgp::sample(std::size_t n, std::mt19937_64& rng) const {
  IvDataset data;
  data.rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.rows.push_back(draw(rng));
  return data;
}

double IvDgp::exact_ate() const {
  double ate = 0.0;
  for (const IvCell& cell : spec_.iv_cells) {
    for (int at = 0; at < 4; ++at) {
      for (int yt = 0; yt < 4; ++yt) {
        const int y1 = yt & 1;
        const int y0 = yt >> 1;
        ate += cell.prob *
               cell.type_prob[static_cast<std::size_t>(at)][static_cast<std::size_t>(yt)] *
               (y1 - y0);
      }
    }
  }
  return ate;
}

Vec IvDgp::cell_scores(std::size_t cell, BpSide side) const {
  const IvDgp self = *this;
  QJointSurface q;
  if (side == BpSide::lower) {
    q.q = [self](int y, int a, const Vec& x, int v) { return self.q_true(y, a, x, v); };
  } else {
    q.q = [self](int y, int a, const Vec& x, int v) { return self.q_true(1 - y, a, x, v); };
  }
  return balke_pearl_scores(q, Vec{static_cast<double>(cell)});
}

double IvDgp::exact_bound(BpSide side) const {
  double bound = 0.0;
  for (std::size_t i = 0; i < spec_.iv_cells.size(); ++i) {
    const Vec psi = cell_scores(i, side);
    bound += spec_.iv_cells[i].prob * *std::max_element(psi.begin(), psi.end());
  }
  return side == BpSide::lower ? bound : -bound;
}

double IvDgp::min_positive_gap(BpSide side) const {
  double g = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < spec_.iv_cells.size(); ++i) {
    const Vec psi = cell_scores(i, side);
    const Vec gaps = suboptimality_gaps(psi);
    for (double d : gaps) {
      if (d > 1e-12) g = std::min(g, d);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Population values

namespace {

// E[f(Q(., X))] by 1-d quadrature for the quadrature-backed families, or an
// exact finite sum for discrete designs.
double policy_population_value(const DgpSpec& spec,
                               const std::function<double(const Vec& q)>& f) {
  switch (spec.family) {
    case DgpFamily::binary_uniform: {
      return integrate01([&](double x) { return f(Vec{1.0 - x, x}); });
    }
    case DgpFamily::n_action_gaussian: {
      const PolicyDgp dgp(spec);
      return integrate01([&](double x) { return f(dgp.q_vector(Vec{x, 0.0})); });
    }
    case DgpFamily::discrete_exact: {
      double s = 0.0;
      for (const DiscreteCell& cell : spec.cells) s += cell.prob * f(cell.q);
      return s;
    }
    default:
      throw InvalidArgument("policy_population_value: unsupported family");
  }
}

double iv_population_value(const DgpSpec& spec, const std::function<double(const Vec&)>& f) {
  const IvDgp dgp(spec);
  double s = 0.0;
  for (std::size_t i = 0; i < spec.iv_cells.size(); ++i) {
    s += spec.iv_cells[i].prob * f(dgp.cell_scores(i, BpSide::lower));
  }
  return s;
}

double delta_gap_integral(const DgpSpec& spec, const std::function<double(double T)>& f) {
  // integrand over the responder gap magnitude T(u) = c u^(1/delta), u ~ U(0,1)
  return integrate01([&](double u) { return f(spec.c * std::pow(u, 1.0 / spec.delta)); });
}

}  // namespace

double true_value(const DgpSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case DgpFamily::binary_uniform:
      return 0.75;  // int_0^1 max(x, 1-x) dx
    case DgpFamily::delta_family: {
      const double e_q0 = integrate2d(
          [&](double x1, double x2) { return q0_shape(spec.baseline, x1, x2); }, 0.0,
          1.0, 0.0, 1.0, QuadOptions{1e-9, 20000}).value;
      const double e_gap = delta_gap_integral(spec, [](double t) { return t; });
      return e_q0 + 0.5 * (1.0 - spec.p0) * e_gap;
    }
    case DgpFamily::iv_discrete:
      return IvDgp(spec).exact_bound(BpSide::lower);
    default:
      return policy_population_value(spec, [](const Vec& q) {
        return *std::max_element(q.begin(), q.end());
      });
  }
}

double smoothed_value(const DgpSpec& spec, Temperature beta) {
  spec.validate();
  beta.validate();
  switch (spec.family) {
    case DgpFamily::delta_family: {
      const double e_q0 = integrate2d(
          [&](double x1, double x2) { return q0_shape(spec.baseline, x1, x2); }, 0.0,
          1.0, 0.0, 1.0, QuadOptions{1e-9, 20000}).value;
      // sm(q0, q0 + tau) = q0 + tau sigmoid(beta tau) by shift invariance
      const double e_sm = delta_gap_integral(spec, [&](double t) {
        return t * sigmoid(beta.beta * t) + (-t) * sigmoid(-beta.beta * t);
      });
      return e_q0 + 0.5 * (1.0 - spec.p0) * e_sm;
    }
    case DgpFamily::iv_discrete:
      return iv_population_value(spec, [&](const Vec& psi) {
        return softmax_value(psi, beta);
      });
    default:
      return policy_population_value(spec, [&](const Vec& q) {
        return softmax_value(q, beta);
      });
  }
}

double smoothing_bias(const DgpSpec& spec, Temperature beta) {
  spec.validate();
  beta.validate();
  switch (spec.family) {
    case DgpFamily::delta_family: {
      // both responder branches contribute T sigma(-beta T)
      const double e = delta_gap_integral(spec, [&](double t) {
        return t * sigmoid(-beta.beta * t);
      });
      return (1.0 - spec.p0) * e;
    }
    case DgpFamily::iv_discrete:
      return iv_population_value(spec, [&](const Vec& psi) {
        return *std::max_element(psi.begin(), psi.end()) - softmax_value(psi, beta);
      });
    default:
      return policy_population_value(spec, [&](const Vec& q) {
        return *std::max_element(q.begin(), q.end()) - softmax_value(q, beta);
      });
  }
}

double envelope_value(const DgpSpec& spec, Temperature beta) {
  spec.validate();
  beta.validate();
  const auto envelope = [&](const Vec& q) {
    return bias_envelope(suboptimality_gaps(q), beta);
  };
  switch (spec.family) {
    case DgpFamily::delta_family: {
      const double e = delta_gap_integral(spec, [&](double t) {
        return t * std::exp(-beta.beta * t);
      });
      return (1.0 - spec.p0) * e;
    }
    case DgpFamily::iv_discrete:
      return iv_population_value(spec, envelope);
    default:
      return policy_population_value(spec, envelope);
  }
}

BiasDecay bias_decay_experiment(const DgpSpec& spec, std::span<const double> betas) {
  BiasDecay out;
  for (double b : betas) {
    const double bias = smoothing_bias(spec, Temperature{b});
    if (bias <= 1e-12) continue;  // numerically zero points are excluded
    out.betas.push_back(b);
    out.bias.push_back(bias);
  }
  if (out.betas.size() < 4) {
    throw NumericError("bias_decay_experiment: fewer than 4 usable points");
  }
  const double beta_max = *std::max_element(out.betas.begin(), out.betas.end());
  Vec lx, ly;
  for (std::size_t i = 0; i < out.betas.size(); ++i) {
    if (out.betas[i] >= beta_max / 10.0) {
      lx.push_back(std::log(out.betas[i]));
      ly.push_back(std::log(out.bias[i]));
    }
  }
  out.points_used = static_cast<int>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(lx.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    out.residuals.push_back(ly[i] - (out.intercept + out.slope * lx[i]));
  }
  return out;
}

ParkCurve park_variance_diagnostic(const DgpSpec& spec, std::span<const double> betas,
                                   std::size_t n_mc, std::uint64_t seed) {
  const PolicyDgp dgp(spec);
  std::mt19937_64 rng = make_stream(seed, 0x7061726bull);
  ParkCurve curve;
  curve.betas.assign(betas.begin(), betas.end());
  std::vector<Vec> scores(betas.size(), Vec(n_mc, 0.0));
  // common draws across the grid so curve differences are not noise-dominated
  for (std::size_t i = 0; i < n_mc; ++i) {
    const Observation z = dgp.draw(rng);
    const Vec q = dgp.q_vector(z.x);
    const Vec p = dgp.p_true(z.x);
    for (std::size_t b = 0; b < betas.size(); ++b) {
      scores[b][i] = score_policy_canonical(q, p, z.a, z.y, Temperature{betas[b]});
    }
  }
  for (std::size_t b = 0; b < betas.size(); ++b) {
    double mean = 0.0;
    for (double s : scores[b]) mean += s;
    mean /= static_cast<double>(n_mc);
    double var = 0.0;
    for (double s : scores[b]) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n_mc);
    curve.variance.push_back(var);
    curve.scaled_variance.push_back(var / (betas[b] * betas[b]));
  }
  curve.first_last_ratio = curve.scaled_variance.front() / curve.scaled_variance.back();
  return curve;
}

// ---------------------------------------------------------------------------
// Orthogonality probes (exact finite-sum populations)

namespace {

// E[Psi^beta(Z; Q* + t omega, alpha^beta(Q*))] over a discrete policy design.
// With the correction on, the debiasing term contributes -t sum_a grad_a w_a
// per cell because the representer is held at the truth.
double exact_perturbed_mean(const std::vector<DiscreteCell>& cells, Temperature beta,
                            const std::vector<Vec>& omega, double t, bool correction) {
  double total = 0.0;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const DiscreteCell& cell = cells[ci];
    Vec q = cell.q;
    for (std::size_t a = 0; a < q.size(); ++a) q[a] += t * omega[ci][a];
    double term = softmax_value(q, beta);
    if (correction) {
      const Vec grad = softmax_grad(cell.q, beta);
      for (std::size_t a = 0; a < q.size(); ++a) term -= t * grad[a] * omega[ci][a];
    }
    total += cell.prob * term;
  }
  return total;
}

}  // namespace

OrthoProbe orthogonality_probe(const DgpSpec& spec, Temperature beta,
                               int n_directions, double step, std::uint64_t seed,
                               double amplitude) {
  spec.validate();
  if (spec.family != DgpFamily::discrete_exact) {
    throw InvalidArgument("orthogonality_probe: needs a discrete_exact design");
  }
  OrthoProbe probe;
  for (int d = 0; d < n_directions; ++d) {
    std::mt19937_64 rng = make_stream(seed, 0x6f727468ull + static_cast<std::uint64_t>(d));
    std::uniform_real_distribution<double> unif(-amplitude, amplitude);
    std::vector<Vec> omega(spec.cells.size());
    for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
      omega[ci].resize(spec.cells[ci].q.size());
      for (double& w : omega[ci]) w = unif(rng);
    }
    const double up = exact_perturbed_mean(spec.cells, beta, omega, step, true);
    const double dn = exact_perturbed_mean(spec.cells, beta, omega, -step, true);
    probe.per_direction.push_back((up - dn) / (2.0 * step));
  }
  for (double v : probe.per_direction) {
    probe.max_abs_derivative = std::max(probe.max_abs_derivative, std::abs(v));
  }
  return probe;
}

double plugin_probe(const DgpSpec& spec, Temperature beta, double step) {
  spec.validate();
  if (spec.family != DgpFamily::discrete_exact) {
    throw InvalidArgument("plugin_probe: needs a discrete_exact design");
  }
  // all-ones direction, aligned with the softmax gradient
  std::vector<Vec> omega(spec.cells.size());
  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    omega[ci].assign(spec.cells[ci].q.size(), 1.0);
  }
  const double up = exact_perturbed_mean(spec.cells, beta, omega, step, false);
  const double dn = exact_perturbed_mean(spec.cells, beta, omega, -step, false);
  return (up - dn) / (2.0 * step);
}

namespace {

// E[Psi^beta] for the Balke-Pearl score under q -> q* + t omega with the
// representer held at the truth. omega is indexed [cell][v][2y + a].
double exact_perturbed_mean_bp(const IvDgp& dgp, Temperature beta,
                               const std::vector<std::array<Vec, 2>>& omega, double t) {
  const auto& cells = dgp.spec().iv_cells;
  double total = 0.0;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const Vec x{static_cast<double>(ci)};
    // perturbed scores
    Vec psi(kBpScoreCount);
    for (int k = 0; k < kBpScoreCount; ++k) {
      double s = bp_constant(k);
      for (const BpTerm& term : bp_terms(k)) {
        const double q = dgp.q_true(term.y, term.a, x, term.v) +
                         t * omega[ci][static_cast<std::size_t>(term.v)]
                                 [static_cast<std::size_t>(2 * term.y + term.a)];
        s += term.sign * q;
      }
      psi[k] = s;
    }
    // unperturbed gradient; E[zeta] over V cancels p(v|x), leaving the raw signs
    Vec psi0(kBpScoreCount);
    for (int k = 0; k < kBpScoreCount; ++k) {
      double s = bp_constant(k);
      for (const BpTerm& term : bp_terms(k)) {
        s += term.sign * dgp.q_true(term.y, term.a, x, term.v);
      }
      psi0[k] = s;
    }
    const Vec grad = softmax_grad(psi0, beta);
    double corr = 0.0;
    for (int k = 0; k < kBpScoreCount; ++k) {
      for (const BpTerm& term : bp_terms(k)) {
        corr -= grad[static_cast<std::size_t>(k)] * term.sign * t *
                omega[ci][static_cast<std::size_t>(term.v)]
                      [static_cast<std::size_t>(2 * term.y + term.a)];
      }
    }
    total += cells[ci].prob * (softmax_value(psi, beta) + corr);
  }
  return total;
}

}  // namespace

OrthoProbe orthogonality_probe_bp(const DgpSpec& spec, Temperature beta,
                                  int n_directions, double step, std::uint64_t seed,
                                  double amplitude) {
  const IvDgp dgp(spec);
  OrthoProbe probe;
  for (int d = 0; d < n_directions; ++d) {
    std::mt19937_64 rng = make_stream(seed, 0x62706f72ull + static_cast<std::uint64_t>(d));
    std::uniform_real_distribution<double> unif(-amplitude, amplitude);
    std::vector<std::array<Vec, 2>> omega(spec.iv_cells.size());
    for (auto& per_cell : omega) {
      for (auto& per_v : per_cell) {
        per_v.resize(4);
        for (double& w : per_v) w = unif(rng);
      }
    }
    const double up = exact_perturbed_mean_bp(dgp, beta, omega, step);
    const double dn = exact_perturbed_mean_bp(dgp, beta, omega, -step);
    probe.per_direction.push_back((up - dn) / (2.0 * step));
  }
  for (double v : probe.per_direction) {
    probe.max_abs_derivative = std::max(probe.max_abs_derivative, std::abs(v));
  }
  return probe;
}

// ---------------------------------------------------------------------------
// Monte-Carlo harness

double ks_distance_normal(std::span<const double> sample) {
  Vec sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = normal_cdf(sorted[i]);
    d = std::max(d, cdf - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - cdf);
  }
  return d;
}

namespace {

struct RepOutcome {
  bool ok = false;
  double v_hat = 0.0;
  double sigma_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double beta_n = 0.0;
  std::size_t n = 0;
};

PolicyLearners policy_learners_for(const PolicyDgp& dgp, const CrossFitConfig& cfg) {
  PolicyLearners learners;
  if (cfg.outcome_spec.kind == LearnerKind::oracle_noise) {
    const OutcomeSurface truth = dgp.truth_surface();
    const LearnerSpec spec = cfg.outcome_spec;
    learners.outcome = [truth, spec](const Dataset&, std::span<const std::size_t> idx) {
      return fit_oracle_noise(truth, static_cast<std::int64_t>(idx.size()), spec);
    };
  } else {
    const LearnerSpec spec = cfg.outcome_spec;
    learners.outcome = [spec](const Dataset& d, std::span<const std::size_t> idx) {
      return fit_outcome(d, idx, spec);
    };
  }
  if (cfg.propensity_spec.kind == LearnerKind::oracle_noise) {
    // known-design propensities
    const PropensityModel truth = dgp.truth_propensity();
    learners.propensity = [truth](const Dataset&, std::span<const std::size_t>) {
      return truth;
    };
  } else {
    const LearnerSpec spec = cfg.propensity_spec;
    const double eta = cfg.eta;
    learners.propensity = [spec, eta](const Dataset& d, std::span<const std::size_t> idx) {
      return fit_propensity(d, idx, spec, eta);
    };
  }
  return learners;
}

BpLearners bp_learners_for(const IvDgp& dgp, const CrossFitConfig& cfg) {
  BpLearners learners;
  if (cfg.outcome_spec.kind == LearnerKind::oracle_noise) {
    const QJointSurface truth = dgp.truth_qjoint();
    learners.qjoint = [truth](const IvDataset&, std::span<const std::size_t>) {
      return truth;
    };
  } else {
    const LearnerSpec spec = cfg.outcome_spec;
    learners.qjoint = [spec](const IvDataset& d, std::span<const std::size_t> idx) {
      return fit_q_joint(d, idx, spec);
    };
  }
  if (cfg.propensity_spec.kind == LearnerKind::oracle_noise) {
    const IvDgp self = dgp;
    learners.instrument = [self](const IvDataset&, std::span<const std::size_t>) {
      return std::function<double(const Vec&)>(
          [self](const Vec& x) { return self.p_instrument(x); });
    };
  } else {
    const LearnerSpec spec = cfg.propensity_spec;
    const double eta = cfg.eta;
    learners.instrument = [spec, eta](const IvDataset& d, std::span<const std::size_t> idx) {
      return fit_instrument_propensity(d, idx, spec, eta);
    };
  }
  return learners;
}

}  // namespace

McReport run_monte_carlo(const DgpSpec& spec, const CrossFitConfig& cfg,
                         const McConfig& mc) {
  spec.validate();
  if (mc.reps < 1) throw InvalidArgument("run_monte_carlo: reps must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  McReport report;
  report.reps = mc.reps;
  report.true_value = true_value(spec);

  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(mc.reps));
  const bool is_iv = spec.is_iv();
  std::shared_ptr<PolicyDgp> policy_dgp;
  std::shared_ptr<IvDgp> iv_dgp;
  if (is_iv) {
    iv_dgp = std::make_shared<IvDgp>(spec);
  } else {
    policy_dgp = std::make_shared<PolicyDgp>(spec);
  }

  auto run_rep = [&](int rep) {
    std::mt19937_64 rng = make_stream(mc.seed, 1000 + static_cast<std::uint64_t>(rep));
    CrossFitConfig rep_cfg = cfg;
    rep_cfg.seed = rng();  // per-rep fold shuffle
    rep_cfg.keep_scores = false;
    RepOutcome& out = outcomes[static_cast<std::size_t>(rep)];
    try {
      EstimateReport est;
      if (is_iv) {
        const IvDataset data = iv_dgp->sample(mc.n, rng);
        est = crossfit_balke_pearl(data, rep_cfg, bp_learners_for(*iv_dgp, rep_cfg),
                                   BpSide::lower);
      } else {
        const Dataset data = policy_dgp->sample(mc.n, rng);
        est = crossfit_policy(data, rep_cfg, policy_learners_for(*policy_dgp, rep_cfg));
      }
      out.ok = true;
      out.v_hat = est.v_hat;
      out.sigma_hat = est.sigma_hat;
      out.ci_low = est.ci_low;
      out.ci_high = est.ci_high;
      out.beta_n = est.beta_n;
      out.n = est.n;
    } catch (const Error&) {
      out.ok = false;
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers =
      mc.parallel ? std::min<unsigned>(hw, static_cast<unsigned>(mc.reps)) : 1u;
  if (workers <= 1) {
    for (int rep = 0; rep < mc.reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < mc.reps; rep = next.fetch_add(1)) {
          run_rep(rep);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  double bias_sum = 0.0, sq_sum = 0.0, covered = 0.0, sigma_sum = 0.0;
  int ok_count = 0;
  for (const RepOutcome& out : outcomes) {
    if (!out.ok) continue;
    ++ok_count;
    const double err = out.v_hat - report.true_value;
    bias_sum += err;
    sq_sum += err * err;
    sigma_sum += out.sigma_hat;
    if (out.ci_low <= report.true_value && report.true_value <= out.ci_high) {
      covered += 1.0;
    }
    double z = 0.0;
    if (out.sigma_hat > 0.0) {
      z = std::sqrt(static_cast<double>(out.n)) * err / std::sqrt(out.sigma_hat);
    } else if (std::abs(err) > 1e-12) {
      z = err > 0.0 ? 1e12 : -1e12;
    }
    report.standardized_errors.push_back(z);
    report.beta_n = out.beta_n;
  }
  report.failures = mc.reps - ok_count;
  if (ok_count == 0) throw Error("run_monte_carlo: every repetition failed");
  report.coverage = covered / ok_count;
  report.mean_bias = bias_sum / ok_count;
  report.rmse = std::sqrt(sq_sum / ok_count);
  report.mean_sigma_hat = sigma_sum / ok_count;
  report.ks_distance = ks_distance_normal(report.standardized_errors);
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

double oracle_limit_variance(const DgpSpec& spec, std::size_t n_mc, std::uint64_t seed) {
  const PolicyDgp dgp(spec);
  const OutcomeSurface q = dgp.truth_surface();
  const PropensityModel p = dgp.truth_propensity();
  std::mt19937_64 rng = make_stream(seed, 0x6f7261636cull);
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const Observation z = dgp.draw(rng);
    const double s = score_policy_limit(z, q, p);
    mean += s;
    sq += s * s;
  }
  mean /= static_cast<double>(n_mc);
  return sq / static_cast<double>(n_mc) - mean * mean;
}

}  // namespace maxval
