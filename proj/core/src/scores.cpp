#include "maxval/scores.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "maxval/errors.hpp"

namespace maxval {

namespace {

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

double OutcomeSurface::operator()(int a, const Vec& x) const {
  const double v = q(a, x);
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "outcome surface returned non-finite value at action " << a;
    throw NuisanceError(msg.str());
  }
  return v;
}

Vec OutcomeSurface::at(const Vec& x) const {
  Vec out(static_cast<std::size_t>(n_actions));
  for (int a = 1; a <= n_actions; ++a) out[a - 1] = (*this)(a, x);
  return out;
}

Vec PropensityModel::at(const Vec& x) const {
  Vec p = probs(x);
  if (static_cast<int>(p.size()) != n_actions) {
    throw NuisanceError("propensity model returned wrong arity");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v)) throw NuisanceError("propensity model returned non-finite value");
    if (v < eta - 1e-12) {
      std::ostringstream msg;
      msg << "propensity " << v << " below positivity floor " << eta;
      throw PositivityError(msg.str());
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-8) {
    std::ostringstream msg;
    msg << "propensities sum to " << sum << ", expected 1";
    throw NuisanceError(msg.str());
  }
  return p;
}

Vec riesz_policy(Temperature beta, std::span<const double> q_at_x,
                 std::span<const double> p_at_x, int a, double eta) {
  if (q_at_x.size() != p_at_x.size()) {
    throw InvalidArgument("riesz_policy: q and p arity mismatch");
  }
  if (a < 1 || a > static_cast<int>(q_at_x.size())) {
    throw InvalidArgument("riesz_policy: action index out of range");
  }
  const double pa = p_at_x[a - 1];
  if (!(pa >= eta)) {
    std::ostringstream msg;
    msg << "riesz_policy: propensity " << pa << " below floor " << eta;
    throw PositivityError(msg.str());
  }
  const Vec g = softmax_grad(q_at_x, beta);
  Vec out(q_at_x.size(), 0.0);
  out[a - 1] = g[a - 1] / pa;
  return out;
}

RepresenterSurface canonical_representer(const OutcomeSurface& q,
                                         const PropensityModel& p, Temperature beta) {
  RepresenterSurface r;
  r.n_actions = q.n_actions;
  r.alpha = [q, p, beta](int k, int a, const Vec& x) -> double {
    if (a != k) return 0.0;
    const Vec qx = q.at(x);
    const Vec px = p.at(x);
    const Vec g = softmax_grad(qx, beta);
    return g[k - 1] / px[k - 1];
  };
  return r;
}

double score_policy(const Observation& z, const OutcomeSurface& q,
                    const RepresenterSurface& alpha, Temperature beta) {
  const Vec qx = q.at(z.x);
  const double sm = softmax_value(qx, beta);
  const double resid = z.y - qx[z.a - 1];
  double corr = 0.0;
  for (int l = 1; l <= q.n_actions; ++l) {
    const double al = alpha.alpha(l, z.a, z.x);
    if (!std::isfinite(al)) throw NuisanceError("representer returned non-finite value");
    corr += al * resid;
  }
  return sm + corr;
}

double score_policy_canonical(std::span<const double> q_at_x,
                              std::span<const double> p_at_x, int a, double y,
                              Temperature beta, double eta) {
  const double pa = p_at_x[a - 1];
  if (!(pa >= eta)) {
    throw PositivityError("score_policy_canonical: propensity below floor");
  }
  const Vec g = softmax_grad(q_at_x, beta);
  const double sm = softmax_value(q_at_x, beta);
  return sm + g[a - 1] / pa * (y - q_at_x[a - 1]);
}

double score_policy_limit(const Observation& z, const OutcomeSurface& q_true,
                          const PropensityModel& p, double tie_tol) {
  const Vec qx = q_true.at(z.x);
  const Vec px = p.at(z.x);
  const Vec share = tie_tol < 0.0 ? argmax_share(qx) : argmax_share(qx, tie_tol);
  const double m = *std::max_element(qx.begin(), qx.end());
  const double resid = z.y - qx[z.a - 1];
  return m + share[z.a - 1] / px[z.a - 1] * resid;
}

double softmax_binary(double u, double beta) { return u * sigmoid(beta * u); }

double softmax_binary_deriv(double u, double beta) {
  const double s = sigmoid(beta * u);
  return s + beta * u * s * (1.0 - s);
}

double score_two_action(const Observation& z, const OutcomeSurface& q,
                        const std::function<double(int a, const Vec& x)>& alpha_scalar,
                        Temperature beta) {
  if (q.n_actions != 2) {
    throw InvalidArgument("score_two_action requires exactly 2 actions");
  }
  if (z.a != 0 && z.a != 1) {
    throw InvalidArgument("score_two_action expects actions coded 0/1");
  }
  const double q0 = q(1, z.x);  // binary 0 -> index 1
  const double q1 = q(2, z.x);  // binary 1 -> index 2
  const double tau = q1 - q0;
  const double qa = (z.a == 1) ? q1 : q0;
  return softmax_binary(tau, beta.beta) + q0 + alpha_scalar(z.a, z.x) * (z.y - qa);
}

}  // namespace maxval
