#include "maxval/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maxval/errors.hpp"

namespace maxval {

namespace {

void check_scores(std::span<const double> u) {
  if (u.size() < 2) throw InvalidArgument("score vector needs at least 2 entries");
  for (double x : u) {
    if (!std::isfinite(x)) throw InvalidArgument("score vector has a non-finite entry");
  }
}

double max_entry(std::span<const double> u) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : u) m = std::max(m, x);
  return m;
}

// Shift-stable softmax weights w_k = e^{beta(u_k - max)} / sum_j e^{beta(u_j - max)}.
Vec weights(std::span<const double> u, double beta) {
  const double m = max_entry(u);
  Vec w(u.size());
  double z = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    w[i] = std::exp(beta * (u[i] - m));
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

}  // namespace

void Temperature::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("temperature must be finite and nonnegative");
  }
}

void MarginParams::validate() const {
  if (!(delta > 0.0) || !(c > 0.0) || !(H > 0.0) || !std::isfinite(delta) ||
      !std::isfinite(c) || !std::isfinite(H)) {
    throw InvalidArgument("margin parameters require delta, c, H > 0");
  }
}

double softmax_value(std::span<const double> u, Temperature beta) {
  beta.validate();
  check_scores(u);
  const Vec w = weights(u, beta.beta);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += w[i] * u[i];
  return s;
}

Vec softmax_grad(std::span<const double> u, Temperature beta) {
  beta.validate();
  check_scores(u);
  const Vec w = weights(u, beta.beta);
  double sm = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sm += w[i] * u[i];
  Vec g(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    g[k] = w[k] * (1.0 + beta.beta * (u[k] - sm));
  }
  return g;
}

Matrix softmax_hessian(std::span<const double> u, Temperature beta) {
  beta.validate();
  check_scores(u);
  const std::size_t n = u.size();
  const double b = beta.beta;
  const Vec w = weights(u, b);
  double sm = 0.0;
  for (std::size_t i = 0; i < n; ++i) sm += w[i] * u[i];
  Matrix h(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      const double dkl = (k == l) ? 1.0 : 0.0;
      h(k, l) = b * w[k] *
                ((dkl - w[l]) * (1.0 + b * (u[k] - sm)) + (dkl - w[l]) -
                 b * w[l] * (u[l] - sm));
    }
  }
  return h;
}

Vec argmax_share(std::span<const double> u, double tie_tol) {
  check_scores(u);
  if (!(tie_tol >= 0.0)) throw InvalidArgument("tie tolerance must be nonnegative");
  const double m = max_entry(u);
  std::size_t count = 0;
  for (double x : u) {
    if (x >= m - tie_tol) ++count;
  }
  Vec s(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] >= m - tie_tol) s[i] = 1.0 / static_cast<double>(count);
  }
  return s;
}

Vec argmax_share(std::span<const double> u) {
  check_scores(u);
  const double m = max_entry(u);
  return argmax_share(u, 1e-12 * std::max(1.0, std::abs(m)));
}

double softplus_max(std::span<const double> u, Temperature beta) {
  beta.validate();
  check_scores(u);
  if (beta.beta == 0.0) throw InvalidArgument("softplus_max requires beta > 0");
  const double m = max_entry(u);
  double z = 0.0;
  for (double x : u) z += std::exp(beta.beta * (x - m));
  return m + std::log(z) / beta.beta;
}

double bias_envelope(std::span<const double> gaps, Temperature beta) {
  beta.validate();
  double s = 0.0;
  for (double d : gaps) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw InvalidArgument("bias_envelope gaps must be finite and nonnegative");
    }
    s += d * std::exp(-beta.beta * d);
  }
  return s;
}

double margin_bias_rate(const MarginParams& m, Temperature beta) {
  beta.validate();
  m.validate();
  if (beta.beta == 0.0) throw InvalidArgument("margin_bias_rate requires beta > 0");
  const double c = m.H * std::tgamma(1.0 + m.delta) + 1.0;
  return c * std::pow(1.0 / beta.beta, 1.0 + m.delta);
}

Vec suboptimality_gaps(std::span<const double> u) {
  check_scores(u);
  const double m = max_entry(u);
  Vec g(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) g[i] = m - u[i];
  return g;
}

}  // namespace maxval
