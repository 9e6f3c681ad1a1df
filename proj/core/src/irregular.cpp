#include "maxval/irregular.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "maxval/errors.hpp"

namespace maxval {

double score_irregular(const GenericObs& obs,
                       std::span<const ConstituentScore> scores,
                       std::span<const NuisanceFn> g,
                       std::span<const RepresenterFn> alpha, Temperature beta) {
  const std::size_t n = scores.size();
  if (g.size() != n || alpha.size() != n) {
    throw InvalidArgument("score_irregular: bundle arity mismatch");
  }
  Vec psi(n);
  for (std::size_t k = 0; k < n; ++k) psi[k] = scores[k].eval(obs.x, g[k]);
  double out = softmax_value(psi, beta);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec ak = alpha[k](obs.w);
    const Vec uk = scores[k].target(obs.z);
    const Vec gk = g[k](obs.w);
    if (ak.size() != uk.size() || ak.size() != gk.size()) {
      std::ostringstream msg;
      msg << "score_irregular: dimension mismatch in score " << (k + 1)
          << " (alpha " << ak.size() << ", target " << uk.size() << ", nuisance "
          << gk.size() << ")";
      throw InvalidArgument(msg.str());
    }
    for (std::size_t i = 0; i < ak.size(); ++i) out += ak[i] * (uk[i] - gk[i]);
  }
  return out;
}

std::vector<Vec> riesz_irregular(Temperature beta, std::span<const double> psi_at_x,
                                 std::span<const Vec> zeta_at_w) {
  if (psi_at_x.size() != zeta_at_w.size()) {
    throw InvalidArgument("riesz_irregular: psi and zeta arity mismatch");
  }
  const Vec grad = softmax_grad(psi_at_x, beta);
  std::vector<Vec> out(zeta_at_w.size());
  for (std::size_t k = 0; k < zeta_at_w.size(); ++k) {
    out[k] = zeta_at_w[k];
    for (double& v : out[k]) v *= grad[k];
  }
  return out;
}

double second_difference_probe(const ConstituentScore& score, const Vec& x,
                               const NuisanceFn& g, const NuisanceFn& direction,
                               double step) {
  auto shifted = [&](double t) -> NuisanceFn {
    return [&, t](const Vec& w) {
      Vec base = g(w);
      const Vec dir = direction(w);
      for (std::size_t i = 0; i < base.size(); ++i) base[i] += t * dir[i];
      return base;
    };
  };
  const double up = score.eval(x, shifted(step));
  const double mid = score.eval(x, g);
  const double dn = score.eval(x, shifted(-step));
  return std::abs(up - 2.0 * mid + dn) / (step * step);
}

// ---------------------------------------------------------------------------
// Balke-Pearl tables.

namespace {

// The printed scores, one row per q_{ya}(x, v) term:
//   psi_1 =  q11(x,1) + q00(x,0) - 1
//   psi_2 =  q11(x,0) + q00(x,1) - 1
//   psi_3 = -q01(x,1) - q10(x,1)
//   psi_4 = -q01(x,0) - q10(x,0)
//   psi_5 =  q11(x,0) - q11(x,1) - q10(x,1) - q01(x,0) - q10(x,0)
//   psi_6 =  q11(x,1) - q11(x,0) - q10(x,0) - q01(x,1) - q10(x,1)
//   psi_7 =  q00(x,1) - q01(x,1) - q10(x,1) - q01(x,0) - q00(x,0)
//   psi_8 =  q00(x,0) - q01(x,0) - q10(x,0) - q01(x,1) - q00(x,1)
constexpr BpTerm kTerms1[] = {{1, 1, 1, +1}, {0, 0, 0, +1}};
constexpr BpTerm kTerms2[] = {{1, 1, 0, +1}, {0, 0, 1, +1}};
constexpr BpTerm kTerms3[] = {{0, 1, 1, -1}, {1, 0, 1, -1}};
constexpr BpTerm kTerms4[] = {{0, 1, 0, -1}, {1, 0, 0, -1}};
constexpr BpTerm kTerms5[] = {
    {1, 1, 0, +1}, {1, 1, 1, -1}, {1, 0, 1, -1}, {0, 1, 0, -1}, {1, 0, 0, -1}};
constexpr BpTerm kTerms6[] = {
    {1, 1, 1, +1}, {1, 1, 0, -1}, {1, 0, 0, -1}, {0, 1, 1, -1}, {1, 0, 1, -1}};
constexpr BpTerm kTerms7[] = {
    {0, 0, 1, +1}, {0, 1, 1, -1}, {1, 0, 1, -1}, {0, 1, 0, -1}, {0, 0, 0, -1}};
constexpr BpTerm kTerms8[] = {
    {0, 0, 0, +1}, {0, 1, 0, -1}, {1, 0, 0, -1}, {0, 1, 1, -1}, {0, 0, 1, -1}};

constexpr double kConstants[kBpScoreCount] = {-1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};

std::span<const BpTerm> terms_for(int k) {
  switch (k) {
    case 0: return kTerms1;
    case 1: return kTerms2;
    case 2: return kTerms3;
    case 3: return kTerms4;
    case 4: return kTerms5;
    case 5: return kTerms6;
    case 6: return kTerms7;
    case 7: return kTerms8;
    default: throw InvalidArgument("balke-pearl score index out of range");
  }
}

// Distinct (y, a) pairs of score k in first-appearance order.
std::vector<std::pair<int, int>> build_index_set(int k) {
  std::vector<std::pair<int, int>> pairs;
  for (const BpTerm& t : terms_for(k)) {
    const std::pair<int, int> p{t.y, t.a};
    bool seen = false;
    for (const auto& q : pairs) seen = seen || q == p;
    if (!seen) pairs.push_back(p);
  }
  return pairs;
}

const std::array<std::vector<std::pair<int, int>>, kBpScoreCount>& index_sets() {
  static const auto sets = [] {
    std::array<std::vector<std::pair<int, int>>, kBpScoreCount> out;
    for (int k = 0; k < kBpScoreCount; ++k) out[k] = build_index_set(k);
    return out;
  }();
  return sets;
}

int sign_of(int k, int y, int a, int v) {
  for (const BpTerm& t : terms_for(k)) {
    if (t.y == y && t.a == a && t.v == v) return t.sign;
  }
  return 0;
}

}  // namespace

std::span<const BpTerm> bp_terms(int k) { return terms_for(k); }

double bp_constant(int k) {
  if (k < 0 || k >= kBpScoreCount) {
    throw InvalidArgument("balke-pearl score index out of range");
  }
  return kConstants[k];
}

std::span<const std::pair<int, int>> bp_index_set(int k) {
  if (k < 0 || k >= kBpScoreCount) {
    throw InvalidArgument("balke-pearl score index out of range");
  }
  return index_sets()[static_cast<std::size_t>(k)];
}

double QJointSurface::operator()(int y, int a, const Vec& x, int v) const {
  const double val = q(y, a, x, v);
  if (!std::isfinite(val)) throw NuisanceError("q-joint surface returned non-finite value");
  return val;
}

Vec balke_pearl_scores(const QJointSurface& q, const Vec& x) {
  Vec psi(kBpScoreCount);
  for (int k = 0; k < kBpScoreCount; ++k) {
    double s = kConstants[k];
    for (const BpTerm& t : terms_for(k)) {
      const double val = q(t.y, t.a, x, t.v);
      if (val < -1e-12 || val > 1.0 + 1e-12) {
        std::ostringstream msg;
        msg << "q_{" << t.y << t.a << "}(x," << t.v << ") = " << val
            << " outside [0, 1]";
        throw InvalidArgument(msg.str());
      }
      s += t.sign * val;
    }
    psi[k] = s;
  }
  return psi;
}

std::array<Vec, kBpScoreCount> balke_pearl_riesz(
    const Vec& x, int v_obs, const std::function<double(const Vec&)>& p_instrument_1,
    double eta) {
  if (v_obs != 0 && v_obs != 1) throw InvalidArgument("instrument must be 0 or 1");
  const double p1 = p_instrument_1(x);
  if (!(p1 >= eta) || !(p1 <= 1.0 - eta)) {
    std::ostringstream msg;
    msg << "instrument propensity " << p1 << " outside [" << eta << ", " << 1 - eta
        << "]";
    throw PositivityError(msg.str());
  }
  const double pv = (v_obs == 1) ? p1 : 1.0 - p1;
  std::array<Vec, kBpScoreCount> zeta;
  for (int k = 0; k < kBpScoreCount; ++k) {
    const auto& pairs = index_sets()[static_cast<std::size_t>(k)];
    zeta[k].assign(pairs.size(), 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const int sgn = sign_of(k, pairs[i].first, pairs[i].second, v_obs);
      zeta[k][i] = sgn / pv;
    }
  }
  return zeta;
}

std::array<Vec, kBpScoreCount> balke_pearl_targets(const IvObservation& z) {
  std::array<Vec, kBpScoreCount> u;
  for (int k = 0; k < kBpScoreCount; ++k) {
    const auto& pairs = index_sets()[static_cast<std::size_t>(k)];
    u[k].assign(pairs.size(), 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      u[k][i] = (z.y == pairs[i].first && z.a == pairs[i].second) ? 1.0 : 0.0;
    }
  }
  return u;
}

std::array<Vec, kBpScoreCount> balke_pearl_nuisance_at(const QJointSurface& q,
                                                       const Vec& x, int v) {
  std::array<Vec, kBpScoreCount> g;
  for (int k = 0; k < kBpScoreCount; ++k) {
    const auto& pairs = index_sets()[static_cast<std::size_t>(k)];
    g[k].assign(pairs.size(), 0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      g[k][i] = q(pairs[i].first, pairs[i].second, x, v);
    }
  }
  return g;
}

double score_balke_pearl(const IvObservation& z, const QJointSurface& q,
                         const std::function<double(const Vec&)>& p_instrument_1,
                         Temperature beta, double eta) {
  const Vec psi = balke_pearl_scores(q, z.x);
  const Vec grad = softmax_grad(psi, beta);
  const auto zeta = balke_pearl_riesz(z.x, z.v, p_instrument_1, eta);
  const auto targets = balke_pearl_targets(z);
  const auto g = balke_pearl_nuisance_at(q, z.x, z.v);
  double out = softmax_value(psi, beta);
  for (int k = 0; k < kBpScoreCount; ++k) {
    for (std::size_t i = 0; i < zeta[k].size(); ++i) {
      out += grad[k] * zeta[k][i] * (targets[k][i] - g[k][i]);
    }
  }
  return out;
}

}  // namespace maxval
