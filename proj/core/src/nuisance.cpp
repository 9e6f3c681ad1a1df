#include "maxval/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include "maxval/errors.hpp"
#include "maxval/linalg.hpp"
#include "maxval/rng.hpp"

namespace maxval {

namespace {

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct ClampRange {
  double lo, hi;
  double apply(double v, std::int64_t& events) const {
    if (v < lo || v > hi) {
      ++events;
      return std::clamp(v, lo, hi);
    }
    return v;
  }
};

ClampRange outcome_range(const Dataset& data, std::span<const std::size_t> idx) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i : idx) {
    lo = std::min(lo, data.rows[i].y);
    hi = std::max(hi, data.rows[i].y);
  }
  const double pad = 0.1 * std::max(hi - lo, 1e-12);
  return ClampRange{lo - pad, hi + pad};
}

void require_all_actions(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<int> counts(static_cast<std::size_t>(data.n_actions), 0);
  for (std::size_t i : idx) ++counts[static_cast<std::size_t>(data.rows[i].a - 1)];
  for (int a = 1; a <= data.n_actions; ++a) {
    if (counts[static_cast<std::size_t>(a - 1)] == 0) {
      std::ostringstream msg;
      msg << "fit: no training rows for action " << a;
      throw FitError(msg.str());
    }
  }
}

// Multivariate monomial exponents up to the given total degree.
std::vector<std::vector<int>> monomials(int dim, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(dim), 0);
  // counts in base (degree+1), filtered by total degree; dimension is small
  const auto total = [&] {
    int s = 0;
    for (int e : cur) s += e;
    return s;
  };
  while (true) {
    if (total() <= degree) out.push_back(cur);
    int pos = 0;
    while (pos < dim) {
      if (++cur[static_cast<std::size_t>(pos)] <= degree) break;
      cur[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == dim) break;
  }
  return out;
}

Vec poly_features(const Vec& x, const std::vector<std::vector<int>>& exps) {
  Vec f(exps.size());
  for (std::size_t j = 0; j < exps.size(); ++j) {
    double v = 1.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      for (int e = 0; e < exps[j][d]; ++e) v *= x[d];
    }
    f[j] = v;
  }
  return f;
}

// Per-action ridge regression on polynomial features. Penalty is not applied
// to the intercept (the all-zero exponent), so penalty = 0 on exactly linear
// data recovers the coefficients.
struct RidgeFit {
  std::vector<std::vector<int>> exps;
  std::vector<Vec> coef;  // per action
};

RidgeFit fit_ridge(const Dataset& data, std::span<const std::size_t> idx,
                   const LearnerSpec& spec) {
  const int dim = static_cast<int>(data.rows[idx.front()].x.size());
  RidgeFit fit;
  fit.exps = monomials(dim, spec.degree);
  const std::size_t m = fit.exps.size();
  fit.coef.resize(static_cast<std::size_t>(data.n_actions));
  for (int a = 1; a <= data.n_actions; ++a) {
    Matrix xtx(m, m, 0.0);
    std::vector<double> xty(m, 0.0);
    for (std::size_t i : idx) {
      if (data.rows[i].a != a) continue;
      const Vec f = poly_features(data.rows[i].x, fit.exps);
      for (std::size_t r = 0; r < m; ++r) {
        xty[r] += f[r] * data.rows[i].y;
        for (std::size_t c = 0; c < m; ++c) xtx(r, c) += f[r] * f[c];
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      bool intercept = true;
      for (int e : fit.exps[j]) intercept = intercept && (e == 0);
      if (!intercept) xtx(j, j) += spec.penalty;
    }
    try {
      fit.coef[static_cast<std::size_t>(a - 1)] = cholesky_solve(xtx, xty);
    } catch (const NumericError&) {
      // rank-deficient stratum: fall back to a tiny jitter ridge
      for (std::size_t j = 0; j < m; ++j) xtx(j, j) += 1e-10;
      fit.coef[static_cast<std::size_t>(a - 1)] = cholesky_solve(xtx, xty);
    }
  }
  return fit;
}

// Equal-width binning of each coordinate over the training range.
struct BinGrid {
  Vec lo, hi;
  int bins = 1;

  std::size_t cell(const Vec& x) const {
    std::size_t id = 0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double w = hi[d] - lo[d];
      int b = 0;
      if (w > 0.0) {
        b = static_cast<int>(std::floor((x[d] - lo[d]) / w * bins));
        b = std::clamp(b, 0, bins - 1);
      }
      id = id * static_cast<std::size_t>(bins) + static_cast<std::size_t>(b);
    }
    return id;
  }
  std::size_t cell_count(std::size_t dim) const {
    std::size_t n = 1;
    for (std::size_t d = 0; d < dim; ++d) n *= static_cast<std::size_t>(bins);
    return n;
  }
};

template <typename Rows>
BinGrid make_grid(const Rows& rows, std::span<const std::size_t> idx, int bins) {
  const std::size_t dim = rows[idx.front()].x.size();
  BinGrid g;
  g.bins = bins;
  g.lo.assign(dim, std::numeric_limits<double>::infinity());
  g.hi.assign(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i : idx) {
    for (std::size_t d = 0; d < dim; ++d) {
      g.lo[d] = std::min(g.lo[d], rows[i].x[d]);
      g.hi[d] = std::max(g.hi[d], rows[i].x[d]);
    }
  }
  return g;
}

}  // namespace

void LearnerSpec::validate() const {
  switch (kind) {
    case LearnerKind::knn:
      if (k < 1) throw InvalidArgument("knn: k must be >= 1");
      break;
    case LearnerKind::ridge_poly:
      if (degree < 0) throw InvalidArgument("ridge_poly: degree must be >= 0");
      if (penalty < 0.0) throw InvalidArgument("ridge_poly: penalty must be >= 0");
      break;
    case LearnerKind::empirical_bin:
      if (bins < 1) throw InvalidArgument("empirical_bin: bins must be >= 1");
      break;
    case LearnerKind::oracle_noise:
      if (!(rate > 0.0) || rate > 0.5) {
        throw InvalidArgument("oracle_noise: rate must lie in (0, 0.5]");
      }
      if (amplitude < 0.0) throw InvalidArgument("oracle_noise: amplitude must be >= 0");
      break;
  }
}

OutcomeSurface fit_outcome(const Dataset& data, std::span<const std::size_t> idx,
                           const LearnerSpec& spec) {
  spec.validate();
  if (idx.empty()) throw FitError("fit_outcome: empty training subset");
  if (spec.kind == LearnerKind::oracle_noise) {
    throw InvalidArgument("fit_outcome: oracle_noise needs the true surface; use fit_oracle_noise");
  }
  require_all_actions(data, idx);
  const ClampRange range = outcome_range(data, idx);
  auto clamp_counter = std::make_shared<std::int64_t>(0);

  OutcomeSurface surf;
  surf.n_actions = data.n_actions;
  surf.bound = std::max(std::abs(range.lo), std::abs(range.hi));
  surf.clamp_events = clamp_counter;

  switch (spec.kind) {
    case LearnerKind::knn: {
      // per-action training slices, copied so the surface owns its data
      auto train = std::make_shared<std::vector<std::vector<Observation>>>(
          static_cast<std::size_t>(data.n_actions));
      for (std::size_t i : idx) {
        (*train)[static_cast<std::size_t>(data.rows[i].a - 1)].push_back(data.rows[i]);
      }
      const int k = spec.k;
      surf.q = [train, k, range, clamp_counter](int a, const Vec& x) {
        const auto& rows = (*train)[static_cast<std::size_t>(a - 1)];
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), rows.size());
        std::vector<std::pair<double, std::size_t>> dist(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) dist[i] = {sq_dist(rows[i].x, x), i};
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take),
                          dist.end());
        double mean = 0.0;
        for (std::size_t i = 0; i < take; ++i) mean += rows[dist[i].second].y;
        mean /= static_cast<double>(take);
        return range.apply(mean, *clamp_counter);
      };
      break;
    }
    case LearnerKind::ridge_poly: {
      auto fit = std::make_shared<RidgeFit>(fit_ridge(data, idx, spec));
      surf.q = [fit, range, clamp_counter](int a, const Vec& x) {
        const Vec f = poly_features(x, fit->exps);
        const Vec& c = fit->coef[static_cast<std::size_t>(a - 1)];
        double v = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) v += c[j] * f[j];
        return range.apply(v, *clamp_counter);
      };
      break;
    }
    case LearnerKind::empirical_bin: {
      const BinGrid grid = make_grid(data.rows, idx, spec.bins);
      const std::size_t dim = data.rows[idx.front()].x.size();
      const std::size_t cells = grid.cell_count(dim);
      auto sums = std::make_shared<std::vector<Vec>>(
          static_cast<std::size_t>(data.n_actions), Vec(cells, 0.0));
      auto counts = std::make_shared<std::vector<Vec>>(
          static_cast<std::size_t>(data.n_actions), Vec(cells, 0.0));
      Vec grand_mean(static_cast<std::size_t>(data.n_actions), 0.0);
      Vec grand_n(static_cast<std::size_t>(data.n_actions), 0.0);
      for (std::size_t i : idx) {
        const auto& z = data.rows[i];
        const std::size_t c = grid.cell(z.x);
        const std::size_t a = static_cast<std::size_t>(z.a - 1);
        (*sums)[a][c] += z.y;
        (*counts)[a][c] += 1.0;
        grand_mean[a] += z.y;
        grand_n[a] += 1.0;
      }
      for (std::size_t a = 0; a < grand_mean.size(); ++a) grand_mean[a] /= grand_n[a];
      surf.q = [grid, sums, counts, grand_mean, range, clamp_counter](int a, const Vec& x) {
        const std::size_t c = grid.cell(x);
        const std::size_t ai = static_cast<std::size_t>(a - 1);
        const double n = (*counts)[ai][c];
        const double v = n > 0.0 ? (*sums)[ai][c] / n : grand_mean[ai];
        return range.apply(v, *clamp_counter);
      };
      break;
    }
    case LearnerKind::oracle_noise:
      break;  // unreachable
  }
  return surf;
}

OutcomeSurface fit_oracle_noise(const OutcomeSurface& truth, std::int64_t n,
                                const LearnerSpec& spec) {
  spec.validate();
  if (spec.kind != LearnerKind::oracle_noise) {
    throw InvalidArgument("fit_oracle_noise: spec kind must be oracle_noise");
  }
  if (n < 1) throw InvalidArgument("fit_oracle_noise: n must be >= 1");
  const double scale = spec.amplitude * std::pow(static_cast<double>(n), -spec.rate);

  // One frequency/phase pair per action. sqrt(2) cos(2 pi m x1 + phi) has
  // unit L2 norm on U(0,1) per whole period, so the direction has exact unit
  // norm under the uniform design measure.
  std::mt19937_64 rng = make_stream(spec.direction_seed, 0x6f7261636c65ull);
  std::uniform_int_distribution<int> freq(1, 3);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<int> m(static_cast<std::size_t>(truth.n_actions));
  Vec phi(static_cast<std::size_t>(truth.n_actions));
  for (std::size_t a = 0; a < m.size(); ++a) {
    m[a] = freq(rng);
    phi[a] = phase(rng);
  }

  OutcomeSurface surf;
  surf.n_actions = truth.n_actions;
  surf.bound = truth.bound + scale * std::numbers::sqrt2;
  surf.clamp_events = std::make_shared<std::int64_t>(0);
  surf.q = [truth, scale, m, phi](int a, const Vec& x) {
    const double h = std::numbers::sqrt2 *
                     std::cos(2.0 * std::numbers::pi * m[static_cast<std::size_t>(a - 1)] * x[0] +
                              phi[static_cast<std::size_t>(a - 1)]);
    return truth(a, x) + scale * h;
  };
  return surf;
}

PropensityModel fit_propensity(const Dataset& data, std::span<const std::size_t> idx,
                               const LearnerSpec& spec, double eta) {
  spec.validate();
  if (idx.empty()) throw FitError("fit_propensity: empty training subset");
  if (!(eta > 0.0) || eta >= 0.5) throw InvalidArgument("fit_propensity: eta must lie in (0, 0.5)");
  require_all_actions(data, idx);
  auto clip_counter = std::make_shared<std::int64_t>(0);
  const int n_actions = data.n_actions;

  if (n_actions * eta > 1.0) {
    throw InvalidArgument("fit_propensity: eta too large for the action count");
  }
  auto finalize = [n_actions, eta, clip_counter](Vec raw) {
    double sum = 0.0;
    for (double v : raw) sum += v;
    for (double& v : raw) v = sum > 0.0 ? v / sum : 1.0 / n_actions;
    bool clipped = false;
    for (double& v : raw) {
      const double c = std::clamp(v, eta, 1.0 - eta);
      clipped = clipped || (c != v);
      v = c;
    }
    if (clipped) ++*clip_counter;
    // repair the sum without leaving [eta, 1 - eta]: shift the excess onto
    // entries with slack in the needed direction
    for (int pass = 0; pass < 8; ++pass) {
      double s = 0.0;
      for (double v : raw) s += v;
      const double d = s - 1.0;
      if (std::abs(d) < 1e-15) break;
      Vec slack(raw.size());
      double total_slack = 0.0;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        slack[i] = d > 0.0 ? raw[i] - eta : (1.0 - eta) - raw[i];
        total_slack += slack[i];
      }
      if (total_slack <= 0.0) break;
      for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] -= d * slack[i] / total_slack;
      }
    }
    return raw;
  };

  PropensityModel model;
  model.n_actions = n_actions;
  model.eta = eta;
  model.clip_events = clip_counter;

  switch (spec.kind) {
    case LearnerKind::knn: {
      auto train = std::make_shared<std::vector<Observation>>();
      for (std::size_t i : idx) train->push_back(data.rows[i]);
      const int k = spec.k;
      model.probs = [train, k, n_actions, finalize](const Vec& x) {
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), train->size());
        std::vector<std::pair<double, std::size_t>> dist(train->size());
        for (std::size_t i = 0; i < train->size(); ++i) dist[i] = {sq_dist((*train)[i].x, x), i};
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take),
                          dist.end());
        Vec counts(static_cast<std::size_t>(n_actions), 0.0);
        for (std::size_t i = 0; i < take; ++i) {
          counts[static_cast<std::size_t>((*train)[dist[i].second].a - 1)] += 1.0;
        }
        return finalize(std::move(counts));
      };
      break;
    }
    case LearnerKind::empirical_bin: {
      const BinGrid grid = make_grid(data.rows, idx, spec.bins);
      const std::size_t dim = data.rows[idx.front()].x.size();
      const std::size_t cells = grid.cell_count(dim);
      auto counts = std::make_shared<std::vector<Vec>>(cells, Vec(static_cast<std::size_t>(n_actions), 0.0));
      for (std::size_t i : idx) {
        const auto& z = data.rows[i];
        (*counts)[grid.cell(z.x)][static_cast<std::size_t>(z.a - 1)] += 1.0;
      }
      model.probs = [grid, counts, finalize](const Vec& x) {
        return finalize((*counts)[grid.cell(x)]);
      };
      break;
    }
    default:
      throw InvalidArgument("fit_propensity supports knn and empirical_bin learners");
  }
  return model;
}

QJointSurface fit_q_joint(const IvDataset& data, std::span<const std::size_t> idx,
                          const LearnerSpec& spec) {
  spec.validate();
  if (idx.empty()) throw FitError("fit_q_joint: empty training subset");
  if (spec.kind != LearnerKind::empirical_bin) {
    throw InvalidArgument("fit_q_joint supports the empirical_bin learner only");
  }
  bool seen_v[2] = {false, false};
  for (std::size_t i : idx) seen_v[data.rows[i].v] = true;
  if (!seen_v[0] || !seen_v[1]) {
    throw FitError("fit_q_joint: an instrument stratum has no training rows");
  }

  const BinGrid grid = make_grid(data.rows, idx, spec.bins);
  const std::size_t dim = data.rows[idx.front()].x.size();
  const std::size_t cells = grid.cell_count(dim);
  // counts[v][cell][y*2 + a]
  auto counts = std::make_shared<std::vector<std::vector<Vec>>>(
      2, std::vector<Vec>(cells, Vec(4, 0.0)));
  auto global = std::make_shared<std::vector<Vec>>(2, Vec(4, 0.0));
  for (std::size_t i : idx) {
    const auto& z = data.rows[i];
    const std::size_t cat = static_cast<std::size_t>(z.y * 2 + z.a);
    (*counts)[static_cast<std::size_t>(z.v)][grid.cell(z.x)][cat] += 1.0;
    (*global)[static_cast<std::size_t>(z.v)][cat] += 1.0;
  }

  QJointSurface surf;
  surf.clamp_events = std::make_shared<std::int64_t>(0);
  surf.q = [grid, counts, global](int y, int a, const Vec& x, int v) {
    const Vec& cell = (*counts)[static_cast<std::size_t>(v)][grid.cell(x)];
    double total = cell[0] + cell[1] + cell[2] + cell[3];
    const Vec& source = total > 0.0 ? cell : (*global)[static_cast<std::size_t>(v)];
    total = source[0] + source[1] + source[2] + source[3];
    return source[static_cast<std::size_t>(y * 2 + a)] / total;
  };
  return surf;
}

std::function<double(const Vec&)> fit_instrument_propensity(
    const IvDataset& data, std::span<const std::size_t> idx, const LearnerSpec& spec,
    double eta) {
  spec.validate();
  if (idx.empty()) throw FitError("fit_instrument_propensity: empty training subset");
  if (spec.kind != LearnerKind::empirical_bin) {
    throw InvalidArgument("fit_instrument_propensity supports the empirical_bin learner only");
  }
  const BinGrid grid = make_grid(data.rows, idx, spec.bins);
  const std::size_t dim = data.rows[idx.front()].x.size();
  const std::size_t cells = grid.cell_count(dim);
  auto ones = std::make_shared<Vec>(cells, 0.0);
  auto totals = std::make_shared<Vec>(cells, 0.0);
  double global_ones = 0.0;
  for (std::size_t i : idx) {
    const std::size_t c = grid.cell(data.rows[i].x);
    (*ones)[c] += data.rows[i].v;
    (*totals)[c] += 1.0;
    global_ones += data.rows[i].v;
  }
  const double global_rate = global_ones / static_cast<double>(idx.size());
  return [grid, ones, totals, global_rate, eta](const Vec& x) {
    const std::size_t c = grid.cell(x);
    const double p = (*totals)[c] > 0.0 ? (*ones)[c] / (*totals)[c] : global_rate;
    return std::clamp(p, eta, 1.0 - eta);
  };
}

}  // namespace maxval
