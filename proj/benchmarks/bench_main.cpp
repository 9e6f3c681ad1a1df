#include <benchmark/benchmark.h>

#include <random>

#include "maxval/estimator.hpp"
#include "maxval/quadrature.hpp"
#include "maxval/rng.hpp"
#include "maxval/scores.hpp"
#include "maxval/simlab.hpp"
#include "maxval/softmax.hpp"

namespace {

using namespace maxval;

Vec random_scores(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  Vec u(static_cast<std::size_t>(n));
  for (double& v : u) v = unif(rng);
  return u;
}

void BM_softmax_value(benchmark::State& state) {
  std::mt19937_64 rng = make_stream(1, 0);
  const Vec u = random_scores(rng, static_cast<int>(state.range(0)));
  const Temperature beta{25.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_value(u, beta));
  }
}
BENCHMARK(BM_softmax_value)->Arg(2)->Arg(8);

void BM_softmax_grad(benchmark::State& state) {
  std::mt19937_64 rng = make_stream(2, 0);
  const Vec u = random_scores(rng, static_cast<int>(state.range(0)));
  const Temperature beta{25.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_grad(u, beta));
  }
}
BENCHMARK(BM_softmax_grad)->Arg(2)->Arg(8);

void BM_softmax_hessian(benchmark::State& state) {
  std::mt19937_64 rng = make_stream(3, 0);
  const Vec u = random_scores(rng, 8);
  const Temperature beta{25.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_hessian(u, beta));
  }
}
BENCHMARK(BM_softmax_hessian);

void BM_score_policy(benchmark::State& state) {
  std::mt19937_64 rng = make_stream(4, 0);
  const Vec q = random_scores(rng, 4);
  const Vec p{0.25, 0.25, 0.25, 0.25};
  const Temperature beta{30.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_policy_canonical(q, p, 2, 0.7, beta));
  }
}
BENCHMARK(BM_score_policy);

void BM_smoothing_bias_quadrature(benchmark::State& state) {
  DgpSpec spec;
  spec.family = DgpFamily::delta_family;
  spec.delta = 1.0;
  spec.p0 = 0.4;
  const Temperature beta{static_cast<double>(state.range(0))};
  for (auto _ : state) {
    benchmark::DoNotOptimize(smoothing_bias(spec, beta));
  }
}
BENCHMARK(BM_smoothing_bias_quadrature)->Arg(8)->Arg(256);

void BM_crossfit_policy(benchmark::State& state) {
  DgpSpec spec;
  spec.family = DgpFamily::binary_uniform;
  const PolicyDgp dgp(spec);
  std::mt19937_64 rng = make_stream(5, 0);
  const Dataset data = dgp.sample(static_cast<std::size_t>(state.range(0)), rng);

  CrossFitConfig cfg;
  cfg.outcome_spec.kind = LearnerKind::oracle_noise;
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

  for (auto _ : state) {
    benchmark::DoNotOptimize(crossfit_policy(data, cfg, learners));
  }
}
BENCHMARK(BM_crossfit_policy)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
