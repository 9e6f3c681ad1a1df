#include <cmath>
#include <numbers>

#include "doctest.h"
#include "maxval/errors.hpp"
#include "maxval/linalg.hpp"
#include "maxval/quadrature.hpp"

using namespace maxval;

TEST_SUITE("quadrature") {

TEST_CASE("polynomial, transcendental, and oscillatory integrands") {
  CHECK(integrate([](double x) { return x * x; }, 0.0, 1.0).value ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(integrate([](double x) { return std::exp(x); }, 0.0, 1.0).value ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
  CHECK(integrate([](double x) { return 4.0 / (1.0 + x * x); }, 0.0, 1.0).value ==
        doctest::Approx(std::numbers::pi).epsilon(1e-12));
  CHECK(integrate([](double x) { return std::sin(40.0 * x); }, 0.0, 1.0).value ==
        doctest::Approx((1.0 - std::cos(40.0)) / 40.0).epsilon(1e-10));
}

TEST_CASE("integrable endpoint singularity") {
  const QuadResult r = integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0,
                                 QuadOptions{1e-9, 50000});
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("sharply peaked integrand (large-beta bias shape)") {
  const double beta = 256.0;
  const auto f = [beta](double x) {
    const double t = std::abs(2.0 * x - 1.0);
    return t / (1.0 + std::exp(beta * t));
  };
  // int_0^1 t sigma(-beta t) dt substituting t = |2x-1| ~ U(0,1)
  const double got = integrate(f, 0.0, 1.0, QuadOptions{1e-13, 50000}).value;
  // reference: sum over dyadic refinement near the peak
  double ref = 0.0;
  const int steps = 4000000;
  for (int i = 0; i < steps; ++i) {
    const double t = (i + 0.5) / steps;
    ref += t / (1.0 + std::exp(beta * t)) / steps;
  }
  CHECK(got == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("non-convergence raises a numeric error naming the tolerance") {
  CHECK_THROWS_AS(integrate([](double x) { return std::sin(1e7 * x); }, 0.0, 1.0,
                            QuadOptions{1e-14, 8}),
                  NumericError);
}

TEST_CASE("two dimensional product and separable integrands") {
  CHECK(integrate2d([](double x, double y) { return x * y; }, 0, 1, 0, 1).value ==
        doctest::Approx(0.25).epsilon(1e-9));
  CHECK(integrate2d([](double x, double y) { return std::sin(2 * std::numbers::pi * x) *
                                                     std::cos(std::numbers::pi * y); },
                    0, 1, 0, 1, QuadOptions{1e-9, 40000})
            .value == doctest::Approx(0.0).epsilon(1e-8));
}

}  // TEST_SUITE

TEST_SUITE("linalg") {

TEST_CASE("cholesky solves a known SPD system") {
  Matrix a(2, 2);
  a(0, 0) = 4.0;
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  a(1, 1) = 3.0;
  const std::vector<double> x = cholesky_solve(a, {1.0, 2.0});
  CHECK(4.0 * x[0] + x[1] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(x[0] + 3.0 * x[1] == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("cholesky rejects an indefinite matrix") {
  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  a(1, 0) = 2.0;
  a(1, 1) = 1.0;
  CHECK_THROWS_AS(cholesky_solve(a, {1.0, 1.0}), NumericError);
}

TEST_CASE("operator norm of a known symmetric matrix") {
  Matrix a(2, 2);
  a(0, 0) = 2.0;
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  a(1, 1) = 2.0;
  CHECK(operator_norm_sym(a) == doctest::Approx(3.0).epsilon(1e-10));
  const Matrix zero(3, 3, 0.0);
  CHECK(operator_norm_sym(zero) == 0.0);
}

}  // TEST_SUITE
