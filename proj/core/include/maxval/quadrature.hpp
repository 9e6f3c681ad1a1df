#pragma once

#include <functional>

namespace maxval {

struct QuadOptions {
  double abs_tol = 1e-10;
  int max_intervals = 20000;
};

struct QuadResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int intervals = 0;
};

// Adaptive Gauss-Kronrod (G7, K15) integration of f over [a, b].
// Throws NumericError with the achieved tolerance if the interval budget is
// exhausted before the error estimate drops below abs_tol.
QuadResult integrate(const std::function<double(double)>& f, double a, double b,
                     const QuadOptions& opts = {});

// Iterated 2-d integration over [ax, bx] x [ay, by]. The inner integrals run
// at a tighter tolerance than the outer pass.
QuadResult integrate2d(const std::function<double(double, double)>& f, double ax,
                       double bx, double ay, double by, const QuadOptions& opts = {});

}  // namespace maxval
