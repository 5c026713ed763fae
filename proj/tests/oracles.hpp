#pragma once

// Independent reference computations for the tests. Nothing here uses the
// spectral machinery of the library.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// Adaptive Simpson on [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      double tol = 1e-12, int depth = 40) {
  auto rule = [&](double l, double r, double fl, double fm, double fr) {
    return (r - l) / 6.0 * (fl + 4.0 * fm + fr);
  };
  std::function<double(double, double, double, double, double, double, double, int)> rec =
      [&](double l, double r, double fl, double fm, double fr, double whole, double eps,
          int d) {
        const double m = 0.5 * (l + r);
        const double lm = 0.5 * (l + m), rm = 0.5 * (m + r);
        const double flm = f(lm), frm = f(rm);
        const double left = rule(l, m, fl, flm, fm), right = rule(m, r, fm, frm, fr);
        if (d <= 0 || std::abs(left + right - whole) <= 15.0 * eps)
          return left + right + (left + right - whole) / 15.0;
        return rec(l, m, fl, flm, fm, left, eps / 2, d - 1) +
               rec(m, r, fm, frm, fr, right, eps / 2, d - 1);
      };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, rule(a, b, fa, fm, fb), tol, depth);
}

/// M int_0^inf (2 + tau^{-1/2}) e^{-beta tau / 4} dtau, with tau = s^2 on the singular part.
inline double m_beta(double M, double beta) {
  const double cut = 400.0 / beta;
  const double smooth = simpson([&](double t) { return 2.0 * std::exp(-beta * t / 4.0); }, 0.0, cut);
  const double sing =
      simpson([&](double s) { return 2.0 * std::exp(-beta * s * s / 4.0); }, 0.0, std::sqrt(cut));
  return M * (smooth + sing);
}

/// Interval Dirichlet eigenfunction sqrt(2/L) sin(j pi x / L).
inline double sine_mode(int j, double x, double L = std::numbers::pi) {
  return std::sqrt(2.0 / L) * std::sin(j * std::numbers::pi * x / L);
}

/// Solution of -u'' = lambda u + f(u), u(0) = 0, u'(0) = p on [0, pi] by RK4.
struct Shot {
  double end = 0.0;      // u(pi)
  double norm_h = 0.0;   // (int u^2)^{1/2}
  double coef1 = 0.0;    // (u, phi_1)
  std::vector<double> u;
};

inline Shot shoot(double lambda, const std::function<double(double)>& f, double p,
                  int steps = 20000) {
  const double L = std::numbers::pi;
  const double h = L / steps;
  double u = 0.0, v = p;
  Shot s;
  s.u.push_back(0.0);
  auto acc = [&](double uu) { return -lambda * uu - f(uu); };
  double sq = 0.0, c1 = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double x = i * h;
    const double k1u = v, k1v = acc(u);
    const double k2u = v + 0.5 * h * k1v, k2v = acc(u + 0.5 * h * k1u);
    const double k3u = v + 0.5 * h * k2v, k3v = acc(u + 0.5 * h * k2u);
    const double k4u = v + h * k3v, k4v = acc(u + h * k3u);
    const double un = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
    v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    // trapezoid for the integrals
    sq += 0.5 * h * (u * u + un * un);
    c1 += 0.5 * h * (u * sine_mode(1, x) + un * sine_mode(1, x + h));
    u = un;
    s.u.push_back(u);
  }
  s.end = u;
  s.norm_h = std::sqrt(sq);
  s.coef1 = c1;
  return s;
}

/// Root of u(pi; p) = 0 by bisection on [p_lo, p_hi] (the end value must change sign).
inline Shot solve_bvp(double lambda, const std::function<double(double)>& f, double p_lo,
                      double p_hi) {
  double lo = p_lo, hi = p_hi;
  double f_lo = shoot(lambda, f, lo, 4000).end;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = shoot(lambda, f, mid, 4000).end;
    if ((fm < 0) == (f_lo < 0)) {
      lo = mid;
      f_lo = fm;
    } else {
      hi = mid;
    }
  }
  return shoot(lambda, f, 0.5 * (lo + hi));
}

/// min over theta of int |cos th phi_12 + sin th phi_21| on (0, pi)^2 by the midpoint rule.
inline double square_l1_min(int grid = 600, int angles = 720) {
  const double L = std::numbers::pi;
  const double h = L / grid;
  std::vector<double> s1(grid), s2(grid);
  for (int i = 0; i < grid; ++i) {
    const double x = (i + 0.5) * h;
    s1[i] = std::sin(x);
    s2[i] = std::sin(2 * x);
  }
  double best = 1e300;
  // the integrand has period pi in theta and the symmetry theta -> pi/2 - theta
  for (int a = 0; a <= angles; ++a) {
    const double th = 0.5 * std::numbers::pi * a / angles;
    const double c = std::cos(th), s = std::sin(th);
    double sum = 0.0;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) sum += std::abs(c * s1[i] * s2[j] + s * s2[i] * s1[j]);
    best = std::min(best, sum * h * h * 2.0 / L);
  }
  return best;
}

}  // namespace oracle
