#include "bifinf/reduced_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "bifinf/csv.hpp"
#include "bifinf/errors.hpp"

namespace bifinf {

namespace {

Eigen::VectorXd unit_direction(int m, double angle) {
  Eigen::VectorXd v(m);
  if (m == 1) {
    v[0] = angle < std::numbers::pi ? 1.0 : -1.0;
  } else {
    v << std::cos(angle), std::sin(angle);
  }
  return v;
}

/// Unit directions on the sphere of V_c: both signs for m = 1, n angles for m = 2.
std::vector<Eigen::VectorXd> sphere_directions(int m, int n) {
  std::vector<Eigen::VectorXd> dirs;
  if (m == 1) {
    dirs.push_back(Eigen::VectorXd::Constant(1, 1.0));
    dirs.push_back(Eigen::VectorXd::Constant(1, -1.0));
    return dirs;
  }
  for (int i = 0; i < n; ++i) dirs.push_back(unit_direction(2, 2.0 * std::numbers::pi * i / n));
  return dirs;
}

std::string describe(const Eigen::VectorXd& w) {
  std::ostringstream os;
  os.precision(10);
  os << "w = (";
  for (Eigen::Index i = 0; i < w.size(); ++i) os << (i ? ", " : "") << w[i];
  os << ")";
  return os.str();
}

}  // namespace

ReducedFlow::ReducedFlow(std::shared_ptr<const ManifoldGraph> graph) : graph_(std::move(graph)) {}

double ReducedFlow::distance() const { return sigma() * (split().mu_k() - lambda()); }

Eigen::VectorXd ReducedFlow::lift(const Eigen::VectorXd& w) const {
  return split().embed_center(w) + graph_->xi(w);
}

Eigen::VectorXd ReducedFlow::field(const Eigen::VectorXd& w) const {
  const Eigen::VectorXd g = evaluate_nemytskii(spec(), *split().basis, lift(w));
  return (lambda() - split().mu_k()) * w + split().center_coords(g);
}

double ReducedFlow::radial_derivative(const Eigen::VectorXd& w) const {
  return 2.0 * field(w).dot(w);
}

Eigen::MatrixXd ReducedFlow::jacobian(const Eigen::VectorXd& w, double eps) const {
  const int m = dim();
  Eigen::MatrixXd J(m, m);
  for (int c = 0; c < m; ++c) {
    const double h = eps * std::max(1.0, std::abs(w[c]));
    Eigen::VectorXd wp = w, wm = w;
    wp[c] += h;
    wm[c] -= h;
    J.col(c) = (field(wp) - field(wm)) / (2.0 * h);
  }
  return J;
}

void ReducedFlow::tabulate(double spacing, int angles) {
  const double R = graph_->box().radius;
  table_spacing_ = spacing;
  table_radial_ = static_cast<int>(std::ceil(R / spacing)) + 1;
  table_spacing_ = R / (table_radial_ - 1);
  table_.clear();
  auto nonlinear = [&](const Eigen::VectorXd& w) {
    return Eigen::VectorXd(field(w) - (lambda() - split().mu_k()) * w);
  };
  if (dim() == 1) {
    table_angles_ = 0;
    for (int i = -(table_radial_ - 1); i <= table_radial_ - 1; ++i) {
      table_.push_back(nonlinear(Eigen::VectorXd::Constant(1, i * table_spacing_)));
    }
    return;
  }
  table_angles_ = angles;
  table_.push_back(nonlinear(Eigen::VectorXd::Zero(2)));
  for (int ri = 1; ri < table_radial_; ++ri)
    for (int aj = 0; aj < angles; ++aj)
      table_.push_back(nonlinear(ri * table_spacing_ *
                                 unit_direction(2, 2.0 * std::numbers::pi * aj / angles)));
}

Eigen::VectorXd ReducedFlow::fast_field(const Eigen::VectorXd& w) const {
  if (!tabulated()) return field(w);
  const double R = graph_->box().radius;
  if (w.norm() > R * (1.0 + 1e-12)) {
    throw OutOfDomainError("reduced state of norm " + std::to_string(w.norm()) +
                           " left the tabulated region");
  }
  const Eigen::VectorXd linear = (lambda() - split().mu_k()) * w;
  const int nr = table_radial_;
  if (dim() == 1) {
    const double s = std::clamp((w[0] + R) / table_spacing_, 0.0, 2.0 * (nr - 1));
    const int i = std::min(static_cast<int>(std::floor(s)), 2 * (nr - 1) - 1);
    const double t = s - i;
    return linear + (1.0 - t) * table_[static_cast<std::size_t>(i)] +
           t * table_[static_cast<std::size_t>(i + 1)];
  }
  const int na = table_angles_;
  auto at = [&](int ri, int aj) -> const Eigen::VectorXd& {
    if (ri == 0) return table_[0];
    return table_[static_cast<std::size_t>(1 + (ri - 1) * na + ((aj % na) + na) % na)];
  };
  const double rs = std::min(w.norm() / table_spacing_, static_cast<double>(nr - 1));
  const int ri = std::min(static_cast<int>(std::floor(rs)), nr - 2);
  const double tr = rs - ri;
  double ang = std::atan2(w[1], w[0]);
  if (ang < 0.0) ang += 2.0 * std::numbers::pi;
  const double as = ang / (2.0 * std::numbers::pi) * na;
  const int aj = std::min(static_cast<int>(std::floor(as)), na - 1);
  const double ta = as - aj;
  return linear + (1.0 - tr) * ((1.0 - ta) * at(ri, aj) + ta * at(ri, aj + 1)) +
         tr * ((1.0 - ta) * at(ri + 1, aj) + ta * at(ri + 1, aj + 1));
}

Eigen::VectorXd ReducedFlow::flow(const Eigen::VectorXd& w, double tau, double h) const {
  const int steps = std::max(1, static_cast<int>(std::ceil(tau / h - 1e-9)));
  const double dt = tau / steps;
  const double s = sigma();
  Eigen::VectorXd x = w;
  for (int n = 0; n < steps; ++n) {
    const Eigen::VectorXd k1 = s * fast_field(x);
    const Eigen::VectorXd k2 = s * fast_field(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = s * fast_field(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = s * fast_field(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return x;
}

std::vector<Eigen::VectorXd> ReducedFlow::trajectory(const Eigen::VectorXd& w, double horizon,
                                                     double h) const {
  const int steps = std::max(1, static_cast<int>(std::ceil(horizon / h - 1e-9)));
  const double dt = horizon / steps;
  const double s = sigma();
  std::vector<Eigen::VectorXd> out{w};
  Eigen::VectorXd x = w;
  for (int n = 0; n < steps; ++n) {
    const Eigen::VectorXd k1 = s * field(x);
    const Eigen::VectorXd k2 = s * field(x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = s * field(x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = s * field(x + dt * k3);
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    out.push_back(x);
  }
  return out;
}

double center_l1_norm(const SpectralSplit& split, const Eigen::VectorXd& w) {
  const SpectralBasis& basis = *split.basis;
  const double L = basis.domain().length;
  static thread_local Quadrature fine;
  static thread_local double fine_length = -1.0;
  const int dimension = basis.dimension();
  const int panels = dimension == 1 ? 512 : 96;
  if (fine_length != L || fine.points_per_dim() != 8 * panels) {
    fine = composite_gauss_legendre(L, panels, 1);
    fine_length = L;
  }
  const Eigen::Index q = fine.nodes.size();
  const double norm = std::sqrt(2.0 / L);
  auto sines = [&](int index) {
    Eigen::VectorXd s(q);
    for (Eigen::Index i = 0; i < q; ++i)
      s[i] = norm * std::sin(index * std::numbers::pi * fine.nodes[i] / L);
    return s;
  };
  if (dimension == 1) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(q);
    for (int c = 0; c < split.center_dim(); ++c)
      v += w[c] * sines(basis.mode(split.center[static_cast<std::size_t>(c)]).index[0]);
    return fine.weights.dot(v.cwiseAbs());
  }
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(q, q);
  for (int c = 0; c < split.center_dim(); ++c) {
    const Mode& md = basis.mode(split.center[static_cast<std::size_t>(c)]);
    v += w[c] * sines(md.index[0]) * sines(md.index[1]).transpose();
  }
  return fine.weights.dot(v.cwiseAbs() * fine.weights);
}

double min_center_l1(const SpectralSplit& split, int angles, Eigen::VectorXd* argmin) {
  const int m = split.center_dim();
  if (m == 1) {
    if (argmin) *argmin = Eigen::VectorXd::Constant(1, 1.0);
    return center_l1_norm(split, Eigen::VectorXd::Constant(1, 1.0));
  }
  if (m != 2) throw PreconditionError("L1 minimization is implemented for m <= 2");
  // the L1 norm is even, so half a turn suffices
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> vals(static_cast<std::size_t>(angles));
  for (int i = 0; i < angles; ++i) {
    const double ang = std::numbers::pi * i / angles;
    vals[static_cast<std::size_t>(i)] = center_l1_norm(split, unit_direction(2, ang));
    if (vals[static_cast<std::size_t>(i)] < best_val) {
      best_val = vals[static_cast<std::size_t>(i)];
      best = i;
    }
  }
  // golden-section refinement on the bracketing angles
  const double step = std::numbers::pi / angles;
  double lo = (best - 1) * step, hi = (best + 1) * step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  auto eval = [&](double a) { return center_l1_norm(split, unit_direction(2, a)); };
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = eval(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = eval(x2);
    }
  }
  const double ang = 0.5 * (lo + hi);
  const double refined = eval(ang);
  if (refined < best_val) {
    best_val = refined;
    if (argmin) *argmin = unit_direction(2, ang);
  } else if (argmin) {
    *argmin = unit_direction(2, best * step);
  }
  return best_val;
}

SaturationResult find_s0(const ReducedFlow& flow, double s_cap) {
  const SpectralSplit& split = flow.split();
  const SpectralBasis& basis = *split.basis;
  const NonlinearitySpec& spec = flow.spec();
  const int m = flow.dim();
  SaturationResult res;
  res.r = min_center_l1(split, 256, &res.r_argmin);
  res.r_refined = m == 1 ? res.r : min_center_l1(split, 512);
  const double delta = std::min(spec.f_upper, spec.f_lower);
  res.epsilon = res.r * delta / 2.0;

  std::vector<Eigen::VectorXd> dirs = sphere_directions(m, 64);
  if (m == 2) dirs.push_back(res.r_argmin);
  res.directions = static_cast<int>(dirs.size());

  // corrections: zero and the largest sampled xi values
  std::vector<Eigen::VectorXd> fixed{Eigen::VectorXd::Zero(basis.size())};
  std::vector<std::pair<double, int>> by_norm;
  const auto& samples = flow.graph().samples();
  for (std::size_t i = 0; i < samples.size(); ++i)
    by_norm.emplace_back(split.norm_alpha(samples[i].xi), static_cast<int>(i));
  std::sort(by_norm.rbegin(), by_norm.rend());
  for (std::size_t i = 0; i < std::min<std::size_t>(3, by_norm.size()); ++i)
    fixed.push_back(samples[static_cast<std::size_t>(by_norm[i].second)].xi);
  res.corrections = static_cast<int>(fixed.size()) + 1;

  auto margin = [&](double s) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& d : dirs) {
      const Eigen::VectorXd v = split.embed_center(d);
      std::vector<Eigen::VectorXd> us = fixed;
      const Eigen::VectorXd w = s * d;
      if (flow.graph().contains(w)) us.push_back(flow.graph().xi(w));
      for (const auto& u : us) {
        const auto mg = landesman_lazer_margin(spec, basis, s, v, u, res.epsilon);
        worst = std::min(worst, mg.lhs - mg.rhs);
      }
    }
    return worst;
  };

  std::vector<double> scan;
  for (double s = 1e-3; s < s_cap; s *= 1.25) scan.push_back(s);
  scan.push_back(s_cap);
  int last_fail = -1;
  for (int i = static_cast<int>(scan.size()) - 1; i >= 0; --i) {
    if (margin(scan[static_cast<std::size_t>(i)]) < 0.0) {
      last_fail = i;
      break;
    }
  }
  if (last_fail == static_cast<int>(scan.size()) - 1) {
    std::ostringstream os;
    os << "Landesman-Lazer margin still fails at the saturation cap s = " << s_cap;
    throw CertificationError(os.str());
  }
  if (last_fail < 0) {
    res.s0 = scan.front();
  } else {
    double lo = scan[static_cast<std::size_t>(last_fail)];
    double hi = scan[static_cast<std::size_t>(last_fail + 1)];
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      (margin(mid) >= 0.0 ? hi : lo) = mid;
    }
    res.s0 = hi;
  }
  res.min_margin_at_s0 = margin(res.s0);
  return res;
}

double annulus_radius_bound(const NonlinearitySpec& spec, const SpectralSplit& split) {
  const double d = spec.sign() * (split.mu_k() - split.lambda);
  if (!(d > 0.0)) throw PreconditionError("lambda lies on the wrong side of mu_k");
  const double cf = nemytskii_bound(spec, split.basis->domain());
  return 2.0 * cf / d;
}

AnnulusSpec invariant_annulus(const ReducedFlow& flow) {
  return invariant_annulus(flow, find_s0(flow));
}

AnnulusSpec invariant_annulus(const ReducedFlow& flow, const SaturationResult& sat) {
  const NonlinearitySpec& spec = flow.spec();
  const int m = flow.dim();
  AnnulusSpec an;
  an.lambda = flow.lambda();
  an.distance = flow.distance();
  if (!(an.distance > 0.0)) {
    std::ostringstream os;
    os << "lambda = " << an.lambda << " lies on the wrong side of mu_k = " << flow.split().mu_k();
    throw PreconditionError(os.str());
  }
  an.C_f = nemytskii_bound(spec, flow.split().basis->domain());
  an.C_lambda = an.C_f * an.C_f / (2.0 * an.distance);
  an.rho = std::sqrt(2.0 * an.C_lambda / an.distance);
  an.s0 = sat.s0;
  an.R0 = sat.s0;
  an.r = sat.r;
  an.delta = std::min(spec.f_upper, spec.f_lower);
  an.c0 = an.r * an.delta / 2.0;
  an.a_bound = (2.0 * an.C_f - an.c0) / (2.0 * an.distance);
  const double sig = flow.sigma();

  auto inward = [&](double R, const std::vector<Eigen::VectorXd>& dirs, Eigen::VectorXd* worst_w) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& d : dirs) {
      const Eigen::VectorXd w = R * d;
      const double v = sig * flow.radial_derivative(w) - an.c0 * R;
      if (v < worst) {
        worst = v;
        if (worst_w) *worst_w = w;
      }
    }
    return worst;
  };
  auto violation = [&](const Eigen::VectorXd& w, double value, const char* what) {
    std::ostringstream os;
    os << what << " fails at " << describe(w) << ", lambda = " << an.lambda << " (margin "
       << value << ")";
    return CertificationError(os.str());
  };

  if (an.R0 > an.a_bound) {
    std::ostringstream os;
    os << "saturation radius R0 = " << an.R0 << " exceeds the inward-flow bound "
       << an.a_bound << " at lambda = " << an.lambda;
    throw CertificationError(os.str());
  }
  const double R_box = flow.graph().box().radius;
  if (an.a_bound + an.rho > R_box) {
    std::ostringstream os;
    os << "graph box radius " << R_box << " is below the annulus bound " << an.a_bound + an.rho;
    throw OutOfDomainError(os.str());
  }

  const auto scan_dirs = sphere_directions(m, 64);
  Eigen::VectorXd bad;
  {
    const double v = inward(an.R0, sphere_directions(m, 256), &bad);
    if (v < 0.0) throw violation(bad, v, "inward flow at the saturation radius");
  }
  // continuous radius search: the largest R with inward flow on [R0, R]
  const int scan_steps = 200;
  const double dR = (an.a_bound - an.R0) / scan_steps;
  double pass = an.R0;
  double fail = -1.0;
  for (int i = 1; i <= scan_steps; ++i) {
    const double R = an.R0 + i * dR;
    if (inward(R, scan_dirs, nullptr) < 0.0) {
      fail = R;
      break;
    }
    pass = R;
  }
  if (fail > 0.0) {
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (pass + fail);
      (inward(mid, scan_dirs, nullptr) >= 0.0 ? pass : fail) = mid;
    }
  }
  an.a = pass;

  // dense certification of the inward band, doubling angles until stable
  const int radii = 128;
  int angles = 256;
  for (;;) {
    const auto dirs = sphere_directions(m, angles);
    double worst = std::numeric_limits<double>::infinity();
    double first_bad_radius = -1.0;
    for (int i = 0; i < radii; ++i) {
      const double R = an.R0 + (an.a - an.R0) * i / (radii - 1);
      Eigen::VectorXd w;
      const double v = inward(R, dirs, &w);
      if (v < 0.0 && first_bad_radius < 0.0) {
        first_bad_radius = R;
        bad = w;
      }
      worst = std::min(worst, v);
    }
    if (first_bad_radius >= 0.0) {
      if (first_bad_radius <= an.R0) throw violation(bad, worst, "inward flow");
      // shrink below the first violation and re-certify
      an.a = an.R0 + (first_bad_radius - an.R0) * (1.0 - 1.0 / radii);
      continue;
    }
    an.inner_min_margin = worst;
    an.inner_samples = radii * static_cast<int>(dirs.size());
    an.angles = static_cast<int>(dirs.size());
    if (m == 1 || angles >= 512) break;
    angles *= 2;
  }

  an.b = an.a + an.rho;
  const auto outer_dirs = sphere_directions(m, m == 1 ? 2 : 512);
  an.outer_max = -std::numeric_limits<double>::infinity();
  for (const auto& d : outer_dirs) {
    const Eigen::VectorXd w = an.b * d;
    const double v = sig * flow.radial_derivative(w);
    an.outer_max = std::max(an.outer_max, v);
    if (v > 1e-12 * (1.0 + an.b * an.b)) throw violation(w, -v, "outer boundary blocking");
  }
  an.outer_samples = static_cast<int>(outer_dirs.size());
  return an;
}

ThetaSearch search_theta(double mu_k, double beta, double sigma,
                         const std::function<bool(double)>& certify, int bisections) {
  ThetaSearch out;
  auto trial = [&](double theta) {
    bool ok = false;
    try {
      ok = certify(mu_k - sigma * theta);
    } catch (const Error&) {
      ok = false;
    }
    out.trials.emplace_back(theta, ok);
    ++out.evaluations;
    return ok;
  };
  double hi = beta / 8.0;
  if (trial(hi)) {
    out.theta = hi;
    return out;
  }
  double lo = hi;
  bool found = false;
  for (int i = 0; i < 16; ++i) {
    lo *= 0.5;
    if (trial(lo)) {
      found = true;
      break;
    }
    hi = lo;
  }
  if (!found) throw CertificationError("no certified theta found above beta / 8 * 2^-16");
  for (int it = 0; it < bisections; ++it) {
    const double mid = 0.5 * (lo + hi);
    (trial(mid) ? lo : hi) = mid;
  }
  out.theta = lo;
  return out;
}

double gronwall_envelope(const AnnulusSpec& annulus, double w0_norm, double t) {
  if (!(annulus.distance > 0.0)) {
    throw OutOfDomainError("the Gronwall envelope needs lambda on the bifurcation side");
  }
  if (t < 0.0) throw PreconditionError("envelope time must be nonnegative");
  const double e = std::exp(-annulus.distance * t);
  return e * w0_norm * w0_norm + (1.0 - e) * annulus.rho * annulus.rho;
}

int AttractorCover::cover_count() const {
  return static_cast<int>(std::count(cover.begin(), cover.end(), 1));
}

Eigen::VectorXd AttractorCover::center(int idx) const {
  const double h = cell_size();
  Eigen::VectorXd w(m);
  if (m == 1) {
    w[0] = lo + (idx + 0.5) * h;
  } else {
    w << lo + (idx % cells + 0.5) * h, lo + (idx / cells + 0.5) * h;
  }
  return w;
}

int AttractorCover::index_of(const Eigen::VectorXd& w) const {
  const double h = cell_size();
  int coord[2] = {0, 0};
  for (int c = 0; c < m; ++c) {
    const double s = (w[c] - lo) / h;
    if (!(s >= 0.0) || s >= cells) return -1;
    coord[c] = static_cast<int>(s);
  }
  return m == 1 ? coord[0] : coord[0] + cells * coord[1];
}

std::vector<ReducedEquilibrium> polish_equilibria(const ReducedFlow& flow,
                                                  const std::vector<Eigen::VectorXd>& starts,
                                                  double min_radius, double max_radius) {
  std::vector<ReducedEquilibrium> found;
  const double R = flow.graph().box().radius;
  for (const auto& s : starts) {
    Eigen::VectorXd w = s;
    bool ok = false;
    try {
      for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd F = flow.field(w);
        if (F.norm() < 1e-12 * (1.0 + w.norm())) {
          ok = true;
          break;
        }
        const Eigen::MatrixXd J = flow.jacobian(w);
        Eigen::VectorXd dw = J.fullPivLu().solve(-F);
        if (!dw.allFinite()) break;
        double t = 1.0;
        while (t > 1e-4) {
          const Eigen::VectorXd trial = w + t * dw;
          if (trial.norm() < R && flow.field(trial).norm() < F.norm()) break;
          t *= 0.5;
        }
        if (t <= 1e-4) break;
        w += t * dw;
      }
    } catch (const OutOfDomainError&) {
      ok = false;
    }
    if (!ok) continue;
    const double nw = w.norm();
    if (nw < min_radius || nw > max_radius) continue;
    bool dup = false;
    for (const auto& e : found) {
      if ((e.w - w).norm() < 1e-6 * (1.0 + nw)) dup = true;
    }
    if (dup) continue;
    ReducedEquilibrium eq;
    eq.w = w;
    eq.residual = flow.field(w).norm();
    const Eigen::VectorXcd ev = (flow.sigma() * flow.jacobian(w)).eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev[i].real() > 0.0) ++eq.unstable_directions;
    found.push_back(eq);
  }
  std::sort(found.begin(), found.end(), [](const ReducedEquilibrium& a, const ReducedEquilibrium& b) {
    if (a.w.size() == 1) return a.w[0] < b.w[0];
    return std::atan2(a.w[1], a.w[0]) < std::atan2(b.w[1], b.w[0]);
  });
  return found;
}

AttractorCover compute_attractor(const ReducedFlow& flow, const AnnulusSpec& annulus,
                                 const AttractorConfig& config) {
  const int m = flow.dim();
  AttractorCover cov;
  cov.m = m;
  cov.lambda = annulus.lambda;
  cov.cells = config.cells > 0 ? config.cells : (m == 1 ? 400 : 64);
  const int K = config.samples_per_cell > 0 ? config.samples_per_cell : (m == 1 ? 8 : 4);
  const double tau = config.tau > 0.0 ? config.tau : 3.0 / annulus.distance;
  const double h = config.rk4_step > 0.0 ? config.rk4_step : std::min(2.0, tau / 4.0);
  cov.hi = annulus.b * 1.02;
  cov.lo = -cov.hi;
  const double cs = cov.cell_size();
  const int total = m == 1 ? cov.cells : cov.cells * cov.cells;

  cov.active.assign(static_cast<std::size_t>(total), 0);
  for (int idx = 0; idx < total; ++idx) {
    const Eigen::VectorXd c = cov.center(idx);
    // nearest and farthest points of the cell from the origin
    double near2 = 0.0, far2 = 0.0;
    for (int k = 0; k < m; ++k) {
      const double lo = c[k] - 0.5 * cs, hi = c[k] + 0.5 * cs;
      const double nk = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
      const double fk = std::max(std::abs(lo), std::abs(hi));
      near2 += nk * nk;
      far2 += fk * fk;
    }
    if (std::sqrt(far2) >= annulus.a && std::sqrt(near2) <= annulus.b)
      cov.active[static_cast<std::size_t>(idx)] = 1;
  }

  // equilibria: Newton on the tabulated field from every active cell, then exact polish
  std::vector<Eigen::VectorXd> rough;
  for (int idx = 0; idx < total; ++idx) {
    if (!cov.active[static_cast<std::size_t>(idx)]) continue;
    Eigen::VectorXd w = cov.center(idx);
    bool ok = false;
    try {
      for (int it = 0; it < 30; ++it) {
        const Eigen::VectorXd F = flow.fast_field(w);
        if (F.norm() < 1e-10) {
          ok = true;
          break;
        }
        Eigen::MatrixXd J(m, m);
        for (int c = 0; c < m; ++c) {
          Eigen::VectorXd wp = w, wm = w;
          wp[c] += 1e-5 * cs;
          wm[c] -= 1e-5 * cs;
          J.col(c) = (flow.fast_field(wp) - flow.fast_field(wm)) / (2e-5 * cs);
        }
        Eigen::VectorXd dw = J.fullPivLu().solve(-F);
        if (!dw.allFinite() || dw.norm() > 2.0 * cs) break;
        w += dw;
      }
    } catch (const OutOfDomainError&) {
      ok = false;
    }
    if (!ok || cov.index_of(w) != idx) continue;
    rough.push_back(w);
  }
  std::vector<ReducedEquilibrium> eqs =
      polish_equilibria(flow, rough, annulus.a * (1.0 - 1e-9), annulus.b * (1.0 + 1e-9));

  // transition graph of the time-tau map on sample points
  std::vector<std::vector<int>> succ(static_cast<std::size_t>(total));
  const int per_cell = m == 1 ? K : K * K;
  for (int idx = 0; idx < total; ++idx) {
    if (!cov.active[static_cast<std::size_t>(idx)]) continue;
    const Eigen::VectorXd c = cov.center(idx);
    auto& out = succ[static_cast<std::size_t>(idx)];
    for (int s = 0; s < per_cell; ++s) {
      Eigen::VectorXd w = c;
      w[0] += ((s % K) + 0.5) / K * cs - 0.5 * cs;
      if (m == 2) w[1] += ((s / K) + 0.5) / K * cs - 0.5 * cs;
      const double nw = w.norm();
      if (nw < annulus.a || nw > annulus.b) continue;  // only points of the annulus are seeded
      const Eigen::VectorXd img = flow.flow(w, tau, h);
      const double ni = img.norm();
      if (ni > annulus.b * (1.0 + 1e-6) + 1e-9 || ni < annulus.a * (1.0 - 1e-6) - 1e-9) {
        std::ostringstream os;
        os << "trajectory from " << describe(w) << " left the certified annulus [" << annulus.a
           << ", " << annulus.b << "] (|w| = " << ni << ")";
        throw CertificationError(os.str());
      }
      const int t = cov.index_of(img);
      if (t >= 0 && cov.active[static_cast<std::size_t>(t)]) out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  for (const auto& e : eqs) {
    const int t = cov.index_of(e.w);
    if (t >= 0) succ[static_cast<std::size_t>(t)].push_back(t);
  }

  std::vector<char> S = cov.active;
  for (cov.sweeps = 0; cov.sweeps < config.max_sweeps; ++cov.sweeps) {
    std::vector<char> hit(static_cast<std::size_t>(total), 0);
    for (int idx = 0; idx < total; ++idx) {
      if (!S[static_cast<std::size_t>(idx)]) continue;
      for (int t : succ[static_cast<std::size_t>(idx)]) hit[static_cast<std::size_t>(t)] = 1;
    }
    bool changed = false;
    for (int idx = 0; idx < total; ++idx) {
      if (S[static_cast<std::size_t>(idx)] && !hit[static_cast<std::size_t>(idx)]) {
        S[static_cast<std::size_t>(idx)] = 0;
        changed = true;
      }
    }
    if (!changed) break;
  }
  cov.cover = S;
  for (const auto& e : eqs) {
    const int t = cov.index_of(e.w);
    if (t >= 0 && S[static_cast<std::size_t>(t)]) cov.equilibria.push_back(e);
  }
  return cov;
}

ShapeReport certify_sphere_shape(const AttractorCover& cover) {
  ShapeReport rep;
  rep.m = cover.m;
  const int n = cover.cells;
  const int origin = cover.index_of(Eigen::VectorXd::Zero(cover.m));
  rep.origin_excluded = origin < 0 || !cover.cover[static_cast<std::size_t>(origin)];
  if (cover.cover_count() == 0) {
    rep.note = "empty cover";
    return rep;
  }
  if (cover.m == 1) {
    int pos = 0, neg = 0;
    bool mixed = false;
    for (int i = 0; i < n;) {
      if (!cover.cover[static_cast<std::size_t>(i)]) {
        ++i;
        continue;
      }
      int j = i;
      bool has_pos = false, has_neg = false;
      while (j < n && cover.cover[static_cast<std::size_t>(j)]) {
        const double c = cover.center(j)[0];
        (c > 0.0 ? has_pos : has_neg) = true;
        ++j;
      }
      ++rep.components;
      if (has_pos && has_neg) mixed = true;
      else if (has_pos) ++pos;
      else ++neg;
      i = j;
    }
    rep.one_per_sign = !mixed && pos == 1 && neg == 1;
    rep.pass = rep.components == 2 && rep.one_per_sign && rep.origin_excluded;
    rep.note = "S^0 certificate: two components, one per sign";
    return rep;
  }
  // m = 2: 8-connectivity of the cover, 4-connectivity of the padded complement
  auto cell = [&](int i, int j) { return cover.cover[static_cast<std::size_t>(i + n * j)] != 0; };
  std::vector<int> label(static_cast<std::size_t>(n * n), -1);
  for (int start = 0; start < n * n; ++start) {
    if (!cover.cover[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0)
      continue;
    std::deque<int> q{start};
    label[static_cast<std::size_t>(start)] = rep.components;
    while (!q.empty()) {
      const int c = q.front();
      q.pop_front();
      const int ci = c % n, cj = c / n;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int i = ci + di, j = cj + dj;
          if (i < 0 || j < 0 || i >= n || j >= n || !cell(i, j)) continue;
          int& l = label[static_cast<std::size_t>(i + n * j)];
          if (l < 0) {
            l = rep.components;
            q.push_back(i + n * j);
          }
        }
    }
    ++rep.components;
  }
  rep.connected = rep.components == 1;

  const int p = n + 2;
  std::vector<int> comp(static_cast<std::size_t>(p * p), -1);
  auto free_cell = [&](int i, int j) {
    if (i == 0 || j == 0 || i == p - 1 || j == p - 1) return true;
    return !cell(i - 1, j - 1);
  };
  int origin_comp = -1;
  for (int start = 0; start < p * p; ++start) {
    const int si = start % p, sj = start / p;
    if (!free_cell(si, sj) || comp[static_cast<std::size_t>(start)] >= 0) continue;
    std::deque<int> q{start};
    comp[static_cast<std::size_t>(start)] = rep.complement_components;
    while (!q.empty()) {
      const int c = q.front();
      q.pop_front();
      const int ci = c % p, cj = c / p;
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nb) {
        const int i = ci + d[0], j = cj + d[1];
        if (i < 0 || j < 0 || i >= p || j >= p || !free_cell(i, j)) continue;
        int& l = comp[static_cast<std::size_t>(i + p * j)];
        if (l < 0) {
          l = rep.complement_components;
          q.push_back(i + p * j);
        }
      }
    }
    ++rep.complement_components;
  }
  if (origin >= 0 && rep.origin_excluded) {
    origin_comp = comp[static_cast<std::size_t>((origin % n + 1) + p * (origin / n + 1))];
  }
  // component 0 contains the padding border
  rep.origin_enclosed = origin_comp > 0;
  rep.pass = rep.connected && rep.complement_components >= 2 && rep.origin_enclosed;
  rep.note = "S^1 certificate: connected cover separating the origin from infinity";
  return rep;
}

void write_cover_csv(std::ostream& os, const AttractorCover& cover) {
  for (int c = 1; c <= cover.m; ++c) os << (c > 1 ? "," : "") << "w_" << c;
  os << ",in_cover\n";
  for (std::size_t idx = 0; idx < cover.active.size(); ++idx) {
    if (!cover.active[idx]) continue;
    const Eigen::VectorXd c = cover.center(static_cast<int>(idx));
    for (int k = 0; k < cover.m; ++k) os << (k ? "," : "") << fmt_num(c[k]);
    os << ',' << static_cast<int>(cover.cover[idx]) << '\n';
  }
}

}  // namespace bifinf
