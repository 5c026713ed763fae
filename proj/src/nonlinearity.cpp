#include "bifinf/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "bifinf/errors.hpp"

namespace bifinf {

namespace {

/// log cosh(t) without overflow.
double log_cosh(double t) {
  const double a = std::abs(t);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

std::vector<double> sample_points(double length, int n) {
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = length * (i + 0.5) / n;
  return xs;
}

}  // namespace

void NonlinearitySpec::validate(const DomainSpec& domain) const {
  if (!value || !derivative || !primitive) {
    throw PreconditionError("nonlinearity '" + name + "' is missing a pointwise map");
  }
  const auto xs = sample_points(domain.length, 9);
  const std::vector<double> ys = domain.dimension() == 1 ? std::vector<double>{0.0} : xs;
  for (double x : xs) {
    for (double y : ys) {
      double prev = value(x, y, -60.0);
      for (int i = -600; i <= 600; ++i) {
        const double t = 0.1 * i;
        const double v = value(x, y, t);
        const double d = derivative(x, y, t);
        if (std::abs(v) > sup_bound * (1.0 + 1e-12) + 1e-14) {
          std::ostringstream os;
          os << "nonlinearity '" << name << "': |f| = " << std::abs(v) << " at t = " << t
             << " exceeds the declared sup bound " << sup_bound;
          throw InconsistencyError(os.str());
        }
        if (std::abs(d) > lipschitz * (1.0 + 1e-12) + 1e-14) {
          std::ostringstream os;
          os << "nonlinearity '" << name << "': |f_t| = " << std::abs(d) << " at t = " << t
             << " exceeds the declared Lipschitz constant " << lipschitz;
          throw InconsistencyError(os.str());
        }
        if (i > -600 && std::abs(v - prev) > lipschitz * 0.1 * (1.0 + 1e-9) + 1e-14) {
          throw InconsistencyError("nonlinearity '" + name +
                                   "': difference quotient exceeds the Lipschitz constant");
        }
        prev = v;
      }
    }
  }
}

NonlinearitySpec make_tanh(double c, double offset) {
  NonlinearitySpec s;
  s.name = "tanh";
  s.value = [c, offset](double, double, double t) { return c * std::tanh(t) + offset; };
  s.derivative = [c](double, double, double t) {
    const double th = std::tanh(t);
    return c * (1.0 - th * th);
  };
  s.primitive = [c, offset](double, double, double t) { return c * log_cosh(t) + offset * t; };
  s.orientation = c >= 0.0 ? Orientation::standard : Orientation::dual;
  s.f_upper = std::abs(c) + (c >= 0.0 ? offset : -offset);
  s.f_lower = std::abs(c) - (c >= 0.0 ? offset : -offset);
  s.lipschitz = std::abs(c);
  s.sup_bound = std::abs(c) + std::abs(offset);
  return s;
}

NonlinearitySpec make_arctan(double c, double offset) {
  NonlinearitySpec s;
  s.name = "arctan";
  const double k = c * 2.0 / std::numbers::pi;
  s.value = [k, offset](double, double, double t) { return k * std::atan(t) + offset; };
  s.derivative = [k](double, double, double t) { return k / (1.0 + t * t); };
  s.primitive = [k, offset](double, double, double t) {
    return k * (t * std::atan(t) - 0.5 * std::log1p(t * t)) + offset * t;
  };
  s.orientation = c >= 0.0 ? Orientation::standard : Orientation::dual;
  s.f_upper = std::abs(c) + (c >= 0.0 ? offset : -offset);
  s.f_lower = std::abs(c) - (c >= 0.0 ? offset : -offset);
  s.lipschitz = std::abs(k);
  s.sup_bound = std::abs(c) + std::abs(offset);
  return s;
}

NonlinearitySpec make_modulated_tanh(double c, double d, double length) {
  if (!(c - std::abs(d) > 0.0)) {
    throw PreconditionError("modulated tanh needs c - |d| > 0 so that the limits stay positive");
  }
  NonlinearitySpec s;
  s.name = "tanh_modulated";
  auto amp = [c, d, length](double x, double y) {
    const double sy = y == 0.0 ? 1.0 : std::sin(std::numbers::pi * y / length);
    return c + d * std::sin(std::numbers::pi * x / length) * sy;
  };
  s.value = [amp](double x, double y, double t) { return amp(x, y) * std::tanh(t); };
  s.derivative = [amp](double x, double y, double t) {
    const double th = std::tanh(t);
    return amp(x, y) * (1.0 - th * th);
  };
  s.primitive = [amp](double x, double y, double t) { return amp(x, y) * log_cosh(t); };
  s.f_upper = c - std::abs(d);
  s.f_lower = c - std::abs(d);
  s.lipschitz = c + std::abs(d);
  s.sup_bound = c + std::abs(d);
  s.x_independent = false;
  return s;
}

NonlinearitySpec make_constant(double g) {
  NonlinearitySpec s;
  s.name = "constant";
  s.value = [g](double, double, double) { return g; };
  s.derivative = [](double, double, double) { return 0.0; };
  s.primitive = [g](double, double, double t) { return g * t; };
  s.sup_bound = std::abs(g);
  return s;
}

NonlinearitySpec make_zero() {
  NonlinearitySpec s = make_constant(0.0);
  s.name = "zero";
  return s;
}

NonlinearitySpec reflect(const NonlinearitySpec& spec) {
  NonlinearitySpec r = spec;
  r.name = "reflected_" + spec.name;
  const PointMap f = spec.value;
  const PointMap df = spec.derivative;
  const PointMap F = spec.primitive;
  r.value = [f](double x, double y, double t) { return -f(x, y, -t); };
  r.derivative = [df](double x, double y, double t) { return df(x, y, -t); };
  r.primitive = [F](double x, double y, double t) { return F(x, y, -t); };
  std::swap(r.f_upper, r.f_lower);
  return r;
}

NodalValues apply_pointwise(const SpectralBasis& basis, const PointMap& map,
                            const NodalValues& u) {
  NodalValues out(u.rows(), u.cols());
  const auto& nodes = basis.quadrature().nodes;
  if (basis.dimension() == 1) {
    for (Eigen::Index i = 0; i < u.rows(); ++i) out(i, 0) = map(nodes[i], 0.0, u(i, 0));
  } else {
    for (Eigen::Index jy = 0; jy < u.cols(); ++jy)
      for (Eigen::Index ix = 0; ix < u.rows(); ++ix)
        out(ix, jy) = map(nodes[ix], nodes[jy], u(ix, jy));
  }
  return out;
}

Eigen::VectorXd evaluate_nemytskii(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                   const Eigen::VectorXd& coef) {
  return basis.project(apply_pointwise(basis, spec.value, basis.synthesize(coef)));
}

CoefField evaluate_nemytskii(const NonlinearitySpec& spec, const CoefField& u) {
  return CoefField(u.basis, evaluate_nemytskii(spec, *u.basis, u.coef));
}

Eigen::MatrixXd nemytskii_jacobian(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                   const Eigen::VectorXd& coef) {
  const NodalValues d = apply_pointwise(basis, spec.derivative, basis.synthesize(coef));
  const int n = basis.size();
  const auto& w = basis.quadrature().weights;
  const Eigen::Index q = w.size();
  // Mode values at every node, one row per mode (flattened nodes).
  const Eigen::Index total = basis.dimension() == 1 ? q : q * q;
  Eigen::MatrixXd phi(n, total);
  Eigen::VectorXd wd(total);
  if (basis.dimension() == 1) {
    for (int j = 0; j < n; ++j) {
      NodalValues e = basis.synthesize(Eigen::VectorXd::Unit(n, j));
      phi.row(j) = e.col(0).transpose();
    }
    wd = w.cwiseProduct(d.col(0));
  } else {
    for (int j = 0; j < n; ++j) {
      NodalValues e = basis.synthesize(Eigen::VectorXd::Unit(n, j));
      phi.row(j) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), total);
    }
    const Eigen::MatrixXd ww = w * w.transpose();
    const Eigen::MatrixXd wdm = ww.cwiseProduct(d);
    wd = Eigen::Map<const Eigen::VectorXd>(wdm.data(), total);
  }
  return phi * wd.asDiagonal() * phi.transpose();
}

double integrate_primitive(const NonlinearitySpec& spec, const SpectralBasis& basis,
                           const Eigen::VectorXd& coef) {
  return basis.integrate(apply_pointwise(basis, spec.primitive, basis.synthesize(coef)));
}

LipschitzEstimate lipschitz_estimate(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                     int pairs, unsigned long long seed) {
  LipschitzEstimate est;
  est.tilde = spec.lipschitz / std::sqrt(basis.eigenvalue(0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> scale(-2.0, 1.5);
  const int n = basis.size();
  for (int p = 0; p < pairs; ++p) {
    Eigen::VectorXd u1(n), u2(n);
    const double s1 = std::pow(10.0, scale(rng));
    const double s2 = std::pow(10.0, scale(rng));
    for (int j = 0; j < n; ++j) {
      u1[j] = s1 * unit(rng);
      u2[j] = u1[j] + s2 * unit(rng);
    }
    const Eigen::VectorXd diff =
        evaluate_nemytskii(spec, basis, u1) - evaluate_nemytskii(spec, basis, u2);
    const double dv =
        std::sqrt((basis.eigenvalues().array() * (u1 - u2).array().square()).sum());
    if (dv == 0.0) continue;
    const double ratio = diff.norm() / dv;
    est.max_sampled_ratio = std::max(est.max_sampled_ratio, ratio);
    ++est.pairs;
    if (ratio > est.tilde + 1e-9) {
      std::ostringstream os;
      os << "measured |f(u1) - f(u2)|_H / ||u1 - u2||_V = " << ratio
         << " exceeds L~ = " << est.tilde << "; the declared L_f is too small";
      throw InconsistencyError(os.str());
    }
  }
  return est;
}

double m_beta_closed_form(double M, double beta) {
  return M * (8.0 / beta + 2.0 * std::sqrt(std::numbers::pi / beta));
}

double m_beta_quadrature(double M, double beta) {
  // tau = s^2 removes the tau^{-1/2} singularity: int_0^inf (4 s + 2) e^{-beta s^2 / 4} ds
  const double s_max = std::sqrt(4.0 * 45.0 / beta);
  const Quadrature q = composite_gauss_legendre(s_max, 64, 1);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q.nodes.size(); ++i) {
    const double s = q.nodes[i];
    sum += q.weights[i] * (4.0 * s + 2.0) * std::exp(-beta * s * s / 4.0);
  }
  return M * sum;
}

SmallnessMargin smallness_margin(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                 int k, double M) {
  const double beta = spectral_gap(basis, k);
  SmallnessMargin out;
  out.m_beta = m_beta_closed_form(M, beta);
  out.m_beta_quadrature = m_beta_quadrature(M, beta);
  if (std::abs(out.m_beta - out.m_beta_quadrature) > 1e-8) {
    std::ostringstream os;
    os.precision(15);
    os << "M_beta closed form " << out.m_beta << " and quadrature " << out.m_beta_quadrature
       << " disagree";
    throw InconsistencyError(os.str());
  }
  out.l_tilde = spec.lipschitz / std::sqrt(basis.eigenvalue(0));
  out.contraction_bound = out.m_beta * out.l_tilde;
  out.margin = 1.0 - out.contraction_bound;
  out.lipschitz_bound = out.margin > 0.0 ? M / out.margin + 1.0
                                         : std::numeric_limits<double>::infinity();
  return out;
}

LandesmanLazerReport verify_landesman_lazer(const NonlinearitySpec& spec,
                                            const DomainSpec& domain, double t_probe,
                                            double tol) {
  if (!(t_probe > 0.0)) throw PreconditionError("t_probe must be positive");
  LandesmanLazerReport rep;
  if (!(spec.f_upper > 0.0) || !(spec.f_lower > 0.0)) {
    std::ostringstream os;
    os << "nonlinearity '" << spec.name << "' declares limits f_upper = " << spec.f_upper
       << ", f_lower = " << spec.f_lower << "; both must be positive";
    throw NonconformingError(os.str());
  }
  const double sigma = spec.sign();
  const auto xs = sample_points(domain.length, 33);
  const std::vector<double> ys = domain.dimension() == 1 ? std::vector<double>{0.0} : xs;
  rep.upper_margin = std::numeric_limits<double>::infinity();
  rep.lower_margin = std::numeric_limits<double>::infinity();
  for (double t = t_probe; t <= 1e6 * t_probe; t *= 2.0) {
    for (double x : xs) {
      for (double y : ys) {
        // standard: f(t) >= f_upper, f(-t) <= -f_lower; dual mirrors the signs
        rep.upper_margin = std::min(rep.upper_margin, sigma * spec.value(x, y, t) - spec.f_upper);
        rep.lower_margin =
            std::min(rep.lower_margin, -sigma * spec.value(x, y, -t) - spec.f_lower);
      }
    }
  }
  rep.pass = rep.upper_margin >= -tol && rep.lower_margin >= -tol;
  std::ostringstream os;
  os << (spec.orientation == Orientation::standard ? "standard" : "dual")
     << " orientation: upper margin " << rep.upper_margin << ", lower margin "
     << rep.lower_margin;
  rep.message = os.str();
  if (!rep.pass) throw NonconformingError("nonlinearity '" + spec.name + "': " + rep.message);
  return rep;
}

LandesmanLazerMargin landesman_lazer_margin(const NonlinearitySpec& spec,
                                            const SpectralBasis& basis, double s,
                                            const Eigen::VectorXd& v, const Eigen::VectorXd& u,
                                            double eps) {
  if (v.norm() > 1.0 + 1e-12) throw PreconditionError("|v|_H must not exceed 1");
  const NodalValues vn = basis.synthesize(v);
  const NodalValues arg = basis.synthesize(s * v + u);
  const NodalValues fv = apply_pointwise(basis, spec.value, arg);
  LandesmanLazerMargin out;
  out.lhs = spec.sign() * basis.integrate(fv.cwiseProduct(vn));
  const NodalValues pos = vn.cwiseMax(0.0);
  const NodalValues neg = (-vn).cwiseMax(0.0);
  out.rhs = basis.integrate(spec.f_upper * pos + spec.f_lower * neg) - eps;
  return out;
}

double nemytskii_bound(const NonlinearitySpec& spec, const DomainSpec& domain) {
  return spec.sup_bound * std::sqrt(domain.measure());
}

double truncation_tail(const NonlinearitySpec& spec, const SpectralBasis& basis,
                       const std::vector<Eigen::VectorXd>& samples, double factor) {
  const double mu_max = basis.eigenvalues().maxCoeff();
  DomainSpec wide = basis.domain();
  const BasisPtr big = SpectralBasis::build_up_to(wide, factor * mu_max);
  double worst = 0.0;
  for (const auto& a : samples) {
    Eigen::VectorXd ext = Eigen::VectorXd::Zero(big->size());
    // modes are ordered identically up to mu_max; match by index tuple
    for (int j = 0; j < basis.size(); ++j) {
      for (int l = 0; l < big->size(); ++l) {
        if (big->mode(l).index == basis.mode(j).index) {
          ext[l] = a[j];
          break;
        }
      }
    }
    const Eigen::VectorXd full = evaluate_nemytskii(spec, *big, ext);
    const double total = full.norm();
    if (total == 0.0) continue;
    double kept = 0.0;
    for (int l = 0; l < big->size(); ++l)
      if (big->eigenvalue(l) <= mu_max) kept += full[l] * full[l];
    worst = std::max(worst, std::sqrt(std::max(0.0, total * total - kept)) / total);
  }
  return worst;
}

}  // namespace bifinf
