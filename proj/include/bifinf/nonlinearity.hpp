#pragma once

// Bounded Landesman-Lazer nonlinearities f(x, t), their Nemytskii operators
// on the Galerkin space, and the scalar constants built from them.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bifinf/spectral.hpp"

namespace bifinf {

enum class Orientation { standard, dual };

/// Pointwise map of (x, y, t); y is ignored on the interval.
using PointMap = std::function<double(double x, double y, double t)>;

struct NonlinearitySpec {
  std::string name;
  PointMap value;       // f(x, t)
  PointMap derivative;  // df/dt
  PointMap primitive;   // F(x, t) = int_0^t f(x, s) ds
  double f_upper = 0.0;  // limit of f as t -> +inf (standard orientation)
  double f_lower = 0.0;  // minus the limit as t -> -inf
  double lipschitz = 0.0;
  double sup_bound = 0.0;
  Orientation orientation = Orientation::standard;
  bool x_independent = true;

  /// +1 for the standard orientation, -1 for the dual one.
  double sign() const { return orientation == Orientation::standard ? 1.0 : -1.0; }
  /// Samples the declared sup and Lipschitz bounds on a grid; throws
  /// InconsistencyError on violation.
  void validate(const DomainSpec& domain) const;
};

/// c * tanh(t) + offset.
NonlinearitySpec make_tanh(double c, double offset = 0.0);
/// c * (2/pi) * atan(t) + offset.
NonlinearitySpec make_arctan(double c, double offset = 0.0);
/// (c + d sin(pi x / L) [sin(pi y / L)]) * tanh(t), with c - |d| > 0 giving
/// x-dependent limits.
NonlinearitySpec make_modulated_tanh(double c, double d, double length);
/// f = g independent of (x, t).
NonlinearitySpec make_constant(double g);
NonlinearitySpec make_zero();
/// (x, t) -> -f(x, -t); declared limits are swapped.
NonlinearitySpec reflect(const NonlinearitySpec& spec);

/// Nodal values of f(x, u(x)) for u given by its nodal values.
NodalValues apply_pointwise(const SpectralBasis& basis, const PointMap& map,
                            const NodalValues& u);

/// Coefficients (f(., u), phi_j) by quadrature.
Eigen::VectorXd evaluate_nemytskii(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                   const Eigen::VectorXd& coef);
CoefField evaluate_nemytskii(const NonlinearitySpec& spec, const CoefField& u);

/// Galerkin matrix of the derivative: J_jl = int f_t(x, u) phi_j phi_l.
Eigen::MatrixXd nemytskii_jacobian(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                   const Eigen::VectorXd& coef);

/// int_Omega F(x, u(x)) dx.
double integrate_primitive(const NonlinearitySpec& spec, const SpectralBasis& basis,
                           const Eigen::VectorXd& coef);

struct LipschitzEstimate {
  double tilde = 0.0;           // L_f / sqrt(mu_1)
  double max_sampled_ratio = 0.0;
  int pairs = 0;
};

/// L~ = L_f / sqrt(mu_1), cross-checked on random coefficient pairs.
LipschitzEstimate lipschitz_estimate(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                     int pairs = 64, unsigned long long seed = 7);

struct SmallnessMargin {
  double m_beta = 0.0;          // closed form M (8/beta + 2 sqrt(pi/beta))
  double m_beta_quadrature = 0.0;
  double l_tilde = 0.0;
  double margin = 0.0;          // 1 - M_beta L~
  double contraction_bound = 0.0;  // M_beta L~
  double lipschitz_bound = 0.0;    // L0 = M / (1 - M_beta L~) + 1; inf when margin <= 0
};

/// M int_0^inf (2 + tau^{-1/2}) e^{-beta tau / 4} dtau in closed form.
double m_beta_closed_form(double M, double beta);
/// The same integral by graded Gauss-Legendre quadrature.
double m_beta_quadrature(double M, double beta);

SmallnessMargin smallness_margin(const NonlinearitySpec& spec, const SpectralBasis& basis,
                                 int k, double M);

struct LandesmanLazerReport {
  bool pass = false;
  double upper_margin = 0.0;  // inf_x f(x, t) - f_upper (standard), worst over probes
  double lower_margin = 0.0;  // -f_lower - sup_x f(x, -t) (standard), worst over probes
  std::string message;
};

/// Samples f(x, +-t) for t >= t_probe and checks the declared limits for the
/// spec's orientation. Throws NonconformingError on violation.
LandesmanLazerReport verify_landesman_lazer(const NonlinearitySpec& spec,
                                            const DomainSpec& domain, double t_probe,
                                            double tol = 1e-6);

struct LandesmanLazerMargin {
  double lhs = 0.0;  // int f(x, s v + u) v
  double rhs = 0.0;  // int (f_upper v+ + f_lower v-) - eps
};

LandesmanLazerMargin landesman_lazer_margin(const NonlinearitySpec& spec,
                                            const SpectralBasis& basis, double s,
                                            const Eigen::VectorXd& v, const Eigen::VectorXd& u,
                                            double eps);

/// sup|f| * sqrt(|Omega|), the bound on |f~(u)|_H.
double nemytskii_bound(const NonlinearitySpec& spec, const DomainSpec& domain);

/// Relative H-norm of Nemytskii coefficients lost by truncating to `basis`,
/// measured against a basis holding `factor` times as many levels' worth of modes.
double truncation_tail(const NonlinearitySpec& spec, const SpectralBasis& basis,
                       const std::vector<Eigen::VectorXd>& samples, double factor = 4.0);

}  // namespace bifinf
