#pragma once

// Steady states of the Galerkin system: Newton, deflated multi-root search,
// natural-parameter continuation and dynamical cross-validation.

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bifinf/nonlinearity.hpp"
#include "bifinf/semiflow.hpp"
#include "bifinf/spectral.hpp"

namespace bifinf {

enum class Classification { bounded, blowup_candidate };

const char* to_string(Classification c);

struct Equilibrium {
  Eigen::VectorXd u;
  double lambda = 0.0;
  double residual = 0.0;  // max-norm of the Galerkin residual
  Classification classification = Classification::bounded;
  double norm_h = 0.0;
  double norm_v = 0.0;
  double energy = 0.0;
  int iterations = 0;
  int morse_index = -1;  // positive eigenvalues of the Jacobian
};

struct NewtonConfig {
  double tolerance = 1e-10;
  int max_iterations = 60;
  double deflation_eps = 1e-6;
  /// Added to each deflation factor; 0 gives the plain shifted-inverse operator.
  double deflation_shift = 0.0;
  double distinct = 1e-4;
  /// Abort once |u|_H exceeds this; 0 selects 10 C_f / dist(lambda, spectrum).
  double radius_cap = 0.0;
  /// Reciprocal condition number below which the Jacobian counts as singular.
  double singular_rcond = 1e-13;
};

/// -(mu_j - lambda) a_j + (f~(u), phi_j).
Eigen::VectorXd equilibrium_residual(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                     double lambda, const Eigen::VectorXd& a);
Eigen::MatrixXd equilibrium_jacobian(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                     double lambda, const Eigen::VectorXd& a);

/// Fills residual, norms, energy and Morse index for a converged state.
Equilibrium describe_equilibrium(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                 double lambda, const Eigen::VectorXd& a, int iterations = 0);

/// Damped Newton, optionally deflating previously found roots. Throws
/// NearBifurcationError on a singular Jacobian and ConvergenceError otherwise.
Equilibrium newton_solve(const SpectralBasis& basis, const NonlinearitySpec& spec, double lambda,
                         const Eigen::VectorXd& u_init, const NewtonConfig& config = {},
                         const std::vector<Eigen::VectorXd>& deflate = {});

/// 0, +-s_pred along center directions (s_pred = delta r / |mu_k - lambda|)
/// and a few deterministic random points of the ball 2 C_f / dist(lambda, spectrum).
std::vector<Eigen::VectorXd> default_seeds(const SpectralBasis& basis,
                                           const NonlinearitySpec& spec, int k, double lambda,
                                           double r, unsigned long long seed = 1);

/// Newton from every seed with deflation against the roots found so far.
std::vector<Equilibrium> deflated_search(const SpectralBasis& basis,
                                         const NonlinearitySpec& spec, double lambda,
                                         const std::vector<Eigen::VectorXd>& seeds,
                                         const NewtonConfig& config = {});

struct Branch {
  std::vector<Equilibrium> points;
  Classification classification = Classification::bounded;
  bool terminated = false;
  std::string termination;
  double max_step = 0.0;  // largest H-distance between consecutive points
};

/// mu_k - theta 2^{-i}, i = 0..count-1 (mirrored for the dual orientation).
std::vector<double> geometric_grid(double mu_k, double theta, double sigma, int count = 9);

/// Natural-parameter continuation of every root found at the first grid point.
std::vector<Branch> continue_branch(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                    int k, const std::vector<double>& lambda_grid, double r,
                                    const NewtonConfig& config = {});

/// sigma int f(x, s v) v dx as s -> infinity for the unit center direction of u:
/// the saturated balance that fixes |u|_H |mu_k - lambda| on a diverging branch.
double saturated_balance(const SpectralSplit& split, const NonlinearitySpec& spec,
                         const Eigen::VectorXd& u);

/// Columns: branch, lambda, norm_h, norm_v, residual, classification, energy.
void write_branches_csv(std::ostream& os, const std::vector<Branch>& branches);

struct OmegaLimitCheck {
  double lambda = 0.0;
  int roots = 0;
  /// Roots with at most one unstable direction; only these are reachable forward in time.
  int reachable = 0;
  int recovered = 0;           // reachable roots reached as omega-limits
  int seeds = 0;
  int escaped = 0;             // seeds leaving every bounded region (no omega-limit)
  int unmatched_limits = 0;    // limits not among the roots
  std::vector<double> approach;  // per root: closest distance reached
  bool pass() const { return recovered == reachable && unmatched_limits == 0; }
};

struct MultiplicityConfig {
  NewtonConfig newton;
  int grid_count = 9;
  /// Re-verification of every equilibrium by integration over
  /// min(drift_horizon, 5 / largest Jacobian eigenvalue).
  double drift_horizon = 10.0;
  double drift_step = 0.01;
  double drift_tolerance = 1e-6;
  double energy_tolerance = 1e-7;  // relative
  double product_tolerance = 0.1;  // relative deviation from the saturated balance
  double bounded_tolerance = 1e-8;
  bool check_other_side = true;
};

struct GridPoint {
  double lambda = 0.0;
  std::vector<Equilibrium> roots;  // independent deflated search at this lambda
  double max_drift = 0.0;
  double drift_horizon = 1e300;  // shortest horizon used at this lambda
};

struct MultiplicityReport {
  int k = 1;
  int m = 1;
  double mu_k = 0.0;
  double theta = 0.0;
  double sigma = 1.0;
  std::vector<double> grid;
  std::vector<GridPoint> points;
  std::vector<Branch> branches;
  int diverging = 0;
  int bounded = 0;
  /// Per diverging branch and grid point: |u|_H |mu_k - lambda| / saturated balance.
  std::vector<std::vector<double>> product_ratio;
  std::vector<std::vector<double>> product;
  double max_product_deviation = 0.0;
  double bounded_sup_norm_v = 0.0;  // over bounded branches and the grid
  double max_drift = 0.0;
  double min_energy_gap = 0.0;  // between the bounded root and the diverging ones
  /// Mirror grid mu_k + sigma theta 2^{-i}: roots found and blow-up branches.
  std::vector<int> other_side_roots;
  int other_side_blowups = 0;

  bool three_solutions = false;  // >= 3 distinct roots at every grid point
  /// >= 2 diverging branches whose product ratio ends within the tolerance.
  bool divergence = false;
  /// The product ratio within the tolerance at every grid point.
  bool product_law_uniform = false;
  bool bounded_branch = false;   // a bounded branch exists on the whole grid
  bool drift_ok = false;
  bool energy_separated = false;
  bool side_ok = false;
  bool pass() const {
    return three_solutions && divergence && bounded_branch && drift_ok && energy_separated &&
           side_ok;
  }
};

/// Deflated search on the geometric grid, continuation, divergence law, drift and
/// energy checks, and the absence of blow-up on the other side of mu_k.
MultiplicityReport multiplicity_report(const BasisPtr& basis, const NonlinearitySpec& spec,
                                       int k, double theta, double r,
                                       const MultiplicityConfig& config = {});
/// The same on an explicit grid approaching mu_k; theta is the distance of its first point.
MultiplicityReport multiplicity_report(const BasisPtr& basis, const NonlinearitySpec& spec,
                                       int k, const std::vector<double>& grid, double r,
                                       const MultiplicityConfig& config = {});

/// Long-time integration from perturbed and random seeds; saddles with one
/// unstable direction are reached by bisection along that direction.
/// Roots with more unstable directions are listed but not counted as reachable.
OmegaLimitCheck cross_validate_omega_limits(const SpectralSplit& split,
                                            const NonlinearitySpec& spec,
                                            const std::vector<Equilibrium>& roots,
                                            double h = 0.05, int random_seeds = 6,
                                            unsigned long long seed = 11);

}  // namespace bifinf
