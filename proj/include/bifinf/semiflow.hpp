#pragma once

// Exponential-Euler integration of the Galerkin system u_t + (A - lambda) u = f~(u),
// the energy functional of the gradient structure, and the Duhamel residual.

#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "bifinf/nonlinearity.hpp"
#include "bifinf/spectral.hpp"

namespace bifinf {

struct IntegratorConfig {
  double h = 0.0;  // 0 selects default_step
  /// Fields are stored every `record_stride` steps (the endpoint is always stored).
  int record_stride = 1;
  /// Vector-field H-norm below which a state counts as an equilibrium.
  double equilibrium_threshold = 1e-9;

  /// min(1e-2, 0.1 / mu_N).
  static double default_step(const SpectralBasis& basis);
  double step_for(const SpectralBasis& basis) const;
};

struct TrajectorySegment {
  BasisPtr basis;
  double lambda = 0.0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> u;

  int size() const { return static_cast<int>(t.size()); }
};

/// phi_1(z) = (e^z - 1) / z and phi_2(z) = (e^z - 1 - z) / z^2, with series near 0.
double phi1(double z);
double phi2(double z);

/// -(mu_j - lambda) a_j + (f~(u), phi_j).
Eigen::VectorXd vector_field(const SpectralBasis& basis, const NonlinearitySpec& spec,
                             double lambda, const Eigen::VectorXd& a);

/// One exponential-Euler step of size h.
Eigen::VectorXd step(const SpectralSplit& split, const NonlinearitySpec& spec,
                     const Eigen::VectorXd& a, double h);
CoefField step(const SpectralSplit& split, const NonlinearitySpec& spec, const CoefField& u,
               double h);

TrajectorySegment evolve(const SpectralSplit& split, const NonlinearitySpec& spec,
                         const CoefField& u0, double horizon, const IntegratorConfig& config = {});

/// E(u) = 1/2 ||u||_V^2 - lambda/2 |u|_H^2 - int F(x, u).
double energy(const SpectralBasis& basis, const NonlinearitySpec& spec, double lambda,
              const Eigen::VectorXd& a);

/// Largest H-norm of x_i(t) - e^{-B_i (t - t0)} x_i(t0) - int_{t0}^t e^{-B_i (t - s)} Pi_i f~(x(s)) ds
/// over parts and nodes; the integral uses exponential weights on the piecewise
/// linear interpolant of f~(x(.)).
double duhamel_residual(const SpectralSplit& split, const NonlinearitySpec& spec,
                        const TrajectorySegment& traj);

struct SettleResult {
  Eigen::VectorXd state;
  double time = 0.0;
  double field_norm = 0.0;      // at the returned state
  double min_field_norm = 0.0;  // along the trajectory
  Eigen::VectorXd closest;      // state of smallest field norm
  bool settled = false;
  bool escaped = false;  // |a|_H passed the escape radius
};

/// Integrates until the vector field drops below the equilibrium threshold or
/// max_time is reached, or the state leaves the ball of radius escape_radius.
/// Checks every `check_every` steps.
SettleResult settle(const SpectralSplit& split, const NonlinearitySpec& spec,
                    const Eigen::VectorXd& a0, double h, double max_time,
                    double threshold = 1e-9, int check_every = 20,
                    double escape_radius = std::numeric_limits<double>::infinity());

/// Columns: t, a_1..a_N, norm_h, norm_v, energy.
void write_trajectory_csv(std::ostream& os, const TrajectorySegment& traj,
                          const NonlinearitySpec& spec);

}  // namespace bifinf
