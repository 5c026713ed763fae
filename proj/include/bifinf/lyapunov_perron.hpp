#pragma once

// Lyapunov-Perron fixed point on exponentially weighted trajectories over a
// truncated window [-T, T], and the sampled manifold graph y -> xi(y).

#include <iosfwd>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "bifinf/nonlinearity.hpp"
#include "bifinf/semiflow.hpp"
#include "bifinf/spectral.hpp"

namespace bifinf {

struct LPConfig {
  double window = 0.0;  // T; 0 selects 16 / beta
  double nodes_per_unit = 32.0;
  double grading = 2.0;  // t = T (i/n)^grading on each half line
  double tolerance = 1e-10;
  int max_iterations = 200;
  /// Refuse to run when 1 - M_beta L~ <= 0.
  bool require_smallness = true;
  /// Semigroup constant used in every bound.
  double M = 1.0;

  double window_for(double beta) const;
};

/// Symmetric grid on [-T, T] with t[zero] == 0.
struct TimeGrid {
  std::vector<double> t;
  int zero = 0;

  int size() const { return static_cast<int>(t.size()); }
};

TimeGrid make_time_grid(double T, double nodes_per_unit, double grading);

/// Columns are the states at the grid nodes.
struct WeightedTrajectory {
  Eigen::MatrixXd x;
};

struct FixedPointResult {
  WeightedTrajectory gamma;
  int iterations = 0;
  std::vector<double> increments;
  std::vector<double> ratios;  // increment_n / increment_{n-1}
  double max_ratio = 0.0;
  /// || gamma - T gamma || in the weighted norm.
  double residual = 0.0;
};

struct XiResult {
  Eigen::VectorXd xi;  // full coefficient vector, zero on the center modes
  FixedPointResult fixed_point;
  double direct_difference = 0.0;  // |gamma(0) - y - direct formula| in the alpha norm
  double tail_bound = 0.0;
};

class LyapunovPerron {
 public:
  LyapunovPerron(SpectralSplit split, NonlinearitySpec spec, LPConfig config = {});

  const SpectralSplit& split() const { return split_; }
  const NonlinearitySpec& spec() const { return spec_; }
  const LPConfig& config() const { return config_; }
  const TimeGrid& grid() const { return grid_; }
  const SmallnessMargin& smallness() const { return small_; }
  double window() const { return window_; }

  /// sup_t e^{-beta |t| / 2} ||x(t)||_alpha.
  double weighted_norm(const Eigen::MatrixXd& x) const;
  /// x0(t) = e^{-B_c t} y.
  WeightedTrajectory initial(const Eigen::VectorXd& y) const;
  /// The map T of the fixed-point equation, tails closed by constant extrapolation.
  WeightedTrajectory apply(const Eigen::VectorXd& y, const WeightedTrajectory& x) const;
  FixedPointResult fixed_point(const Eigen::VectorXd& y,
                               const WeightedTrajectory* warm = nullptr) const;
  XiResult xi_at(const Eigen::VectorXd& y, const WeightedTrajectory* warm = nullptr) const;
  /// Direct evaluation of xi from a trajectory, without the recursion used by apply.
  Eigen::VectorXd xi_direct(const WeightedTrajectory& gamma) const;
  /// Estimated error from closing the integrals at +-T.
  double tail_bound() const;

 private:
  void check_y(const Eigen::VectorXd& y) const;
  Eigen::MatrixXd nemytskii_nodes(const Eigen::MatrixXd& x) const;

  SpectralSplit split_;
  NonlinearitySpec spec_;
  LPConfig config_;
  SmallnessMargin small_;
  double window_ = 0.0;
  TimeGrid grid_;
  Eigen::VectorXd alpha_w_;
  Eigen::VectorXd time_w_;
  // Per mode and interval [t_i, t_{i+1}]: J_to = e * J_from + a * G_from + b * G_to.
  Eigen::MatrixXd e_, a_, b_;
};

/// Sampling pattern over the center space: a line [-R, R] for m = 1, a polar
/// grid of radius R for m = 2.
struct SampleBox {
  double radius = 1.0;
  int radial = 32;   // samples per unit ray including the origin
  int angular = 32;  // m = 2 only
};

struct GraphSample {
  Eigen::VectorXd y;   // center coordinates
  Eigen::VectorXd xi;  // full coefficients
  int iterations = 0;
  double max_ratio = 0.0;
  double tail_bound = 0.0;
};

class ManifoldGraph {
 public:
  ManifoldGraph(std::shared_ptr<const LyapunovPerron> lp, SampleBox box,
                std::vector<GraphSample> samples);

  const LyapunovPerron& lp() const { return *lp_; }
  std::shared_ptr<const LyapunovPerron> lp_ptr() const { return lp_; }
  const SpectralSplit& split() const { return lp_->split(); }
  const SampleBox& box() const { return box_; }
  const std::vector<GraphSample>& samples() const { return samples_; }
  int center_dim() const { return split().center_dim(); }

  bool contains(const Eigen::VectorXd& w) const;
  /// Piecewise (bi)linear interpolant of xi; throws OutOfDomainError outside the box.
  Eigen::VectorXd xi(const Eigen::VectorXd& w) const;
  /// Radial spacing of the samples in center H-coordinates.
  double spacing() const;
  /// Largest distance between a point and the nearest samples of its cell.
  double cell_diameter() const;

  /// max over sample pairs of ||xi(y) - xi(y')||_alpha / ||y - y'||_alpha.
  double max_lipschitz_ratio() const { return lip_max_; }
  /// M / (1 - M_beta L~) + 1.
  double lipschitz_bound() const { return lp_->smallness().lipschitz_bound; }
  double max_alpha_norm() const { return sup_alpha_; }
  /// M_beta sup|f| sqrt(|Omega|).
  double uniform_bound() const;
  int max_iterations() const { return max_iter_; }
  double max_contraction_ratio() const { return max_ratio_; }

 private:
  std::shared_ptr<const LyapunovPerron> lp_;
  SampleBox box_;
  std::vector<GraphSample> samples_;
  double lip_max_ = 0.0;
  double sup_alpha_ = 0.0;
  double max_ratio_ = 0.0;
  int max_iter_ = 0;
};

ManifoldGraph build_manifold_graph(std::shared_ptr<const LyapunovPerron> lp, SampleBox box);

/// Columns: y_1..y_m, xi_1..xi_N, tail_bound.
void write_graph_csv(std::ostream& os, const ManifoldGraph& graph);

struct InvarianceReport {
  double residual = 0.0;
  double fixed_point_term = 0.0;
  double tail_term = 0.0;
  double quadrature_term = 0.0;
  double interpolation_term = 0.0;
  double integrator_term = 0.0;

  double budget() const {
    return fixed_point_term + tail_term + quadrature_term + interpolation_term +
           integrator_term;
  }
  bool pass() const { return residual <= budget(); }
};

/// Integrates the full system from y + xi(y) and measures the distance of the
/// trajectory from the graph in the alpha norm. Throws OutOfDomainError when
/// the trajectory leaves the sampled box.
InvarianceReport invariance_residual(const ManifoldGraph& graph, const Eigen::VectorXd& y,
                                     double horizon, const IntegratorConfig& integrator = {});

}  // namespace bifinf
