#pragma once

// Reduced flow on the center space, the invariant annulus, attractor covers
// and their sphere-shape certificate.

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bifinf/lyapunov_perron.hpp"

namespace bifinf {

class ReducedFlow {
 public:
  explicit ReducedFlow(std::shared_ptr<const ManifoldGraph> graph);

  const ManifoldGraph& graph() const { return *graph_; }
  std::shared_ptr<const ManifoldGraph> graph_ptr() const { return graph_; }
  const SpectralSplit& split() const { return graph_->split(); }
  const NonlinearitySpec& spec() const { return graph_->lp().spec(); }
  int dim() const { return graph_->center_dim(); }
  double lambda() const { return split().lambda; }
  /// +1 standard, -1 dual: the certified dynamics run along sigma * field.
  double sigma() const { return spec().sign(); }
  /// sigma (mu_k - lambda); positive on the bifurcation side.
  double distance() const;

  /// (lambda - mu_k) w + Pi_c f~(w + xi(w)).
  Eigen::VectorXd field(const Eigen::VectorXd& w) const;
  /// 2 <field(w), w>.
  double radial_derivative(const Eigen::VectorXd& w) const;
  /// w + xi(w) as a full coefficient vector.
  Eigen::VectorXd lift(const Eigen::VectorXd& w) const;
  /// Central-difference Jacobian of the field.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& w, double eps = 1e-6) const;

  /// Tabulates Pi_c f~(w + xi(w)) on a grid (spacing in |w|, angles for m = 2);
  /// fast_field then interpolates it.
  void tabulate(double spacing, int angles = 128);
  bool tabulated() const { return !table_.empty(); }
  Eigen::VectorXd fast_field(const Eigen::VectorXd& w) const;

  /// RK4 for time tau along sigma * field (fast_field when tabulated).
  Eigen::VectorXd flow(const Eigen::VectorXd& w, double tau, double h) const;
  /// Samples of an RK4 trajectory along sigma * field (exact field).
  std::vector<Eigen::VectorXd> trajectory(const Eigen::VectorXd& w, double horizon,
                                          double h) const;

 private:
  std::shared_ptr<const ManifoldGraph> graph_;
  double table_spacing_ = 0.0;
  int table_radial_ = 0;
  int table_angles_ = 0;
  std::vector<Eigen::VectorXd> table_;
};

struct SaturationResult {
  double s0 = 0.0;
  double r = 0.0;            // min L1 norm on the unit sphere of V_c
  double r_refined = 0.0;    // the same with a doubled angular grid (m = 2)
  Eigen::VectorXd r_argmin;  // minimizing unit direction
  double epsilon = 0.0;
  double min_margin_at_s0 = 0.0;
  int directions = 0;
  int corrections = 0;
};

/// min |v|_{L1} over unit v in V_c, by dedicated fine quadrature.
double center_l1_norm(const SpectralSplit& split, const Eigen::VectorXd& w);
double min_center_l1(const SpectralSplit& split, int angles, Eigen::VectorXd* argmin = nullptr);

/// Smallest s such that the Landesman-Lazer margin holds at every sampled unit
/// direction and manifold correction with eps = r delta / 2.
SaturationResult find_s0(const ReducedFlow& flow, double s_cap = 1e4);

struct AnnulusSpec {
  double lambda = 0.0;
  double a = 0.0;
  double b = 0.0;
  double c0 = 0.0;
  double R0 = 0.0;
  double s0 = 0.0;
  double r = 0.0;
  double delta = 0.0;
  double C_f = 0.0;
  double C_lambda = 0.0;
  double rho = 0.0;
  double distance = 0.0;  // sigma (mu_k - lambda)
  double a_bound = 0.0;   // (2 C_f - c0) / (2 distance)
  double inner_min_margin = 0.0;  // min over the certified band of sigma radial - c0 |w|
  double outer_max = 0.0;         // max over |w| = b of sigma radial
  int inner_samples = 0;
  int outer_samples = 0;
  int angles = 0;
};

/// a_lambda + rho_lambda upper bound used to size graphs before an annulus exists.
double annulus_radius_bound(const NonlinearitySpec& spec, const SpectralSplit& split);

/// Inward flow on [R0, a], outward-blocking at b = a + rho. Throws
/// CertificationError naming the violating point.
AnnulusSpec invariant_annulus(const ReducedFlow& flow, const SaturationResult& sat);
AnnulusSpec invariant_annulus(const ReducedFlow& flow);

/// Largest theta <= beta / 8 certified at lambda = mu_k - sigma theta. `certify`
/// must return true when the annulus certifies at the given lambda.
struct ThetaSearch {
  double theta = 0.0;
  int evaluations = 0;
  std::vector<std::pair<double, bool>> trials;
};
ThetaSearch search_theta(double mu_k, double beta, double sigma,
                         const std::function<bool(double lambda)>& certify, int bisections = 8);

/// |w(t)|^2 <= e^{-d t} |w0|^2 + (1 - e^{-d t}) rho^2 with d = sigma (mu_k - lambda).
double gronwall_envelope(const AnnulusSpec& annulus, double w0_norm, double t);

struct AttractorConfig {
  int cells = 0;             // per dimension; 0 selects 400 (m = 1) or 64 (m = 2)
  int samples_per_cell = 0;  // per dimension; 0 selects 8 (m = 1) or 4 (m = 2)
  double tau = 0.0;          // 0 selects 3 / distance
  double rk4_step = 0.0;     // 0 selects min(2, tau / 4)
  int max_sweeps = 10000;
};

struct ReducedEquilibrium {
  Eigen::VectorXd w;
  double residual = 0.0;
  int unstable_directions = 0;  // of sigma * field
};

struct AttractorCover {
  int m = 1;
  double lambda = 0.0;
  int cells = 0;
  double lo = 0.0;  // box [lo, hi]^m
  double hi = 0.0;
  std::vector<char> active;  // cells intersecting the annulus
  std::vector<char> cover;
  std::vector<ReducedEquilibrium> equilibria;  // inside the cover
  int sweeps = 0;

  double cell_size() const { return (hi - lo) / cells; }
  int cover_count() const;
  Eigen::VectorXd center(int idx) const;
  int index_of(const Eigen::VectorXd& w) const;  // -1 outside the box
};

/// Cell-map approximation of the attractor inside the annulus.
AttractorCover compute_attractor(const ReducedFlow& flow, const AnnulusSpec& annulus,
                                 const AttractorConfig& config = {});

/// Zeros of the exact reduced field from Newton started at the given points.
std::vector<ReducedEquilibrium> polish_equilibria(const ReducedFlow& flow,
                                                  const std::vector<Eigen::VectorXd>& starts,
                                                  double min_radius = 0.0,
                                                  double max_radius = 1e300);

struct ShapeReport {
  int m = 1;
  bool pass = false;
  int components = 0;
  bool one_per_sign = false;           // m = 1
  bool connected = false;              // m = 2
  int complement_components = 0;       // m = 2
  bool origin_enclosed = false;        // m = 2
  bool origin_excluded = false;
  std::string note;
};

ShapeReport certify_sphere_shape(const AttractorCover& cover);

/// Columns: w_1..w_m, in_cover.
void write_cover_csv(std::ostream& os, const AttractorCover& cover);

}  // namespace bifinf
