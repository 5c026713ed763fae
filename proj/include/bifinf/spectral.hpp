#pragma once

// Dirichlet Laplacian eigenstructure on the unit-free model domains (0, L) and
// (0, L)^2, Gauss-Legendre quadrature, spectral splits and linear propagators.

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bifinf {

enum class DomainKind { interval, square };

struct DomainSpec {
  DomainKind kind = DomainKind::interval;
  double length = 3.14159265358979323846;
  int quadrature_points_per_dim = 64;

  void validate() const;
  int dimension() const { return kind == DomainKind::interval ? 1 : 2; }
  /// Lebesgue measure |Omega|.
  double measure() const;
};

/// Hard cap on the number of retained modes.
inline constexpr int kMaxModes = 4096;

struct Mode {
  std::array<int, 2> index{};  // 1-based; index[1] == 0 on the interval
  double eigenvalue = 0.0;
};

struct Level {
  double eigenvalue = 0.0;
  int multiplicity = 0;
  int first_mode = 0;  // position of the first mode of this level
};

/// Tensor-product composite Gauss-Legendre rule on the domain.
struct Quadrature {
  Eigen::VectorXd nodes;    // 1D nodes in (0, L)
  Eigen::VectorXd weights;  // 1D weights
  int dimension = 1;

  int points_per_dim() const { return static_cast<int>(nodes.size()); }
  int total_points() const;
};

/// Values of a function at the quadrature nodes: Q x 1 on the interval,
/// Q x Q on the square (row = x node, column = y node).
using NodalValues = Eigen::MatrixXd;

/// Composite 8-point Gauss-Legendre rule with `panels` equal panels on (0, length).
Quadrature composite_gauss_legendre(double length, int panels, int dimension);

class SpectralBasis {
 public:
  /// Exact Dirichlet eigenpairs; the first `n_modes` in eigenvalue order,
  /// rounded up so that no degenerate level is split.
  static std::shared_ptr<const SpectralBasis> build(const DomainSpec& domain, int n_modes);
  /// All modes with eigenvalue <= mu_max.
  static std::shared_ptr<const SpectralBasis> build_up_to(const DomainSpec& domain,
                                                          double mu_max);

  const DomainSpec& domain() const { return domain_; }
  int size() const { return static_cast<int>(modes_.size()); }
  int dimension() const { return domain_.dimension(); }
  const std::vector<Mode>& modes() const { return modes_; }
  const Mode& mode(int j) const { return modes_[static_cast<std::size_t>(j)]; }
  double eigenvalue(int j) const { return modes_[static_cast<std::size_t>(j)].eigenvalue; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

  /// Distinct eigenvalue levels, ascending. Level k is levels()[k-1].
  const std::vector<Level>& levels() const { return levels_; }
  const Level& level(int k) const;
  int level_count() const { return static_cast<int>(levels_.size()); }

  const Quadrature& quadrature() const { return quad_; }

  /// Pointwise values of sum_j a_j phi_j at the nodes.
  NodalValues synthesize(const Eigen::VectorXd& coef) const;
  /// Quadrature inner products (g, phi_j) for every mode.
  Eigen::VectorXd project(const NodalValues& values) const;
  /// Quadrature integral of nodal values over the domain.
  double integrate(const NodalValues& values) const;
  /// Node coordinates (x, y); y is 0 on the interval.
  std::array<double, 2> node(int ix, int iy) const;
  /// phi_j evaluated at an arbitrary point (used by oracles and exports).
  double eigenfunction(int j, double x, double y = 0.0) const;
  /// Number of 1D sine factors tabulated per direction.
  int max_index() const { return max_index_; }

 private:
  SpectralBasis() = default;
  static std::shared_ptr<const SpectralBasis> assemble(const DomainSpec& domain,
                                                       std::vector<Mode> modes);

  DomainSpec domain_;
  std::vector<Mode> modes_;
  Eigen::VectorXd eigenvalues_;
  std::vector<Level> levels_;
  Quadrature quad_;
  int max_index_ = 0;
  Eigen::MatrixXd sines_;           // max_index x Q, normalized 1D sines
  Eigen::MatrixXd weighted_sines_;  // sines_ scaled by the weights column-wise
};

using BasisPtr = std::shared_ptr<const SpectralBasis>;

/// A Galerkin field: coefficients against the basis modes.
struct CoefField {
  BasisPtr basis;
  Eigen::VectorXd coef;

  CoefField() = default;
  CoefField(BasisPtr b, Eigen::VectorXd c);
  static CoefField zero(BasisPtr b);
  static CoefField mode(BasisPtr b, int j, double amplitude = 1.0);

  int size() const { return static_cast<int>(coef.size()); }
  /// |u|_H
  double norm_h() const;
  /// ||u||_V, the Dirichlet (gradient) norm
  double norm_v() const;
  /// ||(A + shift)^alpha u||_H
  double norm_alpha(double shift = 0.0, double alpha = 0.5) const;
};

/// Distance from level k to its neighbours; beta_1 = mu_2 - mu_1.
double spectral_gap(const SpectralBasis& basis, int k);

enum class Part { unstable, center, stable };

struct SpectralSplit {
  BasisPtr basis;
  int level = 1;       // resonance level k, 1-based
  double lambda = 0.0;
  double gap = 0.0;    // beta_k
  double shift = 0.0;  // a in Lambda = A + a
  double alpha = 0.5;
  std::vector<int> unstable;
  std::vector<int> center;
  std::vector<int> stable;

  double mu_k() const;
  int center_dim() const { return static_cast<int>(center.size()); }
  const std::vector<int>& indices(Part p) const;
  /// mu_j - lambda for every mode.
  Eigen::VectorXd rates() const;
  /// (mu_j + a)^alpha for every mode.
  Eigen::VectorXd alpha_weights() const;
  double norm_alpha(const Eigen::VectorXd& coef) const;

  Eigen::VectorXd project(Part p, const Eigen::VectorXd& coef) const;
  /// Zeroes the center components.
  Eigen::VectorXd project_hyperbolic(const Eigen::VectorXd& coef) const;
  /// Center coordinates (length m) of a full coefficient vector.
  Eigen::VectorXd center_coords(const Eigen::VectorXd& coef) const;
  /// Full coefficient vector with the given center coordinates and zeros elsewhere.
  Eigen::VectorXd embed_center(const Eigen::VectorXd& w) const;
};

/// Spectral split at level k for lambda inside (mu_k - beta_k/4, mu_k + beta_k/4).
SpectralSplit split_at(BasisPtr basis, int k, double lambda, double shift = 0.0);

/// e^{-B t} restricted to one part; the result is supported on that part only.
CoefField propagate_linear(const SpectralSplit& split, Part part, const CoefField& field,
                           double t);

struct ModeRange {
  int first = 0;
  int last = -1;  // inclusive; -1 means the last mode
};

struct SemigroupEstimate {
  double M = 1.0;
  double unstable_ratio = 0.0;        // ||e^{-B_u t}|| e^{-3 beta t / 4}, t <= 0
  double center_ratio = 0.0;          // ||e^{-B_c t}|| e^{-beta |t| / 4}
  double stable_ratio = 0.0;          // ||e^{-B_s t}|| e^{3 beta t / 4}, t > 0
  double stable_smoothing_ratio = 0.0;  // t^alpha ||Lambda^alpha e^{-B_s t}|| e^{3 beta t / 4}
  /// max (mu_j + a)^alpha over the finite parts; informational only.
  double finite_part_mixed_factor = 0.0;
};

/// Largest ratio between the diagonal propagator norms and the exponential
/// envelopes over the sampled times (t > 0; mirrored for the unstable part).
/// The smoothing ratio is also evaluated at each mode's analytic maximiser
/// when it lies inside the grid range, so finer grids never exceed it.
SemigroupEstimate estimate_semigroup_constant(const SpectralSplit& split,
                                              std::span<const double> t_grid,
                                              ModeRange modes = {});

/// A log-spaced default time grid for estimate_semigroup_constant.
std::vector<double> default_semigroup_grid(double t_min = 1e-4, double t_max = 50.0,
                                           int points = 400);

/// Default truncation: all modes with mu_j <= factor * mu_k.
BasisPtr default_truncation(const DomainSpec& domain, int k, double factor = 12.0);

}  // namespace bifinf
