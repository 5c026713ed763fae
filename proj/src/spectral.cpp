#include "bifinf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "bifinf/errors.hpp"

namespace bifinf {

namespace {

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr std::array<double, 8> kGlNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGlWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

// Integer key i^2 + j^2 identifies eigenvalue levels exactly.
int level_key(const Mode& m) { return m.index[0] * m.index[0] + m.index[1] * m.index[1]; }

}  // namespace

void DomainSpec::validate() const {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw PreconditionError("domain length must be positive");
  }
  if (quadrature_points_per_dim < 16) {
    throw PreconditionError("quadrature_points_per_dim must be at least 16");
  }
}

double DomainSpec::measure() const { return dimension() == 1 ? length : length * length; }

int Quadrature::total_points() const {
  const int q = points_per_dim();
  return dimension == 1 ? q : q * q;
}

Quadrature composite_gauss_legendre(double length, int panels, int dimension) {
  Quadrature quad;
  quad.dimension = dimension;
  quad.nodes.resize(8 * panels);
  quad.weights.resize(8 * panels);
  const double h = length / panels;
  for (int p = 0; p < panels; ++p) {
    for (int i = 0; i < 8; ++i) {
      quad.nodes[8 * p + i] = h * p + 0.5 * h * (kGlNodes[i] + 1.0);
      quad.weights[8 * p + i] = 0.5 * h * kGlWeights[i];
    }
  }
  return quad;
}

std::shared_ptr<const SpectralBasis> SpectralBasis::build(const DomainSpec& domain,
                                                          int n_modes) {
  domain.validate();
  if (n_modes < 1) throw PreconditionError("basis needs at least one mode");
  if (n_modes > kMaxModes) {
    std::ostringstream os;
    os << "requested " << n_modes << " modes exceeds the hard cap of " << kMaxModes;
    throw ResourceError(os.str());
  }
  std::vector<Mode> candidates;
  if (domain.kind == DomainKind::interval) {
    for (int j = 1; j <= n_modes; ++j) candidates.push_back({{j, 0}, 0.0});
  } else {
    // every level among the first n_modes has i^2 + j^2 <= n_modes * 4 / pi + O(sqrt)
    const int cap = static_cast<int>(std::ceil(std::sqrt(4.0 * n_modes + 16.0))) + 2;
    for (int i = 1; i <= cap; ++i)
      for (int j = 1; j <= cap; ++j) candidates.push_back({{i, j}, 0.0});
    std::stable_sort(candidates.begin(), candidates.end(), [](const Mode& a, const Mode& b) {
      return level_key(a) < level_key(b);
    });
    std::size_t n = static_cast<std::size_t>(n_modes);
    while (n < candidates.size() && level_key(candidates[n]) == level_key(candidates[n - 1])) ++n;
    candidates.resize(n);
  }
  if (static_cast<int>(candidates.size()) > kMaxModes) {
    throw ResourceError("completing the last degenerate level exceeds the mode cap");
  }
  return assemble(domain, std::move(candidates));
}

std::shared_ptr<const SpectralBasis> SpectralBasis::build_up_to(const DomainSpec& domain,
                                                                double mu_max) {
  domain.validate();
  const double unit = std::pow(std::numbers::pi / domain.length, 2);
  const int bound = static_cast<int>(std::floor(mu_max / unit + 1e-9));
  std::vector<Mode> modes;
  if (domain.kind == DomainKind::interval) {
    for (int j = 1; j * j <= bound; ++j) modes.push_back({{j, 0}, 0.0});
  } else {
    for (int i = 1; i * i + 1 <= bound; ++i)
      for (int j = 1; i * i + j * j <= bound; ++j) modes.push_back({{i, j}, 0.0});
    std::stable_sort(modes.begin(), modes.end(),
                     [](const Mode& a, const Mode& b) { return level_key(a) < level_key(b); });
  }
  if (modes.empty()) throw PreconditionError("mu_max is below the first eigenvalue");
  if (static_cast<int>(modes.size()) > kMaxModes) {
    std::ostringstream os;
    os << "eigenvalue bound " << mu_max << " retains " << modes.size()
       << " modes, above the hard cap of " << kMaxModes;
    throw ResourceError(os.str());
  }
  return assemble(domain, std::move(modes));
}

std::shared_ptr<const SpectralBasis> SpectralBasis::assemble(const DomainSpec& domain,
                                                             std::vector<Mode> modes) {
  auto basis = std::shared_ptr<SpectralBasis>(new SpectralBasis());
  basis->domain_ = domain;
  const double unit = std::pow(std::numbers::pi / domain.length, 2);
  int max_index = 0;
  for (auto& m : modes) {
    m.eigenvalue = unit * level_key(m);
    max_index = std::max({max_index, m.index[0], m.index[1]});
  }
  basis->modes_ = std::move(modes);
  basis->max_index_ = max_index;

  const int n = basis->size();
  basis->eigenvalues_.resize(n);
  for (int j = 0; j < n; ++j) basis->eigenvalues_[j] = basis->modes_[j].eigenvalue;

  for (int j = 0; j < n; ++j) {
    if (j == 0 || level_key(basis->modes_[j]) != level_key(basis->modes_[j - 1])) {
      basis->levels_.push_back({basis->modes_[j].eigenvalue, 1, j});
    } else {
      ++basis->levels_.back().multiplicity;
    }
  }

  // Panels chosen so that products of retained sines integrate exactly to
  // round-off (8-point panels resolve ~2.5 half-wavelengths each).
  const int panels = std::max((domain.quadrature_points_per_dim + 7) / 8,
                              static_cast<int>(std::ceil(max_index * std::numbers::pi / 2.5)));
  basis->quad_ = composite_gauss_legendre(domain.length, panels, domain.dimension());

  const int q = basis->quad_.points_per_dim();
  const double norm = std::sqrt(2.0 / domain.length);
  basis->sines_.resize(max_index, q);
  for (int i = 0; i < max_index; ++i)
    for (int p = 0; p < q; ++p)
      basis->sines_(i, p) =
          norm * std::sin((i + 1) * std::numbers::pi * basis->quad_.nodes[p] / domain.length);
  basis->weighted_sines_ = basis->sines_ * basis->quad_.weights.asDiagonal();
  return basis;
}

const Level& SpectralBasis::level(int k) const {
  if (k < 1 || k > level_count()) {
    std::ostringstream os;
    os << "level " << k << " is outside the " << level_count() << " retained levels";
    throw PreconditionError(os.str());
  }
  return levels_[static_cast<std::size_t>(k - 1)];
}

NodalValues SpectralBasis::synthesize(const Eigen::VectorXd& coef) const {
  if (coef.size() != size()) throw PreconditionError("coefficient length does not match basis");
  if (dimension() == 1) {
    return sines_.topRows(size()).transpose() * coef;
  }
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(max_index_, max_index_);
  for (int m = 0; m < size(); ++m) c(modes_[m].index[0] - 1, modes_[m].index[1] - 1) = coef[m];
  return sines_.transpose() * c * sines_;
}

Eigen::VectorXd SpectralBasis::project(const NodalValues& values) const {
  Eigen::VectorXd out(size());
  if (dimension() == 1) {
    out = weighted_sines_.topRows(size()) * values.col(0);
    return out;
  }
  const Eigen::MatrixXd p = weighted_sines_ * values * weighted_sines_.transpose();
  for (int m = 0; m < size(); ++m) out[m] = p(modes_[m].index[0] - 1, modes_[m].index[1] - 1);
  return out;
}

double SpectralBasis::integrate(const NodalValues& values) const {
  const auto& w = quad_.weights;
  if (dimension() == 1) return w.dot(values.col(0));
  return w.dot(values * w);
}

std::array<double, 2> SpectralBasis::node(int ix, int iy) const {
  return {quad_.nodes[ix], dimension() == 1 ? 0.0 : quad_.nodes[iy]};
}

double SpectralBasis::eigenfunction(int j, double x, double y) const {
  const Mode& m = mode(j);
  const double L = domain_.length;
  const double nx = std::sqrt(2.0 / L) * std::sin(m.index[0] * std::numbers::pi * x / L);
  if (dimension() == 1) return nx;
  return nx * std::sqrt(2.0 / L) * std::sin(m.index[1] * std::numbers::pi * y / L);
}

CoefField::CoefField(BasisPtr b, Eigen::VectorXd c) : basis(std::move(b)), coef(std::move(c)) {
  if (!basis || coef.size() != basis->size()) {
    throw PreconditionError("coefficient length must equal the basis truncation");
  }
}

CoefField CoefField::zero(BasisPtr b) {
  const int n = b->size();
  return CoefField(std::move(b), Eigen::VectorXd::Zero(n));
}

CoefField CoefField::mode(BasisPtr b, int j, double amplitude) {
  CoefField f = zero(std::move(b));
  f.coef[j] = amplitude;
  return f;
}

double CoefField::norm_h() const { return coef.norm(); }

double CoefField::norm_v() const {
  return std::sqrt((basis->eigenvalues().array() * coef.array().square()).sum());
}

double CoefField::norm_alpha(double shift, double alpha) const {
  const Eigen::ArrayXd w = (basis->eigenvalues().array() + shift).pow(2.0 * alpha);
  return std::sqrt((w * coef.array().square()).sum());
}

double spectral_gap(const SpectralBasis& basis, int k) {
  if (k < 1) throw PreconditionError("levels are numbered from 1");
  if (k + 1 > basis.level_count()) {
    std::ostringstream os;
    os << "gap at level " << k << " needs level " << k + 1 << " but only "
       << basis.level_count() << " levels are retained";
    throw PreconditionError(os.str());
  }
  const double up = basis.level(k + 1).eigenvalue - basis.level(k).eigenvalue;
  if (k == 1) return up;
  return std::min(basis.level(k).eigenvalue - basis.level(k - 1).eigenvalue, up);
}

double SpectralSplit::mu_k() const { return basis->level(level).eigenvalue; }

const std::vector<int>& SpectralSplit::indices(Part p) const {
  switch (p) {
    case Part::unstable: return unstable;
    case Part::center: return center;
    case Part::stable: return stable;
  }
  return center;
}

Eigen::VectorXd SpectralSplit::rates() const {
  return basis->eigenvalues().array() - lambda;
}

Eigen::VectorXd SpectralSplit::alpha_weights() const {
  return (basis->eigenvalues().array() + shift).pow(alpha);
}

double SpectralSplit::norm_alpha(const Eigen::VectorXd& coef) const {
  return (alpha_weights().array() * coef.array()).matrix().norm();
}

Eigen::VectorXd SpectralSplit::project(Part p, const Eigen::VectorXd& coef) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(coef.size());
  for (int j : indices(p)) out[j] = coef[j];
  return out;
}

Eigen::VectorXd SpectralSplit::project_hyperbolic(const Eigen::VectorXd& coef) const {
  Eigen::VectorXd out = coef;
  for (int j : center) out[j] = 0.0;
  return out;
}

Eigen::VectorXd SpectralSplit::center_coords(const Eigen::VectorXd& coef) const {
  Eigen::VectorXd w(center_dim());
  for (int i = 0; i < center_dim(); ++i) w[i] = coef[center[static_cast<std::size_t>(i)]];
  return w;
}

Eigen::VectorXd SpectralSplit::embed_center(const Eigen::VectorXd& w) const {
  if (w.size() != center_dim()) throw PreconditionError("center coordinate dimension mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis->size());
  for (int i = 0; i < center_dim(); ++i) out[center[static_cast<std::size_t>(i)]] = w[i];
  return out;
}

SpectralSplit split_at(BasisPtr basis, int k, double lambda, double shift) {
  const double beta = spectral_gap(*basis, k);
  const double mu = basis->level(k).eigenvalue;
  if (!(std::abs(lambda - mu) < beta / 4.0)) {
    std::ostringstream os;
    os.precision(10);
    os << "lambda = " << lambda << " is outside the admissible window (" << mu - beta / 4.0
       << ", " << mu + beta / 4.0 << ") around mu_" << k << " = " << mu;
    throw PreconditionError(os.str());
  }
  if (!(shift > -basis->eigenvalue(0))) {
    throw PreconditionError("shift must exceed -mu_1 so that A + a is positive");
  }
  SpectralSplit s;
  s.basis = basis;
  s.level = k;
  s.lambda = lambda;
  s.gap = beta;
  s.shift = shift;
  const Level& lev = basis->level(k);
  for (int j = 0; j < basis->size(); ++j) {
    if (j < lev.first_mode) {
      s.unstable.push_back(j);
    } else if (j < lev.first_mode + lev.multiplicity) {
      s.center.push_back(j);
    } else {
      s.stable.push_back(j);
    }
  }
  return s;
}

CoefField propagate_linear(const SpectralSplit& split, Part part, const CoefField& field,
                           double t) {
  if (part == Part::unstable && t > 0.0) {
    throw PreconditionError("the unstable propagator is only defined for t <= 0");
  }
  if (part == Part::stable && t < 0.0) {
    throw PreconditionError("the stable propagator is only defined for t >= 0");
  }
  CoefField out = CoefField::zero(field.basis);
  for (int j : split.indices(part)) {
    out.coef[j] = std::exp(-(split.basis->eigenvalue(j) - split.lambda) * t) * field.coef[j];
  }
  return out;
}

SemigroupEstimate estimate_semigroup_constant(const SpectralSplit& split,
                                              std::span<const double> t_grid, ModeRange range) {
  SemigroupEstimate est;
  const auto& basis = *split.basis;
  const int first = std::max(range.first, 0);
  const int last = range.last < 0 ? basis.size() - 1 : std::min(range.last, basis.size() - 1);
  const double beta = split.gap;
  const double a = split.shift;
  const double alpha = split.alpha;
  double t_lo = 0.0;
  double t_hi = 0.0;
  if (!t_grid.empty()) {
    t_lo = *std::min_element(t_grid.begin(), t_grid.end());
    t_hi = *std::max_element(t_grid.begin(), t_grid.end());
  }
  auto in_range = [&](int j) { return j >= first && j <= last; };

  for (int j : split.unstable) {
    if (!in_range(j)) continue;
    const double nu = basis.eigenvalue(j) - split.lambda;
    est.finite_part_mixed_factor =
        std::max(est.finite_part_mixed_factor, std::pow(basis.eigenvalue(j) + a, alpha));
    for (double t : t_grid) {
      const double s = -std::abs(t);
      est.unstable_ratio = std::max(est.unstable_ratio, std::exp(-(nu + 0.75 * beta) * s));
    }
  }
  for (int j : split.center) {
    if (!in_range(j)) continue;
    const double nu = basis.eigenvalue(j) - split.lambda;
    est.finite_part_mixed_factor =
        std::max(est.finite_part_mixed_factor, std::pow(basis.eigenvalue(j) + a, alpha));
    for (double t : t_grid) {
      for (double s : {t, -t}) {
        est.center_ratio =
            std::max(est.center_ratio, std::exp(-nu * s - 0.25 * beta * std::abs(s)));
      }
    }
  }
  for (int j : split.stable) {
    if (!in_range(j)) continue;
    const double nu = basis.eigenvalue(j) - split.lambda;
    const double decay = nu - 0.75 * beta;
    const double scale = std::pow(basis.eigenvalue(j) + a, alpha);
    auto smoothing = [&](double t) {
      return scale * std::pow(t, alpha) * std::exp(-decay * t);
    };
    for (double t : t_grid) {
      if (t <= 0.0) continue;
      est.stable_ratio = std::max(est.stable_ratio, std::exp(-decay * t));
      est.stable_smoothing_ratio = std::max(est.stable_smoothing_ratio, smoothing(t));
    }
    // analytic maximiser of t^alpha e^{-decay t}
    if (decay > 0.0) {
      const double t_star = alpha / decay;
      if (t_star >= t_lo && t_star <= t_hi) {
        est.stable_smoothing_ratio = std::max(est.stable_smoothing_ratio, smoothing(t_star));
      }
    }
  }
  est.M = std::max({1.0, est.unstable_ratio, est.center_ratio, est.stable_ratio,
                    est.stable_smoothing_ratio});
  return est;
}

std::vector<double> default_semigroup_grid(double t_min, double t_max, int points) {
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double r = std::log(t_max / t_min);
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] = t_min * std::exp(r * i / (points - 1));
  }
  return grid;
}

BasisPtr default_truncation(const DomainSpec& domain, int k, double factor) {
  // a probe basis large enough to see level k + 1
  int n = 4;
  BasisPtr probe = SpectralBasis::build(domain, n);
  while (probe->level_count() < k + 1) {
    n *= 2;
    probe = SpectralBasis::build(domain, n);
  }
  const double mu_max = std::max(factor * probe->level(k).eigenvalue,
                                 probe->level(k + 1).eigenvalue);
  return SpectralBasis::build_up_to(domain, mu_max);
}

}  // namespace bifinf
