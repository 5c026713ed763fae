#include "bifinf/lyapunov_perron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "bifinf/csv.hpp"
#include "bifinf/errors.hpp"

namespace bifinf {

double LPConfig::window_for(double beta) const { return window > 0.0 ? window : 16.0 / beta; }

TimeGrid make_time_grid(double T, double nodes_per_unit, double grading) {
  if (!(T > 0.0) || !(nodes_per_unit > 0.0) || !(grading >= 1.0)) {
    throw PreconditionError("time grid needs T > 0, nodes_per_unit > 0 and grading >= 1");
  }
  const int n = std::max(4, static_cast<int>(std::ceil(T * nodes_per_unit)));
  TimeGrid g;
  g.t.resize(static_cast<std::size_t>(2 * n + 1));
  g.zero = n;
  for (int i = 0; i <= n; ++i) {
    const double s = T * std::pow(static_cast<double>(i) / n, grading);
    g.t[static_cast<std::size_t>(n + i)] = s;
    g.t[static_cast<std::size_t>(n - i)] = -s;
  }
  g.t[static_cast<std::size_t>(n)] = 0.0;
  return g;
}

LyapunovPerron::LyapunovPerron(SpectralSplit split, NonlinearitySpec spec, LPConfig config)
    : split_(std::move(split)), spec_(std::move(spec)), config_(config) {
  const SpectralBasis& basis = *split_.basis;
  small_ = smallness_margin(spec_, basis, split_.level, config_.M);
  if (config_.require_smallness && !(small_.margin > 0.0)) {
    std::ostringstream os;
    os << "smallness condition fails: 1 - M_beta L~ = " << small_.margin
       << " (M_beta = " << small_.m_beta << ", L~ = " << small_.l_tilde << ")";
    throw PreconditionError(os.str());
  }
  if (!(config_.tolerance > 0.0)) throw PreconditionError("LP tolerance must be positive");
  if (config_.max_iterations < 1) throw PreconditionError("LP needs at least one iteration");
  const double beta = split_.gap;
  window_ = config_.window_for(beta);
  if (window_ < 8.0 / beta * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << "window T = " << window_ << " is below 8 / beta = " << 8.0 / beta;
    throw PreconditionError(os.str());
  }
  grid_ = make_time_grid(window_, config_.nodes_per_unit, config_.grading);
  alpha_w_ = split_.alpha_weights();
  time_w_.resize(grid_.size());
  for (int i = 0; i < grid_.size(); ++i)
    time_w_[i] = std::exp(-0.5 * beta * std::abs(grid_.t[static_cast<std::size_t>(i)]));

  const int n = basis.size();
  const int intervals = grid_.size() - 1;
  e_.resize(n, intervals);
  a_.resize(n, intervals);
  b_.resize(n, intervals);
  std::vector<int> forward(static_cast<std::size_t>(n));
  for (int j : split_.stable) forward[static_cast<std::size_t>(j)] = 1;
  for (int j : split_.unstable) forward[static_cast<std::size_t>(j)] = 0;
  for (int j : split_.center) forward[static_cast<std::size_t>(j)] = -1;  // outward from 0
  for (int j = 0; j < n; ++j) {
    const double nu = basis.eigenvalue(j) - split_.lambda;
    for (int i = 0; i < intervals; ++i) {
      bool fwd = forward[static_cast<std::size_t>(j)] == 1;
      if (forward[static_cast<std::size_t>(j)] == -1) fwd = i >= grid_.zero;
      const double dt = grid_.t[static_cast<std::size_t>(i + 1)] - grid_.t[static_cast<std::size_t>(i)];
      const double h = fwd ? dt : -dt;
      const double z = -nu * h;
      e_(j, i) = std::exp(z);
      a_(j, i) = h * (phi1(z) - phi2(z));
      b_(j, i) = h * phi2(z);
    }
  }
}

double LyapunovPerron::weighted_norm(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd scaled = alpha_w_.asDiagonal() * x;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    worst = std::max(worst, time_w_[i] * scaled.col(i).norm());
  return worst;
}

void LyapunovPerron::check_y(const Eigen::VectorXd& y) const {
  if (y.size() != split_.center_dim()) {
    throw PreconditionError("center coordinate dimension does not match the split");
  }
}

WeightedTrajectory LyapunovPerron::initial(const Eigen::VectorXd& y) const {
  check_y(y);
  const SpectralBasis& basis = *split_.basis;
  WeightedTrajectory x;
  x.x = Eigen::MatrixXd::Zero(basis.size(), grid_.size());
  for (int c = 0; c < split_.center_dim(); ++c) {
    const int j = split_.center[static_cast<std::size_t>(c)];
    const double nu = basis.eigenvalue(j) - split_.lambda;
    for (int i = 0; i < grid_.size(); ++i)
      x.x(j, i) = std::exp(-nu * grid_.t[static_cast<std::size_t>(i)]) * y[c];
  }
  return x;
}

Eigen::MatrixXd LyapunovPerron::nemytskii_nodes(const Eigen::MatrixXd& x) const {
  const SpectralBasis& basis = *split_.basis;
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) g.col(i) = evaluate_nemytskii(spec_, basis, x.col(i));
  return g;
}

WeightedTrajectory LyapunovPerron::apply(const Eigen::VectorXd& y,
                                         const WeightedTrajectory& x) const {
  check_y(y);
  const SpectralBasis& basis = *split_.basis;
  if (x.x.rows() != basis.size() || x.x.cols() != grid_.size()) {
    throw PreconditionError("trajectory does not live on the configured grid");
  }
  const Eigen::MatrixXd g = nemytskii_nodes(x.x);
  const int last = grid_.size() - 1;
  const int z = grid_.zero;
  WeightedTrajectory out;
  out.x.resize(basis.size(), grid_.size());
  auto forward = [&](int j, int from) {
    for (int i = from; i < last; ++i)
      out.x(j, i + 1) = e_(j, i) * out.x(j, i) + a_(j, i) * g(j, i) + b_(j, i) * g(j, i + 1);
  };
  auto backward = [&](int j, int from) {
    for (int i = from - 1; i >= 0; --i)
      out.x(j, i) = e_(j, i) * out.x(j, i + 1) + a_(j, i) * g(j, i + 1) + b_(j, i) * g(j, i);
  };
  for (int c = 0; c < split_.center_dim(); ++c) {
    const int j = split_.center[static_cast<std::size_t>(c)];
    out.x(j, z) = y[c];
    forward(j, z);
    backward(j, z);
  }
  for (int j : split_.stable) {
    out.x(j, 0) = g(j, 0) / (basis.eigenvalue(j) - split_.lambda);
    forward(j, 0);
  }
  for (int j : split_.unstable) {
    out.x(j, last) = g(j, last) / (basis.eigenvalue(j) - split_.lambda);
    backward(j, last);
  }
  return out;
}

FixedPointResult LyapunovPerron::fixed_point(const Eigen::VectorXd& y,
                                             const WeightedTrajectory* warm) const {
  FixedPointResult res;
  WeightedTrajectory x = warm ? *warm : initial(y);
  int climbing = 0;
  bool converged = false;
  for (int it = 1; it <= config_.max_iterations; ++it) {
    WeightedTrajectory next = apply(y, x);
    const double inc = weighted_norm(next.x - x.x);
    res.increments.push_back(inc);
    res.iterations = it;
    x = std::move(next);
    if (inc < config_.tolerance) {
      converged = true;
      break;
    }
    if (res.increments.size() >= 2) {
      const double prev = res.increments[res.increments.size() - 2];
      const double ratio = inc / prev;
      res.ratios.push_back(ratio);
      res.max_ratio = std::max(res.max_ratio, ratio);
      climbing = ratio >= 1.0 ? climbing + 1 : 0;
      if (climbing >= 3) {
        std::ostringstream os;
        os << "Lyapunov-Perron iteration stopped contracting: measured ratio " << ratio
           << " vs bound M_beta L~ = " << small_.contraction_bound;
        throw ConvergenceError(os.str());
      }
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "Lyapunov-Perron iteration did not reach tolerance " << config_.tolerance << " in "
       << config_.max_iterations << " iterations (last increment " << res.increments.back()
       << ")";
    throw ConvergenceError(os.str());
  }
  res.residual = weighted_norm(apply(y, x).x - x.x);
  res.gamma = std::move(x);
  return res;
}

Eigen::VectorXd LyapunovPerron::xi_direct(const WeightedTrajectory& gamma) const {
  const SpectralBasis& basis = *split_.basis;
  const Eigen::MatrixXd g = nemytskii_nodes(gamma.x);
  const int last = grid_.size() - 1;
  const int z0 = grid_.zero;
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(basis.size());
  const double T = window_;
  for (int j : split_.stable) {
    const double nu = basis.eigenvalue(j) - split_.lambda;
    // int_{-inf}^0 e^{nu s} G_j(s) ds with G frozen beyond -T
    double sum = g(j, 0) * std::exp(-nu * T) / nu;
    for (int i = 0; i < z0; ++i) {
      const double ta = grid_.t[static_cast<std::size_t>(i)];
      const double tb = grid_.t[static_cast<std::size_t>(i + 1)];
      const double h = tb - ta;
      const double zz = -nu * h;
      sum += std::exp(nu * tb) * h * ((phi1(zz) - phi2(zz)) * g(j, i) + phi2(zz) * g(j, i + 1));
    }
    xi[j] = sum;
  }
  for (int j : split_.unstable) {
    const double nu = basis.eigenvalue(j) - split_.lambda;
    // -int_0^inf e^{nu s} G_j(s) ds with G frozen beyond T
    double sum = -g(j, last) * std::exp(nu * T) / nu;
    for (int i = z0; i < last; ++i) {
      const double ta = grid_.t[static_cast<std::size_t>(i)];
      const double tb = grid_.t[static_cast<std::size_t>(i + 1)];
      const double h = tb - ta;
      const double w = nu * h;
      sum += std::exp(nu * ta) * h * (phi2(w) * g(j, i) + (phi1(w) - phi2(w)) * g(j, i + 1));
    }
    xi[j] = -sum;
  }
  return xi;
}

double LyapunovPerron::tail_bound() const {
  const double beta = split_.gap;
  const double T = window_;
  const double cf = nemytskii_bound(spec_, split_.basis->domain());
  const double kernel = std::sqrt(split_.mu_k() + split_.shift) + 1.0 / std::sqrt(T);
  return 2.0 * config_.M * cf * kernel * std::exp(-0.75 * beta * T) / (0.75 * beta);
}

XiResult LyapunovPerron::xi_at(const Eigen::VectorXd& y, const WeightedTrajectory* warm) const {
  XiResult res;
  res.fixed_point = fixed_point(y, warm);
  const Eigen::VectorXd at0 = res.fixed_point.gamma.x.col(grid_.zero);
  res.xi = split_.project_hyperbolic(at0);
  const Eigen::VectorXd direct = xi_direct(res.fixed_point.gamma);
  res.direct_difference = split_.norm_alpha(res.xi - direct);
  if (res.direct_difference > 1e-6) {
    std::ostringstream os;
    os << "xi from the fixed point and from the direct integral differ by "
       << res.direct_difference;
    throw InconsistencyError(os.str());
  }
  res.tail_bound = tail_bound();
  return res;
}

ManifoldGraph::ManifoldGraph(std::shared_ptr<const LyapunovPerron> lp, SampleBox box,
                             std::vector<GraphSample> samples)
    : lp_(std::move(lp)), box_(box), samples_(std::move(samples)) {
  const SpectralSplit& split = lp_->split();
  const double scale = std::sqrt(split.mu_k() + split.shift);
  std::vector<Eigen::VectorXd> wx(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    wx[i] = split.alpha_weights().cwiseProduct(samples_[i].xi);
    sup_alpha_ = std::max(sup_alpha_, wx[i].norm());
    max_ratio_ = std::max(max_ratio_, samples_[i].max_ratio);
    max_iter_ = std::max(max_iter_, samples_[i].iterations);
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    for (std::size_t l = i + 1; l < samples_.size(); ++l) {
      const double dy = scale * (samples_[i].y - samples_[l].y).norm();
      if (dy < 1e-14) continue;
      lip_max_ = std::max(lip_max_, (wx[i] - wx[l]).norm() / dy);
    }
  }
}

double ManifoldGraph::spacing() const { return box_.radius / (box_.radial - 1); }

double ManifoldGraph::cell_diameter() const {
  const double dr = spacing();
  if (center_dim() == 1) return 0.5 * dr;
  const double arc = box_.radius * 2.0 * std::numbers::pi / box_.angular;
  return std::hypot(dr, arc);
}

double ManifoldGraph::uniform_bound() const {
  return lp_->smallness().m_beta * nemytskii_bound(lp_->spec(), split().basis->domain());
}

bool ManifoldGraph::contains(const Eigen::VectorXd& w) const {
  return w.size() == center_dim() && w.norm() <= box_.radius * (1.0 + 1e-12);
}

Eigen::VectorXd ManifoldGraph::xi(const Eigen::VectorXd& w) const {
  if (!contains(w)) {
    std::ostringstream os;
    os << "point of norm " << w.norm() << " lies outside the sampled box of radius "
       << box_.radius;
    throw OutOfDomainError(os.str());
  }
  const double dr = spacing();
  const int nr = box_.radial;
  if (center_dim() == 1) {
    const double s = std::clamp((w[0] + box_.radius) / dr, 0.0, 2.0 * (nr - 1));
    const int i = std::min(static_cast<int>(std::floor(s)), 2 * (nr - 1) - 1);
    const double t = s - i;
    return (1.0 - t) * samples_[static_cast<std::size_t>(i)].xi +
           t * samples_[static_cast<std::size_t>(i + 1)].xi;
  }
  const int na = box_.angular;
  auto at = [&](int ri, int aj) -> const Eigen::VectorXd& {
    if (ri == 0) return samples_[0].xi;
    return samples_[static_cast<std::size_t>(1 + (ri - 1) * na + ((aj % na) + na) % na)].xi;
  };
  const double rs = std::min(w.norm() / dr, static_cast<double>(nr - 1));
  const int ri = std::min(static_cast<int>(std::floor(rs)), nr - 2);
  const double tr = rs - ri;
  double ang = std::atan2(w[1], w[0]);
  if (ang < 0.0) ang += 2.0 * std::numbers::pi;
  const double as = ang / (2.0 * std::numbers::pi) * na;
  const int aj = std::min(static_cast<int>(std::floor(as)), na - 1);
  const double ta = as - aj;
  const Eigen::VectorXd inner = (1.0 - ta) * at(ri, aj) + ta * at(ri, aj + 1);
  const Eigen::VectorXd outer = (1.0 - ta) * at(ri + 1, aj) + ta * at(ri + 1, aj + 1);
  return (1.0 - tr) * inner + tr * outer;
}

ManifoldGraph build_manifold_graph(std::shared_ptr<const LyapunovPerron> lp, SampleBox box) {
  const int m = lp->split().center_dim();
  if (m > 2) throw PreconditionError("manifold graphs are sampled for m <= 2 only");
  if (box.radial < 2 || !(box.radius > 0.0) || (m == 2 && box.angular < 4)) {
    throw PreconditionError("sample box needs radius > 0, radial >= 2 and angular >= 4");
  }
  const double dr = box.radius / (box.radial - 1);
  auto solve = [&](const Eigen::VectorXd& y, const WeightedTrajectory* warm,
                   WeightedTrajectory& gamma_out) {
    XiResult r;
    try {
      r = lp->xi_at(y, warm);
    } catch (const Error& e) {
      std::ostringstream os;
      os << "manifold sample y = (" << y.transpose() << "): " << e.what();
      throw ConvergenceError(os.str());
    }
    GraphSample s;
    s.y = y;
    s.xi = r.xi;
    s.iterations = r.fixed_point.iterations;
    s.max_ratio = r.fixed_point.max_ratio;
    s.tail_bound = r.tail_bound;
    gamma_out = std::move(r.fixed_point.gamma);
    return s;
  };

  std::vector<GraphSample> samples;
  if (m == 1) {
    const int count = 2 * box.radial - 1;
    samples.resize(static_cast<std::size_t>(count));
    const int mid = box.radial - 1;
    WeightedTrajectory origin;
    samples[static_cast<std::size_t>(mid)] =
        solve(Eigen::VectorXd::Zero(1), nullptr, origin);
    for (int dir : {1, -1}) {
      WeightedTrajectory prev = origin;
      for (int i = 1; i < box.radial; ++i) {
        Eigen::VectorXd y(1);
        y[0] = dir * i * dr;
        WeightedTrajectory g;
        samples[static_cast<std::size_t>(mid + dir * i)] = solve(y, &prev, g);
        prev = std::move(g);
      }
    }
  } else {
    const int na = box.angular;
    samples.resize(static_cast<std::size_t>(1 + (box.radial - 1) * na));
    WeightedTrajectory origin;
    samples[0] = solve(Eigen::VectorXd::Zero(2), nullptr, origin);
    for (int aj = 0; aj < na; ++aj) {
      const double ang = 2.0 * std::numbers::pi * aj / na;
      WeightedTrajectory prev = origin;
      for (int ri = 1; ri < box.radial; ++ri) {
        Eigen::VectorXd y(2);
        y << ri * dr * std::cos(ang), ri * dr * std::sin(ang);
        WeightedTrajectory g;
        samples[static_cast<std::size_t>(1 + (ri - 1) * na + aj)] = solve(y, &prev, g);
        prev = std::move(g);
      }
    }
  }
  return ManifoldGraph(std::move(lp), box, std::move(samples));
}

void write_graph_csv(std::ostream& os, const ManifoldGraph& graph) {
  const int m = graph.center_dim();
  const int n = graph.split().basis->size();
  for (int c = 1; c <= m; ++c) os << (c > 1 ? "," : "") << "y_" << c;
  for (int j = 1; j <= n; ++j) os << ",xi_" << j;
  os << ",tail_bound\n";
  for (const auto& s : graph.samples()) {
    for (int c = 0; c < m; ++c) os << (c > 0 ? "," : "") << fmt_num(s.y[c]);
    for (int j = 0; j < n; ++j) os << ',' << fmt_num(s.xi[j]);
    os << ',' << fmt_num(s.tail_bound) << '\n';
  }
}

InvarianceReport invariance_residual(const ManifoldGraph& graph, const Eigen::VectorXd& y,
                                     double horizon, const IntegratorConfig& integrator) {
  const SpectralSplit& split = graph.split();
  const SpectralBasis& basis = *split.basis;
  const NonlinearitySpec& spec = graph.lp().spec();
  if (!graph.contains(y)) throw OutOfDomainError("starting point lies outside the sampled box");
  const Eigen::VectorXd u0 = split.embed_center(y) + graph.xi(y);
  const double h = integrator.step_for(basis);
  const long steps = std::max(1L, static_cast<long>(std::ceil(horizon / h - 1e-9)));
  const double hh = horizon / static_cast<double>(steps);

  InvarianceReport rep;
  Eigen::VectorXd coarse = u0;
  Eigen::VectorXd fine = u0;
  double max_diff = 0.0;
  Eigen::VectorXd w_end = y;
  for (long n = 1; n <= steps; ++n) {
    coarse = step(split, spec, coarse, hh);
    fine = step(split, spec, step(split, spec, fine, 0.5 * hh), 0.5 * hh);
    const Eigen::VectorXd w = split.center_coords(coarse);
    if (!graph.contains(w)) {
      std::ostringstream os;
      os << "trajectory left the sampled box at t = " << n * hh << "; invariance inconclusive";
      throw OutOfDomainError(os.str());
    }
    const Eigen::VectorXd off = split.project_hyperbolic(coarse) - graph.xi(w);
    rep.residual = std::max(rep.residual, split.norm_alpha(off));
    max_diff = std::max(max_diff, split.norm_alpha(coarse - fine));
    w_end = w;
  }

  const double lip = graph.max_lipschitz_ratio();
  const double ratio = graph.max_contraction_ratio();
  const double tol = graph.lp().config().tolerance;
  rep.fixed_point_term =
      ratio < 1.0 ? tol / (1.0 - ratio) : std::numeric_limits<double>::infinity();
  double tail = 0.0;
  for (const auto& s : graph.samples()) tail = std::max(tail, s.tail_bound);
  rep.tail_term = tail;
  rep.interpolation_term = lip * std::sqrt(split.mu_k() + split.shift) * graph.cell_diameter();
  rep.integrator_term = 2.0 * (1.0 + lip) * max_diff;

  // LP discretization: re-solve on a grid twice as fine at the trajectory ends
  LPConfig refined = graph.lp().config();
  refined.nodes_per_unit *= 2.0;
  refined.require_smallness = false;
  const LyapunovPerron fine_lp(split, spec, refined);
  double quad = 0.0;
  for (const Eigen::VectorXd& w : {y, w_end}) {
    const Eigen::VectorXd a = graph.lp().xi_at(w).xi;
    const Eigen::VectorXd b = fine_lp.xi_at(w).xi;
    quad = std::max(quad, split.norm_alpha(a - b));
  }
  rep.quadrature_term = 2.0 * quad;
  return rep;
}

}  // namespace bifinf
