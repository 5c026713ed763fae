#include "bifinf/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "bifinf/csv.hpp"
#include "bifinf/errors.hpp"

namespace bifinf {

namespace {

double spectrum_distance(const SpectralBasis& basis, double lambda) {
  return (basis.eigenvalues().array() - lambda).abs().minCoeff();
}

double default_cap(const SpectralBasis& basis, const NonlinearitySpec& spec, double lambda) {
  const double d = spectrum_distance(basis, lambda);
  return 10.0 * std::max(nemytskii_bound(spec, basis.domain()), 1e-3) / std::max(d, 1e-12);
}

}  // namespace

const char* to_string(Classification c) {
  return c == Classification::bounded ? "bounded" : "blowup_candidate";
}

Eigen::VectorXd equilibrium_residual(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                     double lambda, const Eigen::VectorXd& a) {
  return vector_field(basis, spec, lambda, a);
}

Eigen::MatrixXd equilibrium_jacobian(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                     double lambda, const Eigen::VectorXd& a) {
  Eigen::MatrixXd J = nemytskii_jacobian(spec, basis, a);
  J.diagonal() -= (basis.eigenvalues().array() - lambda).matrix();
  return J;
}

Equilibrium describe_equilibrium(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                 double lambda, const Eigen::VectorXd& a, int iterations) {
  Equilibrium e;
  e.u = a;
  e.lambda = lambda;
  e.residual = equilibrium_residual(basis, spec, lambda, a).cwiseAbs().maxCoeff();
  e.norm_h = a.norm();
  e.norm_v = std::sqrt((basis.eigenvalues().array() * a.array().square()).sum());
  e.energy = energy(basis, spec, lambda, a);
  e.iterations = iterations;
  const Eigen::MatrixXd J = equilibrium_jacobian(basis, spec, lambda, a);
  const Eigen::VectorXd ev =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (J + J.transpose())).eigenvalues();
  e.morse_index = static_cast<int>((ev.array() > 0.0).count());
  return e;
}

Equilibrium newton_solve(const SpectralBasis& basis, const NonlinearitySpec& spec, double lambda,
                         const Eigen::VectorXd& u_init, const NewtonConfig& config,
                         const std::vector<Eigen::VectorXd>& deflate) {
  if (u_init.size() != basis.size()) throw PreconditionError("initial guess has wrong length");
  const double cap = config.radius_cap > 0.0 ? config.radius_cap : default_cap(basis, spec, lambda);
  Eigen::VectorXd u = u_init;
  Eigen::VectorXd R = equilibrium_residual(basis, spec, lambda, u);

  // log of the deflation factor and its gradient
  auto deflation = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    double logd = 0.0;
    if (grad) grad->setZero(x.size());
    for (const auto& r : deflate) {
      const Eigen::VectorXd diff = x - r;
      const double q = config.deflation_eps + diff.squaredNorm();
      const double factor = 1.0 / q + config.deflation_shift;
      logd += std::log(factor);
      if (grad) *grad += (-2.0 / (q * q) / factor) * diff;
    }
    return logd;
  };
  auto merit = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& res) {
    return std::log(res.norm() + 1e-300) + deflation(x, nullptr);
  };

  for (int it = 1; it <= config.max_iterations; ++it) {
    if (R.cwiseAbs().maxCoeff() < config.tolerance) {
      return describe_equilibrium(basis, spec, lambda, u, it - 1);
    }
    const Eigen::MatrixXd J = equilibrium_jacobian(basis, spec, lambda, u);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const double rcond = lu.rcond();
    if (!(rcond > config.singular_rcond)) {
      std::ostringstream os;
      os << "singular Jacobian (rcond " << rcond << ") at lambda = " << lambda
         << ", |u|_H = " << u.norm() << "; near a bifurcation";
      throw NearBifurcationError(os.str());
    }
    Eigen::VectorXd p = lu.solve(-R);
    if (!deflate.empty()) {
      Eigen::VectorXd g;
      deflation(u, &g);
      const double denom = 1.0 - g.dot(p);
      if (std::abs(denom) < 1e-14) throw ConvergenceError("deflated Newton step is undefined");
      p /= denom;
    }
    // backtracking on |R| times the deflation factor
    const double m0 = merit(u, R);
    double t = 1.0;
    Eigen::VectorXd u_new, R_new;
    for (;;) {
      u_new = u + t * p;
      R_new = equilibrium_residual(basis, spec, lambda, u_new);
      if (R_new.allFinite() && merit(u_new, R_new) < m0) break;
      t *= 0.5;
      if (t < 1.0 / 1024.0) {
        // accept the full step when no decrease is found; Newton may still converge
        u_new = u + p;
        R_new = equilibrium_residual(basis, spec, lambda, u_new);
        break;
      }
    }
    u = u_new;
    R = R_new;
    if (!u.allFinite() || u.norm() > cap) {
      std::ostringstream os;
      os << "Newton iterate left the ball of radius " << cap << " at lambda = " << lambda;
      throw ConvergenceError(os.str());
    }
  }
  if (R.cwiseAbs().maxCoeff() < config.tolerance) {
    return describe_equilibrium(basis, spec, lambda, u, config.max_iterations);
  }
  std::ostringstream os;
  os << "Newton did not converge in " << config.max_iterations << " iterations (residual "
     << R.cwiseAbs().maxCoeff() << ") at lambda = " << lambda;
  throw ConvergenceError(os.str());
}

std::vector<Eigen::VectorXd> default_seeds(const SpectralBasis& basis,
                                           const NonlinearitySpec& spec, int k, double lambda,
                                           double r, unsigned long long seed) {
  const Level& lev = basis.level(k);
  const int n = basis.size();
  const double delta = std::min(spec.f_upper, spec.f_lower);
  const double d = std::max(std::abs(lev.eigenvalue - lambda), 1e-12);
  const double s_pred = std::max(delta, 1e-3) * r / d;
  std::vector<Eigen::VectorXd> seeds{Eigen::VectorXd::Zero(n)};
  if (lev.multiplicity == 1) {
    for (double sgn : {1.0, -1.0}) {
      Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
      s[lev.first_mode] = sgn * s_pred;
      seeds.push_back(s);
    }
  } else {
    for (int i = 0; i < 8; ++i) {
      const double ang = 2.0 * std::numbers::pi * i / 8;
      Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
      s[lev.first_mode] = s_pred * std::cos(ang);
      s[lev.first_mode + 1] = s_pred * std::sin(ang);
      seeds.push_back(s);
    }
  }
  // the bounded solution lies in the ball of radius 2 C_f / dist(lambda, spectrum)
  const double ball = 2.0 * nemytskii_bound(spec, basis.domain()) /
                      std::max(spectrum_distance(basis, lambda), 1e-12);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd s(n);
    for (int j = 0; j < n; ++j) s[j] = gauss(rng);
    s *= 0.25 * ball * unit(rng) / s.norm();
    seeds.push_back(s);
  }
  return seeds;
}

std::vector<Equilibrium> deflated_search(const SpectralBasis& basis,
                                         const NonlinearitySpec& spec, double lambda,
                                         const std::vector<Eigen::VectorXd>& seeds,
                                         const NewtonConfig& config) {
  std::vector<Equilibrium> roots;
  std::vector<Eigen::VectorXd> found;
  auto is_new = [&](const Eigen::VectorXd& u) {
    for (const auto& f : found)
      if ((f - u).norm() <= config.distinct) return false;
    return true;
  };
  for (const auto& seed : seeds) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      try {
        Equilibrium e = newton_solve(basis, spec, lambda, seed, config, found);
        if (!is_new(e.u)) break;
        found.push_back(e.u);
        roots.push_back(std::move(e));
      } catch (const Error&) {
        break;
      }
    }
  }
  std::sort(roots.begin(), roots.end(), [](const Equilibrium& a, const Equilibrium& b) {
    return a.norm_h < b.norm_h;
  });
  return roots;
}

std::vector<double> geometric_grid(double mu_k, double theta, double sigma, int count) {
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) grid.push_back(mu_k - sigma * theta * std::pow(2.0, -i));
  return grid;
}

std::vector<Branch> continue_branch(const SpectralBasis& basis, const NonlinearitySpec& spec,
                                    int k, const std::vector<double>& lambda_grid, double r,
                                    const NewtonConfig& config) {
  if (lambda_grid.empty()) throw PreconditionError("lambda grid is empty");
  const double mu = basis.level(k).eigenvalue;
  const double sigma = spec.sign();
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    const double dist = sigma * (mu - lambda_grid[i]);
    if (!(dist > 0.0)) throw PreconditionError("lambda grid must stay on the bifurcation side of mu_k");
    if (i > 0 && !(dist < sigma * (mu - lambda_grid[i - 1]))) {
      throw PreconditionError("lambda grid must approach mu_k monotonically");
    }
  }
  const auto seeds = default_seeds(basis, spec, k, lambda_grid.front(), r);
  const auto start = deflated_search(basis, spec, lambda_grid.front(), seeds, config);
  std::vector<Branch> branches;
  for (const auto& e : start) {
    Branch br;
    br.points.push_back(e);
    for (std::size_t i = 1; i < lambda_grid.size() && !br.terminated; ++i) {
      const double target = lambda_grid[i];
      double lam = br.points.back().lambda;
      Eigen::VectorXd u = br.points.back().u;
      int halvings = 0;
      double dl = target - lam;
      while (lam != target) {
        const double next = std::abs(target - lam) <= std::abs(dl) * (1.0 + 1e-12) ? target : lam + dl;
        // tangent predictor du/dlambda = -J^{-1} u
        const Eigen::MatrixXd J = equilibrium_jacobian(basis, spec, lam, u);
        const Eigen::VectorXd tangent = J.partialPivLu().solve(-u);
        const Eigen::VectorXd guess = u + (next - lam) * tangent;
        try {
          const Equilibrium e2 = newton_solve(basis, spec, next, guess, config);
          br.max_step = std::max(br.max_step, (e2.u - u).norm());
          u = e2.u;
          lam = next;
          if (lam == target) br.points.push_back(e2);
        } catch (const Error& err) {
          if (++halvings > 8) {
            br.terminated = true;
            br.termination = std::string("continuation lost at lambda = ") +
                             std::to_string(next) + ": " + err.what();
            break;
          }
          dl *= 0.5;
        }
      }
    }
    // blow-up: V-norm increasing along the grid and ten times its start value
    bool monotone = true;
    for (std::size_t i = 1; i < br.points.size(); ++i)
      if (!(br.points[i].norm_v > br.points[i - 1].norm_v)) monotone = false;
    const double first = br.points.front().norm_v;
    const double last = br.points.back().norm_v;
    br.classification = monotone && br.points.size() > 1 && last > 10.0 * first
                            ? Classification::blowup_candidate
                            : Classification::bounded;
    for (auto& p : br.points) p.classification = br.classification;
    branches.push_back(std::move(br));
  }
  return branches;
}

void write_branches_csv(std::ostream& os, const std::vector<Branch>& branches) {
  os << "branch,lambda,norm_h,norm_v,residual,classification,energy\n";
  for (std::size_t b = 0; b < branches.size(); ++b) {
    for (const auto& p : branches[b].points) {
      os << b << ',' << fmt_num(p.lambda) << ',' << fmt_num(p.norm_h) << ','
         << fmt_num(p.norm_v) << ',' << fmt_num(p.residual) << ',' << to_string(p.classification)
         << ',' << fmt_num(p.energy) << '\n';
    }
  }
}

OmegaLimitCheck cross_validate_omega_limits(const SpectralSplit& split,
                                            const NonlinearitySpec& spec,
                                            const std::vector<Equilibrium>& roots, double h,
                                            int random_seeds, unsigned long long seed) {
  const SpectralBasis& basis = *split.basis;
  OmegaLimitCheck chk;
  chk.lambda = split.lambda;
  chk.roots = static_cast<int>(roots.size());
  chk.approach.assign(roots.size(), std::numeric_limits<double>::infinity());
  if (roots.empty()) return chk;
  for (const auto& r : roots)
    if (r.morse_index <= 1) ++chk.reachable;
  const int n = basis.size();
  const double d = std::max(std::abs(split.mu_k() - split.lambda), 1e-12);
  double scale = 1.0;
  for (const auto& r : roots) scale = std::max(scale, r.norm_h);
  const double escape = 4.0 * scale;
  // integrating to a 1e-9 field norm takes ~ log(1e9 scale) / d time units
  const double max_time = 40.0 / d + 200.0;
  auto match = [&](const Eigen::VectorXd& x) {
    for (std::size_t i = 0; i < roots.size(); ++i)
      if ((roots[i].u - x).norm() < 1e-3 * (1.0 + roots[i].norm_h)) return static_cast<int>(i);
    return -1;
  };
  std::vector<char> hit(roots.size(), 0);
  auto run_seed = [&](const Eigen::VectorXd& a0) {
    ++chk.seeds;
    SettleResult res;
    try {
      res = settle(split, spec, a0, h, max_time, 1e-9, 20, escape);
    } catch (const DivergenceError&) {
      ++chk.escaped;
      return;
    }
    if (res.escaped) {
      ++chk.escaped;
      return;
    }
    const int i = res.settled ? match(res.state) : -1;
    if (i < 0) {
      ++chk.unmatched_limits;
      return;
    }
    const auto k = static_cast<std::size_t>(i);
    hit[k] = 1;
    chk.approach[k] = std::min(chk.approach[k], (res.state - roots[k].u).norm());
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_vec = [&](double size) {
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v[j] = gauss(rng);
    return Eigen::VectorXd(v * (size / v.norm()));
  };
  // perturbed seeds around every root, and random seeds in a ball containing all roots
  for (const auto& r : roots) run_seed(r.u + random_vec(0.05 * (1.0 + r.norm_h)));
  for (int i = 0; i < random_seeds; ++i) run_seed(random_vec(1.5 * scale * (i + 1) / random_seeds));

  // saddles with one unstable direction: bisection across their stable manifold,
  // sides told apart by the sign of the exit along the unstable eigenvector
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (hit[i] || roots[i].morse_index != 1) continue;
    const Eigen::MatrixXd J = equilibrium_jacobian(basis, spec, split.lambda, roots[i].u);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (J + J.transpose()));
    const Eigen::VectorXd e = es.eigenvectors().col(n - 1);
    const Eigen::VectorXd q = random_vec(1e-2 * (1.0 + roots[i].norm_h));
    const Eigen::VectorXd base = roots[i].u + q - q.dot(e) * e;
    double sep = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < roots.size(); ++l)
      if (l != i) sep = std::min(sep, (roots[l].u - roots[i].u).norm());
    if (!std::isfinite(sep)) sep = 1.0 + roots[i].norm_h;
    const double exit_radius = 0.5 * sep;
    const long steps = static_cast<long>(std::ceil(max_time / h));
    auto side = [&](double s, double* closest) {
      Eigen::VectorXd a = base + s * e;
      double best = (a - roots[i].u).norm();
      for (long t = 0; t < steps; ++t) {
        const Eigen::VectorXd next = step(split, spec, a, h);
        if (!next.allFinite()) break;
        a = next;
        const double dist = (a - roots[i].u).norm();
        best = std::min(best, dist);
        if (dist > exit_radius) break;
      }
      *closest = std::min(*closest, best);
      return (a - roots[i].u).dot(e) >= 0.0;
    };
    double closest = std::numeric_limits<double>::infinity();
    double lo = -0.25 * sep, hi = 0.25 * sep;
    const bool s_lo = side(lo, &closest);
    const bool s_hi = side(hi, &closest);
    if (s_lo == s_hi) continue;
    const double target = 1e-6 * (1.0 + roots[i].norm_h);
    for (int it = 0; it < 60 && closest >= target; ++it) {
      const double mid = 0.5 * (lo + hi);
      (side(mid, &closest) == s_lo ? lo : hi) = mid;
    }
    chk.approach[i] = closest;
    if (closest < target) hit[i] = 1;
  }
  for (std::size_t i = 0; i < roots.size(); ++i)
    if (hit[i] && roots[i].morse_index <= 1) ++chk.recovered;
  return chk;
}

double saturated_balance(const SpectralSplit& split, const NonlinearitySpec& spec,
                         const Eigen::VectorXd& u) {
  const SpectralBasis& basis = *split.basis;
  Eigen::VectorXd v = split.embed_center(split.center_coords(u));
  const double n = v.norm();
  if (!(n > 0.0)) throw PreconditionError("state has no center component");
  v /= n;
  const NodalValues vn = basis.synthesize(v);
  const NodalValues fv = apply_pointwise(basis, spec.value, NodalValues(1e12 * vn));
  return spec.sign() * basis.integrate(fv.cwiseProduct(vn));
}

MultiplicityReport multiplicity_report(const BasisPtr& basis, const NonlinearitySpec& spec,
                                       int k, double theta, double r,
                                       const MultiplicityConfig& config) {
  return multiplicity_report(
      basis, spec, k,
      geometric_grid(basis->level(k).eigenvalue, theta, spec.sign(), config.grid_count), r,
      config);
}

MultiplicityReport multiplicity_report(const BasisPtr& basis, const NonlinearitySpec& spec,
                                       int k, const std::vector<double>& grid, double r,
                                       const MultiplicityConfig& config) {
  if (grid.empty()) throw PreconditionError("lambda grid is empty");
  MultiplicityReport rep;
  rep.k = k;
  rep.m = basis->level(k).multiplicity;
  rep.mu_k = basis->level(k).eigenvalue;
  rep.sigma = spec.sign();
  rep.theta = std::abs(rep.mu_k - grid.front());
  rep.grid = grid;

  rep.three_solutions = true;
  rep.min_energy_gap = std::numeric_limits<double>::infinity();
  for (double lam : rep.grid) {
    GridPoint gp;
    gp.lambda = lam;
    gp.roots = deflated_search(*basis, spec, lam, default_seeds(*basis, spec, k, lam, r),
                               config.newton);
    if (gp.roots.size() < 3) rep.three_solutions = false;
    const SpectralSplit split = split_at(basis, k, lam);
    IntegratorConfig ic;
    ic.h = config.drift_step;
    ic.record_stride = 10;
    for (const auto& e : gp.roots) {
      // unstable directions amplify the residual by e^{rate t}; cap the horizon at 5 / rate
      const Eigen::MatrixXd J = equilibrium_jacobian(*basis, spec, lam, e.u);
      const double rate =
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (J + J.transpose()))
              .eigenvalues()
              .maxCoeff();
      const double horizon =
          rate > 0.0 ? std::min(config.drift_horizon, 5.0 / rate) : config.drift_horizon;
      gp.drift_horizon = std::min(gp.drift_horizon, horizon);
      const auto traj = evolve(split, spec, CoefField(basis, e.u), horizon, ic);
      for (const auto& a : traj.u) gp.max_drift = std::max(gp.max_drift, (a - e.u).norm());
    }
    rep.max_drift = std::max(rep.max_drift, gp.max_drift);
    // the root nearest to the origin against every other one
    if (gp.roots.size() >= 2) {
      const double e0 = gp.roots.front().energy;
      for (std::size_t i = 1; i < gp.roots.size(); ++i) {
        const double gap = std::abs(gp.roots[i].energy - e0) /
                           (config.energy_tolerance * (1.0 + std::abs(e0)));
        rep.min_energy_gap = std::min(rep.min_energy_gap, gap);
      }
    }
    rep.points.push_back(std::move(gp));
  }
  rep.drift_ok = rep.max_drift < config.drift_tolerance;
  rep.energy_separated = std::isfinite(rep.min_energy_gap) && rep.min_energy_gap > 10.0;

  rep.branches = continue_branch(*basis, spec, k, rep.grid, r, config.newton);
  bool bounded_full = false;
  for (const auto& br : rep.branches) {
    if (br.classification == Classification::blowup_candidate) {
      ++rep.diverging;
      std::vector<double> prod, ratio;
      for (const auto& p : br.points) {
        const SpectralSplit split = split_at(basis, k, p.lambda);
        const double q = p.norm_h * std::abs(rep.mu_k - p.lambda);
        prod.push_back(q);
        ratio.push_back(q / saturated_balance(split, spec, p.u));
        rep.max_product_deviation = std::max(rep.max_product_deviation, std::abs(ratio.back() - 1.0));
      }
      rep.product.push_back(std::move(prod));
      rep.product_ratio.push_back(std::move(ratio));
    } else {
      ++rep.bounded;
      if (!br.terminated && br.points.size() == rep.grid.size()) bounded_full = true;
      for (const auto& p : br.points) rep.bounded_sup_norm_v = std::max(rep.bounded_sup_norm_v, p.norm_v);
    }
  }
  rep.divergence = rep.diverging >= 2;
  for (const auto& ratio : rep.product_ratio)
    if (std::abs(ratio.back() - 1.0) > config.product_tolerance) rep.divergence = false;
  for (const auto& br : rep.branches)
    if (br.classification == Classification::blowup_candidate &&
        (br.terminated || br.points.size() != rep.grid.size()))
      rep.divergence = false;
  rep.product_law_uniform =
      rep.diverging >= 2 && rep.max_product_deviation <= config.product_tolerance;
  rep.bounded_branch = bounded_full;

  rep.side_ok = true;
  if (config.check_other_side) {
    std::vector<double> mirror;
    for (double lam : rep.grid) mirror.push_back(2.0 * rep.mu_k - lam);
    for (double lam : mirror) {
      const auto roots = deflated_search(*basis, spec, lam, default_seeds(*basis, spec, k, lam, r),
                                         config.newton);
      rep.other_side_roots.push_back(static_cast<int>(roots.size()));
    }
    // continue whatever exists on the other side towards mu_k; the grid check in
    // continue_branch is keyed to the orientation, so it is flipped here
    std::vector<Branch> other;
    try {
      NonlinearitySpec flipped = spec;
      flipped.orientation =
          spec.orientation == Orientation::standard ? Orientation::dual : Orientation::standard;
      other = continue_branch(*basis, flipped, k, mirror, r, config.newton);
    } catch (const Error&) {
      rep.side_ok = false;
    }
    for (const auto& br : other)
      if (br.classification == Classification::blowup_candidate) ++rep.other_side_blowups;
    if (rep.other_side_blowups > 0) rep.side_ok = false;
  }
  return rep;
}

}  // namespace bifinf
