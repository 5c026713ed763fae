#include "bifinf/semiflow.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bifinf/csv.hpp"
#include "bifinf/errors.hpp"

namespace bifinf {

double IntegratorConfig::default_step(const SpectralBasis& basis) {
  return std::min(1e-2, 0.1 / basis.eigenvalues().maxCoeff());
}

double IntegratorConfig::step_for(const SpectralBasis& basis) const {
  if (h < 0.0) throw PreconditionError("step size must be positive");
  return h > 0.0 ? h : default_step(basis);
}

double phi1(double z) {
  if (std::abs(z) < 1e-5) return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
  return std::expm1(z) / z;
}

double phi2(double z) {
  if (std::abs(z) < 1e-3) {
    return 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0 + z * z * z * z / 720.0;
  }
  return (std::expm1(z) - z) / (z * z);
}

Eigen::VectorXd vector_field(const SpectralBasis& basis, const NonlinearitySpec& spec,
                             double lambda, const Eigen::VectorXd& a) {
  return -((basis.eigenvalues().array() - lambda) * a.array()).matrix() +
         evaluate_nemytskii(spec, basis, a);
}

Eigen::VectorXd step(const SpectralSplit& split, const NonlinearitySpec& spec,
                     const Eigen::VectorXd& a, double h) {
  if (!(h > 0.0)) throw PreconditionError("step size must be positive");
  const SpectralBasis& basis = *split.basis;
  const Eigen::VectorXd g = evaluate_nemytskii(spec, basis, a);
  Eigen::VectorXd out(a.size());
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double z = -(basis.eigenvalue(static_cast<int>(j)) - split.lambda) * h;
    out[j] = std::exp(z) * a[j] + h * phi1(z) * g[j];
  }
  return out;
}

CoefField step(const SpectralSplit& split, const NonlinearitySpec& spec, const CoefField& u,
               double h) {
  return CoefField(u.basis, step(split, spec, u.coef, h));
}

TrajectorySegment evolve(const SpectralSplit& split, const NonlinearitySpec& spec,
                         const CoefField& u0, double horizon, const IntegratorConfig& config) {
  if (!(horizon > 0.0)) throw PreconditionError("horizon must be positive");
  const double h_nominal = config.step_for(*split.basis);
  const long steps = std::max(1L, static_cast<long>(std::ceil(horizon / h_nominal - 1e-9)));
  const double h = horizon / static_cast<double>(steps);
  const int stride = std::max(1, config.record_stride);
  TrajectorySegment traj;
  traj.basis = u0.basis;
  traj.lambda = split.lambda;
  traj.t.push_back(0.0);
  traj.u.push_back(u0.coef);
  Eigen::VectorXd a = u0.coef;
  for (long n = 1; n <= steps; ++n) {
    a = step(split, spec, a, h);
    if (!a.allFinite() || a.norm() > 1e150) {
      throw DivergenceError("trajectory overflowed", static_cast<double>(n) * h);
    }
    if (n % stride == 0 || n == steps) {
      traj.t.push_back(static_cast<double>(n) * h);
      traj.u.push_back(a);
    }
  }
  return traj;
}

double energy(const SpectralBasis& basis, const NonlinearitySpec& spec, double lambda,
              const Eigen::VectorXd& a) {
  const double quad = 0.5 * ((basis.eigenvalues().array() - lambda) * a.array().square()).sum();
  return quad - integrate_primitive(spec, basis, a);
}

double duhamel_residual(const SpectralSplit& split, const NonlinearitySpec& spec,
                        const TrajectorySegment& traj) {
  if (traj.size() < 2) throw PreconditionError("trajectory needs at least two nodes");
  const SpectralBasis& basis = *split.basis;
  const int n = basis.size();
  std::vector<Eigen::VectorXd> g(traj.u.size());
  for (std::size_t i = 0; i < traj.u.size(); ++i) g[i] = evaluate_nemytskii(spec, basis, traj.u[i]);

  double worst = 0.0;
  Eigen::VectorXd integral = Eigen::VectorXd::Zero(n);
  for (int i = 1; i < traj.size(); ++i) {
    const double h = traj.t[static_cast<std::size_t>(i)] - traj.t[static_cast<std::size_t>(i - 1)];
    const double elapsed = traj.t[static_cast<std::size_t>(i)] - traj.t[0];
    Eigen::VectorXd resid(n);
    for (int j = 0; j < n; ++j) {
      const double nu = basis.eigenvalue(j) - split.lambda;
      const double z = -nu * h;
      integral[j] = std::exp(z) * integral[j] +
                    h * ((phi1(z) - phi2(z)) * g[static_cast<std::size_t>(i - 1)][j] +
                         phi2(z) * g[static_cast<std::size_t>(i)][j]);
      resid[j] = traj.u[static_cast<std::size_t>(i)][j] -
                 std::exp(-nu * elapsed) * traj.u[0][j] - integral[j];
    }
    if (i == traj.size() - 1) break;  // interior nodes only
    for (Part p : {Part::unstable, Part::center, Part::stable}) {
      double s = 0.0;
      for (int j : split.indices(p)) s += resid[j] * resid[j];
      worst = std::max(worst, std::sqrt(s));
    }
  }
  return worst;
}

SettleResult settle(const SpectralSplit& split, const NonlinearitySpec& spec,
                    const Eigen::VectorXd& a0, double h, double max_time, double threshold,
                    int check_every, double escape_radius) {
  const SpectralBasis& basis = *split.basis;
  SettleResult res;
  res.state = a0;
  res.closest = a0;
  res.field_norm = vector_field(basis, spec, split.lambda, a0).norm();
  res.min_field_norm = res.field_norm;
  const long steps = static_cast<long>(std::ceil(max_time / h));
  for (long n = 1; n <= steps; ++n) {
    res.state = step(split, spec, res.state, h);
    if (!res.state.allFinite()) throw DivergenceError("trajectory overflowed", n * h);
    if (n % check_every == 0 || n == steps) {
      res.time = static_cast<double>(n) * h;
      res.field_norm = vector_field(basis, spec, split.lambda, res.state).norm();
      if (res.field_norm < res.min_field_norm) {
        res.min_field_norm = res.field_norm;
        res.closest = res.state;
      }
      if (res.field_norm < threshold) {
        res.settled = true;
        return res;
      }
      if (res.state.norm() > escape_radius) {
        res.escaped = true;
        return res;
      }
    }
  }
  return res;
}

void write_trajectory_csv(std::ostream& os, const TrajectorySegment& traj,
                          const NonlinearitySpec& spec) {
  const SpectralBasis& basis = *traj.basis;
  os << "t";
  for (int j = 1; j <= basis.size(); ++j) os << ",a_" << j;
  os << ",norm_h,norm_v,energy\n";
  for (int i = 0; i < traj.size(); ++i) {
    const Eigen::VectorXd& a = traj.u[static_cast<std::size_t>(i)];
    os << fmt_num(traj.t[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < a.size(); ++j) os << ',' << fmt_num(a[j]);
    const double nv = std::sqrt((basis.eigenvalues().array() * a.array().square()).sum());
    os << ',' << fmt_num(a.norm()) << ',' << fmt_num(nv) << ','
       << fmt_num(energy(basis, spec, traj.lambda, a)) << '\n';
  }
}

}  // namespace bifinf
