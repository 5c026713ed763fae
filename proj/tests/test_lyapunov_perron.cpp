#include "doctest.h"

#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>

#include "bifinf/errors.hpp"
#include "bifinf/lyapunov_perron.hpp"

using namespace bifinf;

namespace {

std::shared_ptr<const LyapunovPerron> make_lp(int modes, int k, double lambda, NonlinearitySpec f,
                                              LPConfig cfg = {}) {
  auto b = SpectralBasis::build(DomainSpec{}, modes);
  return std::make_shared<const LyapunovPerron>(split_at(b, k, lambda), std::move(f), cfg);
}

Eigen::VectorXd center1(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("time grid") {
  const auto g = make_time_grid(4.0, 8.0, 2.0);
  CHECK(g.t[g.zero] == 0.0);
  CHECK(g.t.front() == doctest::Approx(-4.0));
  CHECK(g.t.back() == doctest::Approx(4.0));
  for (int i = 0; i + 1 < g.size(); ++i) CHECK(g.t[i] < g.t[i + 1]);
  for (int i = 0; i < g.size(); ++i) CHECK(g.t[i] == doctest::Approx(-g.t[g.size() - 1 - i]));
  // grading clusters the nodes near zero
  CHECK(g.t[g.zero + 1] - g.t[g.zero] < g.t.back() - g.t[g.size() - 2]);
}

TEST_CASE("zero nonlinearity: the graph is the center space") {
  const auto lp = make_lp(6, 2, 4.1, make_zero());
  const auto r = lp->xi_at(center1(1.7));
  CHECK(r.xi.norm() == 0.0);
  const auto& x = r.fixed_point.gamma.x;
  for (int i = 0; i < lp->grid().size(); ++i) {
    const double t = lp->grid().t[i];
    CHECK(x(1, i) == doctest::Approx(1.7 * std::exp(-(4.0 - 4.1) * t)).epsilon(1e-12));
  }
}

TEST_CASE("constant forcing: the graph is the hyperbolic equilibrium") {
  const double g = 0.3;
  const auto lp = make_lp(8, 2, 4.1, make_constant(g));
  const Eigen::VectorXd gc = evaluate_nemytskii(make_constant(g), *lp->split().basis,
                                                Eigen::VectorXd::Zero(8));
  for (double y : {-2.0, 0.0, 3.0}) {
    const auto r = lp->xi_at(center1(y));
    for (int j = 0; j < 8; ++j) {
      if (j == 1) {
        CHECK(r.xi[j] == 0.0);
        continue;
      }
      const double expect = gc[j] / (lp->split().basis->eigenvalue(j) - 4.1);
      CHECK(r.xi[j] == doctest::Approx(expect).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("the fixed point passes through y at t = 0") {
  const auto lp = make_lp(8, 1, 0.95, make_tanh(0.2));
  for (double y : {-4.0, 0.5, 6.0}) {
    const auto r = lp->xi_at(center1(y));
    CHECK(r.fixed_point.gamma.x(0, lp->grid().zero) == doctest::Approx(y).epsilon(1e-12));
    CHECK(r.fixed_point.residual < 1e-9);
    CHECK(r.direct_difference < 1e-8);
  }
}

TEST_CASE("contraction ratio respects M_beta L~") {
  for (double c : {0.1, 0.2}) {
    const auto lp = make_lp(8, 1, 0.95, make_tanh(c));
    const double bound = lp->smallness().contraction_bound;
    CHECK(bound == doctest::Approx(4.71332008 * c).epsilon(1e-7));
    const auto r = lp->xi_at(center1(3.0));
    CHECK(r.fixed_point.max_ratio <= 1.1 * bound);
    CHECK(r.fixed_point.iterations <= 200);
  }
}

TEST_CASE("smallness is enforced") {
  CHECK_THROWS_AS(make_lp(8, 1, 0.95, make_tanh(0.25)), PreconditionError);
  LPConfig cfg;
  cfg.require_smallness = false;
  CHECK_NOTHROW(make_lp(8, 1, 0.95, make_tanh(0.25), cfg));
}

TEST_CASE("center coordinates of the wrong size are rejected") {
  const auto lp = make_lp(8, 1, 0.95, make_tanh(0.2));
  CHECK_THROWS_AS(lp->xi_at(Eigen::VectorXd::Zero(2)), PreconditionError);
}

TEST_CASE("odd nonlinearities give odd graphs") {
  const auto lp = make_lp(8, 1, 0.95, make_tanh(0.2));
  for (double y : {0.7, 2.5, 9.0}) {
    const Eigen::VectorXd a = lp->xi_at(center1(y)).xi;
    const Eigen::VectorXd b = lp->xi_at(center1(-y)).xi;
    CHECK((a + b).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(lp->xi_at(center1(0.0)).xi.norm() < 1e-14);
}

TEST_CASE("sampled graph: Lipschitz and uniform bounds") {
  const auto lp = make_lp(8, 1, 0.95, make_tanh(0.2));
  const auto graph = build_manifold_graph(lp, SampleBox{12.0, 25, 1});
  CHECK(graph.samples().size() == 49u);
  CHECK(graph.max_lipschitz_ratio() <= graph.lipschitz_bound());
  CHECK(graph.lipschitz_bound() == doctest::Approx(1.0 / (1.0 - 4.71332008 * 0.2) + 1.0).epsilon(1e-7));
  CHECK(graph.max_alpha_norm() <= graph.uniform_bound());
  CHECK(graph.uniform_bound() == doctest::Approx(4.71332008 * 0.2 * std::sqrt(std::numbers::pi)).epsilon(1e-7));
  CHECK(graph.max_contraction_ratio() <= 1.1 * lp->smallness().contraction_bound);
  // interpolation reproduces the samples and is linear in between
  const auto& s = graph.samples()[10];
  CHECK((graph.xi(s.y) - s.xi).norm() < 1e-14);
  CHECK_THROWS_AS(graph.xi(center1(12.5)), OutOfDomainError);
  std::ostringstream os;
  write_graph_csv(os, graph);
  CHECK(os.str().substr(0, os.str().find('\n')) == "y_1,xi_1,xi_2,xi_3,xi_4,xi_5,xi_6,xi_7,xi_8,tail_bound");
}

TEST_CASE("the graph does not depend on the truncation window") {
  LPConfig a;
  LPConfig b;
  b.window = 1.5 * a.window_for(3.0);
  const auto lpa = make_lp(8, 1, 0.95, make_tanh(0.2), a);
  const auto lpb = make_lp(8, 1, 0.95, make_tanh(0.2), b);
  for (double y : {1.0, 5.0}) {
    const auto xa = lpa->xi_at(center1(y)).xi;
    const auto xb = lpb->xi_at(center1(y)).xi;
    CHECK((xa - xb).cwiseAbs().maxCoeff() < 1e-6);
  }
  CHECK(lpa->tail_bound() < 1e-3);
}

TEST_CASE("unstable modes: k = 2") {
  const auto lp = make_lp(8, 2, 4.1, make_tanh(0.2));
  CHECK(lp->split().unstable.size() == 1u);
  const auto r = lp->xi_at(center1(2.0));
  CHECK(r.fixed_point.residual < 1e-9);
  CHECK(r.xi[1] == 0.0);
  CHECK(std::abs(r.xi[0]) > 0.0);
}

TEST_CASE("invariance residual within its budget") {
  const auto lp = make_lp(8, 1, 0.95, make_tanh(0.2));
  const auto graph = build_manifold_graph(lp, SampleBox{12.0, 49, 1});
  IntegratorConfig ic;
  ic.h = 0.005;
  for (double y : {-3.0, 1.0, 4.0}) {
    const auto rep = invariance_residual(graph, center1(y), 1.0, ic);
    CHECK(rep.pass());
    CHECK(rep.residual < 1e-2);
  }
}
