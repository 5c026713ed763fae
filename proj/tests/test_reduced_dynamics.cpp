#include "doctest.h"

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "bifinf/errors.hpp"
#include "bifinf/reduced_dynamics.hpp"
#include "oracles.hpp"

using namespace bifinf;

namespace {

const double kR = 2.0 * std::sqrt(2.0 / std::numbers::pi);

std::shared_ptr<ReducedFlow> interval_flow(double lambda, NonlinearitySpec f = make_tanh(0.2),
                                           int modes = 8, double radius = 0.0) {
  auto b = SpectralBasis::build(DomainSpec{}, modes);
  auto split = split_at(b, 1, lambda);
  if (radius == 0.0) radius = 1.5 * annulus_radius_bound(f, split);
  auto lp = std::make_shared<const LyapunovPerron>(split, f);
  const int radial = static_cast<int>(std::ceil(radius / 0.25)) + 1;
  auto graph = std::make_shared<const ManifoldGraph>(build_manifold_graph(lp, SampleBox{radius, radial, 1}));
  return std::make_shared<ReducedFlow>(graph);
}

const ReducedFlow& standard_flow() {
  static const auto flow = interval_flow(0.95);
  return *flow;
}

SpectralSplit square_split() {
  DomainSpec d;
  d.kind = DomainKind::square;
  return split_at(SpectralBasis::build(d, 12), 2, 4.95);
}

}  // namespace

TEST_CASE("minimal L1 norm on the center sphere") {
  const auto s1 = split_at(SpectralBasis::build(DomainSpec{}, 4), 1, 0.95);
  CHECK(min_center_l1(s1, 8) == doctest::Approx(kR).epsilon(1e-8));
  CHECK(kR == doctest::Approx(1.59577).epsilon(1e-5));
  const auto sq = square_split();
  Eigen::VectorXd arg;
  const double r = min_center_l1(sq, 512, &arg);
  const double oracle_r = oracle::square_l1_min(600, 720);
  CHECK(r == doctest::Approx(oracle_r).epsilon(1e-4));
  CHECK(r == doctest::Approx(2.40084).epsilon(1e-4));
  CHECK(arg.norm() == doctest::Approx(1.0));
  CHECK(center_l1_norm(sq, arg) == doctest::Approx(r).epsilon(1e-10));
}

TEST_CASE("annulus constants at lambda = 0.95") {
  const auto& flow = standard_flow();
  CHECK(flow.distance() == doctest::Approx(0.05));
  const auto an = invariant_annulus(flow);
  CHECK(an.C_f == doctest::Approx(0.2 * std::sqrt(std::numbers::pi)).epsilon(1e-12));
  CHECK(an.C_f == doctest::Approx(0.35449).epsilon(1e-4));
  CHECK(an.C_lambda == doctest::Approx(1.2566).epsilon(1e-4));
  CHECK(an.rho == doctest::Approx(7.0898).epsilon(1e-4));
  CHECK(an.r == doctest::Approx(kR).epsilon(1e-8));
  CHECK(an.c0 == doctest::Approx(kR * 0.2 / 2.0).epsilon(1e-8));
  CHECK(an.R0 <= an.a);
  CHECK(an.a <= an.a_bound);
  CHECK(an.b == doctest::Approx(an.a + an.rho));
  CHECK(an.inner_min_margin >= 0.0);
  CHECK(an.outer_max < 0.0);
}

TEST_CASE("Gronwall envelope") {
  const auto an = invariant_annulus(standard_flow());
  CHECK(gronwall_envelope(an, 10.0, 20.0) == doctest::Approx(68.56).epsilon(1e-3));
  CHECK(gronwall_envelope(an, 10.0, 0.0) == doctest::Approx(100.0));
  CHECK(gronwall_envelope(an, 10.0, 1e6) == doctest::Approx(an.rho * an.rho));
  // reduced trajectories stay under the envelope
  const auto traj = standard_flow().trajectory(Eigen::VectorXd::Constant(1, 10.0), 40.0, 0.05);
  for (std::size_t i = 0; i < traj.size(); ++i)
    CHECK(traj[i].squaredNorm() <= gronwall_envelope(an, 10.0, 0.05 * i) + 1e-9);
}

TEST_CASE("zero nonlinearity has no annulus") {
  const auto flow = interval_flow(0.95, make_zero(), 4, 10.0);
  CHECK_THROWS_AS(invariant_annulus(*flow), CertificationError);
}

TEST_CASE("annulus grows as lambda approaches mu_k") {
  double prev_a = 0.0, prev_b = 0.0;
  for (double lambda : {0.95, 0.975, 0.99}) {
    const auto flow = interval_flow(lambda, make_tanh(0.2), 4);
    const auto an = invariant_annulus(*flow);
    CHECK(an.a > prev_a);
    CHECK(an.b > prev_b);
    prev_a = an.a;
    prev_b = an.b;
  }
}

TEST_CASE("tabulated field agrees with the exact field") {
  auto flow = interval_flow(0.95);
  flow->tabulate(0.05);
  CHECK(flow->tabulated());
  for (double w : {-9.3, -1.1, 0.0, 2.71, 8.8}) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, w);
    CHECK(std::abs(flow->fast_field(x)[0] - flow->field(x)[0]) < 1e-4);
  }
}

TEST_CASE("reduced equilibria match the boundary value problem") {
  const auto& flow = standard_flow();
  const auto roots = polish_equilibria(flow, {Eigen::VectorXd::Constant(1, 6.0)});
  REQUIRE(roots.size() == 1u);
  const auto bvp = oracle::solve_bvp(0.95, [](double u) { return 0.2 * std::tanh(u); }, 0.5, 8.0);
  CHECK(roots[0].w[0] == doctest::Approx(bvp.coef1).epsilon(1e-4));
  CHECK(roots[0].w[0] == doctest::Approx(6.275).epsilon(1e-3));
  CHECK(roots[0].residual < 1e-9);
  CHECK(roots[0].unstable_directions == 0);
  // the full field vanishes at the exact lift, and nearly at the interpolated one
  const auto& basis = *flow.split().basis;
  const Eigen::VectorXd exact = flow.split().embed_center(roots[0].w) + flow.graph().lp().xi_at(roots[0].w).xi;
  CHECK(vector_field(basis, flow.spec(), 0.95, exact).norm() < 1e-4);
  CHECK(vector_field(basis, flow.spec(), 0.95, flow.lift(roots[0].w)).norm() < 1e-4);
}

TEST_CASE("attractor cover has the shape of a 0-sphere") {
  const auto& flow = standard_flow();
  const auto an = invariant_annulus(flow);
  const auto cover = compute_attractor(flow, an);
  CHECK(cover.cover_count() > 0);
  const auto shape = certify_sphere_shape(cover);
  CHECK(shape.pass);
  CHECK(shape.components == 2);
  CHECK(shape.one_per_sign);
  CHECK(shape.origin_excluded);
  bool found = false;
  for (const auto& e : cover.equilibria)
    if (std::abs(std::abs(e.w[0]) - 6.275) < 1e-2) found = true;
  CHECK(found);
  std::ostringstream os;
  write_cover_csv(os, cover);
  CHECK(os.str().substr(0, os.str().find('\n')) == "w_1,in_cover");
}

TEST_CASE("shape certificate rejects a single component") {
  AttractorCover c;
  c.m = 1;
  c.cells = 10;
  c.lo = -5.0;
  c.hi = 5.0;
  c.active.assign(10, 1);
  c.cover.assign(10, 0);
  c.cover[7] = c.cover[8] = 1;
  const auto one = certify_sphere_shape(c);
  CHECK_FALSE(one.pass);
  CHECK(one.components == 1);
  c.cover[4] = c.cover[5] = 1;  // touches the origin
  CHECK_FALSE(certify_sphere_shape(c).pass);
  c.cover.assign(10, 0);
  c.cover[1] = c.cover[8] = 1;
  CHECK(certify_sphere_shape(c).pass);
}

TEST_CASE("theta search") {
  const auto res = search_theta(1.0, 3.0, 1.0, [](double lambda) { return lambda >= 1.0 - 0.1; }, 10);
  CHECK(res.theta <= 0.1);
  CHECK(res.theta > 0.1 * 0.99);
  CHECK(res.evaluations == static_cast<int>(res.trials.size()));
  CHECK(search_theta(1.0, 3.0, 1.0, [](double) { return true; }).theta == doctest::Approx(3.0 / 8.0));
  // dual orientation searches above mu_k
  const auto dual = search_theta(1.0, 3.0, -1.0, [](double lambda) { return lambda <= 1.05; }, 10);
  CHECK(dual.theta <= 0.05);
  CHECK(dual.theta > 0.049);
  CHECK_THROWS_AS(search_theta(1.0, 3.0, 1.0, [](double) { return false; }), CertificationError);
}
