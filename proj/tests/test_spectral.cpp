#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "bifinf/errors.hpp"
#include "bifinf/spectral.hpp"
#include "oracles.hpp"

using namespace bifinf;

namespace {

DomainSpec interval() { return DomainSpec{}; }
DomainSpec square() {
  DomainSpec d;
  d.kind = DomainKind::square;
  return d;
}

}  // namespace

TEST_CASE("interval eigenvalues are j^2 with simple levels") {
  const auto b = SpectralBasis::build(interval(), 4);
  REQUIRE(b->size() == 4);
  for (int j = 0; j < 4; ++j) {
    CHECK(b->eigenvalue(j) == doctest::Approx((j + 1) * (j + 1)).epsilon(1e-15));
    CHECK(b->level(j + 1).multiplicity == 1);
  }
}

TEST_CASE("square levels 2, 5, 8, 10 with multiplicities 1, 2, 1, 2") {
  const auto b = SpectralBasis::build(square(), 6);
  REQUIRE(b->level_count() >= 4);
  const double mu[] = {2, 5, 8, 10};
  const int mult[] = {1, 2, 1, 2};
  int total = 0;
  for (int k = 1; k <= 4; ++k) {
    CHECK(b->level(k).eigenvalue == doctest::Approx(mu[k - 1]).epsilon(1e-14));
    CHECK(b->level(k).multiplicity == mult[k - 1]);
  }
  for (const auto& l : b->levels()) total += l.multiplicity;
  CHECK(total == b->size());
}

TEST_CASE("a degenerate level is never split by the truncation") {
  const auto b = SpectralBasis::build(square(), 2);
  CHECK(b->size() == 3);
  CHECK(b->level(2).multiplicity == 2);
}

TEST_CASE("the mode cap raises a resource error") {
  CHECK_THROWS_AS(SpectralBasis::build(interval(), kMaxModes + 1), ResourceError);
  CHECK_THROWS_AS(SpectralBasis::build(interval(), 0), PreconditionError);
}

TEST_CASE("domain validation") {
  DomainSpec d;
  d.length = -1.0;
  CHECK_THROWS_AS(d.validate(), PreconditionError);
  d.length = 1.0;
  d.quadrature_points_per_dim = 8;
  CHECK_THROWS_AS(d.validate(), PreconditionError);
}

TEST_CASE("Gram matrix is the identity under quadrature") {
  const auto b = SpectralBasis::build(interval(), 8);
  Eigen::MatrixXd G(8, 8);
  for (int j = 0; j < 8; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(8, j);
    G.col(j) = b->project(b->synthesize(e));
  }
  CHECK((G - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);

  const auto s = SpectralBasis::build(square(), 12);
  const int n = s->size();
  Eigen::MatrixXd Gs(n, n);
  for (int j = 0; j < n; ++j) Gs.col(j) = s->project(s->synthesize(Eigen::VectorXd::Unit(n, j)));
  CHECK((Gs - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("eigenfunctions agree with the closed form") {
  const auto b = SpectralBasis::build(interval(), 5);
  for (int j = 0; j < 5; ++j)
    for (double x : {0.1, 0.7, 2.3})
      CHECK(b->eigenfunction(j, x) == doctest::Approx(oracle::sine_mode(j + 1, x)).epsilon(1e-14));
  const auto s = SpectralBasis::build(square(), 3);
  const auto& m = s->mode(1);
  const double x = 0.4, y = 1.9;
  const double expect = 2.0 / std::numbers::pi * std::sin(m.index[0] * x) * std::sin(m.index[1] * y);
  CHECK(s->eigenfunction(1, x, y) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("Parseval: quadrature inner products equal coefficient dot products") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (const auto& dom : {interval(), square()}) {
    const auto b = dom.kind == DomainKind::interval ? SpectralBasis::build(dom, 20)
                                                    : SpectralBasis::build(dom, 30);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd u(b->size()), v(b->size());
      for (int j = 0; j < b->size(); ++j) {
        u[j] = g(rng);
        v[j] = g(rng);
      }
      const double quad = b->integrate(b->synthesize(u).cwiseProduct(b->synthesize(v)));
      CHECK(quad == doctest::Approx(u.dot(v)).epsilon(1e-8).scale(1.0));
    }
  }
}

TEST_CASE("CoefField norms") {
  const auto b = SpectralBasis::build(interval(), 4);
  CoefField u(b, Eigen::Vector4d(1.0, 2.0, 0.0, -1.0));
  CHECK(u.norm_h() == doctest::Approx(std::sqrt(6.0)));
  CHECK(u.norm_v() == doctest::Approx(std::sqrt(1.0 + 16.0 + 16.0)));
  CHECK(u.norm_alpha(1.0, 0.5) == doctest::Approx(std::sqrt(2.0 + 4 * 5.0 + 17.0)));
  // the V norm from the gradient by quadrature
  const auto& q = b->quadrature();
  double grad = 0.0;
  for (int i = 0; i < q.points_per_dim(); ++i) {
    const double x = q.nodes[i];
    double du = 0.0;
    for (int j = 0; j < 4; ++j)
      du += u.coef[j] * std::sqrt(2.0 / std::numbers::pi) * (j + 1) * std::cos((j + 1) * x);
    grad += q.weights[i] * du * du;
  }
  CHECK(std::sqrt(grad) == doctest::Approx(u.norm_v()).epsilon(1e-10));
}

TEST_CASE("spectral gaps") {
  const auto b = SpectralBasis::build(interval(), 6);
  CHECK(spectral_gap(*b, 1) == doctest::Approx(3.0));
  CHECK(spectral_gap(*b, 3) == doctest::Approx(5.0));
  CHECK_THROWS_AS(spectral_gap(*b, 6), PreconditionError);
  const auto s = SpectralBasis::build(square(), 10);
  CHECK(spectral_gap(*s, 2) == doctest::Approx(3.0));
}

TEST_CASE("split index sets and the admissible window") {
  const auto b = SpectralBasis::build(interval(), 10);
  const auto s1 = split_at(b, 1, 0.95);
  CHECK(s1.unstable.empty());
  CHECK(s1.center == std::vector<int>{0});
  CHECK(s1.stable.size() == 9u);
  const auto s2 = split_at(b, 2, 4.1);
  CHECK(s2.unstable == std::vector<int>{0});
  CHECK(s2.center == std::vector<int>{1});
  CHECK(s2.stable.front() == 2);
  // rates respect the 3 beta / 4 separation
  const Eigen::VectorXd r = s2.rates();
  for (int j : s2.unstable) CHECK(r[j] <= -0.75 * s2.gap);
  for (int j : s2.stable) CHECK(r[j] >= 0.75 * s2.gap);
  CHECK_THROWS_AS(split_at(b, 1, 1.8), PreconditionError);
  try {
    split_at(b, 1, 1.8);
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("0.25") != std::string::npos);
  }
  const auto sq = split_at(SpectralBasis::build(square(), 12), 2, 4.9);
  CHECK(sq.center_dim() == 2);
}

TEST_CASE("projections are complementary and orthogonal") {
  const auto b = SpectralBasis::build(interval(), 8);
  const auto s = split_at(b, 2, 4.0);
  Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(8, 1.0, 8.0);
  const Eigen::VectorXd sum = s.project(Part::unstable, u) + s.project(Part::center, u) +
                              s.project(Part::stable, u);
  CHECK((sum - u).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.project(Part::stable, s.project(Part::center, u)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.embed_center(s.center_coords(u)) - s.project(Part::center, u)).norm() == 0.0);
}

TEST_CASE("linear propagators") {
  const auto b = SpectralBasis::build(interval(), 8);
  const auto s = split_at(b, 2, 4.1);
  CoefField u(b, Eigen::VectorXd::Ones(8));
  SUBCASE("identity at t = 0 on the projected field") {
    for (Part p : {Part::unstable, Part::center, Part::stable}) {
      const auto out = propagate_linear(s, p, u, 0.0);
      CHECK((out.coef - s.project(p, u.coef)).norm() == 0.0);
    }
  }
  SUBCASE("semigroup law") {
    for (Part p : {Part::center, Part::stable}) {
      const auto a = propagate_linear(s, p, propagate_linear(s, p, u, 0.3), 0.5);
      const auto c = propagate_linear(s, p, u, 0.8);
      CHECK((a.coef - c.coef).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto a = propagate_linear(s, Part::unstable, propagate_linear(s, Part::unstable, u, -0.3), -0.5);
    CHECK((a.coef - propagate_linear(s, Part::unstable, u, -0.8).coef).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("sign of t") {
    CHECK_THROWS_AS(propagate_linear(s, Part::unstable, u, 0.1), PreconditionError);
    CHECK_THROWS_AS(propagate_linear(s, Part::stable, u, -0.1), PreconditionError);
  }
  SUBCASE("center factor stays below e^{beta |t| / 4}") {
    const auto s1 = split_at(b, 1, 0.95);
    for (double t : {-1.0, 1.0}) {
      const auto out = propagate_linear(s1, Part::center, CoefField::mode(b, 0), t);
      CHECK(out.coef[0] == doctest::Approx(std::exp(-0.05 * t)));
      CHECK(std::abs(out.coef[0]) <= std::exp(0.75 * std::abs(t)));
    }
  }
}

TEST_CASE("semigroup constant") {
  const auto b = default_truncation(interval(), 1);
  const auto s = split_at(b, 1, 0.95);
  const auto grid = default_semigroup_grid();
  const auto est = estimate_semigroup_constant(s, grid);
  CHECK(est.M >= 1.0);
  CHECK(est.center_ratio <= 1.0 + 1e-12);
  CHECK(est.stable_ratio <= 1.0 + 1e-12);
  // grid-search oracle for the smoothing ratio sup_t (mu_j t)^{1/2} e^{-(mu_j - lambda - 3 beta / 4) t}
  double oracle_max = 0.0;
  for (int j : s.stable) {
    const double mu = b->eigenvalue(j);
    for (int i = 0; i <= 200000; ++i) {
      const double t = 1e-4 + (50.0 - 1e-4) * i / 200000.0;
      oracle_max = std::max(oracle_max, std::sqrt(mu * t) * std::exp(-(mu - 0.95 - 2.25) * t));
    }
  }
  CHECK(est.stable_smoothing_ratio == doctest::Approx(oracle_max).epsilon(1e-4));
  CHECK(est.M == doctest::Approx(1.0));
  // bounds hold with the returned M on a strictly finer grid
  const auto fine = default_semigroup_grid(1e-4, 50.0, 4000);
  const auto est_fine = estimate_semigroup_constant(s, fine);
  CHECK(est_fine.stable_smoothing_ratio <= est.M * (1.0 + 1e-9));
}

TEST_CASE("default truncation keeps mu <= 12 mu_k and the next level") {
  const auto b = default_truncation(interval(), 1);
  CHECK(b->eigenvalues().maxCoeff() <= 12.0);
  CHECK(b->size() == 3);
  const auto b3 = default_truncation(interval(), 3);
  CHECK(b3->eigenvalues().maxCoeff() <= 108.0);
  CHECK(b3->size() == 10);
  const auto s = default_truncation(square(), 2);
  CHECK(s->eigenvalues().maxCoeff() <= 60.0);
  CHECK(s->level(2).multiplicity == 2);
}
