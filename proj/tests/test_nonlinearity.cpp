#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "bifinf/errors.hpp"
#include "bifinf/nonlinearity.hpp"
#include "oracles.hpp"

using namespace bifinf;

namespace {

const double kR = 2.0 * std::sqrt(2.0 / std::numbers::pi);  // |phi_k|_{L1} on (0, pi)

DomainSpec square() {
  DomainSpec d;
  d.kind = DomainKind::square;
  return d;
}

Eigen::VectorXd random_coef(int n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(n);
  for (int j = 0; j < n; ++j) v[j] = scale * g(rng);
  return v;
}

}  // namespace

TEST_CASE("Nemytskii operator of c tanh") {
  const auto b = SpectralBasis::build(DomainSpec{}, 12);
  const auto f = make_tanh(0.2);
  CHECK(evaluate_nemytskii(f, *b, Eigen::VectorXd::Zero(12)).cwiseAbs().maxCoeff() == 0.0);
  // saturated center coefficient c int |phi_1|, the oracle by adaptive quadrature
  const double sat = oracle::simpson([](double x) { return std::abs(oracle::sine_mode(1, x)); }, 0.0,
                                     std::numbers::pi);
  CHECK(sat == doctest::Approx(kR).epsilon(1e-10));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(12);
  u[0] = 1e6;
  CHECK(evaluate_nemytskii(f, *b, u)[0] == doctest::Approx(0.2 * sat).epsilon(1e-5));
  // against an independent quadrature at moderate amplitude
  u[0] = 3.0;
  const double expect = oracle::simpson(
      [](double x) { return 0.2 * std::tanh(3.0 * oracle::sine_mode(1, x)) * oracle::sine_mode(1, x); },
      0.0, std::numbers::pi);
  CHECK(evaluate_nemytskii(f, *b, u)[0] == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("constant nonlinearity gives u-independent coefficients") {
  const auto b = SpectralBasis::build(DomainSpec{}, 6);
  const auto f = make_constant(0.3);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd a = evaluate_nemytskii(f, *b, Eigen::VectorXd::Zero(6));
  const Eigen::VectorXd c = evaluate_nemytskii(f, *b, random_coef(6, 5.0, rng));
  CHECK((a - c).norm() == 0.0);
  for (int j = 0; j < 6; ++j) {
    // (g, phi_j) = g sqrt(2/pi) (1 - cos(j pi)) / j
    const int k = j + 1;
    const double expect = 0.3 * std::sqrt(2.0 / std::numbers::pi) * (1.0 - std::cos(k * std::numbers::pi)) / k;
    CHECK(a[j] == doctest::Approx(expect).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("Lipschitz estimate") {
  const auto b = SpectralBasis::build(DomainSpec{}, 10);
  const auto est = lipschitz_estimate(make_tanh(0.2), *b);
  CHECK(est.tilde == doctest::Approx(0.2));
  CHECK(est.max_sampled_ratio <= est.tilde + 1e-9);
  CHECK(est.pairs > 0);
  const auto sq = SpectralBasis::build(square(), 20);
  CHECK(lipschitz_estimate(make_tanh(0.25), *sq).tilde == doctest::Approx(0.25 / std::sqrt(2.0)).epsilon(1e-12));
  // a declared constant that is too small is caught by the pair check
  auto bad = make_tanh(0.2);
  bad.lipschitz = 0.02;
  CHECK_THROWS_AS(lipschitz_estimate(bad, *b), InconsistencyError);
}

TEST_CASE("M_beta closed form against quadrature") {
  const double oracle_m = oracle::m_beta(1.0, 3.0);
  CHECK(oracle_m == doctest::Approx(4.71332).epsilon(2e-6));
  CHECK(m_beta_closed_form(1.0, 3.0) == doctest::Approx(oracle_m).epsilon(1e-10));
  CHECK(std::abs(m_beta_closed_form(1.0, 3.0) - m_beta_quadrature(1.0, 3.0)) < 1e-8);
  CHECK(std::abs(m_beta_closed_form(1.3, 5.0) - m_beta_quadrature(1.3, 5.0)) < 1e-8);
  CHECK(m_beta_closed_form(1.0, 3.0) == doctest::Approx(8.0 / 3.0 + 2.0 * std::sqrt(std::numbers::pi / 3.0)));
}

TEST_CASE("smallness margin") {
  const auto b = default_truncation(DomainSpec{}, 1);
  const auto ok = smallness_margin(make_tanh(0.2), *b, 1, 1.0);
  CHECK(ok.margin == doctest::Approx(1.0 - 4.71332008 * 0.2).epsilon(1e-7));
  CHECK(ok.margin == doctest::Approx(0.05734).epsilon(1e-3));
  CHECK(ok.lipschitz_bound == doctest::Approx(1.0 / ok.margin + 1.0));
  const auto bad = smallness_margin(make_tanh(0.25), *b, 1, 1.0);
  CHECK(bad.margin == doctest::Approx(-0.17833).epsilon(1e-4));
  CHECK(std::isinf(bad.lipschitz_bound));
  const auto b3 = default_truncation(DomainSpec{}, 3);
  // k = 3: beta = 5, threshold L_f < 1 / M_5
  const double threshold = 1.0 / m_beta_closed_form(1.0, 5.0);
  CHECK(threshold == doctest::Approx(0.3139).epsilon(1e-3));
  CHECK(smallness_margin(make_tanh(0.25), *b3, 3, 1.0).margin > 0.0);
}

TEST_CASE("Landesman-Lazer limits") {
  const DomainSpec d;
  const auto rep = verify_landesman_lazer(make_tanh(0.2), d, 10.0);
  CHECK(rep.pass);
  CHECK(std::abs(rep.upper_margin) < 1e-8);
  // -0.2 tanh is dual; forcing the standard orientation must fail
  auto neg = make_tanh(-0.2);
  CHECK(neg.orientation == Orientation::dual);
  CHECK(verify_landesman_lazer(neg, d, 10.0).pass);
  neg.orientation = Orientation::standard;
  CHECK_THROWS_AS(verify_landesman_lazer(neg, d, 10.0), NonconformingError);
  // arctan approaches its limit slowly: declared limits pass only once reached
  auto at = make_arctan(0.2);
  CHECK_THROWS_AS(verify_landesman_lazer(at, d, 10.0), NonconformingError);
  at.f_upper = at.f_lower = 0.2 * 2.0 / std::numbers::pi * std::atan(10.0);
  CHECK(verify_landesman_lazer(at, d, 10.0).pass);
  CHECK_THROWS_AS(verify_landesman_lazer(make_zero(), d, 10.0), NonconformingError);
  // x-dependent limits: inf over x of c + d sin x sin y is c - |d|
  const auto mod = make_modulated_tanh(0.3, 0.1, std::numbers::pi);
  CHECK(mod.f_upper == doctest::Approx(0.2));
  CHECK(verify_landesman_lazer(mod, square(), 20.0).pass);
}

TEST_CASE("Landesman-Lazer integral margin") {
  const auto b = default_truncation(DomainSpec{}, 1);
  const auto f = make_tanh(0.2);
  const Eigen::VectorXd v = Eigen::VectorXd::Unit(b->size(), 0);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(b->size());
  const auto m = landesman_lazer_margin(f, *b, 100.0, v, zero, 0.01);
  CHECK(m.lhs == doctest::Approx(0.2 * kR).epsilon(1e-3));
  CHECK(m.rhs == doctest::Approx(0.2 * kR - 0.01).epsilon(1e-10));
  CHECK(m.lhs > m.rhs);
  CHECK(landesman_lazer_margin(f, *b, 0.0, v, zero, 0.01).lhs == 0.0);
  // eps = r delta / 2 halves the saturated integral
  const auto half = landesman_lazer_margin(f, *b, 100.0, v, zero, kR * 0.2 / 2.0);
  CHECK(half.rhs == doctest::Approx(0.15957).epsilon(1e-4));
}

TEST_CASE("monotone saturation along rays") {
  const auto b = default_truncation(DomainSpec{}, 1);
  const auto f = make_tanh(0.2);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(b->size());
    v[0] = 1.0;
    const Eigen::VectorXd u = random_coef(b->size(), 0.3, rng);
    double prev = -1e300;
    for (double s = 0.0; s <= 50.0; s += 0.5) {
      const double lhs = landesman_lazer_margin(f, *b, s, v, u, 0.0).lhs;
      CHECK(lhs >= prev - 1e-8);
      prev = lhs;
    }
  }
}

TEST_CASE("uniform Nemytskii bound") {
  std::mt19937_64 rng(9);
  for (const auto& d : {DomainSpec{}, square()}) {
    const auto b = SpectralBasis::build(d, 15);
    const auto f = make_tanh(0.25);
    const double bound = nemytskii_bound(f, d);
    CHECK(bound == doctest::Approx(0.25 * std::sqrt(d.measure())));
    for (int t = 0; t < 20; ++t)
      CHECK(evaluate_nemytskii(f, *b, random_coef(b->size(), 10.0, rng)).norm() <= bound + 1e-12);
  }
}

TEST_CASE("reflection is coefficientwise the sign-transformed operator") {
  const auto b = SpectralBasis::build(square(), 12);
  const auto f = make_tanh(0.2, 0.03);
  const auto r = reflect(f);
  CHECK(r.f_upper == doctest::Approx(f.f_lower));
  CHECK(r.f_lower == doctest::Approx(f.f_upper));
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd u = random_coef(b->size(), 3.0, rng);
    const Eigen::VectorXd lhs = evaluate_nemytskii(r, *b, u);
    const Eigen::VectorXd rhs = -evaluate_nemytskii(f, *b, Eigen::VectorXd(-u));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("declared bounds are validated") {
  auto f = make_tanh(0.2);
  CHECK_NOTHROW(f.validate(DomainSpec{}));
  f.sup_bound = 0.1;
  CHECK_THROWS_AS(f.validate(DomainSpec{}), InconsistencyError);
}

TEST_CASE("Jacobian matches finite differences") {
  const auto b = SpectralBasis::build(DomainSpec{}, 8);
  const auto f = make_tanh(0.2);
  std::mt19937_64 rng(4);
  const Eigen::VectorXd u = random_coef(8, 2.0, rng);
  const Eigen::MatrixXd J = nemytskii_jacobian(f, *b, u);
  for (int l = 0; l < 8; ++l) {
    const double h = 1e-6;
    Eigen::VectorXd up = u, um = u;
    up[l] += h;
    um[l] -= h;
    const Eigen::VectorXd col = (evaluate_nemytskii(f, *b, up) - evaluate_nemytskii(f, *b, um)) / (2 * h);
    CHECK((col - J.col(l)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("truncation tail shrinks with more modes") {
  std::mt19937_64 rng(8);
  std::vector<Eigen::VectorXd> samples;
  const auto f = make_tanh(0.2);
  const auto small = SpectralBasis::build(DomainSpec{}, 3);
  const auto large = SpectralBasis::build(DomainSpec{}, 12);
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(3);
    s[0] = 5.0 + i;
    samples.push_back(s);
  }
  const double t_small = truncation_tail(f, *small, samples);
  std::vector<Eigen::VectorXd> padded;
  for (const auto& s : samples) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(12);
    p.head(3) = s;
    padded.push_back(p);
  }
  const double t_large = truncation_tail(f, *large, padded);
  CHECK(t_small > 0.0);
  CHECK(t_small < 0.2);
  CHECK(t_large < t_small);
}
