#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bnc/gaussian.hpp"
#include "bnc/oracle.hpp"
#include "test_util.hpp"

using namespace bnc;
using bnc::testing::gauss1;
using bnc::testing::vec;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}  // namespace

TEST_CASE("gaussian_logpdf closed-form values") {
  // Standard normal at the mode.
  CHECK(gauss1(0, 1).log_pdf(vec({0})) == doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-12));

  // N(0, 2) at x = 1: log pdf = -1/4 - 0.5 log(4 pi), pdf ~ 0.219695.
  const double expected = -0.25 - 0.5 * std::log(4.0 * M_PI);
  CHECK(gauss1(0, 2).log_pdf(vec({1})) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::exp(expected) == doctest::Approx(0.219695).epsilon(1e-5));

  // Product of independents.
  Gaussian g2(vec({0, 0}), vec({1, 1}));
  CHECK(g2.log_pdf(vec({0, 0})) == doctest::Approx(2.0 * -0.5 * kLog2Pi).epsilon(1e-12));
}

TEST_CASE("gaussian_logpdf full covariance agrees with diagonal") {
  Eigen::MatrixXd cov(2, 2);
  cov << 1.5, 0.0, 0.0, 0.7;
  Gaussian full(vec({0.3, -0.2}), cov);
  Gaussian diag(vec({0.3, -0.2}), vec({1.5, 0.7}));
  CHECK(full.log_pdf(vec({1.0, 0.5})) ==
        doctest::Approx(diag.log_pdf(vec({1.0, 0.5}))).epsilon(1e-14));

  // Correlated case against the 2-D closed form.
  Eigen::MatrixXd c(2, 2);
  c << 1.0, 0.6, 0.6, 2.0;
  Gaussian g(vec({0, 0}), c);
  const Eigen::VectorXd x = vec({0.7, -0.4});
  const double det = 1.0 * 2.0 - 0.6 * 0.6;
  Eigen::MatrixXd inv(2, 2);
  inv << 2.0 / det, -0.6 / det, -0.6 / det, 1.0 / det;
  const double quad = x.transpose() * inv * x;
  const double expected = -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * quad;
  CHECK(g.log_pdf(x) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gaussian density integrates to 1") {
  const Gaussian g = gauss1(0.7, 1.9);
  const auto cfg = bounds_for_factors({g});
  const double log_total = quadrature_log_integral(
      [&](const Eigen::VectorXd& x) { return g.log_pdf(x); }, cfg);
  CHECK(std::abs(std::exp(log_total) - 1.0) < 1e-6);

  Gaussian g2(vec({-1.0, 0.5}), vec({0.8, 1.4}));
  const auto cfg2 = bounds_for_factors({g2}, 512);
  const double log_total2 = quadrature_log_integral(
      [&](const Eigen::VectorXd& x) { return g2.log_pdf(x); }, cfg2);
  CHECK(std::abs(std::exp(log_total2) - 1.0) < 1e-6);
}

TEST_CASE("variance floor and validation errors") {
  const Gaussian floored = gauss1(0.0, 0.0);
  CHECK(floored.diag_var()[0] == kVarianceFloor);

  CHECK_THROWS_AS(gauss1(0, 1).log_pdf(vec({0, 0})), ValidationError);
  CHECK_THROWS_AS(Gaussian(vec({0, 0}), vec({1})), ValidationError);

  Gmm bad;
  bad.weights = vec({0.5, 0.6});
  bad.components = {gauss1(0, 1), gauss1(1, 1)};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("gmm_logpdf degenerate mixtures") {
  const Gaussian g = gauss1(0.4, 1.3);
  const Eigen::VectorXd x = vec({-0.3});

  Gmm single = Gmm::single(g);
  single.validate();
  CHECK(single.log_pdf(x) == g.log_pdf(x));

  Gmm twin;
  twin.weights = vec({0.5, 0.5});
  twin.components = {g, g};
  twin.validate();
  CHECK(twin.log_pdf(x) == doctest::Approx(g.log_pdf(x)).epsilon(1e-14));

  Gmm zero_weight;
  zero_weight.weights = vec({1.0, 0.0});
  zero_weight.components = {g, gauss1(5, 0.2)};
  zero_weight.validate();
  CHECK(zero_weight.log_pdf(x) == doctest::Approx(g.log_pdf(x)).epsilon(1e-14));
}

TEST_CASE("gaussian_convolve identities") {
  const Gaussian g = gauss1(3.0, 2.0);

  SUBCASE("zero bias returns g bit-for-bit") {
    const Gaussian same = convolve(g, vec({0}), vec({0}));
    CHECK(same.mean()[0] == g.mean()[0]);
    CHECK(same.diag_var()[0] == g.diag_var()[0]);
  }

  SUBCASE("moments add") {
    const Gaussian out = convolve(g, vec({1}), vec({5}));
    CHECK(out.mean()[0] == 4.0);
    CHECK(out.diag_var()[0] == 7.0);
  }

  SUBCASE("matches the defining integral by quadrature") {
    // int N(x; 0, 1) N(y - x; 0, 1) dx at y = 1 -> pdf 0.219695...
    const Gaussian base = gauss1(0, 1);
    const Eigen::VectorXd y = vec({1});
    const double closed = convolve(base, vec({0}), vec({1})).log_pdf(y);
    const auto cfg = bounds_for_factors({base, gauss1(1, 1)}, 10000);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return base.log_pdf(x) + gauss1(0, 1).log_pdf(y - x);
        },
        cfg);
    CHECK(closed == doctest::Approx(quad).epsilon(1e-9));
    CHECK(closed == doctest::Approx(-0.25 - 0.5 * std::log(4.0 * M_PI)).epsilon(1e-12));
  }
}

TEST_CASE("gaussian_product closed form") {
  SUBCASE("two standard normals") {
    const auto [log_scale, g] = product(gauss1(0, 1), gauss1(0, 1));
    CHECK(g.mean()[0] == 0.0);
    CHECK(g.diag_var()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(log_scale == doctest::Approx(gauss1(0, 2).log_pdf(vec({0}))).epsilon(1e-14));
  }

  SUBCASE("midpoint mean by symmetry") {
    const auto [log_scale, g] = product(gauss1(0, 1), gauss1(2, 1));
    CHECK(g.mean()[0] == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("integral of the product equals exp(log_scale)") {
    const Gaussian a = gauss1(0.4, 0.8), b = gauss1(-0.9, 1.7);
    const auto [log_scale, g] = product(a, b);
    const auto cfg = bounds_for_factors({a, b}, 8192);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) { return a.log_pdf(x) + b.log_pdf(x); }, cfg);
    CHECK(quad == doctest::Approx(log_scale).epsilon(1e-9));
  }

  SUBCASE("moments match quadrature moments of the normalized product") {
    const Gaussian a = gauss1(1.2, 0.6), b = gauss1(-0.5, 2.2);
    const auto [log_scale, g] = product(a, b);
    // Riemann moments of the normalized product density.
    const int pts = 20000;
    const double lo = -10, hi = 10, h = (hi - lo) / pts;
    double mass = 0, m1 = 0, m2 = 0;
    for (int i = 0; i < pts; ++i) {
      const double x = lo + (i + 0.5) * h;
      const double w = std::exp(a.log_pdf(vec({x})) + b.log_pdf(vec({x})));
      mass += w;
      m1 += w * x;
      m2 += w * x * x;
    }
    m1 /= mass;
    m2 /= mass;
    CHECK(g.mean()[0] == doctest::Approx(m1).epsilon(1e-6));
    CHECK(g.diag_var()[0] == doctest::Approx(m2 - m1 * m1).epsilon(1e-6));
  }

  SUBCASE("full covariance path agrees with diagonal") {
    const Gaussian a(vec({0.3, -1.0}), vec({0.7, 1.1}));
    const Gaussian b(vec({-0.2, 0.4}), vec({1.4, 0.9}));
    const auto diag = product(a, b);
    const auto full = product(a.as_full(), b.as_full());
    CHECK(full.log_scale == doctest::Approx(diag.log_scale).epsilon(1e-12));
    for (int d = 0; d < 2; ++d) {
      CHECK(full.g.mean()[d] == doctest::Approx(diag.g.mean()[d]).epsilon(1e-12));
      CHECK(full.g.full_cov()(d, d) ==
            doctest::Approx(diag.g.diag_var()[d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("log_sum_exp basics and properties") {
  CHECK(log_sum_exp({0.0, 0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_sum_exp({-3.7}) == -3.7);
  CHECK(log_sum_exp({0.0, -kInf}) == 0.0);
  CHECK(log_sum_exp({-kInf, -kInf}) == -kInf);
  CHECK_THROWS_AS(log_sum_exp(std::span<const double>{}), ValidationError);

  // Permutation invariance and >= max, over random draws.
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-700, 700);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 7);
    for (auto& x : v) x = u(rng);
    const double ref = log_sum_exp(v);
    const double mx = *std::max_element(v.begin(), v.end());
    CHECK(ref >= mx);
    std::shuffle(v.begin(), v.end(), rng);
    CHECK(log_sum_exp(v) == doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("operations are deterministic") {
  const Gaussian a = gauss1(0.123, 0.456), b = gauss1(-0.7, 1.1);
  const Eigen::VectorXd x = vec({0.9});
  CHECK(a.log_pdf(x) == a.log_pdf(x));
  const auto p1 = product(a, b);
  const auto p2 = product(a, b);
  CHECK(p1.log_scale == p2.log_scale);
  CHECK(p1.g.mean()[0] == p2.g.mean()[0]);
  const Gaussian c1 = convolve(a, b.mean(), b.diag_var());
  const Gaussian c2 = convolve(a, b.mean(), b.diag_var());
  CHECK(c1.mean()[0] == c2.mean()[0]);
  CHECK(c1.diag_var()[0] == c2.diag_var()[0]);
}
