#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bnc/obs_model.hpp"
#include "bnc/oracle.hpp"
#include "test_util.hpp"

using namespace bnc;
using namespace bnc::testing;

namespace {

Hmm simple_clean(int dim = 1) {
  Hmm hmm;
  hmm.initial = vec({0.6, 0.4});
  hmm.transitions.resize(2, 2);
  hmm.transitions << 0.8, 0.2, 0.3, 0.7;
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m1 = Eigen::VectorXd::Constant(dim, 2.0);
  Eigen::VectorXd v = Eigen::VectorXd::Constant(dim, 0.5);
  hmm.emissions = {Gmm::single(Gaussian(m0, v)), Gmm::single(Gaussian(m1, v))};
  hmm.model_id = "clean";
  return hmm;
}

bool replay_matches(const ObservationModelSpec& spec, const SampledUtterance& utt) {
  const int L = model_tail_length(spec);
  for (size_t n = 0; n < utt.observed.size(); ++n) {
    const int lo = std::max(0, static_cast<int>(n) - L);
    std::span<const Eigen::VectorXd> window(utt.clean.data() + lo, n - lo + 1);
    const Eigen::VectorXd y = apply_model(
        spec, window, utt.latents[n], n > 0 ? &utt.observed[n - 1] : nullptr);
    for (int d = 0; d < y.size(); ++d)
      if (y[d] != utt.observed[n][d]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("apply_model trivial evaluations") {
  FrameLatents lat;

  SUBCASE("additive with zero bias is the identity") {
    AdditiveGaussianModel m;
    m.bias_mean = vec({0});
    m.bias_var = vec({0});
    lat.bias = vec({0});
    const Eigen::VectorXd x = vec({1.25});
    const auto y = apply_model(ObservationModelSpec(m), std::span(&x, 1), lat, nullptr);
    CHECK(y[0] == x[0]);
  }

  SUBCASE("pmc at zeros gives log 2") {
    PmcLogSumModel m;
    m.level_alpha = 1.0;
    m.noise = DiagGaussianParam{vec({0}), vec({0})};
    lat.bias = vec({0});
    const Eigen::VectorXd x = vec({0});
    const auto y = apply_model(ObservationModelSpec(m), std::span(&x, 1), lat, nullptr);
    CHECK(y[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }

  SUBCASE("single-tap reverb with tap zero passes through") {
    ReverbLogSumModel m;
    m.taps = {vec({0})};
    const Eigen::VectorXd x = vec({0.75});
    const auto y = apply_model(ObservationModelSpec(m), std::span(&x, 1),
                               FrameLatents{}, nullptr);
    CHECK(y[0] == x[0]);
  }

  SUBCASE("takiguchi tail vanishes with the proxy weight") {
    TakiguchiARModel m;
    m.conv = vec({0.5});
    m.tail_weight = vec({kLogZeroProxy});
    const Eigen::VectorXd x = vec({1.0});
    const Eigen::VectorXd y_prev = vec({0.3});
    const auto y = apply_model(ObservationModelSpec(m), std::span(&x, 1),
                               FrameLatents{}, &y_prev);
    CHECK(y[0] == doctest::Approx(1.5).epsilon(1e-14));
  }
}

TEST_CASE("sample_utterance determinism and replay") {
  const Hmm clean = simple_clean(2);

  std::vector<ObservationModelSpec> specs;
  {
    AdditiveGaussianModel m;
    m.bias_mean = vec({0.1, -0.1});
    m.bias_var = vec({0.4, 0.2});
    specs.emplace_back(m);

    AffineModel a;
    Eigen::MatrixXd t(2, 2);
    t << 1.2, 0.0, 0.1, 0.9;
    a.classes.push_back({t, vec({0.5, -0.5}), vec({0.05, 0.05})});
    specs.emplace_back(a);

    AlgonquinModel alg;
    alg.noise_estimate = {vec({-1.0, -1.5})};
    alg.residual_var = vec({0.1, 0.1});
    specs.emplace_back(alg);

    SpliceRegionsModel s;
    s.priors = vec({0.3, 0.7});
    s.offsets = {vec({0.2, 0.0}), vec({-0.4, 0.3})};
    s.region_var = {vec({0.2, 0.1}), vec({0.05, 0.3})};
    specs.emplace_back(s);

    PmcLogSumModel p;
    p.level_alpha = 0.8;
    p.noise = DiagGaussianParam{vec({-0.5, -0.2}), vec({0.3, 0.4})};
    specs.emplace_back(p);

    VtsLogSumModel v;
    v.conv = DiagGaussianParam{vec({0.2, -0.1}), vec({0.02, 0.02})};
    v.noise = DiagGaussianParam{vec({-1.0, -0.8}), vec({0.3, 0.2})};
    specs.emplace_back(v);

    RemosLogSumModel r;
    r.noise = DiagGaussianParam{vec({-2.0, -1.5}), vec({0.2, 0.2})};
    r.conv = DiagGaussianParam{vec({0.1, 0.0}), vec({0.05, 0.05})};
    r.tail_gain = DiagGaussianParam{vec({-1.0, -1.2}), vec({0.1, 0.1})};
    r.tail = {vec({-0.5, -0.6}), vec({-1.5, -1.4})};
    specs.emplace_back(r);

    ReverbLogSumModel rev;
    rev.taps = {vec({0.0, 0.0}), vec({-1.0, -1.2})};
    rev.noise = DiagGaussianParam{vec({-2.0, -2.0}), vec({0.1, 0.1})};
    specs.emplace_back(rev);

    TakiguchiARModel t2;
    t2.conv = vec({0.2, 0.1});
    t2.tail_weight = vec({-1.0, -1.5});
    specs.emplace_back(t2);
  }

  for (size_t i = 0; i < specs.size(); ++i) {
    CAPTURE(i);
    const auto a = sample_utterance(specs[i], clean, 12, 1000 + i);
    const auto b = sample_utterance(specs[i], clean, 12, 1000 + i);
    CHECK(a.states == b.states);
    for (int n = 0; n < 12; ++n)
      for (int d = 0; d < 2; ++d) {
        CHECK(a.clean[n][d] == b.clean[n][d]);
        CHECK(a.observed[n][d] == b.observed[n][d]);
      }
    // y reproduces bit-for-bit from x, latents, and the spec.
    CHECK(replay_matches(specs[i], a));

    // A different seed moves the draws.
    const auto c = sample_utterance(specs[i], clean, 12, 9999);
    bool any_diff = false;
    for (int n = 0; n < 12 && !any_diff; ++n)
      any_diff = a.observed[n][0] != c.observed[n][0];
    CHECK(any_diff);
  }
}

TEST_CASE("neutral parameters reduce y to x") {
  const Hmm clean = simple_clean(2);
  std::vector<ObservationModelSpec> neutral;
  {
    AdditiveGaussianModel m;
    m.bias_mean = vec({0, 0});
    m.bias_var = vec({0, 0});
    neutral.emplace_back(m);

    AffineModel a;
    a.classes.push_back({Eigen::MatrixXd::Identity(2, 2), vec({0, 0}), vec({0, 0})});
    neutral.emplace_back(a);

    AlgonquinModel alg;  // noise estimate at the proxy floor, zero residual
    alg.noise_estimate = {Eigen::VectorXd::Constant(2, kLogZeroProxy)};
    alg.residual_var = vec({0, 0});
    neutral.emplace_back(alg);

    SpliceRegionsModel s;  // single dirac region at zero offset
    s.priors = vec({1.0});
    s.offsets = {vec({0, 0})};
    s.region_var = {vec({0, 0})};
    neutral.emplace_back(s);

    PmcLogSumModel p;  // alpha = 1, noise absent
    neutral.emplace_back(p);

    VtsLogSumModel v;  // h = 0 dirac, noise absent
    v.conv = DiagGaussianParam{vec({0, 0}), vec({0, 0})};
    neutral.emplace_back(v);

    RemosLogSumModel r;  // all random components at the proxy floor, h = 0
    r.noise = DiagGaussianParam{Eigen::VectorXd::Constant(2, kLogZeroProxy),
                                vec({0, 0})};
    r.conv = DiagGaussianParam{vec({0, 0}), vec({0, 0})};
    r.tail_gain = DiagGaussianParam{Eigen::VectorXd::Constant(2, kLogZeroProxy),
                                    vec({0, 0})};
    r.tail = {vec({0, 0})};
    neutral.emplace_back(r);

    ReverbLogSumModel rev;  // L = 0, mu_0 = 0, no noise
    rev.taps = {vec({0, 0})};
    neutral.emplace_back(rev);

    TakiguchiARModel t;  // h = 0, tail absent
    t.conv = vec({0, 0});
    neutral.emplace_back(t);

    TakiguchiARModel t_proxy;  // h = 0, tail weight at the proxy floor
    t_proxy.conv = vec({0, 0});
    t_proxy.tail_weight = Eigen::VectorXd::Constant(2, kLogZeroProxy);
    neutral.emplace_back(t_proxy);
  }
  for (size_t i = 0; i < neutral.size(); ++i) {
    CAPTURE(i);
    const auto utt = sample_utterance(neutral[i], clean, 8, 321);
    for (int n = 0; n < 8; ++n)
      for (int d = 0; d < 2; ++d) CHECK(utt.observed[n][d] == utt.clean[n][d]);
  }
}

TEST_CASE("sampled bias matches its generating covariance") {
  const Hmm clean = simple_clean(2);
  AdditiveGaussianModel m;
  m.bias_mean = vec({0, 0});
  m.bias_var = vec({0.7, 0.3});

  // Sample covariance of y - x over 1e4 frames within 5% of C_b.
  const auto utt = sample_utterance(ObservationModelSpec(m), clean, 10000, 555);
  for (int d = 0; d < 2; ++d) {
    double mean = 0.0, second = 0.0;
    for (int n = 0; n < 10000; ++n) {
      const double b = utt.observed[n][d] - utt.clean[n][d];
      mean += b;
      second += b * b;
    }
    mean /= 10000;
    second /= 10000;
    const double var = second - mean * mean;
    CHECK(std::abs(var - m.bias_var[d]) < 0.05 * m.bias_var[d]);
  }
}

TEST_CASE("mc_moment_check") {
  const Hmm clean = simple_clean(1);
  AdditiveGaussianModel m;
  m.bias_mean = vec({0.25});
  m.bias_var = vec({0.5});
  const ObservationModelSpec spec(m);

  const auto stat = [](const SampledUtterance& utt, std::vector<double>& out) {
    for (size_t n = 0; n < utt.observed.size(); ++n)
      out.push_back(utt.observed[n][0] - utt.clean[n][0]);
  };

  const auto res = mc_moment_check(spec, clean, 4, stat, 2000, 42);
  CHECK(std::abs(res.estimate - 0.25) < 3.0 * res.stderr_);

  const auto res2 = mc_moment_check(spec, clean, 4, stat, 2000, 42);
  CHECK(res.estimate == res2.estimate);

  // Deterministic spec: zero spread in the recorded draw.
  AdditiveGaussianModel det;
  det.bias_mean = vec({1.0});
  det.bias_var = vec({0.0});
  const auto bias_stat = [](const SampledUtterance& utt, std::vector<double>& out) {
    for (const auto& lat : utt.latents) out.push_back((*lat.bias)[0]);
  };
  const auto res3 =
      mc_moment_check(ObservationModelSpec(det), clean, 4, bias_stat, 1000, 7);
  CHECK(res3.estimate == 1.0);
  CHECK(res3.stderr_ == 0.0);

  CHECK_THROWS_AS(mc_moment_check(spec, clean, 4, stat, 100, 1), ValidationError);
}

TEST_CASE("takiguchi inversion") {
  TakiguchiARModel m;
  m.conv = vec({0.3});
  m.tail_weight = vec({-0.8});

  SUBCASE("round trip apply then invert") {
    const Eigen::VectorXd x = vec({0.9});
    const Eigen::VectorXd y_prev = vec({0.2});
    const Eigen::VectorXd y =
        apply_model(ObservationModelSpec(m), std::span(&x, 1), FrameLatents{}, &y_prev);
    const auto inv = takiguchi_invert(m, y, &y_prev);
    CHECK(inv.x[0] == doctest::Approx(x[0]).epsilon(1e-12));
  }

  SUBCASE("proxy tail weight gives the pure shift") {
    TakiguchiARModel shift;
    shift.conv = vec({0.3});
    shift.tail_weight = vec({kLogZeroProxy});
    const Eigen::VectorXd y = vec({1.1});
    const Eigen::VectorXd y_prev = vec({50.0});
    const auto inv = takiguchi_invert(shift, y, &y_prev);
    CHECK(inv.x[0] == y[0] - 0.3);
    CHECK(inv.log_det_jacobian == 0.0);
  }

  SUBCASE("analytic jacobian matches central differences") {
    const Eigen::VectorXd y_prev = vec({0.2});
    const double x0 = 0.9, eps = 1e-5;
    const auto f = [&](double x) {
      const Eigen::VectorXd xv = vec({x});
      return apply_model(ObservationModelSpec(m), std::span(&xv, 1),
                         FrameLatents{}, &y_prev)[0];
    };
    const double fd = (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps);
    const Eigen::VectorXd y = vec({f(x0)});
    const auto inv = takiguchi_invert(m, y, &y_prev);
    CHECK(std::exp(inv.log_det_jacobian) == doctest::Approx(fd).epsilon(1e-6));
  }

  SUBCASE("observation below the tail floor is rejected") {
    const Eigen::VectorXd y_prev = vec({5.0});
    const Eigen::VectorXd y = vec({0.0});  // below alpha + y_prev = 4.2
    CHECK_THROWS_AS(takiguchi_invert(m, y, &y_prev), InvalidObservationError);
  }
}

TEST_CASE("spec validation") {
  PmcLogSumModel bad_alpha;
  bad_alpha.level_alpha = 0.0;
  CHECK_THROWS_AS(validate_spec(ObservationModelSpec(bad_alpha), 1), ValidationError);

  SpliceRegionsModel bad_priors;
  bad_priors.priors = vec({0.5, 0.4});
  bad_priors.offsets = {vec({0}), vec({0})};
  bad_priors.region_var = {vec({1}), vec({1})};
  CHECK_THROWS_AS(validate_spec(ObservationModelSpec(bad_priors), 1), ValidationError);

  ReverbLogSumModel no_taps;
  CHECK_THROWS_AS(validate_spec(ObservationModelSpec(no_taps), 1), ValidationError);

  AdditiveGaussianModel wrong_dim;
  wrong_dim.bias_mean = vec({0});
  wrong_dim.bias_var = vec({1});
  CHECK_THROWS_AS(validate_spec(ObservationModelSpec(wrong_dim), 2), ValidationError);
}
