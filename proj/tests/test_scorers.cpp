#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bnc/compensation.hpp"
#include "bnc/decode.hpp"
#include "bnc/oracle.hpp"
#include "test_util.hpp"

using namespace bnc;
using namespace bnc::testing;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

Hmm single_state_model(Gaussian g) {
  Hmm hmm;
  hmm.initial = vec({1.0});
  hmm.transitions = Eigen::MatrixXd::Ones(1, 1);
  hmm.emissions = {Gmm::single(std::move(g))};
  hmm.model_id = "single";
  return hmm;
}

FrameEvidence with_bias(Eigen::VectorXd y, Eigen::VectorXd mean, Eigen::VectorXd var) {
  FrameEvidence ev = FrameEvidence::plain(std::move(y));
  ev.bias = BiasTrack{std::move(mean), std::move(var)};
  return ev;
}

FrameEvidence with_posterior(Eigen::VectorXd y, Eigen::VectorXd mean,
                             Eigen::VectorXd var) {
  FrameEvidence ev = FrameEvidence::plain(std::move(y));
  ev.posterior = PosteriorTrack{std::move(mean), std::move(var)};
  return ev;
}

double score0(const EmissionScorer& s, const FrameEvidence& ev, int state = 0) {
  return s.score_plain(0, state, ev);
}

}  // namespace

TEST_CASE("arrowood") {
  std::mt19937 rng(101);

  SUBCASE("zero uncertainty reduces to the conventional scores") {
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    auto scorer = make_arrowood_scorer(hmm);
    ConventionalScorer conv(hmm);
    for (int t = 0; t < 20; ++t) {
      auto ev = with_bias(random_evidence(rng, 1, 2)[0].observed,
                          Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
      for (int q = 0; q < 3; ++q)
        CHECK(std::abs(score0(*scorer, ev, q) - score0(conv, ev, q)) <= 1e-12);
    }
  }

  SUBCASE("1-D textbook case equals the quadrature oracle") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto scorer = make_arrowood_scorer(hmm);
    const auto ev = with_bias(vec({1.0}), vec({0.0}), vec({1.0}));
    const double closed = score0(*scorer, ev);
    // int N(x; 0, 1) N(y; x, 1) dx at y = 1.
    const auto cfg = bounds_for_factors({gauss1(0, 1), gauss1(1, 1)});
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return gauss1(0, 1).log_pdf(x) + gauss1(x[0], 1.0).log_pdf(vec({1.0}));
        },
        cfg);
    CHECK(std::abs(closed - quad) < 1e-6);
    CHECK(closed == doctest::Approx(std::log(0.219695)).epsilon(1e-5));
  }

  SUBCASE("random 1-D instances match quadrature") {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    for (int t = 0; t < 25; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const double bm = mu(rng), bv = v(rng), y = mu(rng);
      const Hmm hmm = single_state_model(state);
      auto scorer = make_arrowood_scorer(hmm);
      const double closed = score0(*scorer, with_bias(vec({y}), vec({bm}), vec({bv})));
      const auto cfg = bounds_for_factors({state, gauss1(y - bm, bv)});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return state.log_pdf(x) + gauss1(x[0] + bm, bv).log_pdf(vec({y}));
          },
          cfg);
      CHECK(std::abs(closed - quad) < 1e-6);
    }
  }

  SUBCASE("growing uncertainty flattens state discrimination") {
    Hmm hmm;
    hmm.initial = vec({0.5, 0.5});
    hmm.transitions.resize(2, 2);
    hmm.transitions << 0.5, 0.5, 0.5, 0.5;
    hmm.emissions = {Gmm::single(gauss1(0, 1)), Gmm::single(gauss1(3, 1))};
    auto scorer = make_arrowood_scorer(hmm);
    double prev_gap = kInf;
    for (double cb : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
      const auto ev = with_bias(vec({0.5}), vec({0.0}), vec({cb}));
      const double gap = std::abs(score0(*scorer, ev, 0) - score0(*scorer, ev, 1));
      CHECK(gap < prev_gap);
      prev_gap = gap;
    }
  }

  SUBCASE("missing track is an error") {
    Hmm hmm = random_hmm(rng, 2, 2);
    auto scorer = make_arrowood_scorer(hmm);
    const auto ev = FrameEvidence::plain(vec({0, 0}));
    CHECK_THROWS_AS(score0(*scorer, ev), ValidationError);
  }
}

TEST_CASE("dynamic variance compensation") {
  std::mt19937 rng(202);

  SUBCASE("dirac posterior at y is enhanced-feature decoding") {
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    auto scorer = make_dvc_scorer(hmm);
    ConventionalScorer conv(hmm);
    auto ev = random_evidence(rng, 1, 2)[0];
    ev.posterior = PosteriorTrack{ev.observed, Eigen::VectorXd::Zero(2)};
    for (int q = 0; q < 3; ++q)
      CHECK(std::abs(score0(*scorer, ev, q) - score0(conv, ev, q)) <= 1e-12);
  }

  SUBCASE("symmetric textbook case") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto scorer = make_dvc_scorer(hmm);
    const auto ev = with_posterior(vec({99.0}), vec({1.0}), vec({1.0}));
    CHECK(score0(*scorer, ev) ==
          doctest::Approx(gauss1(1, 2).log_pdf(vec({0}))).epsilon(1e-12));
  }

  SUBCASE("swapping state and posterior moments leaves the score unchanged") {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    for (int t = 0; t < 20; ++t) {
      const double m1 = mu(rng), v1 = v(rng), m2 = mu(rng), v2 = v(rng);
      auto a = make_dvc_scorer(single_state_model(gauss1(m1, v1)));
      auto b = make_dvc_scorer(single_state_model(gauss1(m2, v2)));
      const auto ev_a = with_posterior(vec({0.0}), vec({m2}), vec({v2}));
      const auto ev_b = with_posterior(vec({0.0}), vec({m1}), vec({v1}));
      CHECK(score0(*a, ev_a) == doctest::Approx(score0(*b, ev_b)).epsilon(1e-13));
    }
  }

  SUBCASE("matches the overlap integral by quadrature") {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    for (int t = 0; t < 25; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const Gaussian post = gauss1(mu(rng), v(rng));
      auto scorer = make_dvc_scorer(single_state_model(state));
      const auto ev = with_posterior(vec({0.0}), post.mean(), post.diag_var());
      const auto cfg = bounds_for_factors({state, post});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return state.log_pdf(x) + post.log_pdf(x);
          },
          cfg);
      CHECK(std::abs(score0(*scorer, ev) - quad) < 1e-6);
    }
  }
}

TEST_CASE("splice") {
  std::mt19937 rng(303);

  SUBCASE("single neutral region reduces to conventional scores") {
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    SpliceRegionsModel spec;
    spec.priors = vec({1.0});
    spec.offsets = {vec({0, 0})};
    spec.region_var = {vec({0, 0})};
    auto scorer = make_splice_scorer(hmm, spec, SpliceVariant::kConvolution);
    ConventionalScorer conv(hmm);
    auto ev = random_evidence(rng, 1, 2)[0];
    for (int q = 0; q < 3; ++q)
      CHECK(std::abs(score0(*scorer, ev, q) - score0(conv, ev, q)) <= 1e-12);
  }

  SUBCASE("dirac offset region scores the shifted observation") {
    Hmm hmm = random_hmm(rng, 2, 2);
    SpliceRegionsModel spec;
    spec.priors = vec({1.0});
    spec.offsets = {vec({0.7, -0.3})};
    spec.region_var = {vec({0, 0})};
    auto scorer = make_splice_scorer(hmm, spec, SpliceVariant::kConvolution);
    ConventionalScorer conv(hmm);
    const auto ev = FrameEvidence::plain(vec({0.4, 1.0}));
    const auto shifted = FrameEvidence::plain(vec({0.4 + 0.7, 1.0 - 0.3}));
    for (int q = 0; q < 2; ++q)
      CHECK(std::abs(score0(*scorer, ev, q) - score0(conv, shifted, q)) <= 1e-12);
  }

  SUBCASE("two regions match the quadrature of the defining integral") {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5), p(0.2, 0.8);
    for (int t = 0; t < 20; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      SpliceRegionsModel spec;
      const double p0 = p(rng);
      spec.priors = vec({p0, 1.0 - p0});
      spec.offsets = {vec({mu(rng)}), vec({mu(rng)})};
      spec.region_var = {vec({v(rng)}), vec({v(rng)})};
      auto scorer = make_splice_scorer(single_state_model(state), spec,
                                       SpliceVariant::kConvolution);
      const double y = mu(rng);
      const double closed = score0(*scorer, FrameEvidence::plain(vec({y})));
      // p(y|x) = sum_s p(s) N(y; x - r_s, G_s), integrated against p(x|q).
      const auto cfg = bounds_for_factors(
          {state, gauss1(y + spec.offsets[0][0], spec.region_var[0][0] + 1e-3),
           gauss1(y + spec.offsets[1][0], spec.region_var[1][0] + 1e-3)});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            const double t0 = std::log(spec.priors[0]) +
                              gauss1(x[0] - spec.offsets[0][0],
                                     std::max(spec.region_var[0][0], 1e-12))
                                  .log_pdf(vec({y}));
            const double t1 = std::log(spec.priors[1]) +
                              gauss1(x[0] - spec.offsets[1][0],
                                     std::max(spec.region_var[1][0], 1e-12))
                                  .log_pdf(vec({y}));
            return state.log_pdf(x) + log_add(t0, t1);
          },
          cfg);
      CHECK(std::abs(closed - quad) < 1e-6);
    }
  }

  SUBCASE("prior-model variant: single region matches the exact ratio integral") {
    std::uniform_real_distribution<double> mu(-1.0, 1.0), v(0.3, 1.2);
    for (int t = 0; t < 10; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      SpliceRegionsModel spec;
      spec.priors = vec({1.0});
      spec.offsets = {vec({mu(rng)})};
      spec.region_var = {vec({v(rng)})};
      spec.y_prior = std::vector<Gaussian>{gauss1(mu(rng), v(rng) + 1.0)};
      auto scorer = make_splice_scorer(single_state_model(state), spec,
                                       SpliceVariant::kPriorModel);
      const double y = mu(rng);
      const double closed = score0(*scorer, FrameEvidence::plain(vec({y})));

      // With one region the collapsed denominator is exact:
      // p(y|q) = p(y|s) int p(x|q) N(x; y + r, G) / N(x; m_y + r, G + C_y) dx.
      const Gaussian& yp = (*spec.y_prior)[0];
      const Gaussian num = gauss1(y + spec.offsets[0][0], spec.region_var[0][0]);
      const Gaussian den = gauss1(yp.mean()[0] + spec.offsets[0][0],
                                  spec.region_var[0][0] + yp.diag_var()[0]);
      const auto cfg = bounds_for_factors({state, num});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return state.log_pdf(x) + num.log_pdf(x) - den.log_pdf(x);
          },
          cfg);
      CHECK(std::abs(closed - (yp.log_pdf(vec({y})) + quad)) < 1e-6);
    }
  }

  SUBCASE("evidence region posterior overrides the priors") {
    const Gaussian state = gauss1(0, 1);
    SpliceRegionsModel spec;
    spec.priors = vec({0.5, 0.5});
    spec.offsets = {vec({1.0}), vec({-1.0})};
    spec.region_var = {vec({0.3}), vec({0.3})};
    auto scorer = make_splice_scorer(single_state_model(state), spec,
                                     SpliceVariant::kConvolution);
    FrameEvidence ev = FrameEvidence::plain(vec({0.2}));
    ev.region_posterior = vec({1.0, 0.0});
    SpliceRegionsModel only0 = spec;
    only0.priors = vec({1.0});
    only0.offsets = {spec.offsets[0]};
    only0.region_var = {spec.region_var[0]};
    auto scorer0 = make_splice_scorer(single_state_model(state), only0,
                                      SpliceVariant::kConvolution);
    CHECK(score0(*scorer, ev) ==
          doctest::Approx(score0(*scorer0, FrameEvidence::plain(vec({0.2}))))
              .epsilon(1e-13));
  }
}

TEST_CASE("joint uncertainty decoding") {
  std::mt19937 rng(404);

  SUBCASE("identity transform with zero bias reduces to conventional") {
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    auto assignment = RegressionAssignment::single_class(
        hmm, {Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
              Eigen::VectorXd::Zero(2)});
    auto scorer = make_jud_scorer(hmm, assignment);
    ConventionalScorer conv(hmm);
    auto ev = random_evidence(rng, 1, 2)[0];
    for (int q = 0; q < 3; ++q)
      CHECK(std::abs(score0(*scorer, ev, q) - score0(conv, ev, q)) <= 1e-12);
  }

  SUBCASE("1-D doubling transform") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto assignment = RegressionAssignment::single_class(
        hmm, {Eigen::MatrixXd::Constant(1, 1, 2.0), vec({0}), vec({0})});
    auto scorer = make_jud_scorer(hmm, assignment);
    // N(0; 0, 4): log pdf = -0.5 log(8 pi).
    CHECK(score0(*scorer, FrameEvidence::plain(vec({0}))) ==
          doctest::Approx(-0.5 * std::log(8.0 * M_PI)).epsilon(1e-12));
  }

  SUBCASE("random 1-D instances match quadrature") {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5), a(0.5, 2.0);
    for (int t = 0; t < 25; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const double A = a(rng), bm = mu(rng), bv = v(rng), y = mu(rng);
      const Hmm hmm = single_state_model(state);
      auto assignment = RegressionAssignment::single_class(
          hmm, {Eigen::MatrixXd::Constant(1, 1, A), vec({bm}), vec({bv})});
      auto scorer = make_jud_scorer(hmm, assignment);
      const double closed = score0(*scorer, FrameEvidence::plain(vec({y})));
      // int N(x; m, C) N(y; A x + bm, bv) dx, integrated over x.
      const double xc = (y - bm) / A;
      const auto cfg = bounds_for_factors({state, gauss1(xc, bv / (A * A))});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return state.log_pdf(x) + gauss1(A * x[0] + bm, bv).log_pdf(vec({y}));
          },
          cfg);
      CHECK(std::abs(closed - quad) < 1e-6);
    }
  }

  SUBCASE("non-diagonal transform promotes to full covariance") {
    Hmm hmm;
    hmm.initial = vec({1.0});
    hmm.transitions = Eigen::MatrixXd::Ones(1, 1);
    hmm.emissions = {Gmm::single(Gaussian(vec({0.5, -0.5}), vec({1.0, 2.0})))};
    Eigen::MatrixXd A(2, 2);
    A << 1.0, 0.4, -0.2, 0.9;
    auto assignment = RegressionAssignment::single_class(
        hmm, {A, vec({0.1, 0.2}), vec({0.3, 0.1})});
    auto scorer = make_jud_scorer(hmm, assignment);
    const Eigen::VectorXd y = vec({0.3, 0.4});
    // Direct full-covariance reference.
    const Gaussian& g = hmm.emissions[0].components[0];
    Eigen::MatrixXd cov = A * g.cov_matrix() * A.transpose();
    cov.diagonal() += vec({0.3, 0.1});
    const Gaussian ref(Eigen::VectorXd(A * g.mean() + vec({0.1, 0.2})), cov);
    CHECK(score0(*scorer, FrameEvidence::plain(y)) ==
          doctest::Approx(ref.log_pdf(y)).epsilon(1e-12));
  }

  SUBCASE("unassigned component is an error") {
    Hmm hmm = random_hmm(rng, 2, 2);
    RegressionAssignment assignment;
    assignment.classes.push_back({Eigen::MatrixXd::Identity(2, 2),
                                  Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)});
    assignment.class_of = {{0}};  // second state missing
    CHECK_THROWS_AS(make_jud_scorer(hmm, assignment), ValidationError);
  }
}

TEST_CASE("ion") {
  std::mt19937 rng(505);

  SUBCASE("posterior equal to the prior gives a constant zero score") {
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    const Gaussian prior(vec({0.2, -0.1}), vec({1.5, 2.0}));
    auto scorer = make_ion_scorer(hmm, prior);
    auto ev = random_evidence(rng, 1, 2)[0];
    ev.posterior = PosteriorTrack{prior.mean(), prior.diag_var()};
    for (int q = 0; q < 3; ++q)
      CHECK(std::abs(score0(*scorer, ev, q)) <= 1e-12);
  }

  SUBCASE("flat prior reduces to dvc up to a per-frame constant") {
    Hmm hmm = random_hmm(rng, 3, 2);
    const Gaussian prior(Eigen::VectorXd::Zero(2),
                         Eigen::VectorXd(Eigen::VectorXd::Constant(2, 1e9)));
    auto ion = make_ion_scorer(hmm, prior);
    auto dvc = make_dvc_scorer(hmm);
    auto ev = with_posterior(vec({0.3, 0.4}), vec({0.5, -0.2}), vec({0.4, 0.7}));
    const double off = score0(*ion, ev, 0) - score0(*dvc, ev, 0);
    for (int q = 1; q < 3; ++q)
      CHECK(score0(*ion, ev, q) - score0(*dvc, ev, q) ==
            doctest::Approx(off).epsilon(1e-6));
  }

  SUBCASE("random 1-D instances match the quadrature of the ratio integral") {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.0);
    for (int t = 0; t < 25; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const Gaussian prior = gauss1(mu(rng), 1.2 + v(rng));
      const double pm = mu(rng), pv = v(rng);  // pv < prior var always
      auto scorer = make_ion_scorer(single_state_model(state), prior);
      const auto ev = with_posterior(vec({0.0}), vec({pm}), vec({pv}));
      const double closed = score0(*scorer, ev);
      const Gaussian post = gauss1(pm, pv);
      const auto cfg = bounds_for_factors({state, post});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return post.log_pdf(x) - prior.log_pdf(x) + state.log_pdf(x);
          },
          cfg);
      CHECK(std::abs(closed - quad) < 1e-6);
    }
  }

  SUBCASE("prior sharper than posterior is rejected with a diagnostic") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto scorer = make_ion_scorer(hmm, gauss1(0, 0.1));
    const auto ev = with_posterior(vec({0.0}), vec({0.0}), vec({1.0}));
    CHECK_THROWS_AS(score0(*scorer, ev), NumericError);
  }
}

TEST_CASE("missing feature") {
  std::mt19937 rng(606);
  Hmm hmm = random_hmm(rng, 3, 2, 2);
  const CleanMarginals marginals{vec({0.1, -0.2}), vec({1.3, 0.8})};

  SUBCASE("all dimensions reliable reduces to conventional (both modes)") {
    auto imp = make_missing_feature_scorer(hmm, MissingFeatureMode::kImputation);
    auto marg = make_missing_feature_scorer(hmm, MissingFeatureMode::kMarginalization,
                                            marginals);
    ConventionalScorer conv(hmm);
    auto ev = random_evidence(rng, 1, 2)[0];
    ev.reliability = Reliability{{true, true}, Eigen::VectorXd::Zero(2)};
    for (int q = 0; q < 3; ++q) {
      CHECK(std::abs(score0(*imp, ev, q) - score0(conv, ev, q)) <= 1e-12);
      CHECK(std::abs(score0(*marg, ev, q) - score0(conv, ev, q)) <= 1e-12);
    }
  }

  SUBCASE("all dimensions unreliable: marginalization ignores y") {
    auto marg = make_missing_feature_scorer(hmm, MissingFeatureMode::kMarginalization,
                                            marginals);
    FrameEvidence a = FrameEvidence::plain(vec({5.0, -7.0}));
    FrameEvidence b = FrameEvidence::plain(vec({-3.0, 11.0}));
    a.reliability = Reliability{{false, false}, std::nullopt};
    b.reliability = Reliability{{false, false}, std::nullopt};
    for (int q = 0; q < 3; ++q)
      CHECK(score0(*marg, a, q) == score0(*marg, b, q));
  }

  SUBCASE("overlap contribution of one unreliable dimension") {
    const Hmm one = single_state_model(gauss1(0, 1));
    auto marg = make_missing_feature_scorer(one, MissingFeatureMode::kMarginalization,
                                            CleanMarginals{vec({0.0}), vec({1.0})});
    FrameEvidence ev = FrameEvidence::plain(vec({123.0}));
    ev.reliability = Reliability{{false}, std::nullopt};
    CHECK(score0(*marg, ev) ==
          doctest::Approx(gauss1(0, 2).log_pdf(vec({0}))).epsilon(1e-12));
  }

  SUBCASE("marginalization overlap matches quadrature") {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5);
    for (int t = 0; t < 25; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const CleanMarginals m1{vec({mu(rng)}), vec({v(rng)})};
      auto marg = make_missing_feature_scorer(
          single_state_model(state), MissingFeatureMode::kMarginalization, m1);
      FrameEvidence ev = FrameEvidence::plain(vec({0.0}));
      ev.reliability = Reliability{{false}, std::nullopt};
      const double closed = score0(*marg, ev);
      const Gaussian marginal = gauss1(m1.mean[0], m1.var[0]);
      const auto cfg = bounds_for_factors({state, marginal});
      const double quad = quadrature_log_integral(
          [&](const Eigen::VectorXd& x) {
            return state.log_pdf(x) + marginal.log_pdf(x);
          },
          cfg);
      CHECK(std::abs(closed - quad) < 1e-6);
    }
  }

  SUBCASE("flat-marginal mode scores unreliable dimensions as zero") {
    auto flat = make_missing_feature_scorer(hmm, MissingFeatureMode::kMarginalization,
                                            std::nullopt, /*flat_marginal=*/true);
    ConventionalScorer conv(hmm);
    auto base = random_evidence(rng, 1, 2)[0];
    FrameEvidence ev = base;
    ev.reliability = Reliability{{true, false}, std::nullopt};
    // Equals the conventional score of dimension 0 alone.
    Hmm proj = hmm;
    for (auto& gmm : proj.emissions)
      for (auto& c : gmm.components)
        c = Gaussian(vec({c.mean()[0]}), vec({c.diag_var()[0]}));
    ConventionalScorer conv1(proj);
    const auto ev1 = FrameEvidence::plain(vec({base.observed[0]}));
    for (int q = 0; q < 3; ++q)
      CHECK(score0(*flat, ev, q) == doctest::Approx(score0(conv1, ev1, q)).epsilon(1e-12));
  }

  SUBCASE("imputation substitutes estimates for unreliable dimensions") {
    auto imp = make_missing_feature_scorer(hmm, MissingFeatureMode::kImputation);
    ConventionalScorer conv(hmm);
    FrameEvidence ev = FrameEvidence::plain(vec({1.0, 2.0}));
    ev.reliability = Reliability{{false, true}, vec({-0.5, 99.0})};
    const auto subst = FrameEvidence::plain(vec({-0.5, 2.0}));
    for (int q = 0; q < 3; ++q)
      CHECK(score0(*imp, ev, q) == score0(conv, subst, q));
  }

  SUBCASE("errors") {
    auto imp = make_missing_feature_scorer(hmm, MissingFeatureMode::kImputation);
    auto ev = random_evidence(rng, 1, 2)[0];
    CHECK_THROWS_AS(score0(*imp, ev), ValidationError);  // no mask
    ev.reliability = Reliability{{false, true}, std::nullopt};
    CHECK_THROWS_AS(score0(*imp, ev), ValidationError);  // no imputed values
    CHECK_THROWS_AS(
        make_missing_feature_scorer(hmm, MissingFeatureMode::kMarginalization),
        ValidationError);  // no marginals, not flat
  }
}

TEST_CASE("modified imputation") {
  std::mt19937 rng(707);

  SUBCASE("dirac posterior plugs its mean") {
    Hmm hmm = random_hmm(rng, 2, 2, 2);
    auto scorer = make_modified_imputation_scorer(hmm);
    ConventionalScorer conv(hmm);
    const auto ev = with_posterior(vec({9.0, 9.0}), vec({0.3, -0.4}),
                                   Eigen::VectorXd::Zero(2));
    const auto plug = FrameEvidence::plain(vec({0.3, -0.4}));
    for (int q = 0; q < 2; ++q)
      CHECK(score0(*scorer, ev, q) == score0(conv, plug, q));
  }

  SUBCASE("equal variances put x-hat at the midpoint") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto scorer = make_modified_imputation_scorer(hmm);
    const auto ev = with_posterior(vec({0.0}), vec({2.0}), vec({1.0}));
    CHECK(score0(*scorer, ev) ==
          doctest::Approx(gauss1(0, 1).log_pdf(vec({1.0}))).epsilon(1e-13));
  }

  SUBCASE("x-hat is a local maximum of the product") {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    for (int t = 0; t < 20; ++t) {
      const Gaussian state(vec({mu(rng), mu(rng)}), vec({v(rng), v(rng)}));
      const Gaussian post(vec({mu(rng), mu(rng)}), vec({v(rng), v(rng)}));
      // Recompute x-hat the way the scorer does, then perturb.
      Eigen::VectorXd xhat(2);
      for (int d = 0; d < 2; ++d)
        xhat[d] = (state.mean()[d] * post.diag_var()[d] +
                   post.mean()[d] * state.diag_var()[d]) /
                  (state.diag_var()[d] + post.diag_var()[d]);
      const auto logprod = [&](const Eigen::VectorXd& x) {
        return state.log_pdf(x) + post.log_pdf(x);
      };
      const double peak = logprod(xhat);
      for (int d = 0; d < 2; ++d) {
        for (double eps : {-1e-3, 1e-3}) {
          Eigen::VectorXd x = xhat;
          x[d] += eps;
          CHECK(logprod(x) <= peak);
        }
      }
    }
  }
}

TEST_CASE("significance decoding") {
  std::mt19937 rng(808);

  SUBCASE("two standard normals peak at 1/(2 pi)") {
    const Hmm hmm = single_state_model(gauss1(0, 1));
    auto scorer = make_significance_scorer(hmm);
    const auto ev = with_posterior(vec({0.0}), vec({0.0}), vec({1.0}));
    CHECK(score0(*scorer, ev) ==
          doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
  }

  SUBCASE("matches a grid maximization oracle") {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.3, 1.5);
    for (int t = 0; t < 10; ++t) {
      const Gaussian state = gauss1(mu(rng), v(rng));
      const Gaussian post = gauss1(mu(rng), v(rng));
      auto scorer = make_significance_scorer(single_state_model(state));
      const auto ev = with_posterior(vec({0.0}), post.mean(), post.diag_var());
      double best = -kInf;
      for (int i = 0; i < 200001; ++i) {
        const double x = -10.0 + i * 1e-4;
        best = std::max(best,
                        state.log_pdf(vec({x})) + post.log_pdf(vec({x})));
      }
      CHECK(score0(*scorer, ev) == doctest::Approx(best).epsilon(1e-7));
    }
  }

  SUBCASE("exchanging the two Gaussians leaves the score unchanged") {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    for (int t = 0; t < 20; ++t) {
      const double m1 = mu(rng), v1 = v(rng), m2 = mu(rng), v2 = v(rng);
      auto a = make_significance_scorer(single_state_model(gauss1(m1, v1)));
      auto b = make_significance_scorer(single_state_model(gauss1(m2, v2)));
      const auto ev_a = with_posterior(vec({0.0}), vec({m2}), vec({v2}));
      const auto ev_b = with_posterior(vec({0.0}), vec({m1}), vec({v1}));
      CHECK(score0(*a, ev_a) == doctest::Approx(score0(*b, ev_b)).epsilon(1e-12));
    }
  }
}
