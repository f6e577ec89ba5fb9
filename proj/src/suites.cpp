#include "bnc/suites.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bnc/compensation.hpp"
#include "bnc/decode.hpp"
#include "bnc/errors.hpp"
#include "bnc/harness.hpp"
#include "bnc/oracle.hpp"

namespace bnc::harness {

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

Gaussian gauss1(double mean, double var) { return Gaussian(vec1(mean), vec1(var)); }

Eigen::VectorXd random_prob_vector(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v / v.sum();
}

Hmm random_hmm(std::mt19937& rng, int states, int dim, int components = 1) {
  std::uniform_real_distribution<double> mu(-3.0, 3.0);
  std::uniform_real_distribution<double> sig(0.3, 2.0);
  Hmm hmm;
  hmm.initial = random_prob_vector(rng, states);
  hmm.transitions.resize(states, states);
  for (int i = 0; i < states; ++i)
    hmm.transitions.row(i) = random_prob_vector(rng, states).transpose();
  for (int s = 0; s < states; ++s) {
    Gmm gmm;
    gmm.weights = random_prob_vector(rng, components);
    for (int k = 0; k < components; ++k) {
      Eigen::VectorXd mean(dim), var(dim);
      for (int d = 0; d < dim; ++d) {
        mean[d] = mu(rng);
        var[d] = sig(rng);
      }
      gmm.components.emplace_back(std::move(mean), std::move(var));
    }
    hmm.emissions.push_back(std::move(gmm));
  }
  return hmm;
}

std::vector<FrameEvidence> random_evidence(std::mt19937& rng, int frames, int dim) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<FrameEvidence> ev;
  for (int n = 0; n < frames; ++n) {
    Eigen::VectorXd y(dim);
    for (int d = 0; d < dim; ++d) y[d] = u(rng);
    ev.push_back(FrameEvidence::plain(std::move(y)));
  }
  return ev;
}

Hmm single_state_model(Gaussian g) {
  Hmm hmm;
  hmm.initial = Eigen::VectorXd::Ones(1);
  hmm.transitions = Eigen::MatrixXd::Ones(1, 1);
  hmm.emissions = {Gmm::single(std::move(g))};
  return hmm;
}

std::string format_error(double err) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::scientific << "max error " << err;
  return ss.str();
}

// --- dp-exactness -------------------------------------------------------------

SuiteResult suite_dp_exactness() {
  SuiteResult out;
  out.suite = "dp-exactness";
  std::mt19937 rng(20240601);
  double max_rel = 0.0;
  bool paths_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 2 + trial % 3;
    const int N = 2 + trial % 5;
    Hmm hmm = random_hmm(rng, S, 2, 1 + trial % 2);
    ConventionalScorer scorer(hmm);
    auto ev = random_evidence(rng, N, 2);
    const auto sum = brute_force_sequence_score(hmm, scorer, ev, BruteForceMode::kSum);
    const double fwd = forward_log_score(hmm, scorer, ev);
    max_rel = std::max(max_rel, std::abs(fwd - sum.log_score) / std::abs(sum.log_score));
    const auto mx = brute_force_sequence_score(hmm, scorer, ev, BruteForceMode::kMax);
    const auto vit = viterbi(hmm, scorer, ev);
    max_rel = std::max(max_rel, std::abs(vit.total_log_score - mx.log_score) /
                                    std::abs(mx.log_score));
    paths_ok = paths_ok && (vit.path == mx.path);
  }
  out.rows.push_back({"forward == exhaustive sum (100 seeded instances)",
                      max_rel <= 1e-10, format_error(max_rel)});
  out.rows.push_back({"viterbi == exhaustive max, path-for-path", paths_ok && max_rel <= 1e-10,
                      paths_ok ? "paths identical" : "path mismatch"});
  out.max_error = max_rel;
  out.all_pass = paths_ok && max_rel <= 1e-10;
  return out;
}

// --- quadrature ----------------------------------------------------------------

struct QuadCase {
  std::string name;
  // Returns |closed - quadrature| on one random instance.
  std::function<double(std::mt19937&)> run;
};

double abs_diff(double a, double b) { return std::abs(a - b); }

std::vector<QuadCase> quadrature_cases() {
  std::vector<QuadCase> cases;

  cases.push_back({"arrowood", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const double bm = mu(rng), bv = v(rng), y = mu(rng);
    auto scorer = make_arrowood_scorer(single_state_model(state));
    FrameEvidence ev = FrameEvidence::plain(vec1(y));
    ev.bias = BiasTrack{vec1(bm), vec1(bv)};
    const double closed = scorer->score_plain(0, 0, ev);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return state.log_pdf(x) + gauss1(x[0] + bm, bv).log_pdf(vec1(y));
        },
        bounds_for_factors({state, gauss1(y - bm, bv)}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"dvc", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const Gaussian post = gauss1(mu(rng), v(rng));
    auto scorer = make_dvc_scorer(single_state_model(state));
    FrameEvidence ev = FrameEvidence::plain(vec1(0.0));
    ev.posterior = PosteriorTrack{post.mean(), post.diag_var()};
    const double closed = scorer->score_plain(0, 0, ev);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) { return state.log_pdf(x) + post.log_pdf(x); },
        bounds_for_factors({state, post}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"splice.convolution", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5), p(0.2, 0.8);
    const Gaussian state = gauss1(mu(rng), v(rng));
    SpliceRegionsModel spec;
    const double p0 = p(rng);
    spec.priors = Eigen::VectorXd(2);
    spec.priors << p0, 1.0 - p0;
    spec.offsets = {vec1(mu(rng)), vec1(mu(rng))};
    spec.region_var = {vec1(v(rng)), vec1(v(rng))};
    auto scorer =
        make_splice_scorer(single_state_model(state), spec, SpliceVariant::kConvolution);
    const double y = mu(rng);
    const double closed = scorer->score_plain(0, 0, FrameEvidence::plain(vec1(y)));
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          const double t0 = std::log(spec.priors[0]) +
                            gauss1(x[0] - spec.offsets[0][0], spec.region_var[0][0])
                                .log_pdf(vec1(y));
          const double t1 = std::log(spec.priors[1]) +
                            gauss1(x[0] - spec.offsets[1][0], spec.region_var[1][0])
                                .log_pdf(vec1(y));
          return state.log_pdf(x) + log_add(t0, t1);
        },
        bounds_for_factors({state, gauss1(y + spec.offsets[0][0], spec.region_var[0][0]),
                            gauss1(y + spec.offsets[1][0], spec.region_var[1][0])}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"jud", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5), a(0.5, 2.0);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const double A = a(rng), bm = mu(rng), bv = v(rng), y = mu(rng);
    const Hmm hmm = single_state_model(state);
    auto scorer = make_jud_scorer(
        hmm, RegressionAssignment::single_class(
                 hmm, {Eigen::MatrixXd::Constant(1, 1, A), vec1(bm), vec1(bv)}));
    const double closed = scorer->score_plain(0, 0, FrameEvidence::plain(vec1(y)));
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return state.log_pdf(x) + gauss1(A * x[0] + bm, bv).log_pdf(vec1(y));
        },
        bounds_for_factors({state, gauss1((y - bm) / A, bv / (A * A))}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"ion", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.0);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const Gaussian prior = gauss1(mu(rng), 1.2 + v(rng));
    const Gaussian post = gauss1(mu(rng), v(rng));
    auto scorer = make_ion_scorer(single_state_model(state), prior);
    FrameEvidence ev = FrameEvidence::plain(vec1(0.0));
    ev.posterior = PosteriorTrack{post.mean(), post.diag_var()};
    const double closed = scorer->score_plain(0, 0, ev);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return post.log_pdf(x) - prior.log_pdf(x) + state.log_pdf(x);
        },
        bounds_for_factors({state, post}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"mf.marginalization", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.2, 1.5);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const Gaussian marginal = gauss1(mu(rng), v(rng));
    auto scorer = make_missing_feature_scorer(
        single_state_model(state), MissingFeatureMode::kMarginalization,
        CleanMarginals{marginal.mean(), marginal.diag_var()});
    FrameEvidence ev = FrameEvidence::plain(vec1(0.0));
    ev.reliability = Reliability{{false}, std::nullopt};
    const double closed = scorer->score_plain(0, 0, ev);
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& x) {
          return state.log_pdf(x) + marginal.log_pdf(x);
        },
        bounds_for_factors({state, marginal}));
    return abs_diff(closed, quad);
  }});

  cases.push_back({"significance", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1.5, 1.5), v(0.3, 1.5);
    const Gaussian state = gauss1(mu(rng), v(rng));
    const Gaussian post = gauss1(mu(rng), v(rng));
    auto scorer = make_significance_scorer(single_state_model(state));
    FrameEvidence ev = FrameEvidence::plain(vec1(0.0));
    ev.posterior = PosteriorTrack{post.mean(), post.diag_var()};
    const double closed = scorer->score_plain(0, 0, ev);
    // Max of the product located by golden-section-free dense scan plus a
    // quadratic refinement around the best grid point.
    double best = kNegInf, best_x = 0.0;
    const auto logprod = [&](double x) {
      return state.log_pdf(vec1(x)) + post.log_pdf(vec1(x));
    };
    for (int i = 0; i <= 40000; ++i) {
      const double x = -10.0 + i * 5e-4;
      const double f = logprod(x);
      if (f > best) {
        best = f;
        best_x = x;
      }
    }
    for (double h = 2.5e-4; h > 1e-10; h *= 0.5) {
      if (logprod(best_x + h) > best) best = logprod(best_x += h);
      else if (logprod(best_x - h) > best) best = logprod(best_x -= h);
    }
    return abs_diff(closed, best);
  }});

  cases.push_back({"bayesian_mllr", [](std::mt19937& rng) {
    std::uniform_real_distribution<double> mu(-1, 1), v(0.05, 0.3);
    const Gaussian state = gauss1(mu(rng) + 1.0, 0.5);
    Hmm hmm = single_state_model(state);
    MllrParamPrior prior{vec1(1.0 + mu(rng) * 0.2), vec1(v(rng)),
                         vec1(mu(rng) * 0.3), vec1(v(rng))};
    auto scorer = make_bayesian_mllr_scorer(hmm, prior);
    const double y = mu(rng);
    const double closed = scorer->score_plain(0, 0, FrameEvidence::plain(vec1(y)));
    const double m = state.mean()[0];
    const Gaussian pa = gauss1(prior.a_mean[0], prior.a_var[0]);
    const Gaussian pc = gauss1(prior.c_mean[0], prior.c_var[0]);
    QuadratureConfig cfg;
    cfg.points = 512;
    cfg.bounds = {{prior.a_mean[0] - 10 * std::sqrt(prior.a_var[0]),
                   prior.a_mean[0] + 10 * std::sqrt(prior.a_var[0])},
                  {prior.c_mean[0] - 10 * std::sqrt(prior.c_var[0]),
                   prior.c_mean[0] + 10 * std::sqrt(prior.c_var[0])}};
    const double quad = quadrature_log_integral(
        [&](const Eigen::VectorXd& u) {
          return gauss1(u[0] * m + u[1], state.diag_var()[0]).log_pdf(vec1(y)) +
                 pa.log_pdf(vec1(u[0])) + pc.log_pdf(vec1(u[1]));
        },
        cfg);
    return abs_diff(closed, quad);
  }});

  return cases;
}

SuiteResult suite_quadrature() {
  SuiteResult out;
  out.suite = "quadrature";
  out.all_pass = true;
  std::mt19937 rng(987654321);
  for (const auto& c : quadrature_cases()) {
    double max_err = 0.0;
    for (int t = 0; t < 50; ++t) max_err = std::max(max_err, c.run(rng));
    const bool pass = max_err < 1e-6;
    out.rows.push_back({c.name + " vs quadrature (50 instances)", pass,
                        format_error(max_err)});
    out.max_error = std::max(out.max_error, max_err);
    out.all_pass = out.all_pass && pass;
  }
  return out;
}

// --- degenerate-limits ----------------------------------------------------------

// Max absolute log-score deviation between a technique scorer and the
// conventional scorer over random frames and all states.
double max_dev_vs(const EmissionScorer& a, const EmissionScorer& b, const Hmm& hmm,
                  const std::vector<FrameEvidence>& frames) {
  double dev = 0.0;
  for (const auto& ev : frames)
    for (int q = 0; q < hmm.num_states(); ++q)
      dev = std::max(dev, std::abs(a.score_plain(0, q, ev) - b.score_plain(0, q, ev)));
  return dev;
}

SuiteResult suite_degenerate_limits() {
  SuiteResult out;
  out.suite = "degenerate-limits";
  out.all_pass = true;
  std::mt19937 rng(13579);
  const double tol = 1e-12;

  const auto add_row = [&](const std::string& name, double dev) {
    const bool pass = dev <= tol;
    out.rows.push_back({name, pass, format_error(dev)});
    out.max_error = std::max(out.max_error, dev);
    out.all_pass = out.all_pass && pass;
  };

  Hmm hmm = random_hmm(rng, 3, 2, 2);
  ConventionalScorer conv(hmm);
  auto frames = random_evidence(rng, 10, 2);

  {  // arrowood: C_b = 0
    auto scorer = make_arrowood_scorer(hmm);
    auto evs = frames;
    for (auto& ev : evs)
      ev.bias = BiasTrack{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    add_row("arrowood(C_b=0) == conventional", max_dev_vs(*scorer, conv, hmm, evs));
  }
  {  // dvc: dirac posterior at y
    auto scorer = make_dvc_scorer(hmm);
    auto evs = frames;
    for (auto& ev : evs)
      ev.posterior = PosteriorTrack{ev.observed, Eigen::VectorXd::Zero(2)};
    add_row("dvc(dirac posterior at y) == conventional",
            max_dev_vs(*scorer, conv, hmm, evs));
  }
  {  // splice: single region, r = 0, G = 0
    SpliceRegionsModel spec;
    spec.priors = Eigen::VectorXd::Ones(1);
    spec.offsets = {Eigen::VectorXd::Zero(2)};
    spec.region_var = {Eigen::VectorXd::Zero(2)};
    auto scorer = make_splice_scorer(hmm, spec, SpliceVariant::kConvolution);
    add_row("splice(single neutral region) == conventional",
            max_dev_vs(*scorer, conv, hmm, frames));
  }
  {  // splice: dirac offset scores y + r
    SpliceRegionsModel spec;
    spec.priors = Eigen::VectorXd::Ones(1);
    spec.offsets = {Eigen::VectorXd(2)};
    spec.offsets[0] << 0.7, -0.3;
    spec.region_var = {Eigen::VectorXd::Zero(2)};
    auto scorer = make_splice_scorer(hmm, spec, SpliceVariant::kConvolution);
    double dev = 0.0;
    for (const auto& ev : frames) {
      const auto shifted = FrameEvidence::plain(Eigen::VectorXd(ev.observed + spec.offsets[0]));
      for (int q = 0; q < hmm.num_states(); ++q)
        dev = std::max(dev, std::abs(scorer->score_plain(0, q, ev) -
                                     conv.score_plain(0, q, shifted)));
    }
    add_row("splice(dirac offset) == conventional on y + r", dev);
  }
  {  // jud: identity
    auto scorer = make_jud_scorer(
        hmm, RegressionAssignment::single_class(
                 hmm, {Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
                       Eigen::VectorXd::Zero(2)}));
    add_row("jud(A=I, b=0, C_b=0) == conventional",
            max_dev_vs(*scorer, conv, hmm, frames));
  }
  {  // ion: posterior == prior -> score 0
    const Gaussian prior(Eigen::VectorXd::Zero(2),
                         Eigen::VectorXd(Eigen::VectorXd::Ones(2)));
    auto scorer = make_ion_scorer(hmm, prior);
    double dev = 0.0;
    auto evs = frames;
    for (auto& ev : evs) {
      ev.posterior = PosteriorTrack{prior.mean(), prior.diag_var()};
      for (int q = 0; q < hmm.num_states(); ++q)
        dev = std::max(dev, std::abs(scorer->score_plain(0, q, ev)));
    }
    add_row("ion(posterior == prior) == 0 for every state", dev);
  }
  {  // missing feature: all reliable
    auto imp = make_missing_feature_scorer(hmm, MissingFeatureMode::kImputation);
    auto marg = make_missing_feature_scorer(
        hmm, MissingFeatureMode::kMarginalization,
        CleanMarginals{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2)});
    auto evs = frames;
    for (auto& ev : evs)
      ev.reliability = Reliability{{true, true}, Eigen::VectorXd::Zero(2)};
    add_row("imputation(all reliable) == conventional",
            max_dev_vs(*imp, conv, hmm, evs));
    add_row("marginalization(all reliable) == conventional",
            max_dev_vs(*marg, conv, hmm, evs));
    // all unreliable: y-independent
    FrameEvidence a = FrameEvidence::plain(Eigen::VectorXd(Eigen::VectorXd::Constant(2, 5.0)));
    FrameEvidence b = FrameEvidence::plain(Eigen::VectorXd(Eigen::VectorXd::Constant(2, -11.0)));
    a.reliability = Reliability{{false, false}, std::nullopt};
    b.reliability = Reliability{{false, false}, std::nullopt};
    double dev = 0.0;
    for (int q = 0; q < hmm.num_states(); ++q)
      dev = std::max(dev, std::abs(marg->score_plain(0, q, a) -
                                   marg->score_plain(0, q, b)));
    add_row("marginalization(all unreliable) independent of y", dev);
  }
  {  // modified imputation: dirac posterior plugs its mean
    auto scorer = make_modified_imputation_scorer(hmm);
    double dev = 0.0;
    for (const auto& ev : frames) {
      FrameEvidence e2 = FrameEvidence::plain(Eigen::VectorXd(Eigen::VectorXd::Constant(2, 99.0)));
      e2.posterior = PosteriorTrack{ev.observed, Eigen::VectorXd::Zero(2)};
      for (int q = 0; q < hmm.num_states(); ++q)
        dev = std::max(dev, std::abs(scorer->score_plain(0, q, e2) -
                                     conv.score_plain(0, q, ev)));
    }
    add_row("modified_imputation(dirac posterior) == plug-in", dev);
  }
  {  // significance: swap symmetry
    std::uniform_real_distribution<double> mu(-2, 2), v(0.2, 2.0);
    double dev = 0.0;
    for (int t = 0; t < 10; ++t) {
      const double m1 = mu(rng), v1 = v(rng), m2 = mu(rng), v2 = v(rng);
      auto a = make_significance_scorer(single_state_model(gauss1(m1, v1)));
      auto b = make_significance_scorer(single_state_model(gauss1(m2, v2)));
      FrameEvidence ea = FrameEvidence::plain(vec1(0.0));
      ea.posterior = PosteriorTrack{vec1(m2), vec1(v2)};
      FrameEvidence eb = FrameEvidence::plain(vec1(0.0));
      eb.posterior = PosteriorTrack{vec1(m1), vec1(v1)};
      dev = std::max(dev, std::abs(a->score_plain(0, 0, ea) - b->score_plain(0, 0, eb)));
    }
    add_row("significance swap symmetry", dev);
  }
  {  // pmc: noise absent, alpha = 1
    PmcLogSumModel spec;
    const auto adapted = pmc_adapt(hmm, spec, PmcApprox::kLogAdd);
    ConventionalScorer adapted_scorer(adapted.hmm);
    add_row("pmc(no noise, alpha=1) == base",
            max_dev_vs(adapted_scorer, conv, hmm, frames));
  }
  {  // vts: neutral conv, noise absent
    VtsLogSumModel spec;
    spec.conv = DiagGaussianParam{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    const auto adapted = vts_adapt(hmm, spec);
    ConventionalScorer adapted_scorer(adapted.hmm);
    add_row("vts(h=0, C_h=0, no noise) == base",
            max_dev_vs(adapted_scorer, conv, hmm, frames));
  }
  {  // vts: proxy noise floor -> pure shift
    VtsLogSumModel spec;
    spec.conv = DiagGaussianParam{Eigen::VectorXd(2), Eigen::VectorXd(2)};
    spec.conv.mean << 0.4, -0.2;
    spec.conv.var << 0.05, 0.1;
    spec.noise = DiagGaussianParam{Eigen::VectorXd::Constant(2, kLogZeroProxy),
                                   Eigen::VectorXd::Zero(2)};
    const auto adapted = vts_adapt(hmm, spec);
    double dev = 0.0;
    for (int s = 0; s < hmm.num_states(); ++s)
      for (int k = 0; k < hmm.emissions[s].num_components(); ++k)
        for (int d = 0; d < 2; ++d) {
          dev = std::max(dev, std::abs(adapted.hmm.emissions[s].components[k].mean()[d] -
                                       (hmm.emissions[s].components[k].mean()[d] +
                                        spec.conv.mean[d])));
          dev = std::max(dev, std::abs(adapted.hmm.emissions[s].components[k].diag_var()[d] -
                                       (hmm.emissions[s].components[k].diag_var()[d] +
                                        spec.conv.var[d])));
        }
    add_row("vts(proxy noise floor) == convolutive shift", dev);
  }
  {  // cmllr / mllr identity
    auto id = RegressionAssignment::single_class(
        hmm, {Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2),
              Eigen::VectorXd::Zero(2)});
    ConventionalScorer cs(cmllr_transform(hmm, id).hmm);
    ConventionalScorer ms(mllr_adapt_means(hmm, id).hmm);
    add_row("cmllr(A=I, b=0) == base", max_dev_vs(cs, conv, hmm, frames));
    add_row("mllr(A=I, b=0) == base", max_dev_vs(ms, conv, hmm, frames));
  }
  {  // map limits
    Hmm one = single_state_model(gauss1(5.0, 1.0));
    LabeledSequence seq;
    seq.frames = {vec1(2.0)};
    seq.states = {0};
    const auto ml = map_adapt_means(one, MapPrior{0.0, {{vec1(0.0)}}},
                                    std::span(&seq, 1));
    const auto pin = map_adapt_means(
        one, MapPrior{std::numeric_limits<double>::infinity(), {{vec1(0.0)}}},
        std::span(&seq, 1));
    double dev = std::abs(ml.hmm.emissions[0].components[0].mean()[0] - 2.0);
    dev = std::max(dev, std::abs(pin.hmm.emissions[0].components[0].mean()[0] - 0.0));
    add_row("map(tau=0) == ML mean, map(tau=inf) == prior mean", dev);
  }
  {  // bayesian mllr: dirac at identity
    MllrParamPrior prior{Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2),
                         Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    auto scorer = make_bayesian_mllr_scorer(hmm, prior);
    add_row("bayesian_mllr(dirac at identity) == conventional",
            max_dev_vs(*scorer, conv, hmm, frames));
  }
  {  // rev_vts: proxy tail taps reduce to vts
    ReverbLogSumModel spec;
    spec.taps = {Eigen::VectorXd(2), Eigen::VectorXd::Constant(2, kLogZeroProxy)};
    spec.taps[0] << 0.2, -0.3;
    spec.noise = DiagGaussianParam{Eigen::VectorXd(2), Eigen::VectorXd(2)};
    spec.noise->mean << -0.8, -1.1;
    spec.noise->var << 0.3, 0.2;
    const auto rev = rev_vts_adapt(hmm, spec);
    VtsLogSumModel vts;
    vts.conv = DiagGaussianParam{spec.taps[0], Eigen::VectorXd::Zero(2)};
    vts.noise = spec.noise;
    const auto direct = vts_adapt(hmm, vts);
    double dev = 0.0;
    for (int s = 0; s < hmm.num_states(); ++s)
      for (int k = 0; k < hmm.emissions[s].num_components(); ++k)
        for (int d = 0; d < 2; ++d) {
          dev = std::max(dev, std::abs(rev.hmm.emissions[s].components[k].mean()[d] -
                                       direct.hmm.emissions[s].components[k].mean()[d]));
          dev = std::max(dev,
                         std::abs(rev.hmm.emissions[s].components[k].diag_var()[d] -
                                  direct.hmm.emissions[s].components[k].diag_var()[d]));
        }
    add_row("rev_vts(proxy tail) == vts", dev);
  }
  {  // reverb log-add: L = 0 shifts means by mu_0
    ReverbLogSumModel spec;
    spec.taps = {Eigen::VectorXd(2)};
    spec.taps[0] << 0.4, -0.2;
    const auto adapted = reverb_static_adapt(hmm, spec, ReverbMoment::kLogAdd);
    double dev = 0.0;
    for (int s = 0; s < hmm.num_states(); ++s)
      for (int k = 0; k < hmm.emissions[s].num_components(); ++k)
        for (int d = 0; d < 2; ++d)
          dev = std::max(dev, std::abs(adapted.hmm.emissions[s].components[k].mean()[d] -
                                       (hmm.emissions[s].components[k].mean()[d] +
                                        spec.taps[0][d])));
    add_row("reverb.static(L=0) == mean shift by mu_0", dev);
  }
  {  // reverb: static == partial path on a 1-state model
    Hmm one = single_state_model(Gaussian(Eigen::VectorXd::Zero(2),
                                          Eigen::VectorXd(Eigen::VectorXd::Constant(2, 0.5))));
    ReverbLogSumModel spec;
    spec.taps = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, -0.7)};
    ConventionalScorer stat(reverb_static_adapt(one, spec, ReverbMoment::kLogAdd).hmm);
    auto partial = make_partial_path_reverb_scorer(one, spec, ReverbMoment::kLogAdd);
    auto evs = random_evidence(rng, 5, 2);
    const auto res_p = viterbi(one, *partial, evs);
    const auto res_s = viterbi(one, stat, evs);
    double dev = 0.0;
    for (int n = 0; n < 5; ++n)
      dev = std::max(dev, std::abs(res_p.frame_scores[n] - res_s.frame_scores[n]));
    add_row("reverb static == partial path on 1 state", dev);
  }
  {  // takiguchi: absent tail == conventional on y - h
    TakiguchiARModel spec;
    spec.conv = Eigen::VectorXd(2);
    spec.conv << 0.3, -0.2;
    auto scorer = make_takiguchi_scorer(hmm, spec);
    double dev = 0.0;
    for (const auto& ev : frames) {
      const auto shifted = FrameEvidence::plain(Eigen::VectorXd(ev.observed - spec.conv));
      DecodeContext ctx;  // empty past: first-frame branch
      for (int q = 0; q < hmm.num_states(); ++q) {
        ScoreRequest req;
        req.frame = 0;
        req.state = q;
        dev = std::max(dev, std::abs(scorer->score(req, ev, ctx) -
                                     conv.score_plain(0, q, shifted)));
      }
    }
    add_row("takiguchi(no tail) == conventional on y - h", dev);
  }
  {  // pmc noise HMM with a single state == stationary pmc
    Hmm speech = random_hmm(rng, 2, 2, 2);
    Hmm noise1 = single_state_model(Gaussian(Eigen::VectorXd(2), Eigen::VectorXd(2)));
    noise1.emissions[0].components[0] =
        Gaussian(Eigen::VectorXd(Eigen::VectorXd::Constant(2, -0.5)),
                 Eigen::VectorXd(Eigen::VectorXd::Constant(2, 0.3)));
    PmcLogSumModel spec;
    spec.level_alpha = 0.8;
    spec.noise = DiagGaussianParam{noise1.emissions[0].components[0].mean(),
                                   noise1.emissions[0].components[0].diag_var()};
    spec.noise_hmm = noise1;
    auto joint = make_pmc_noise_hmm_scorer(speech, spec, PmcApprox::kLogAdd);
    ConventionalScorer stationary(pmc_adapt(speech, spec, PmcApprox::kLogAdd).hmm);
    auto evs = random_evidence(rng, 8, 2);
    double dev = 0.0;
    for (int n = 0; n < 8; ++n)
      for (int q = 0; q < 2; ++q)
        dev = std::max(dev, std::abs(joint->score(n, q, 0, evs[n]) -
                                     stationary.score_plain(n, q, evs[n])));
    add_row("pmc_noise_hmm(1 state) == stationary pmc", dev);
  }
  return out;
}

// --- consistency-pairs ------------------------------------------------------------

SuiteResult suite_consistency_pairs() {
  SuiteResult out;
  out.suite = "consistency-pairs";
  out.all_pass = true;
  std::mt19937 rng(24680);

  const auto add_row = [&](const std::string& name, double dev, double tol = 0.0) {
    const bool pass = dev <= tol;
    out.rows.push_back({name, pass, format_error(dev)});
    out.max_error = std::max(out.max_error, dev);
    out.all_pass = out.all_pass && pass;
  };

  {  // cmllr == jud with zero bias covariance (exact)
    double dev = 0.0;
    for (int t = 0; t < 10; ++t) {
      Hmm hmm = random_hmm(rng, 2, 1, 2);
      std::uniform_real_distribution<double> u(0.5, 2.0), b(-1, 1);
      auto a = RegressionAssignment::single_class(
          hmm, {Eigen::MatrixXd::Constant(1, 1, u(rng)), vec1(b(rng)), vec1(0.0)});
      auto jud = make_jud_scorer(hmm, a);
      ConventionalScorer cs(cmllr_transform(hmm, a).hmm);
      auto evs = random_evidence(rng, 5, 1);
      for (int n = 0; n < 5; ++n)
        for (int q = 0; q < 2; ++q)
          dev = std::max(dev, std::abs(jud->score_plain(0, q, evs[n]) -
                                       cs.score_plain(0, q, evs[n])));
    }
    add_row("cmllr == jud(C_b = 0)", dev);
  }
  {  // mllr == cmllr on means (exact), covariances untouched
    Hmm hmm = random_hmm(rng, 3, 2, 2);
    Eigen::MatrixXd A(2, 2);
    A << 1.1, 0.2, -0.3, 0.8;
    auto a = RegressionAssignment::single_class(
        hmm, {A, Eigen::VectorXd(2), Eigen::VectorXd::Zero(2)});
    a.classes[0].bias_mean << 0.4, -0.1;
    const auto c = cmllr_transform(hmm, a);
    const auto m = mllr_adapt_means(hmm, a);
    double dev = 0.0;
    for (int s = 0; s < 3; ++s)
      for (int k = 0; k < 2; ++k) {
        dev = std::max(dev, (c.hmm.emissions[s].components[k].mean() -
                             m.hmm.emissions[s].components[k].mean())
                                .cwiseAbs()
                                .maxCoeff());
        dev = std::max(dev, (hmm.emissions[s].components[k].diag_var() -
                             m.hmm.emissions[s].components[k].diag_var())
                                .cwiseAbs()
                                .maxCoeff());
      }
    add_row("mllr == cmllr on means; covariances unchanged", dev);
  }
  {  // bayesian mllr with a dirac prior == mllr (exact)
    double dev = 0.0;
    for (int t = 0; t < 10; ++t) {
      Hmm hmm = random_hmm(rng, 2, 2, 2);
      std::uniform_real_distribution<double> u(0.5, 1.5), b(-1, 1);
      Eigen::VectorXd am(2), cm(2);
      am << u(rng), u(rng);
      cm << b(rng), b(rng);
      MllrParamPrior prior{am, Eigen::VectorXd::Zero(2), cm, Eigen::VectorXd::Zero(2)};
      auto scorer = make_bayesian_mllr_scorer(hmm, prior);
      ConventionalScorer ms(
          mllr_adapt_means(hmm, RegressionAssignment::single_class(
                                    hmm, {Eigen::MatrixXd(am.asDiagonal()), cm,
                                          Eigen::VectorXd::Zero(2)}))
              .hmm);
      auto evs = random_evidence(rng, 5, 2);
      for (int n = 0; n < 5; ++n)
        for (int q = 0; q < 2; ++q)
          dev = std::max(dev, std::abs(scorer->score_plain(0, q, evs[n]) -
                                       ms.score_plain(0, q, evs[n])));
    }
    add_row("bayesian_mllr(dirac) == mllr", dev);
  }
  {  // rev_vts(L=0) routes through vts (family coincidence, exact)
    Hmm hmm = random_hmm(rng, 2, 2, 2);
    ReverbLogSumModel l0;
    l0.taps = {Eigen::VectorXd(2)};
    l0.taps[0] << 0.3, -0.1;
    l0.noise = DiagGaussianParam{Eigen::VectorXd(2), Eigen::VectorXd(2)};
    l0.noise->mean << -1.0, -0.5;
    l0.noise->var << 0.2, 0.3;
    const ObservationModelSpec obs(l0);
    TechniqueContext ctx;
    ctx.obs_model = &obs;
    const auto routed = build_adapted("rev_vts", nlohmann::json{}, hmm, ctx);
    VtsLogSumModel vts;
    vts.conv = DiagGaussianParam{l0.taps[0], Eigen::VectorXd::Zero(2)};
    vts.noise = l0.noise;
    const auto direct = vts_adapt(hmm, vts);
    double dev = 0.0;
    for (int s = 0; s < 2; ++s)
      for (int k = 0; k < 2; ++k) {
        dev = std::max(dev, (routed.hmm.emissions[s].components[k].mean() -
                             direct.hmm.emissions[s].components[k].mean())
                                .cwiseAbs()
                                .maxCoeff());
        dev = std::max(dev, (routed.hmm.emissions[s].components[k].diag_var() -
                             direct.hmm.emissions[s].components[k].diag_var())
                                .cwiseAbs()
                                .maxCoeff());
      }
    add_row("rev_vts(L=0) == vts (family coincidence)", dev);
  }
  {  // pmc noise HMM with one state == stationary pmc, through the 3D decoder
    Hmm speech = random_hmm(rng, 3, 1, 1);
    Hmm noise1 = single_state_model(gauss1(-0.4, 0.25));
    PmcLogSumModel spec;
    spec.noise = DiagGaussianParam{vec1(-0.4), vec1(0.25)};
    spec.noise_hmm = noise1;
    auto joint = make_pmc_noise_hmm_scorer(speech, spec, PmcApprox::kLogAdd);
    ConventionalScorer stationary(pmc_adapt(speech, spec, PmcApprox::kLogAdd).hmm);
    auto evs = random_evidence(rng, 6, 1);
    const auto res3d = viterbi_3d(speech, noise1, *joint, evs);
    const auto res = viterbi(speech, stationary, evs);
    double dev = std::abs(res3d.total_log_score - res.total_log_score);
    bool same_path = res3d.speech_path == res.path;
    add_row("pmc_noise_hmm(1 state) decode == stationary pmc decode",
            same_path ? dev : 1.0);
  }
  return out;
}

}  // namespace

std::vector<std::string> oracle_suite_names() {
  return {"dp-exactness", "quadrature", "degenerate-limits", "consistency-pairs"};
}

SuiteResult run_oracle_suite(const std::string& name) {
  if (name == "dp-exactness") return suite_dp_exactness();
  if (name == "quadrature") return suite_quadrature();
  if (name == "degenerate-limits") return suite_degenerate_limits();
  if (name == "consistency-pairs") return suite_consistency_pairs();
  throw ValidationError("unknown oracle suite: " + name);
}

}  // namespace bnc::harness
