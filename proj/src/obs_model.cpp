#include "bnc/obs_model.hpp"

#include <cmath>

#include "bnc/errors.hpp"

namespace bnc {

namespace {

void check_dim(const Eigen::VectorXd& v, int dim, const char* what) {
  if (static_cast<int>(v.size()) != dim)
    throw ValidationError(std::string(what) + ": expected dimension " +
                          std::to_string(dim));
}

// Per-dimension log(sum exp(terms[i][d])) in the given term order.
Eigen::VectorXd log_sum_terms(const std::vector<Eigen::VectorXd>& terms) {
  const int d = static_cast<int>(terms.front().size());
  Eigen::VectorXd out(d);
  std::vector<double> buf(terms.size());
  for (int i = 0; i < d; ++i) {
    for (size_t t = 0; t < terms.size(); ++t) buf[t] = terms[t][i];
    out[i] = log_sum_exp(buf);
  }
  return out;
}

Eigen::VectorXd draw_diag(const SeedStream& stream, const Eigen::VectorXd& mean,
                          const Eigen::VectorXd& var) {
  return mean + var.cwiseSqrt().cwiseProduct(stream.normal_vector(
                    static_cast<int>(mean.size())));
}

Eigen::VectorXd draw_gaussian(const SeedStream& stream, const Gaussian& g) {
  if (!g.is_diagonal())
    throw ValidationError("sampling requires diagonal Gaussians");
  return draw_diag(stream, g.mean(), g.diag_var());
}

Eigen::VectorXd draw_param(const SeedStream& stream, const DiagGaussianParam& p) {
  return draw_diag(stream, p.mean, p.var);
}

void check_param(const DiagGaussianParam& p, int dim, const char* what) {
  check_dim(p.mean, dim, what);
  check_dim(p.var, dim, what);
  if (p.var.minCoeff() < 0.0)
    throw ValidationError(std::string(what) + ": negative variance");
}

}  // namespace

const Eigen::VectorXd& AdditiveGaussianModel::mean_at(int frame) const {
  if (track.empty()) return bias_mean;
  return track.at(frame).mean;
}

const Eigen::VectorXd& AdditiveGaussianModel::var_at(int frame) const {
  if (track.empty()) return bias_var;
  return track.at(frame).var;
}

int AffineModel::class_for(int component) const {
  if (class_of_component.empty()) return 0;
  return class_of_component.at(component);
}

const Eigen::VectorXd& AlgonquinModel::estimate_at(int frame) const {
  if (noise_estimate.size() == 1) return noise_estimate.front();
  return noise_estimate.at(frame);
}

int model_tail_length(const ObservationModelSpec& spec) {
  if (const auto* remos = std::get_if<RemosLogSumModel>(&spec))
    return static_cast<int>(remos->tail.size());
  if (const auto* reverb = std::get_if<ReverbLogSumModel>(&spec))
    return reverb->tail_length();
  return 0;
}

void validate_spec(const ObservationModelSpec& spec, int dim) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AdditiveGaussianModel>) {
          check_dim(m.bias_mean, dim, "AdditiveGaussian bias_mean");
          check_dim(m.bias_var, dim, "AdditiveGaussian bias_var");
          for (const auto& t : m.track) {
            check_dim(t.mean, dim, "AdditiveGaussian track mean");
            check_dim(t.var, dim, "AdditiveGaussian track var");
          }
        } else if constexpr (std::is_same_v<T, AffineModel>) {
          if (m.classes.empty()) throw ValidationError("Affine: no classes");
          for (const auto& c : m.classes) {
            if (c.transform.rows() != dim || c.transform.cols() != dim)
              throw ValidationError("Affine: transform shape");
            check_dim(c.bias_mean, dim, "Affine bias_mean");
            check_dim(c.bias_var, dim, "Affine bias_var");
          }
          for (int k : m.class_of_component)
            if (k < 0 || k >= static_cast<int>(m.classes.size()))
              throw ValidationError("Affine: class index out of range");
        } else if constexpr (std::is_same_v<T, AlgonquinModel>) {
          if (m.noise_estimate.empty())
            throw ValidationError("Algonquin: empty noise estimate track");
          for (const auto& r : m.noise_estimate)
            check_dim(r, dim, "Algonquin noise estimate");
          check_dim(m.residual_var, dim, "Algonquin residual_var");
        } else if constexpr (std::is_same_v<T, SpliceRegionsModel>) {
          const int s = m.num_regions();
          if (s < 1) throw ValidationError("Splice: no regions");
          if (std::abs(m.priors.sum() - 1.0) > 1e-12)
            throw ValidationError("Splice: region priors must sum to 1");
          if (static_cast<int>(m.offsets.size()) != s ||
              static_cast<int>(m.region_var.size()) != s)
            throw ValidationError("Splice: region count mismatch");
          for (int i = 0; i < s; ++i) {
            check_dim(m.offsets[i], dim, "Splice offset");
            check_dim(m.region_var[i], dim, "Splice region var");
          }
          if (m.y_prior && static_cast<int>(m.y_prior->size()) != s)
            throw ValidationError("Splice: prior model region count mismatch");
        } else if constexpr (std::is_same_v<T, PmcLogSumModel>) {
          if (!(m.level_alpha > 0.0))
            throw ValidationError("Pmc: level alpha must be positive");
          if (m.noise) check_param(*m.noise, dim, "Pmc noise");
          if (m.noise_hmm) {
            m.noise_hmm->validate();
            if (m.noise_hmm->dim() != dim)
              throw ValidationError("Pmc: noise HMM dimension");
            for (const auto& g : m.noise_hmm->emissions)
              if (g.num_components() != 1)
                throw ValidationError("Pmc: noise HMM emissions must be single Gaussians");
          }
        } else if constexpr (std::is_same_v<T, VtsLogSumModel>) {
          check_param(m.conv, dim, "Vts conv");
          if (m.noise) check_param(*m.noise, dim, "Vts noise");
        } else if constexpr (std::is_same_v<T, RemosLogSumModel>) {
          check_param(m.noise, dim, "Remos noise");
          check_param(m.conv, dim, "Remos conv");
          check_param(m.tail_gain, dim, "Remos tail gain");
          for (const auto& t : m.tail) check_dim(t, dim, "Remos tail");
        } else if constexpr (std::is_same_v<T, ReverbLogSumModel>) {
          if (m.taps.empty()) throw ValidationError("Reverb: needs tap mu_0");
          for (const auto& t : m.taps) check_dim(t, dim, "Reverb tap");
          if (m.noise) check_param(*m.noise, dim, "Reverb noise");
        } else if constexpr (std::is_same_v<T, TakiguchiARModel>) {
          check_dim(m.conv, dim, "Takiguchi conv");
          if (m.tail_weight) check_dim(*m.tail_weight, dim, "Takiguchi tail weight");
        }
      },
      spec);
}

Eigen::VectorXd apply_model(const ObservationModelSpec& spec,
                            std::span<const Eigen::VectorXd> x_window,
                            const FrameLatents& latents,
                            const Eigen::VectorXd* y_prev) {
  if (x_window.empty()) throw ValidationError("apply_model: empty clean window");
  const Eigen::VectorXd& x = x_window.back();
  const int L_avail = static_cast<int>(x_window.size()) - 1;

  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AdditiveGaussianModel> ||
                      std::is_same_v<T, SpliceRegionsModel>) {
          if (!latents.bias) throw ValidationError("apply_model: missing bias draw");
          return x + *latents.bias;
        } else if constexpr (std::is_same_v<T, AffineModel>) {
          if (!latents.bias) throw ValidationError("apply_model: missing bias draw");
          const int k = m.class_for(std::max(latents.component, 0));
          return m.classes.at(k).transform * x + *latents.bias;
        } else if constexpr (std::is_same_v<T, AlgonquinModel>) {
          if (!latents.bias) throw ValidationError("apply_model: missing bias draw");
          Eigen::VectorXd y(x.size());
          const Eigen::VectorXd& r = m.estimate_at(latents.frame);
          // y = x + log(1 + exp(r - x)) + b, stable via log1p.
          for (Eigen::Index d = 0; d < x.size(); ++d) {
            const double t = r[d] - x[d];
            const double soft = (t > 0.0) ? t + std::log1p(std::exp(-t))
                                          : std::log1p(std::exp(t));
            y[d] = x[d] + soft + (*latents.bias)[d];
          }
          return y;
        } else if constexpr (std::is_same_v<T, PmcLogSumModel>) {
          const double log_alpha = std::log(m.level_alpha);
          if (!latents.bias) return (x.array() + log_alpha).matrix();
          std::vector<Eigen::VectorXd> terms;
          terms.push_back((x.array() + log_alpha).matrix());
          terms.push_back(*latents.bias);
          return log_sum_terms(terms);
        } else if constexpr (std::is_same_v<T, VtsLogSumModel>) {
          if (!latents.conv) throw ValidationError("apply_model: missing conv draw");
          if (!latents.noise) return *latents.conv + x;
          std::vector<Eigen::VectorXd> terms;
          terms.push_back(*latents.conv + x);
          terms.push_back(*latents.noise);
          return log_sum_terms(terms);
        } else if constexpr (std::is_same_v<T, RemosLogSumModel>) {
          if (!latents.noise || !latents.conv || !latents.tail_gain)
            throw ValidationError("apply_model: missing REMOS draws");
          std::vector<Eigen::VectorXd> terms;
          terms.push_back(*latents.noise);
          terms.push_back(*latents.conv + x);
          const int L = static_cast<int>(m.tail.size());
          for (int l = 1; l <= L; ++l) {
            if (l > L_avail) break;  // before the first frame
            terms.push_back(*latents.tail_gain + m.tail[l - 1] +
                            x_window[x_window.size() - 1 - l]);
          }
          return log_sum_terms(terms);
        } else if constexpr (std::is_same_v<T, ReverbLogSumModel>) {
          std::vector<Eigen::VectorXd> terms;
          const int L = m.tail_length();
          for (int l = 0; l <= L; ++l) {
            if (l > L_avail) break;
            terms.push_back(x_window[x_window.size() - 1 - l] + m.taps[l]);
          }
          if (m.noise) {
            if (!latents.bias) throw ValidationError("apply_model: missing noise draw");
            terms.push_back(*latents.bias);
          }
          return log_sum_terms(terms);
        } else if constexpr (std::is_same_v<T, TakiguchiARModel>) {
          if (!m.tail_weight || y_prev == nullptr) return m.conv + x;
          std::vector<Eigen::VectorXd> terms;
          terms.push_back(m.conv + x);
          terms.push_back(*m.tail_weight + *y_prev);
          return log_sum_terms(terms);
        }
      },
      spec);
}

SampledUtterance sample_utterance(const ObservationModelSpec& spec,
                                  const Hmm& clean_hmm, int length,
                                  uint64_t seed) {
  if (length < 1) throw ValidationError("sample_utterance: length must be >= 1");
  clean_hmm.validate();
  validate_spec(spec, clean_hmm.dim());

  const SeedStream root(seed);
  SampledUtterance utt;
  utt.seed = seed;
  utt.clean.resize(length);
  utt.observed.resize(length);
  utt.states.resize(length);
  utt.latents.resize(length);

  const int L = model_tail_length(spec);

  for (int n = 0; n < length; ++n) {
    // q_n
    const Eigen::VectorXd probs =
        (n == 0) ? clean_hmm.initial
                 : Eigen::VectorXd(clean_hmm.transitions.row(utt.states[n - 1]));
    utt.states[n] = root.at("q").at(static_cast<uint64_t>(n)).categorical(probs);

    // k_n and x_n
    const Gmm& gmm = clean_hmm.emissions[utt.states[n]];
    FrameLatents& lat = utt.latents[n];
    lat.frame = n;
    lat.component =
        root.at("k").at(static_cast<uint64_t>(n)).categorical(gmm.weights);
    utt.clean[n] = draw_gaussian(root.at("x").at(static_cast<uint64_t>(n)),
                                 gmm.components[lat.component]);

    // family latents
    const auto frame_stream = [&](const char* name) {
      return root.at(name).at(static_cast<uint64_t>(n));
    };
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, AdditiveGaussianModel>) {
            lat.bias = draw_diag(frame_stream("b"), m.mean_at(n), m.var_at(n));
          } else if constexpr (std::is_same_v<T, AffineModel>) {
            const auto& cls = m.classes.at(m.class_for(lat.component));
            lat.bias = draw_diag(frame_stream("b"), cls.bias_mean, cls.bias_var);
          } else if constexpr (std::is_same_v<T, AlgonquinModel>) {
            lat.bias = draw_diag(frame_stream("b"),
                                 Eigen::VectorXd::Zero(clean_hmm.dim()),
                                 m.residual_var);
          } else if constexpr (std::is_same_v<T, SpliceRegionsModel>) {
            lat.region = frame_stream("s").categorical(m.priors);
            lat.bias = draw_diag(frame_stream("b"),
                                 Eigen::VectorXd(-m.offsets[lat.region]),
                                 m.region_var[lat.region]);
          } else if constexpr (std::is_same_v<T, PmcLogSumModel>) {
            if (m.noise_hmm) {
              const Eigen::VectorXd nprobs =
                  (n == 0) ? m.noise_hmm->initial
                           : Eigen::VectorXd(m.noise_hmm->transitions.row(
                                 utt.latents[n - 1].noise_state));
              lat.noise_state = frame_stream("nq").categorical(nprobs);
              lat.bias = draw_gaussian(
                  frame_stream("b"),
                  m.noise_hmm->emissions[lat.noise_state].components[0]);
            } else if (m.noise) {
              lat.bias = draw_param(frame_stream("b"), *m.noise);
            }
          } else if constexpr (std::is_same_v<T, VtsLogSumModel>) {
            lat.conv = draw_param(frame_stream("h"), m.conv);
            if (m.noise) lat.noise = draw_param(frame_stream("c"), *m.noise);
          } else if constexpr (std::is_same_v<T, RemosLogSumModel>) {
            lat.noise = draw_param(frame_stream("c"), m.noise);
            lat.conv = draw_param(frame_stream("h"), m.conv);
            lat.tail_gain = draw_param(frame_stream("a"), m.tail_gain);
          } else if constexpr (std::is_same_v<T, ReverbLogSumModel>) {
            if (m.noise) lat.bias = draw_param(frame_stream("b"), *m.noise);
          }
          // TakiguchiAR: deterministic, no latents.
        },
        spec);

    const int win_lo = std::max(0, n - L);
    const std::span<const Eigen::VectorXd> window(utt.clean.data() + win_lo,
                                                  static_cast<size_t>(n - win_lo + 1));
    utt.observed[n] =
        apply_model(spec, window, lat, n > 0 ? &utt.observed[n - 1] : nullptr);
  }
  return utt;
}

TakiguchiInverse takiguchi_invert(const TakiguchiARModel& spec,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd* y_prev) {
  const int d = static_cast<int>(y.size());
  check_dim(spec.conv, d, "takiguchi_invert");
  TakiguchiInverse out;
  if (!spec.tail_weight || y_prev == nullptr) {
    out.x = y - spec.conv;
    out.log_det_jacobian = 0.0;
    return out;
  }
  out.x.resize(d);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) {
    const double t = (*spec.tail_weight)[i] + (*y_prev)[i];
    const double em = std::exp(t - y[i]);
    if (!(em < 1.0))
      throw InvalidObservationError(
          "takiguchi_invert: observation below the reverberation-tail floor "
          "in dimension " + std::to_string(i));
    // x = log(exp(y) - exp(t)) - h, stable around the floor.
    const double x = y[i] + std::log1p(-em) - spec.conv[i];
    out.x[i] = x;
    // dy/dx = exp(h + x - y), diagonal.
    logdet += spec.conv[i] + x - y[i];
  }
  out.log_det_jacobian = logdet;
  return out;
}

}  // namespace bnc
