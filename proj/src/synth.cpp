#include "seqcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqcnn {

namespace {

// Log emission density up to a state-independent constant.
double log_emission(const SyntheticModel& m, const float* frame, std::size_t state) {
  const auto& mu = m.means[state];
  double sq = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double d = frame[k] - mu[k];
    sq += d * d;
  }
  const double s = m.config.emissionNoise;
  return -sq / (2.0 * s * s);
}

}  // namespace

void SyntheticCorpusConfig::validate() const {
  if (numUtterances < 1) throw std::invalid_argument("synthetic corpus: numUtterances must be >= 1");
  if (minLength < 1 || maxLength < minLength) {
    throw std::invalid_argument("synthetic corpus: need 1 <= minLength <= maxLength");
  }
  if (featDim < 1 || numStates < 2) throw std::invalid_argument("synthetic corpus: featDim >= 1, numStates >= 2");
  if (!(markovSelfLoop > 0.0 && markovSelfLoop < 1.0)) {
    throw std::invalid_argument("synthetic corpus: markovSelfLoop must lie in (0, 1)");
  }
  if (!(emissionNoise > 0.0)) throw std::invalid_argument("synthetic corpus: emissionNoise must be > 0");
  if (!(meanScale >= 0.0)) throw std::invalid_argument("synthetic corpus: meanScale must be >= 0");
}

SyntheticModel synthetic_model(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  SyntheticModel m;
  m.config = cfg;
  Rng rng(cfg.seed);
  const double scale = cfg.meanScale / std::sqrt(static_cast<double>(cfg.featDim));
  m.means.assign(cfg.numStates, std::vector<double>(cfg.featDim));
  for (auto& mu : m.means) {
    for (auto& v : mu) v = scale * rng.normal();
  }
  return m;
}

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  const SyntheticModel m = synthetic_model(cfg);
  Rng rng = Rng(cfg.seed).derive(1 + cfg.sampleStream);
  Corpus corpus;
  corpus.reserve(cfg.numUtterances);
  for (std::size_t i = 0; i < cfg.numUtterances; ++i) {
    Utterance u;
    u.id = cfg.idPrefix + std::to_string(i);
    const std::size_t len = cfg.minLength + rng.below(cfg.maxLength - cfg.minLength + 1);
    u.features = Tensor({len, cfg.featDim}, DType::F32);
    u.labels.resize(len);
    auto feats = u.features.values<float>();
    std::size_t state = rng.below(cfg.numStates);
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0 && rng.uniform() >= cfg.markovSelfLoop) {
        const std::size_t jump = rng.below(cfg.numStates - 1);
        state = jump < state ? jump : jump + 1;
      }
      u.labels[t] = static_cast<std::int32_t>(state);
      for (std::size_t k = 0; k < cfg.featDim; ++k) {
        feats[t * cfg.featDim + k] = static_cast<float>(m.means[state][k] + cfg.emissionNoise * rng.normal());
      }
    }
    corpus.push_back(std::move(u));
  }
  return corpus;
}

double bayes_frame_accuracy(const SyntheticModel& model, const Corpus& corpus) {
  const std::size_t s = model.config.numStates;
  const double stay = model.config.markovSelfLoop;
  const double move = (1.0 - stay) / static_cast<double>(s - 1);
  std::size_t correct = 0, total = 0;
  for (const auto& u : corpus) {
    const std::size_t t = u.frames();
    const Tensor f32 = u.features.cast(DType::F32);
    const float* feats = f32.values<float>().data();
    // Scaled forward-backward in the probability domain.
    std::vector<double> emit(t * s), alpha(t * s), beta(t * s);
    for (std::size_t i = 0; i < t; ++i) {
      double mx = -INFINITY;
      for (std::size_t k = 0; k < s; ++k) {
        emit[i * s + k] = log_emission(model, feats + i * model.config.featDim, k);
        mx = std::max(mx, emit[i * s + k]);
      }
      for (std::size_t k = 0; k < s; ++k) emit[i * s + k] = std::exp(emit[i * s + k] - mx);
    }
    auto normalize = [&](double* row) {
      double sum = 0.0;
      for (std::size_t k = 0; k < s; ++k) sum += row[k];
      for (std::size_t k = 0; k < s; ++k) row[k] /= sum;
    };
    for (std::size_t k = 0; k < s; ++k) alpha[k] = emit[k] / static_cast<double>(s);
    normalize(&alpha[0]);
    for (std::size_t i = 1; i < t; ++i) {
      double total_prev = 0.0;
      for (std::size_t k = 0; k < s; ++k) total_prev += alpha[(i - 1) * s + k];
      for (std::size_t k = 0; k < s; ++k) {
        const double prev = alpha[(i - 1) * s + k];
        alpha[i * s + k] = emit[i * s + k] * (stay * prev + move * (total_prev - prev));
      }
      normalize(&alpha[i * s]);
    }
    for (std::size_t k = 0; k < s; ++k) beta[(t - 1) * s + k] = 1.0;
    for (std::size_t i = t - 1; i-- > 0;) {
      double total_next = 0.0;
      for (std::size_t k = 0; k < s; ++k) total_next += emit[(i + 1) * s + k] * beta[(i + 1) * s + k];
      for (std::size_t k = 0; k < s; ++k) {
        const double own = emit[(i + 1) * s + k] * beta[(i + 1) * s + k];
        beta[i * s + k] = stay * own + move * (total_next - own);
      }
      normalize(&beta[i * s]);
    }
    for (std::size_t i = 0; i < t; ++i) {
      std::size_t best = 0;
      double bestP = -1.0;
      for (std::size_t k = 0; k < s; ++k) {
        const double p = alpha[i * s + k] * beta[i * s + k];
        if (p > bestP) {
          bestP = p;
          best = k;
        }
      }
      correct += static_cast<std::int32_t>(best) == u.labels[i];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

double bayes_single_frame_accuracy(const SyntheticModel& model, const Corpus& corpus) {
  std::size_t correct = 0, total = 0;
  for (const auto& u : corpus) {
    const Tensor f32 = u.features.cast(DType::F32);
    const float* feats = f32.values<float>().data();
    for (std::size_t i = 0; i < u.frames(); ++i) {
      std::size_t best = 0;
      double bestL = -INFINITY;
      for (std::size_t k = 0; k < model.config.numStates; ++k) {
        const double l = log_emission(model, feats + i * model.config.featDim, k);
        if (l > bestL) {
          bestL = l;
          best = k;
        }
      }
      correct += static_cast<std::int32_t>(best) == u.labels[i];
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace seqcnn
