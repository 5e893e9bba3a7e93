#include "seqcnn/batching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace seqcnn {

namespace {

Utterance crop(const Utterance& u, std::size_t offset, std::size_t len) {
  const std::size_t f = u.features.dim(1);
  Utterance out;
  out.id = u.id;
  out.features = Tensor({len, f}, u.features.dtype());
  visit_dtype(u.features.dtype(), [&]<class T>() {
    const auto src = u.features.values<T>();
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(offset * f), len * f,
                out.features.values<T>().begin());
  });
  if (u.labelled()) {
    out.labels.assign(u.labels.begin() + static_cast<std::ptrdiff_t>(offset),
                      u.labels.begin() + static_cast<std::ptrdiff_t>(offset + len));
  }
  return out;
}

// Index into `weights` drawn proportionally to weight.
std::size_t draw_weighted(std::span<const double> cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace

void BatchAssemblyConfig::validate() const {
  if (numFrames < 1) throw std::invalid_argument("batch assembly: numFrames must be at least 1");
}

std::vector<double> target_length_distribution(const Corpus& corpus, std::size_t numFrames) {
  std::vector<double> p(corpus.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].frames() <= numFrames) {
      p[i] = static_cast<double>(corpus[i].frames());
      total += p[i];
    }
  }
  if (total == 0.0) {
    throw std::invalid_argument("batch assembly: every utterance is longer than numFrames = " +
                                std::to_string(numFrames));
  }
  for (auto& v : p) v /= total;
  return p;
}

UtteranceBatcher::UtteranceBatcher(const Corpus& corpus, BatchAssemblyConfig cfg)
    : corpus_(&corpus), cfg_(cfg) {
  cfg_.validate();
  if (corpus.empty()) throw std::invalid_argument("batch assembly: empty corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].frames() >= 1 && corpus[i].frames() <= cfg_.numFrames) eligible_.push_back(i);
  }
  if (eligible_.empty()) {
    throw std::invalid_argument("batch assembly: every utterance is longer than numFrames = " +
                                std::to_string(cfg_.numFrames));
  }
}

UtteranceBatch UtteranceBatcher::next(Rng& rng) {
  if (pool_.empty()) {
    pool_ = eligible_;
    ++epoch_;
  }
  const Corpus& corpus = *corpus_;
  std::vector<double> cumulative(pool_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    acc += static_cast<double>(corpus[pool_[i]].frames());
    cumulative[i] = acc;
  }
  UtteranceBatch batch;
  batch.targUttLen = corpus[pool_[draw_weighted(cumulative, rng)]].frames();
  batch.numUtts = cfg_.numFrames / batch.targUttLen;

  std::vector<std::size_t> order(pool_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto distance = [&](std::size_t k) {
    const std::size_t len = corpus[pool_[k]].frames();
    return len > batch.targUttLen ? len - batch.targUttLen : batch.targUttLen - len;
  };
  const std::size_t take = std::min(batch.numUtts, pool_.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const auto da = distance(a), db = distance(b);
                      return da != db ? da < db : pool_[a] < pool_[b];
                    });
  order.resize(take);
  for (std::size_t k : order) batch.sources.push_back(pool_[k]);
  std::sort(order.begin(), order.end(), std::greater<>());
  for (std::size_t k : order) pool_.erase(pool_.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(batch.sources.begin(), batch.sources.end());

  batch.croppedLen = corpus[batch.sources.front()].frames();
  for (std::size_t s : batch.sources) batch.croppedLen = std::min(batch.croppedLen, corpus[s].frames());
  for (std::size_t s : batch.sources) {
    const std::size_t slack = corpus[s].frames() - batch.croppedLen;
    const std::size_t offset = slack == 0 ? 0 : static_cast<std::size_t>(rng.below(slack + 1));
    batch.offsets.push_back(offset);
    batch.utterances.push_back(crop(corpus[s], offset, batch.croppedLen));
  }
  return batch;
}

UtteranceBatch assemble_utterance_batch(const Corpus& corpus, const BatchAssemblyConfig& cfg, Rng& rng) {
  UtteranceBatcher batcher(corpus, cfg);
  return batcher.next(rng);
}

Tensor utterance_batch_input(const UtteranceBatch& batch, const InputGeometry& geometry, DType dtype) {
  if (batch.utterances.empty()) throw std::invalid_argument("utterance batch is empty");
  const std::size_t l = geometry.contextRadius, r = geometry.rightContext();
  const std::size_t len = l + batch.croppedLen + r, f = geometry.featDim;
  Tensor input({batch.utterances.size(), 1, len, f}, dtype);
  visit_dtype(dtype, [&]<class T>() {
    T* dst = input.values<T>().data();
    for (std::size_t n = 0; n < batch.utterances.size(); ++n) {
      const Tensor padded = pad_utterance(batch.utterances[n].features, l, r).cast(dtype);
      require_shape(padded, {len, f}, "utterance batch member");
      std::copy(padded.values<T>().begin(), padded.values<T>().end(), dst + n * len * f);
    }
  });
  return input;
}

std::vector<std::int32_t> utterance_batch_labels(const UtteranceBatch& batch) {
  std::vector<std::int32_t> labels;
  labels.reserve(batch.label_frames());
  for (const auto& u : batch.utterances) {
    if (!u.labelled()) throw std::invalid_argument("utterance '" + u.id + "' has no labels");
    labels.insert(labels.end(), u.labels.begin(), u.labels.end());
  }
  return labels;
}

std::vector<double> balanced_probabilities(std::span<const std::uint64_t> frequencies, double gamma) {
  if (frequencies.empty()) throw std::invalid_argument("balanced sampling: no classes");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("balanced sampling: gamma must be >= 0");
  std::vector<double> w(frequencies.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    if (frequencies[i] == 0) continue;
    w[i] = std::pow(static_cast<double>(frequencies[i]), gamma);
    total += w[i];
  }
  if (total == 0.0) throw std::invalid_argument("balanced sampling: no labelled frames");
  for (auto& v : w) v /= total;
  return w;
}

BalancedSampler BalancedSampler::build(const Corpus& corpus, double gamma, std::size_t numStates) {
  BalancedSampler s;
  s.gamma_ = gamma;
  std::size_t classes = numStates;
  if (classes == 0) {
    for (const auto& u : corpus) {
      for (auto l : u.labels) classes = std::max(classes, static_cast<std::size_t>(l) + 1);
    }
  }
  s.frequencies_.assign(classes, 0);
  s.index_.assign(classes, {});
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus[i];
    for (std::size_t t = 0; t < u.labels.size(); ++t) {
      const auto l = u.labels[t];
      if (l < 0 || static_cast<std::size_t>(l) >= classes) {
        throw std::out_of_range("balanced sampling: label " + std::to_string(l) + " in '" + u.id +
                                "' outside [0, " + std::to_string(classes) + ")");
      }
      ++s.frequencies_[static_cast<std::size_t>(l)];
      s.index_[static_cast<std::size_t>(l)].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)});
      ++s.total_;
    }
  }
  if (s.total_ == 0) throw std::invalid_argument("balanced sampling: corpus has no labelled frames");
  s.probabilities_ = balanced_probabilities(s.frequencies_, gamma);
  s.cumulative_.resize(classes);
  double acc = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    acc += s.probabilities_[i];
    s.cumulative_[i] = acc;
  }
  return s;
}

std::size_t BalancedSampler::draw_class(Rng& rng) const {
  std::size_t cls = draw_weighted(cumulative_, rng);
  // Guard against rounding at the top of the CDF landing on an empty class.
  while (frequencies_[cls] == 0) --cls;
  return cls;
}

FrameRef BalancedSampler::draw(Rng& rng) const {
  const auto& frames = index_[draw_class(rng)];
  return frames[rng.below(frames.size())];
}

LabelledWindow sample_ce_window(const BalancedSampler& sampler, const Corpus& corpus, std::size_t left,
                                std::size_t right, Rng& rng) {
  LabelledWindow w;
  w.source = sampler.draw(rng);
  const Utterance& u = corpus.at(w.source.utterance);
  w.window = extract_window(u.features, w.source.frame, left, right);
  w.label = u.labels.at(w.source.frame);
  return w;
}

WindowBatch sample_window_batch(const BalancedSampler& sampler, const Corpus& corpus,
                                const InputGeometry& geometry, std::size_t batchSize, Rng& rng,
                                DType dtype) {
  if (batchSize == 0) throw std::invalid_argument("window batch size must be positive");
  const std::size_t w = geometry.windowLen, f = geometry.featDim;
  WindowBatch b;
  b.input = Tensor({batchSize, 1, w, f}, dtype);
  visit_dtype(dtype, [&]<class T>() {
    T* dst = b.input.values<T>().data();
    for (std::size_t n = 0; n < batchSize; ++n) {
      auto lw = sample_ce_window(sampler, corpus, geometry.contextRadius, geometry.rightContext(), rng);
      const Tensor win = lw.window.cast(dtype);
      require_shape(win, {w, f}, "training window");
      std::copy(win.values<T>().begin(), win.values<T>().end(), dst + n * w * f);
      b.labels.push_back(lw.label);
      b.sources.push_back(lw.source);
    }
  });
  return b;
}

EpochIterator::EpochIterator(const Corpus& corpus, EpochConfig cfg)
    : corpus_(&corpus), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  if (cfg_.mode == BatchMode::Windows) {
    if (cfg_.batchSize == 0) throw std::invalid_argument("window batch size must be positive");
    sampler_ = BalancedSampler::build(corpus, cfg_.gamma, cfg_.geometry.numStates);
  } else {
    batcher_.emplace(corpus, cfg_.assembly);
  }
  epoch_ = 1;
}

std::size_t EpochIterator::batches_per_epoch() const {
  if (sampler_) return (sampler_->labelled_frames() + cfg_.batchSize - 1) / cfg_.batchSize;
  return 0;
}

std::optional<Minibatch> EpochIterator::next() {
  if (atBoundary_) {
    atBoundary_ = false;
    ++epoch_;
    emitted_ = 0;
  }
  if (sampler_) {
    if (emitted_ == batches_per_epoch()) {
      atBoundary_ = true;
      return std::nullopt;
    }
    ++emitted_;
    return sample_window_batch(*sampler_, *corpus_, cfg_.geometry, cfg_.batchSize, rng_, cfg_.dtype);
  }
  if (emitted_ > 0 && batcher_->remaining() == 0) {
    atBoundary_ = true;
    return std::nullopt;
  }
  ++emitted_;
  return batcher_->next(rng_);
}

}  // namespace seqcnn
