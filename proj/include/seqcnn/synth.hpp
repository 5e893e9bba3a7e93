#pragma once

#include <cstdint>

#include "seqcnn/batching.hpp"

namespace seqcnn {

/// Hidden-Markov corpus: states follow a chain that stays put with
/// probability `markovSelfLoop` and otherwise jumps uniformly to another
/// state; each frame is the state's mean vector plus N(0, sigma^2) noise.
struct SyntheticCorpusConfig {
  std::size_t numUtterances = 100;
  std::size_t minLength = 100;
  std::size_t maxLength = 400;
  std::size_t featDim = 40;
  std::size_t numStates = 8;
  double markovSelfLoop = 0.9;
  double emissionNoise = 0.5;
  /// Expected Euclidean norm of each state mean.
  double meanScale = 1.0;
  std::uint64_t seed = 1;
  /// Independent utterance draws from the same model, e.g. 1 for held-out data.
  std::uint64_t sampleStream = 0;
  std::string idPrefix = "utt";

  void validate() const;
};

/// State means, a pure function of (seed, featDim, numStates, meanScale).
struct SyntheticModel {
  SyntheticCorpusConfig config;
  std::vector<std::vector<double>> means;  // [numStates][featDim]
};

SyntheticModel synthetic_model(const SyntheticCorpusConfig& cfg);

Corpus generate_synthetic_corpus(const SyntheticCorpusConfig& cfg);

/// Frame accuracy of the posterior-maximizing decision given the whole
/// utterance (forward-backward over the true generator).
double bayes_frame_accuracy(const SyntheticModel& model, const Corpus& corpus);

/// Frame accuracy of the best decision from each frame alone.
double bayes_single_frame_accuracy(const SyntheticModel& model, const Corpus& corpus);

}  // namespace seqcnn
