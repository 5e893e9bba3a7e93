#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqcnn/network.hpp"

namespace seqcnn {

/// A scalar loss over a set of tensors with an analytic gradient.
class Differentiable {
 public:
  virtual ~Differentiable() = default;
  /// Loss at the current parameter values. Must not change any state the
  /// loss depends on (no running-statistics updates).
  virtual double loss() = 0;
  /// Overwrites every `grad` tensor with the analytic gradient.
  virtual void compute_gradients() = 0;
  virtual std::vector<ParamRef> parameters() = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, guarding entries whose true
  /// gradient is zero.
  double relativeFloor = 1e-4;
  /// Entries probed per tensor; 0 probes all of them.
  std::size_t maxEntriesPerTensor = 0;
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t entriesChecked = 0;
  double maxRelError = 0.0;
  double maxAbsError = 0.0;
  std::size_t worstEntry = 0;
  /// Entries whose step straddled a non-differentiable point; excluded
  /// from the error.
  std::size_t kinks = 0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double maxRelError = 0.0;
  double tolerance = 0.0;
  /// Straddled probes over all tensors; more than one in 20 fails the check.
  std::size_t kinks = 0;
  bool finite = true;
  bool pass = false;
  std::string failure;  // why the check failed, when it did

  std::vector<std::string> failing_tensors() const;
};

/// Central finite differences against the analytic gradient:
/// rel = |a - n| / max(|a|, |n|, relativeFloor).
GradCheckReport grad_check(Differentiable& target, const GradCheckOptions& options = {});

/// Mean cross-entropy of `net` on a batch, in training mode with frozen
/// running statistics.
class NetworkLoss : public Differentiable {
 public:
  NetworkLoss(Network& net, Tensor input, std::vector<std::int32_t> labels);
  double loss() override;
  void compute_gradients() override;
  std::vector<ParamRef> parameters() override { return net_.params(); }

 private:
  Network& net_;
  Tensor input_;
  std::vector<std::int32_t> labels_;
};

GradCheckReport grad_check(Network& net, const Tensor& input, std::span<const std::int32_t> labels,
                           const GradCheckOptions& options = {});

/// Adds N(0, scale^2) noise to biases, BN scales and BN offsets. Freshly
/// initialised nets have zero biases, so units fed only by dead ReLUs sit
/// exactly on a kink where finite differences are one-sided.
void perturb_offsets(Network& net, std::uint64_t seed, double scale = 0.1);

}  // namespace seqcnn
