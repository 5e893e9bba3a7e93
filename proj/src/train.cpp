#include "seqcnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace seqcnn {

std::string to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "nag"; }

Optimizer parse_optimizer(const std::string& text) {
  if (text == "sgd") return Optimizer::Sgd;
  if (text == "nag") return Optimizer::Nag;
  throw std::invalid_argument("unknown optimizer '" + text + "' (expected sgd or nag)");
}

void TrainConfig::validate() const {
  if (!(baseLr > 0.0) || !std::isfinite(baseLr)) throw std::invalid_argument("train: baseLr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0) || !(momentumAfter >= 0.0 && momentumAfter < 1.0)) {
    throw std::invalid_argument("train: momentum must lie in [0, 1)");
  }
  for (std::size_t i = 1; i < lrMilestones.size(); ++i) {
    if (lrMilestones[i] <= lrMilestones[i - 1]) {
      throw std::invalid_argument("train: lr milestones must be strictly increasing");
    }
  }
  if (!(lrFactor > 0.0)) throw std::invalid_argument("train: lrFactor must be positive");
  if (!(l2 >= 0.0)) throw std::invalid_argument("train: l2 must be >= 0");
  if (batchSize == 0) throw std::invalid_argument("train: batchSize must be positive");
  if (numFrames == 0) throw std::invalid_argument("train: numFrames must be positive");
  if (!(ceWeight >= 0.0)) throw std::invalid_argument("train: ceWeight must be >= 0");
}

TrainConfig TrainConfig::sgd_defaults() {
  TrainConfig c;
  c.optimizer = Optimizer::Sgd;
  c.baseLr = 0.03;
  c.momentum = 0.0;
  c.momentumAfter = 0.0;
  return c;
}

TrainConfig TrainConfig::nag_defaults() { return TrainConfig{}; }

double lr_schedule(const TrainConfig& cfg, std::uint64_t framesSeen) {
  double lr = cfg.baseLr;
  for (auto m : cfg.lrMilestones) {
    if (framesSeen >= m) lr /= cfg.lrFactor;
  }
  return lr;
}

double momentum_schedule(const TrainConfig& cfg, std::uint64_t framesSeen) {
  return framesSeen >= cfg.momentumDropAt ? cfg.momentumAfter : cfg.momentum;
}

namespace {

bool gradients_finite(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (!p.grad->all_finite()) return false;
  }
  return true;
}

}  // namespace

bool nag_step(std::span<const ParamRef> params, std::vector<Tensor>& velocity, double lr, double momentum,
              double l2) {
  if (velocity.size() != params.size()) throw std::invalid_argument("nag_step: one velocity per parameter");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(*params[i].grad, params[i].value->shape(), "nag_step gradient");
    require_shape(velocity[i], params[i].value->shape(), "nag_step velocity");
  }
  if (!gradients_finite(params)) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].value;
    visit_dtype(theta.dtype(), [&]<class T>() {
      T* th = theta.values<T>().data();
      const T* g = params[i].grad->values<T>().data();
      T* v = velocity[i].values<T>().data();
      const T mu = static_cast<T>(momentum), rate = static_cast<T>(lr), decay = static_cast<T>(l2);
      for (std::size_t k = 0; k < theta.numel(); ++k) {
        const T vOld = v[k];
        const T vNew = mu * vOld - rate * (g[k] + decay * th[k]);
        v[k] = vNew;
        th[k] += -mu * vOld + (T(1) + mu) * vNew;
      }
    });
  }
  return true;
}

bool sgd_step(std::span<const ParamRef> params, double lr, double l2) {
  for (const auto& p : params) require_shape(*p.grad, p.value->shape(), "sgd_step gradient");
  if (!gradients_finite(params)) return false;
  for (const auto& p : params) {
    visit_dtype(p.value->dtype(), [&]<class T>() {
      T* th = p.value->values<T>().data();
      const T* g = p.grad->values<T>().data();
      const T rate = static_cast<T>(lr), decay = static_cast<T>(l2);
      for (std::size_t k = 0; k < p.value->numel(); ++k) th[k] -= rate * (g[k] + decay * th[k]);
    });
  }
  return true;
}

Tensor combined_criterion_grad(const Tensor& seqGrad, const Tensor& ceGrad, double ceWeight) {
  require_shape(ceGrad, seqGrad.shape(), "combined criterion");
  require_same_dtype(seqGrad, ceGrad, "combined criterion");
  Tensor out = seqGrad;
  if (ceWeight != 0.0) axpy_inplace(out, ceWeight, ceGrad);
  return out;
}

CriterionResult FrameMbrCriterion::evaluate(const Tensor& logits, std::span<const std::int32_t> labels) const {
  const Tensor probs = softmax_rows(logits);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) {
    throw ShapeError("frame-mbr: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  CriterionResult r;
  r.gradLogits = Tensor(probs.shape(), probs.dtype());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("frame-mbr: label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
    const double py = probs.get(i * k + static_cast<std::size_t>(y));
    total += 1.0 - py;
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = probs.get(i * k + j);
      const double d = (static_cast<std::size_t>(y) == j ? 1.0 : 0.0) - pj;
      r.gradLogits.set(i * k + j, -py * d / static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

double frame_accuracy(const Network& net, const Corpus& corpus) {
  const bool conv = is_streamable(net.spec());
  std::size_t correct = 0, total = 0;
  for (const auto& u : corpus) {
    if (!u.labelled()) continue;
    const auto post = conv ? evaluate_convolutional(net, u) : evaluate_spliced(net, u);
    const auto best = argmax_rows(post.values);
    for (std::size_t t = 0; t < best.size(); ++t) correct += best[t] == u.labels[t];
    total += best.size();
  }
  if (total == 0) throw std::invalid_argument("frame_accuracy: corpus has no labelled frames");
  return static_cast<double>(correct) / static_cast<double>(total);
}

Checkpoint make_checkpoint(Network& net, const TrainState& state) {
  Checkpoint c;
  c.specText = serialize_spec(net.spec());
  c.dtype = net.dtype();
  c.framesSeen = state.framesSeen;
  c.stepCount = state.stepCount;
  const auto params = net.params();
  for (const auto& p : params) c.tensors.emplace_back(p.name, *p.value);
  for (const auto& b : net.buffers()) c.tensors.emplace_back(b.name, *b.value);
  for (std::size_t i = 0; i < state.velocity.size() && i < params.size(); ++i) {
    c.tensors.emplace_back("velocity." + params[i].name, state.velocity[i]);
  }
  const auto bns = net.batch_norms();
  for (std::size_t i = 0; i < bns.size(); ++i) {
    c.scalars.emplace_back("bn" + std::to_string(i) + ".update_count", bns[i]->updateCount);
  }
  c.scalars.emplace_back("rejected_steps", state.rejectedSteps);
  return c;
}

TrainState apply_checkpoint(Network& net, const Checkpoint& ckpt) {
  if (!(parse_spec(ckpt.specText) == net.spec())) {
    throw std::invalid_argument("checkpoint architecture does not match the network");
  }
  auto load = [&](const std::string& name, Tensor& dst) {
    const Tensor* t = ckpt.find_tensor(name);
    if (!t) throw std::invalid_argument("checkpoint lacks tensor '" + name + "'");
    if (t->shape() != dst.shape()) throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_string(t->shape()));
    dst = t->cast(dst.dtype());
  };
  TrainState state;
  state.framesSeen = ckpt.framesSeen;
  state.stepCount = ckpt.stepCount;
  const auto params = net.params();
  for (const auto& p : params) {
    load(p.name, *p.value);
    if (ckpt.find_tensor("velocity." + p.name)) {
      state.velocity.emplace_back(p.value->shape(), p.value->dtype());
      load("velocity." + p.name, state.velocity.back());
    }
  }
  if (!state.velocity.empty() && state.velocity.size() != params.size()) {
    throw std::invalid_argument("checkpoint holds velocities for only some parameters");
  }
  for (const auto& b : net.buffers()) load(b.name, *b.value);
  const auto bns = net.batch_norms();
  for (std::size_t i = 0; i < bns.size(); ++i) {
    const auto* count = ckpt.find_scalar("bn" + std::to_string(i) + ".update_count");
    if (!count) throw std::invalid_argument("checkpoint lacks batch-norm update count " + std::to_string(i));
    bns[i]->updateCount = *count;
  }
  if (const auto* r = ckpt.find_scalar("rejected_steps")) state.rejectedSteps = *r;
  return state;
}

namespace {

EpochConfig epoch_config(const Network& net, const TrainConfig& cfg) {
  EpochConfig e;
  e.mode = cfg.mode;
  e.batchSize = cfg.batchSize;
  e.assembly.numFrames = cfg.numFrames;
  e.assembly.rngSeed = cfg.seed;
  e.geometry = net.spec().geometry;
  e.gamma = cfg.gamma;
  e.dtype = cfg.dtype;
  e.seed = cfg.seed;
  return e;
}

}  // namespace

Trainer::Trainer(Network& net, const Corpus& train, TrainConfig cfg, const Corpus* heldOut)
    : net_(net),
      train_(train),
      heldOut_(heldOut),
      cfg_((cfg.validate(), std::move(cfg))),
      batches_(train, epoch_config(net, cfg_)) {
  if (net.dtype() != cfg_.dtype) {
    throw std::invalid_argument("train: network is " + to_string(net.dtype()) + ", config asks for " +
                                to_string(cfg_.dtype));
  }
  for (const auto& p : net_.params()) state_.velocity.emplace_back(p.value->shape(), p.value->dtype());
}

StepReport Trainer::step() {
  StepReport rep;
  rep.lr = lr_schedule(cfg_, state_.framesSeen);
  rep.momentum = cfg_.optimizer == Optimizer::Nag ? momentum_schedule(cfg_, state_.framesSeen) : 0.0;

  auto mb = batches_.next();
  if (!mb) mb = batches_.next();
  Tensor input;
  std::vector<std::int32_t> labels;
  if (auto* w = std::get_if<WindowBatch>(&*mb)) {
    input = std::move(w->input);
    labels = std::move(w->labels);
  } else {
    auto& u = std::get<UtteranceBatch>(*mb);
    input = utterance_batch_input(u, net_.spec().geometry, cfg_.dtype);
    labels = utterance_batch_labels(u);
  }

  net_.zero_grads();
  const Tensor logits = net_.forward(input, ForwardMode::Train);
  auto ce = cross_entropy_from_logits(logits, labels);
  Tensor grad = std::move(ce.gradLogits);
  rep.loss = ce.meanLoss;
  if (criterion_) {
    auto seq = criterion_->evaluate(logits, labels);
    grad = combined_criterion_grad(seq.gradLogits, grad, cfg_.ceWeight);
    rep.loss = seq.loss;
  }
  const auto predicted = argmax_rows(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  rep.frames = labels.size();

  if (!std::isfinite(rep.loss)) {
    rep.diverged = true;
    return rep;
  }
  net_.backward(grad);
  const auto params = net_.params();
  rep.applied = cfg_.optimizer == Optimizer::Nag
                    ? nag_step(params, state_.velocity, rep.lr, rep.momentum, cfg_.l2)
                    : sgd_step(params, rep.lr, cfg_.l2);
  if (!rep.applied) ++state_.rejectedSteps;
  state_.metrics.push_back({state_.framesSeen, rep.loss, rep.accuracy, rep.lr});
  state_.framesSeen += rep.frames;
  ++state_.stepCount;
  return rep;
}

Checkpoint Trainer::checkpoint() const { return make_checkpoint(net_, state_); }

void Trainer::restore(const Checkpoint& ckpt) {
  auto metrics = std::move(state_.metrics);
  state_ = apply_checkpoint(net_, ckpt);
  if (state_.velocity.empty()) {
    for (const auto& p : net_.params()) state_.velocity.emplace_back(p.value->shape(), p.value->dtype());
  }
  metrics.erase(std::remove_if(metrics.begin(), metrics.end(),
                               [&](const MetricsRow& r) { return r.framesSeen >= state_.framesSeen; }),
                metrics.end());
  state_.metrics = std::move(metrics);
}

void Trainer::take_checkpoint(TrainResult& result) {
  lastGood_ = checkpoint();
  ++result.checkpointsTaken;
  if (!cfg_.checkpointDir.empty()) {
    std::filesystem::create_directories(cfg_.checkpointDir);
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt-%012llu.seqc", static_cast<unsigned long long>(state_.framesSeen));
    const std::string path = (std::filesystem::path(cfg_.checkpointDir) / name).string();
    write_checkpoint(path, *lastGood_);
    result.checkpointFiles.push_back(path);
  }
}

TrainResult Trainer::run() {
  TrainResult result;
  lastGood_ = checkpoint();
  while (state_.framesSeen < cfg_.maxFrames) {
    const std::uint64_t before = state_.framesSeen;
    const StepReport rep = step();
    if (rep.diverged) {
      restore(*lastGood_);
      result.diverged = true;
      break;
    }
    const std::uint64_t after = state_.framesSeen;
    bool milestone = false;
    for (auto m : cfg_.lrMilestones) milestone = milestone || (before < m && m <= after);
    const bool periodic = cfg_.checkpointEvery != 0 && before / cfg_.checkpointEvery != after / cfg_.checkpointEvery;
    if (milestone || periodic) take_checkpoint(result);

    if (heldOut_ && cfg_.evalEvery != 0 && before / cfg_.evalEvery != after / cfg_.evalEvery) {
      result.heldOutAccuracy = frame_accuracy(net_, *heldOut_);
      if (cfg_.stopAtAccuracy && *result.heldOutAccuracy >= *cfg_.stopAtAccuracy) {
        result.framesToTarget = after;
        break;
      }
    }
  }
  if (heldOut_ && !result.framesToTarget && state_.stepCount > 0) {
    result.heldOutAccuracy = frame_accuracy(net_, *heldOut_);
    if (cfg_.stopAtAccuracy && *result.heldOutAccuracy >= *cfg_.stopAtAccuracy) {
      result.framesToTarget = state_.framesSeen;
    }
  }
  result.state = state_;
  return result;
}

TrainResult train_ce(Network& net, const Corpus& train, const TrainConfig& cfg, const Corpus* heldOut) {
  Trainer trainer(net, train, cfg, heldOut);
  return trainer.run();
}

}  // namespace seqcnn
