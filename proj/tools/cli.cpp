#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "seqcnn/arch.hpp"
#include "seqcnn/cost.hpp"
#include "seqcnn/gradcheck.hpp"
#include "seqcnn/io.hpp"
#include "seqcnn/keyvalue.hpp"
#include "seqcnn/rng.hpp"
#include "seqcnn/seqeval.hpp"
#include "seqcnn/synth.hpp"
#include "seqcnn/train.hpp"

namespace seqcnn::cli {

namespace {

namespace fs = std::filesystem;

// Reads `--config` files in the key = value format. Root keys and keys in
// the `[<command>]` section apply to the selected command; other sections
// are left to other commands.
class KeyValueConfig : public CLI::Config {
 public:
  void set_command(std::string command) { command_ = std::move(command); }

  std::string to_config(const CLI::App* app, bool defaultAlso, bool, std::string) const override {
    std::ostringstream os;
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string value = opt->count() > 0 ? CLI::detail::join(opt->results(), " ")
                                                 : (defaultAlso ? opt->get_default_str() : "");
      if (!value.empty()) os << opt->get_lnames().front() << " = " << value << "\n";
    }
    return os.str();
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::stringstream buffer;
    buffer << input.rdbuf();
    const auto doc = KeyValueDocument::parse(buffer.str());
    std::vector<CLI::ConfigItem> items;
    for (const auto& section : doc.sections()) {
      if (!section.name.empty() && (section.name != command_ || section.index)) continue;
      for (const auto& e : section.entries) items.push_back(CLI::ConfigItem{{command_}, e.key, {e.value}});
    }
    return items;
  }

 private:
  std::string command_;
};

struct ArchOptions {
  std::string variant = "c";
  std::string file;
  std::string widthScale = "1/8";
  bool batchNorm = false;
  std::size_t numStates = 8;
  std::size_t featDim = 40;

  void add(CLI::App* cmd) {
    cmd->add_option("--arch", variant, "Built-in variant: a, b or c")->capture_default_str();
    cmd->add_option("--arch-file", file, "Architecture description file (overrides --arch)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--width-scale", widthScale, "Channel width divisor of built-ins")->capture_default_str();
    cmd->add_flag("--bn", batchNorm, "Batch norm after every built-in conv layer");
    cmd->add_option("--states", numStates, "Output classes of built-ins")->capture_default_str();
    cmd->add_option("--feat-dim", featDim, "Feature dimension of built-ins")->capture_default_str();
  }

  ArchitectureSpec resolve() const {
    if (!file.empty()) return parse_spec(read_text_file(file));
    BuiltinOptions opts;
    opts.batchNorm = batchNorm;
    return build_builtin(parse_variant(variant), featDim, numStates, Rational::parse(widthScale), opts);
  }
};

const std::map<std::string, DType> kDTypes{{"f32", DType::F32}, {"f64", DType::F64}};
const std::map<std::string, BatchMode> kBatchModes{{"windows", BatchMode::Windows},
                                                   {"utterances", BatchMode::UtteranceBatches}};
const std::map<std::string, Optimizer> kOptimizers{{"sgd", Optimizer::Sgd}, {"nag", Optimizer::Nag}};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help) {
  return app.add_subcommand(name, help);
}

// The config option belongs to the top-level app; a `--config` given after
// the command name is moved in front of it.
std::vector<std::string> hoist_config(int argc, const char* const* argv, std::string& command) {
  std::vector<std::string> front, rest;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      front.push_back(arg);
      front.push_back(argv[++i]);
    } else if (arg.rfind("--config=", 0) == 0) {
      front.push_back(arg);
    } else {
      if (command.empty() && !arg.empty() && arg[0] != '-') command = arg;
      rest.push_back(arg);
    }
  }
  front.insert(front.end(), rest.begin(), rest.end());
  std::reverse(front.begin(), front.end());
  return front;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

Utterance random_utterance(std::size_t len, std::size_t featDim, std::uint64_t seed, const std::string& id) {
  Rng rng(seed);
  Utterance u;
  u.id = id;
  u.features = Tensor({len, featDim}, DType::F32);
  for (auto& v : u.features.values<float>()) v = static_cast<float>(rng.normal());
  return u;
}

Network load_network(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  Network net(parse_spec(ckpt.specText), ckpt.dtype);
  apply_checkpoint(net, ckpt);
  return net;
}

// gen-data ------------------------------------------------------------------

struct GenDataArgs {
  std::string outDir;
  SyntheticCorpusConfig corpus;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  const Corpus corpus = generate_synthetic_corpus(a.corpus);
  const std::string manifest = write_corpus(a.outDir, corpus, a.corpus.numStates);
  std::size_t frames = 0;
  for (const auto& u : corpus) frames += u.frames();
  const SyntheticModel model = synthetic_model(a.corpus);
  out << "manifest = " << manifest << "\n"
      << "utterances = " << corpus.size() << "\n"
      << "frames = " << frames << "\n"
      << "bayes_frame_accuracy = " << fixed(bayes_frame_accuracy(model, corpus), 4) << "\n"
      << "bayes_single_frame_accuracy = " << fixed(bayes_single_frame_accuracy(model, corpus), 4) << "\n";
  return kExitOk;
}

// shapes --------------------------------------------------------------------

struct ShapesArgs {
  ArchOptions arch;
  std::size_t inputTime = 0;
};

int shapes(const ShapesArgs& a, std::ostream& out) {
  const ArchitectureSpec spec = a.arch.resolve();
  const std::size_t inputTime = a.inputTime ? a.inputTime : spec.geometry.windowLen;
  const ShapeReport rep = infer_shapes(spec, inputTime);
  out << "arch " << spec.name << ", input " << inputTime << " x " << spec.geometry.featDim << "\n";
  out << std::left;
  out << "layer  kind        time  freq  channels\n";
  for (const auto& s : rep.perLayer) {
    std::ostringstream row;
    row.width(7);
    row << std::left << s.layerIndex;
    row.width(12);
    row << to_string(kind_of(spec.layers[s.layerIndex]));
    row.width(6);
    row << s.outTime;
    row.width(6);
    row << s.outFreq;
    row << s.outChannels;
    out << row.str() << "\n";
  }
  out << "receptive field: " << rep.receptiveFieldTime << " frames\n";
  const auto issue = streamability_issue(spec);
  out << "streamable: " << (issue ? "no (" + *issue + ")" : std::string("yes")) << "\n";
  out << "output frames per input frame: " << rep.outputFramesPerInputFrame.to_string() << "\n";
  out << "conv output: time " << rep.convOutTime << ", freq " << rep.convOutFreq << ", channels "
      << rep.convOutChannels << "\n";
  return kExitOk;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  ArchOptions arch;
  std::string trainManifest;
  std::string heldOutManifest;
  std::string outDir;
  std::string optimizer = "nag";
  std::optional<double> lr;
  std::optional<double> momentum;
  TrainConfig cfg;
  std::optional<double> stopAt;
};

int train(TrainArgs a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg = kOptimizers.at(a.optimizer) == Optimizer::Sgd ? TrainConfig::sgd_defaults()
                                                                   : TrainConfig::nag_defaults();
  cfg.maxFrames = a.cfg.maxFrames;
  cfg.batchSize = a.cfg.batchSize;
  cfg.dtype = a.cfg.dtype;
  cfg.seed = a.cfg.seed;
  cfg.l2 = a.cfg.l2;
  cfg.mode = a.cfg.mode;
  cfg.numFrames = a.cfg.numFrames;
  cfg.gamma = a.cfg.gamma;
  cfg.checkpointEvery = a.cfg.checkpointEvery;
  cfg.evalEvery = a.cfg.evalEvery;
  cfg.stopAtAccuracy = a.stopAt;
  if (a.lr) cfg.baseLr = *a.lr;
  if (a.momentum) cfg.momentum = *a.momentum;
  fs::create_directories(a.outDir);
  cfg.checkpointDir = (fs::path(a.outDir) / "checkpoints").string();
  cfg.validate();

  const ArchitectureSpec spec = a.arch.resolve();
  const Corpus trainSet = load_corpus(a.trainManifest, spec.geometry.numStates);
  Corpus heldOut;
  if (!a.heldOutManifest.empty()) heldOut = load_corpus(a.heldOutManifest, spec.geometry.numStates);
  if (cfg.stopAtAccuracy && heldOut.empty()) {
    err << "seqcnn train: --stop-at needs --held-out\n";
    return kExitUsage;
  }

  Network net = Network::create(spec, cfg.dtype, cfg.seed);
  Trainer trainer(net, trainSet, cfg, heldOut.empty() ? nullptr : &heldOut);
  const TrainResult res = trainer.run();

  const std::string metricsPath = (fs::path(a.outDir) / "metrics.tsv").string();
  write_metrics_log(metricsPath, res.state.metrics);
  const std::string finalPath = (fs::path(a.outDir) / "final.ckpt").string();
  write_checkpoint(finalPath, trainer.checkpoint());

  out << "frames_seen = " << res.state.framesSeen << "\n"
      << "steps = " << res.state.stepCount << "\n"
      << "rejected_steps = " << res.state.rejectedSteps << "\n"
      << "diverged = " << (res.diverged ? "true" : "false") << "\n";
  if (!res.state.metrics.empty()) {
    out << "last_loss = " << format_double(res.state.metrics.back().loss) << "\n";
  }
  if (res.heldOutAccuracy) out << "held_out_accuracy = " << fixed(*res.heldOutAccuracy, 4) << "\n";
  if (res.framesToTarget) out << "frames_to_target = " << *res.framesToTarget << "\n";
  out << "checkpoints = " << res.checkpointFiles.size() << "\n"
      << "metrics = " << metricsPath << "\n"
      << "final_checkpoint = " << finalPath << "\n";
  if (res.diverged) {
    err << "seqcnn train: loss diverged; restored the last good checkpoint\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string outDir;
  std::string mode = "conv";
};

int eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const Network net = load_network(a.checkpoint);
  const EvalMode mode = parse_eval_mode(a.mode);
  if (mode == EvalMode::Convolutional) {
    if (auto issue = streamability_issue(net.spec())) {
      err << "seqcnn eval: architecture is not streamable (" << *issue << "); use --mode spliced\n";
      return kExitUsage;
    }
  }
  const Corpus corpus = load_corpus(a.manifest, net.spec().geometry.numStates);
  fs::create_directories(a.outDir);
  std::size_t correct = 0, labelled = 0, frames = 0;
  for (const auto& u : corpus) {
    const PosteriorMatrix post =
        mode == EvalMode::Spliced ? evaluate_spliced(net, u) : evaluate_convolutional(net, u);
    write_tensor_file((fs::path(a.outDir) / (u.id + ".post")).string(), post.values);
    frames += post.frames();
    if (!u.labelled()) continue;
    const Tensor p = post.values.cast(DType::F64);
    const auto v = p.values<double>();
    const std::size_t k = p.dim(1);
    for (std::size_t t = 0; t < post.frames(); ++t) {
      const auto row = v.subspan(t * k, k);
      const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == static_cast<std::size_t>(u.labels[t]);
      ++labelled;
    }
  }
  out << "mode = " << to_string(mode) << "\n"
      << "utterances = " << corpus.size() << "\n"
      << "frames = " << frames << "\n";
  if (labelled) {
    out << "frame_accuracy = " << fixed(static_cast<double>(correct) / static_cast<double>(labelled), 4) << "\n";
  }
  out << "posteriors = " << a.outDir << "\n";
  return kExitOk;
}

// check-equiv ---------------------------------------------------------------

struct CheckEquivArgs {
  ArchOptions arch;
  std::uint64_t seed = 7;
  std::size_t uttLen = 100;
  std::size_t utterances = 1;
  double tol = 1e-10;
  std::string dtype = "f64";
};

int check_equiv(const CheckEquivArgs& a, std::ostream& out, std::ostream& err) {
  const ArchitectureSpec spec = a.arch.resolve();
  if (auto issue = streamability_issue(spec)) {
    err << "seqcnn check-equiv: not streamable: " << *issue << "\n";
    out << "pass = false\n";
    return kExitCheckFailed;
  }
  const DType dtype = kDTypes.at(a.dtype);
  const Network net = Network::create(spec, dtype, a.seed);
  double maxDiff = 0.0;
  std::size_t frames = 0;
  bool pass = true;
  for (std::size_t i = 0; i < a.utterances; ++i) {
    const Utterance u =
        random_utterance(a.uttLen, spec.geometry.featDim, Rng(a.seed).derive(i + 1).next_u64(), "u" + std::to_string(i));
    const EquivalenceReport rep = check_equivalence(net, u, a.tol, dtype);
    maxDiff = std::max(maxDiff, rep.maxAbsDiff);
    frames += rep.framesCompared;
    pass = pass && rep.pass;
  }
  out << "arch = " << spec.name << "\n"
      << "dtype = " << to_string(dtype) << "\n"
      << "frames_compared = " << frames << "\n"
      << "max_abs_diff = " << format_double(maxDiff) << "\n"
      << "tolerance = " << format_double(a.tol) << "\n"
      << "pass = " << (pass ? "true" : "false") << "\n";
  return pass ? kExitOk : kExitCheckFailed;
}

// bench ---------------------------------------------------------------------

struct BenchArgs {
  ArchOptions arch;
  std::size_t uttLen = 500;
  std::size_t utterances = 2;
  std::vector<std::string> modes{"spliced", "conv"};
  BenchmarkOptions bench;
  std::uint64_t seed = 1;
  std::string report;
};

int bench(const BenchArgs& a, std::ostream& out) {
  const ArchitectureSpec spec = a.arch.resolve();
  const Network net = Network::create(spec, DType::F32, a.seed);
  std::vector<Utterance> utts;
  for (std::size_t i = 0; i < a.utterances; ++i) {
    utts.push_back(random_utterance(a.uttLen, spec.geometry.featDim, Rng(a.seed).derive(i + 1).next_u64(),
                                    "u" + std::to_string(i)));
  }
  std::map<EvalMode, double> fps;
  std::string keyvalue;
  for (const auto& name : a.modes) {
    const EvalMode mode = parse_eval_mode(name);
    CostReport cost = eval_cost(spec, a.uttLen, mode);
    const BenchmarkResult res = benchmark_eval(net, utts, mode, a.bench);
    cost.framesPerSecond = res.framesPerSecond;
    fps[mode] = res.framesPerSecond;
    out << format_cost_table(cost) << "\n";
    keyvalue += "[" + to_string(mode) + "]\n" + format_cost_keyvalue(cost) + "\n";
  }
  std::ostringstream summary;
  if (fps.size() == 2) {
    const auto cmp = compare_eval_costs(spec, a.uttLen);
    const double speedup = fps[EvalMode::Convolutional] / fps[EvalMode::Spliced];
    summary << "mac_ratio = " << fixed(cmp.ratio, 4) << "\n"
            << "input_frame_ratio = " << fixed(cmp.inputFrameRatio, 4) << "\n"
            << "speedup = " << fixed(speedup, 3) << "\n";
  }
  out << summary.str();
  if (!a.report.empty()) write_binary_file(a.report, summary.str() + keyvalue);
  return kExitOk;
}

// grad-check ----------------------------------------------------------------

struct GradCheckArgs {
  ArchOptions arch;
  std::uint64_t seed = 1;
  std::size_t batch = 2;
  GradCheckOptions check;
};

int grad_check_cmd(GradCheckArgs a, std::ostream& out) {
  const ArchitectureSpec spec = a.arch.resolve();
  Network net = Network::create(spec, DType::F64, a.seed);
  perturb_offsets(net, Rng(a.seed).derive(2).next_u64());
  const auto& g = spec.geometry;
  Rng rng = Rng(a.seed).derive(1);
  Tensor input({a.batch, 1, g.windowLen, g.featDim}, DType::F64);
  for (auto& v : input.values<double>()) v = rng.normal();
  std::vector<std::int32_t> labels(a.batch * net.output_frames(g.windowLen));
  for (auto& l : labels) l = static_cast<std::int32_t>(rng.below(g.numStates));
  a.check.seed = a.seed;
  const GradCheckReport rep = grad_check(net, input, labels, a.check);
  for (const auto& t : rep.tensors) {
    out << t.name << " entries " << t.entriesChecked << " max_rel_error " << format_double(t.maxRelError);
    if (t.kinks) out << " kinks " << t.kinks;
    out << (t.pass ? "" : "  FAIL") << "\n";
  }
  out << "max_rel_error = " << format_double(rep.maxRelError) << "\n"
      << "tolerance = " << format_double(rep.tolerance) << "\n"
      << "kinks = " << rep.kinks << "\n"
      << "pass = " << (rep.pass ? "true" : "false") << "\n";
  if (!rep.failure.empty()) out << "failure = " << rep.failure << "\n";
  return rep.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence CNN acoustic model toolkit", "seqcnn"};
  app.require_subcommand(1);
  auto config = std::make_shared<KeyValueConfig>();
  app.set_config("--config", "", "key = value file with option defaults for the command");
  app.config_formatter(config);
  app.allow_config_extras(CLI::config_extras_mode::error);

  GenDataArgs gen;
  {
    auto* cmd = add_command(app, "gen-data", "Write a synthetic Markov corpus");
    auto& c = gen.corpus;
    cmd->add_option("--out", gen.outDir, "Output directory")->required();
    cmd->add_option("--utterances", c.numUtterances)->capture_default_str();
    cmd->add_option("--min-len", c.minLength)->capture_default_str();
    cmd->add_option("--max-len", c.maxLength)->capture_default_str();
    cmd->add_option("--feat-dim", c.featDim)->capture_default_str();
    cmd->add_option("--states", c.numStates)->capture_default_str();
    cmd->add_option("--self-loop", c.markovSelfLoop)->capture_default_str();
    cmd->add_option("--noise", c.emissionNoise, "Emission standard deviation")->capture_default_str();
    cmd->add_option("--mean-scale", c.meanScale)->capture_default_str();
    cmd->add_option("--seed", c.seed)->capture_default_str();
    cmd->add_option("--stream", c.sampleStream, "Utterance draw, e.g. 1 for held-out data")->capture_default_str();
    cmd->add_option("--prefix", c.idPrefix, "Utterance id prefix")->capture_default_str();
  }

  ShapesArgs shp;
  {
    auto* cmd = add_command(app, "shapes", "Print per-layer output extents");
    shp.arch.add(cmd);
    cmd->add_option("--input-time", shp.inputTime, "Input frames (default: the context window)");
  }

  TrainArgs tr;
  {
    auto* cmd = add_command(app, "train", "Cross-entropy training");
    tr.arch.add(cmd);
    auto& c = tr.cfg;
    cmd->add_option("--train", tr.trainManifest, "Training manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--held-out", tr.heldOutManifest, "Held-out manifest")->check(CLI::ExistingFile);
    cmd->add_option("--out", tr.outDir, "Directory for checkpoints and metrics")->required();
    cmd->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"sgd", "nag"}))->capture_default_str();
    cmd->add_option("--lr", tr.lr, "Base learning rate (default per optimizer)");
    cmd->add_option("--momentum", tr.momentum);
    cmd->add_option("--l2", c.l2)->capture_default_str();
    cmd->add_option("--batch-size", c.batchSize)->capture_default_str();
    cmd->add_option("--max-frames", c.maxFrames)->capture_default_str();
    cmd->add_option("--checkpoint-every", c.checkpointEvery)->capture_default_str();
    cmd->add_option("--eval-every", c.evalEvery, "Label frames between held-out evaluations")->capture_default_str();
    cmd->add_option("--stop-at", tr.stopAt, "Held-out accuracy that ends training");
    cmd->add_option("--mode", c.mode, "windows or utterances")
        ->transform(CLI::CheckedTransformer(kBatchModes, CLI::ignore_case));
    cmd->add_option("--num-frames", c.numFrames, "Utterance batch frame budget")->capture_default_str();
    cmd->add_option("--gamma", c.gamma, "Balanced sampling exponent")->capture_default_str();
    cmd->add_option("--dtype", c.dtype)->transform(CLI::CheckedTransformer(kDTypes, CLI::ignore_case));
    cmd->add_option("--seed", c.seed)->capture_default_str();
  }

  EvalArgs ev;
  {
    auto* cmd = add_command(app, "eval", "Write posteriors for every utterance of a manifest");
    cmd->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", ev.manifest, "Manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", ev.outDir, "Directory for <id>.post tensors")->required();
    cmd->add_option("--mode", ev.mode)->check(CLI::IsMember({"spliced", "conv"}))->capture_default_str();
  }

  CheckEquivArgs ce;
  {
    auto* cmd = add_command(app, "check-equiv", "Compare spliced and convolutional posteriors");
    ce.arch.add(cmd);
    cmd->add_option("--seed", ce.seed)->capture_default_str();
    cmd->add_option("--utt-len", ce.uttLen)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--utterances", ce.utterances)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--tol", ce.tol)->capture_default_str();
    cmd->add_option("--dtype", ce.dtype)->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  }

  BenchArgs bn;
  {
    auto* cmd = add_command(app, "bench", "MAC counts and measured evaluation throughput");
    bn.arch.add(cmd);
    cmd->add_option("--utt-len", bn.uttLen)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--utterances", bn.utterances)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--modes", bn.modes)->delimiter(',')->check(CLI::IsMember({"spliced", "conv"}));
    cmd->add_option("--warmup", bn.bench.warmup)->capture_default_str();
    cmd->add_option("--reps", bn.bench.repetitions)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--threads", bn.bench.threads)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", bn.seed)->capture_default_str();
    cmd->add_option("--report", bn.report, "Key-value report file");
  }

  GradCheckArgs gc;
  {
    auto* cmd = add_command(app, "grad-check", "Finite-difference gradient check in binary64");
    gc.arch.add(cmd);
    gc.check.maxEntriesPerTensor = 16;
    cmd->add_option("--seed", gc.seed)->capture_default_str();
    cmd->add_option("--batch", gc.batch)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--eps", gc.check.epsilon)->capture_default_str();
    cmd->add_option("--tol", gc.check.tolerance)->capture_default_str();
    cmd->add_option("--entries", gc.check.maxEntriesPerTensor, "Entries probed per tensor, 0 for all")
        ->capture_default_str();
  }

  try {
    std::string command;
    std::vector<std::string> args = hoist_config(argc, argv, command);
    config->set_command(command);
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kExitOk;
    }
    err << "seqcnn: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "seqcnn: " << e.what() << "\n";
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "gen-data") return gen_data(gen, out);
    if (name == "shapes") return shapes(shp, out);
    if (name == "train") return train(tr, out, err);
    if (name == "eval") return eval(ev, out, err);
    if (name == "check-equiv") return check_equiv(ce, out, err);
    if (name == "bench") return bench(bn, out);
    return grad_check_cmd(gc, out);
  } catch (const std::exception& e) {
    err << "seqcnn " << name << ": " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace seqcnn::cli
