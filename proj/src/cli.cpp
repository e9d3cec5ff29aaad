// SPDX-License-Identifier: Apache-2.0
#include "mask3d/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <json.hpp>

#include "mask3d/ablation.hpp"
#include "mask3d/checkpoint.hpp"
#include "mask3d/data.hpp"
#include "mask3d/parallel.hpp"
#include "mask3d/probe.hpp"
#include "mask3d/trainer.hpp"

#ifndef MASK3D_GIT_DESCRIBE
#define MASK3D_GIT_DESCRIBE "unknown"
#endif

namespace mask3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Registers options and remembers how to read their resolved values back,
/// so a manifest can replay the exact invocation.
class OptionSet {
 public:
  explicit OptionSet(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& field, const std::string& help) {
    getters_.emplace_back(name, [&field] { return json(field); });
    return app_->add_option("--" + name, field, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& field, const std::string& help) {
    flags_.push_back(name);
    getters_.emplace_back(name, [&field] { return json(field); });
    return app_->add_flag("--" + name, field, help);
  }

  json values() const {
    json j = json::object();
    for (const auto& [name, get] : getters_) j[name] = get();
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> getters_;
  std::vector<std::string> flags_;
};

struct ModelFlags {
  std::size_t patch = 8;
  std::size_t token_dim = 64;
  std::size_t heads = 4;
  std::size_t color_layers = 4;
  std::size_t depth_layers = 2;
  std::size_t decoder_layers = 2;
  double mlp_ratio = 4.0;

  void bind(OptionSet& opts) {
    opts.add("patch", patch, "Patch side in pixels");
    opts.add("token-dim", token_dim, "Transformer width");
    opts.add("heads", heads, "Attention heads");
    opts.add("color-layers", color_layers, "Color encoder depth");
    opts.add("depth-layers", depth_layers, "Depth encoder depth");
    opts.add("decoder-layers", decoder_layers, "Decoder depth");
    opts.add("mlp-ratio", mlp_ratio, "MLP hidden width over token width");
  }

  ModelConfig resolve(std::size_t h, std::size_t w, bool rgb_head) const {
    ModelConfig c;
    c.image_h = h;
    c.image_w = w;
    c.vit.patch = patch;
    c.vit.token_dim = token_dim;
    c.vit.n_heads = heads;
    c.vit.n_layers_color = color_layers;
    c.vit.n_layers_depth = depth_layers;
    c.vit.n_layers_decoder = decoder_layers;
    c.vit.mlp_ratio = mlp_ratio;
    c.rgb_head = rgb_head;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  double lr0 = 0.05;
  double decay = 0.99;
  std::size_t decay_every = 1000;
  std::size_t epochs = 50;
  std::size_t micro_batch = 8;
  std::size_t accum = 2;
  double rgb_keep = 0.2;
  double depth_keep = 0.2;
  double lambda_rgb = 0.0;
  double momentum = 0.9;
  bool masked_only = false;
  std::size_t val_every = 1;

  void bind(OptionSet& opts) {
    opts.add("lr", lr0, "Initial learning rate");
    opts.add("decay", decay, "Learning-rate decay factor");
    opts.add("decay-every", decay_every, "Steps between decays");
    opts.add("epochs", epochs, "Training epochs");
    opts.add("micro-batch", micro_batch, "Frames per micro-batch");
    opts.add("accum", accum, "Micro-batches per optimizer step");
    opts.add("rgb-keep", rgb_keep, "Fraction of color patches kept");
    opts.add("depth-keep", depth_keep, "Fraction of depth patches kept");
    opts.add("lambda-rgb", lambda_rgb, "Weight of the auxiliary color reconstruction loss");
    opts.add("momentum", momentum, "SGD momentum");
    opts.flag("masked-only", masked_only, "Score only positions without depth input");
    opts.add("val-every", val_every, "Epochs between validation passes (0 = last only)");
  }

  TrainConfig resolve(std::uint64_t seed, std::size_t threads) const {
    TrainConfig c;
    c.lr0 = lr0;
    c.decay = decay;
    c.decay_every = decay_every;
    c.epochs = epochs;
    c.micro_batch = micro_batch;
    c.accum = accum;
    c.p_c = rgb_keep;
    c.p_d = depth_keep;
    c.lambda_rgb = lambda_rgb;
    c.momentum = momentum;
    c.masked_only = masked_only;
    c.seed = seed;
    c.threads = threads;
    c.val_every = val_every;
    c.validate();
    return c;
  }
};

struct ProbeFlags {
  double lr = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_frames = 2;
  double train_fraction = 1.0;
  bool fine_tune = false;

  void bind(OptionSet& opts, const std::string& prefix) {
    opts.add(prefix + "lr", lr, "Probe learning rate");
    opts.add(prefix + "epochs", epochs, "Probe epochs");
    opts.add(prefix + "batch", batch_frames, "Frames per probe step");
    opts.add(prefix + "train-fraction", train_fraction, "Fraction of labeled train frames used");
    opts.flag(prefix + "fine-tune", fine_tune, "Fine-tune encoder and decoder blocks instead of a linear probe");
  }

  ProbeConfig resolve(std::uint64_t seed, std::size_t threads) const {
    ProbeConfig c;
    c.lr = lr;
    c.epochs = epochs;
    c.batch_frames = batch_frames;
    c.train_fraction = train_fraction;
    c.fine_tune = fine_tune;
    c.seed = seed;
    c.threads = threads;
    if (!(train_fraction > 0 && train_fraction <= 1)) throw ContractError("--train-fraction must lie in (0,1]");
    if (batch_frames < 1) throw ContractError("--batch must be >= 1");
    return c;
  }
};

struct Corpus {
  std::vector<RgbdFrame> train;
  std::vector<RgbdFrame> val;
};

Corpus load_corpus(const fs::path& root, std::size_t stride) {
  if (!fs::is_directory(root)) throw DataError("corpus directory not found: " + root.string());
  Corpus c;
  if (fs::is_directory(root / "train")) {
    c.train = load_frame_dir(root / "train", stride);
    if (fs::is_directory(root / "val")) c.val = load_frame_dir(root / "val", 1);
  } else {
    c.train = load_frame_dir(root, stride);
  }
  if (c.train.empty()) throw DataError("corpus " + root.string() + " has no training frames");
  return c;
}

void write_manifest(const fs::path& out, const std::string& command, const json& args, const json& resolved,
                    std::uint64_t seed) {
  fs::create_directories(out);
  json m;
  m["command"] = command;
  m["args"] = args;
  m["resolved"] = resolved;
  m["seed"] = seed;
  m["git_describe"] = MASK3D_GIT_DESCRIBE;
  m["output_dir"] = out.string();
  std::ofstream f(out / "manifest.json");
  f << std::setw(2) << m << '\n';
  if (!f) throw DataError("cannot write manifest in " + out.string());
}

std::size_t resolve_threads(std::size_t flag) { return flag ? flag : default_thread_count(); }

json args_with(OptionSet& opts, const std::string& out, std::uint64_t seed, std::size_t threads) {
  auto a = opts.values();
  a["out"] = out;
  a["seed"] = seed;
  a["threads"] = threads;
  return a;
}

// --- gen -------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::size_t frames = 256;
  long long val_frames = -1;
  std::uint64_t seed = 0;
  std::size_t height = 48;
  std::size_t width = 64;
  std::size_t patch = 8;
  std::size_t holes = 0;
  std::size_t threads = 0;
};

int cmd_gen(GenArgs& a, OptionSet& opts) {
  if (a.val_frames < 0) a.val_frames = static_cast<long long>(a.frames / 4);
  const PatchGrid grid(a.height, a.width, a.patch);
  const fs::path out = a.out;
  write_manifest(out, "gen", args_with(opts, a.out, a.seed, a.threads), json::object(), a.seed);
  for (const auto& [split, count] : {std::pair<std::string, std::size_t>{"train", a.frames},
                                     {"val", static_cast<std::size_t>(a.val_frames)}}) {
    fs::create_directories(out / split);
    for (std::size_t i = 0; i < count; ++i) {
      const auto spec = random_scene(derive_seed(a.seed, "data/" + split, i), a.holes);
      auto frame = render_frame(spec, a.height, a.width);
      frame.frame_id = format_frame_id(i);
      frame.labels = label_patches(spec, grid);
      write_frame(out / split, frame);
    }
  }
  std::cout << "wrote " << a.frames << " train + " << a.val_frames << " val frames to " << out.string() << '\n';
  return kExitOk;
}

// --- pretrain --------------------------------------------------------------

struct PretrainArgs {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::size_t stride = 1;
  bool quiet = false;
  ModelFlags model;
  TrainFlags train;
};

int cmd_pretrain(PretrainArgs& a, OptionSet& opts) {
  const auto threads = resolve_threads(a.threads);
  const auto cfg = a.train.resolve(a.seed, threads);
  // Validates the architecture before touching the corpus.
  (void)a.model.resolve(a.model.patch * 6, a.model.patch * 8, a.train.lambda_rgb > 0);
  auto corpus = load_corpus(a.data, a.stride);
  const auto mcfg = a.model.resolve(corpus.train.front().height(), corpus.train.front().width(), cfg.lambda_rgb > 0);
  const fs::path out = a.out;
  write_manifest(out, "pretrain", args_with(opts, a.out, a.seed, a.threads),
                 {{"model", to_json(mcfg)}, {"train", to_json(cfg)}}, a.seed);

  auto model = init_model<float>(mcfg, a.seed);
  std::size_t steps_per_epoch = (corpus.train.size() + cfg.effective_batch() - 1) / cfg.effective_batch();
  const auto metrics = train(model, corpus.train, cfg, corpus.val, [&](const StepRecord& r) {
    if (!a.quiet && (r.step + 1) % steps_per_epoch == 0)
      std::cout << "epoch " << (r.step + 1) / steps_per_epoch << " step " << r.step << " lr " << r.lr << " loss "
                << r.loss << '\n';
  });
  save_checkpoint(model, &cfg, metrics, out / "checkpoint.m3d");
  metrics.write_csv(out / "metrics.csv", out / "val_metrics.csv");
  if (!metrics.validation.empty())
    std::cout << "val loss " << metrics.validation.back().loss << " rmse " << metrics.validation.back().rmse << '\n';
  std::cout << "checkpoint " << (out / "checkpoint.m3d").string() << '\n';
  return kExitOk;
}

// --- probe -----------------------------------------------------------------

struct ProbeArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  bool scratch = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  ModelFlags model;
  ProbeFlags probe;
};

int cmd_probe(ProbeArgs& a, OptionSet& opts) {
  if (a.checkpoint.empty() && !a.scratch) throw ContractError("probe needs --checkpoint or --scratch");
  const auto pcfg = a.probe.resolve(a.seed, resolve_threads(a.threads));
  auto corpus = load_corpus(a.data, 1);
  if (corpus.val.empty()) throw DataError("probe needs a val/ split under " + a.data);
  Mask3dModel<float> model;
  if (!a.checkpoint.empty()) {
    auto ck = load_checkpoint(a.checkpoint);
    model = a.scratch ? init_model<float>(ck.model.config, a.seed) : std::move(ck.model);
  } else {
    model = init_model<float>(a.model.resolve(corpus.train.front().height(), corpus.train.front().width(), false),
                              a.seed);
  }
  if (!a.out.empty())
    write_manifest(a.out, "probe", args_with(opts, a.out, a.seed, a.threads), {{"model", to_json(model.config)}},
                   a.seed);
  const auto r = linear_probe(model, corpus.train, corpus.val, pcfg);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  json report = {{"miou", r.miou}, {"class_iou", json::array()}, {"seed", r.seed}, {"mode", r.descriptor},
                 {"arm", a.scratch ? "scratch" : "pretrained"}};
  for (double v : r.class_iou) report["class_iou"].push_back(std::isnan(v) ? json(nullptr) : json(v));
  if (!a.out.empty()) std::ofstream(fs::path(a.out) / "probe.json") << std::setw(2) << report << '\n';
  std::cout << (a.scratch ? "scratch" : "pretrained") << " mIoU " << r.miou << '\n';
  return kExitOk;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::string out;
  std::string grid = "appendix";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  ModelFlags model;
  TrainFlags train;
  ProbeFlags probe;
};

int cmd_ablate(AblateArgs& a, OptionSet& opts) {
  const auto threads = resolve_threads(a.threads);
  const auto grid = a.grid == "appendix" ? appendix_grid() : parse_grid(a.grid);
  auto cfg = a.train.resolve(a.seed, threads);
  const auto pcfg = a.probe.resolve(a.seed, threads);
  auto corpus = load_corpus(a.data, 1);
  const auto mcfg = a.model.resolve(corpus.train.front().height(), corpus.train.front().width(), cfg.lambda_rgb > 0);
  write_manifest(a.out, "ablate", args_with(opts, a.out, a.seed, a.threads),
                 {{"model", to_json(mcfg)}, {"train", to_json(cfg)}, {"grid_size", grid.size()}}, a.seed);
  cfg.val_every = 0;
  const auto rows = ablation_sweep(corpus.train, corpus.val, grid, mcfg, cfg, pcfg, [](const AblationRow& r) {
    std::cout << r.p_c << ',' << r.p_d << " val_loss " << r.val_loss << " val_rmse " << r.val_rmse << " mIoU "
              << r.probe_miou << (r.label.empty() ? "" : "  [" + r.label + "]") << '\n';
  });
  write_ablation_csv(rows, fs::path(a.out) / "ablation.csv");
  std::cout << "wrote " << rows.size() << " rows to " << (fs::path(a.out) / "ablation.csv").string() << '\n';
  return kExitOk;
}

// --- reconstruct -----------------------------------------------------------

struct ReconstructArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  double rgb_keep = 0.2;
  double depth_keep = 0.2;
  std::size_t frames = 4;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

int cmd_reconstruct(ReconstructArgs& a, OptionSet& opts) {
  if (!(a.rgb_keep >= 0 && a.rgb_keep <= 1 && a.depth_keep >= 0 && a.depth_keep <= 1))
    throw ContractError("keep fractions must lie in [0,1]");
  auto ck = load_checkpoint(a.checkpoint);
  auto corpus = load_corpus(a.data, 1);
  const auto& frames = corpus.val.empty() ? corpus.train : corpus.val;
  write_manifest(a.out, "reconstruct", args_with(opts, a.out, a.seed, a.threads),
                 {{"model", to_json(ck.model.config)}}, a.seed);
  const auto grid = ck.model.config.grid();
  double total = 0;
  const std::size_t count = std::min(a.frames, frames.size());
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = make_rng(a.seed, "reconstruct", i);
    const auto plan = sample_mask_plan(rng, grid, a.rgb_keep, a.depth_keep);
    const auto dump = dump_reconstruction(ck.model, frames[i], plan, a.out, frames[i].frame_id);
    std::cout << frames[i].frame_id << " rmse " << dump.rmse << " m\n";
    total += dump.rmse;
  }
  if (count) std::cout << "mean rmse " << total / static_cast<double>(count) << " m\n";
  return kExitOk;
}

// --- replay ----------------------------------------------------------------

std::vector<std::string> replay_argv(const fs::path& manifest, const std::string& out_override) {
  std::ifstream f(manifest);
  if (!f) throw DataError("cannot read manifest " + manifest.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw DataError(manifest.string() + ": " + e.what());
  }
  std::vector<std::string> argv{m.at("command").get<std::string>()};
  for (const auto& [key, value] : m.at("args").items()) {
    if (key == "out" && !out_override.empty()) {
      argv.insert(argv.end(), {"--out", out_override});
    } else if (value.is_boolean()) {
      if (value.get<bool>()) argv.push_back("--" + key);
    } else if (value.is_string()) {
      if (!value.get<std::string>().empty()) argv.insert(argv.end(), {"--" + key, value.get<std::string>()});
    } else {
      argv.insert(argv.end(), {"--" + key, value.dump()});
    }
  }
  return argv;
}

int dispatch(std::vector<std::string> args, int depth);

int run_parsed(std::vector<std::string> args, int depth) {
  CLI::App app{"Masked RGB-D depth-reconstruction pre-training"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic RGB-D corpus");
  OptionSet gen_opts(gen_cmd);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_opts.add("frames", gen.frames, "Training frames");
  gen_opts.add("val-frames", gen.val_frames, "Validation frames (default frames/4)");
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  gen_opts.add("height", gen.height, "Image height");
  gen_opts.add("width", gen.width, "Image width");
  gen_opts.add("patch", gen.patch, "Patch size used for labels");
  gen_opts.add("holes", gen.holes, "Maximum invalid-depth blobs per frame");
  gen_cmd->add_option("--threads", gen.threads, "Worker threads (0 = MASK3D_THREADS or 1)");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Pre-train on a frame corpus");
  OptionSet pre_opts(pre_cmd);
  pre_opts.add("data", pre.data, "Corpus directory")->required();
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();
  pre_cmd->add_option("--seed", pre.seed, "Master seed")->capture_default_str();
  pre_cmd->add_option("--threads", pre.threads, "Worker threads (0 = MASK3D_THREADS or 1)");
  pre_opts.add("stride", pre.stride, "Use every stride-th training frame");
  pre_opts.flag("quiet", pre.quiet, "No per-epoch output");
  pre.model.bind(pre_opts);
  pre.train.bind(pre_opts);

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Segmentation probe on the color encoder");
  OptionSet probe_opts(probe_cmd);
  probe_opts.add("data", probe.data, "Labeled corpus with train/ and val/")->required();
  probe_opts.add("checkpoint", probe.checkpoint, "Pre-trained checkpoint");
  probe_opts.flag("scratch", probe.scratch, "Use a randomly initialized encoder");
  probe_cmd->add_option("--out", probe.out, "Output directory for probe.json");
  probe_cmd->add_option("--seed", probe.seed, "Master seed")->capture_default_str();
  probe_cmd->add_option("--threads", probe.threads, "Worker threads");
  probe.model.bind(probe_opts);
  probe.probe.bind(probe_opts, "");

  AblateArgs abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Keep-ratio sweep");
  OptionSet abl_opts(abl_cmd);
  abl_opts.add("data", abl.data, "Labeled corpus with train/ and val/")->required();
  abl_cmd->add_option("--out", abl.out, "Output directory")->required();
  abl_opts.add("grid", abl.grid, "'appendix' or a list like 0.2:0.2,1:0");
  abl_cmd->add_option("--seed", abl.seed, "Master seed")->capture_default_str();
  abl_cmd->add_option("--threads", abl.threads, "Worker threads");
  abl.train.epochs = 1;
  abl.model.bind(abl_opts);
  abl.train.bind(abl_opts);
  abl.probe.bind(abl_opts, "probe-");

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Dump depth reconstructions");
  OptionSet rec_opts(rec_cmd);
  rec_opts.add("data", rec.data, "Corpus directory")->required();
  rec_opts.add("checkpoint", rec.checkpoint, "Checkpoint")->required();
  rec_cmd->add_option("--out", rec.out, "Output directory")->required();
  rec_opts.add("rgb-keep", rec.rgb_keep, "Fraction of color patches kept");
  rec_opts.add("depth-keep", rec.depth_keep, "Fraction of depth patches kept");
  rec_opts.add("frames", rec.frames, "Frames to reconstruct");
  rec_cmd->add_option("--seed", rec.seed, "Mask seed")->capture_default_str();
  rec_cmd->add_option("--threads", rec.threads, "Worker threads");

  std::string manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", manifest, "manifest.json")->required();
  replay_cmd->add_option("--out", replay_out, "Override the output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e), kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e), kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadArgs;
  }

  if (*gen_cmd) return cmd_gen(gen, gen_opts);
  if (*pre_cmd) return cmd_pretrain(pre, pre_opts);
  if (*probe_cmd) return cmd_probe(probe, probe_opts);
  if (*abl_cmd) return cmd_ablate(abl, abl_opts);
  if (*rec_cmd) return cmd_reconstruct(rec, rec_opts);
  if (*replay_cmd) {
    if (depth > 0) throw ContractError("a manifest cannot replay another replay");
    return dispatch(replay_argv(manifest, replay_out), depth + 1);
  }
  return kExitBadArgs;
}

int dispatch(std::vector<std::string> args, int depth) {
  try {
    return run_parsed(std::move(args), depth);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadArgs;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadArgs;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const CheckpointError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDataError;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) { return dispatch(args, 0); }

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace mask3d
