#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchpose/dataset.hpp"
#include "patchpose/eval.hpp"
#include "patchpose/histogram.hpp"
#include "patchpose/image_io.hpp"
#include "patchpose/model.hpp"

namespace fs = std::filesystem;
using namespace patchpose;

namespace {

// Exit code 2: bad usage or configuration. Everything else that throws is a
// runtime failure (exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* env = std::getenv("PATCHPOSE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void print_banner(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "# patchpose " << cmd << " configuration\n";
  for (const auto& [k, v] : kv) std::cout << "#   " << k << " = " << v << "\n";
}

std::vector<std::string> collect_images(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw ConfigError("image directory does not exist: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ConfigError("no PNG/JPEG images found in " + dir);
  return paths;
}

std::array<double, 3> parse_ratios(const std::string& text) {
  std::array<double, 3> r{};
  std::istringstream ss(text);
  std::string tok;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(ss, tok, ':')) throw ConfigError("split must be a:b:c, got " + text);
    r[i] = std::stod(tok);
  }
  return r;
}

Patch image_to_patch(const SourceImage& img) {
  if (img.width != img.height)
    throw ConfigError("patch image must be square, got " + std::to_string(img.width) +
                      "x" + std::to_string(img.height));
  if (img.width % 32 != 0)
    throw ConfigError("patch image side must be a multiple of 32");
  const int f = img.width / 32;
  Patch p = Patch::zeros(32, 32);
  const double inv = 1.0 / (f * f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += img.at(y * f + dy, x * f + dx, c);
        p.at(c, y, x) = static_cast<float>(acc * inv);
      }
  return p;
}

void print_histogram(const char* name, const PoseHistogram& h) {
  std::ios state(nullptr);
  state.copyfmt(std::cout);
  std::cout << name << ":" << std::fixed << std::setprecision(4);
  for (double v : h.bins) std::cout << " " << v;
  std::cout << "\n";
  std::cout.copyfmt(state);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string images_dir;
  std::string out_dir;
  std::string mode = "grid";
  std::uint64_t seed = 0;
  int keypoints = 3;
  int pairs = 1000;
  double prune_fraction = 0.2;
  std::string split_text = "0.98:0.01:0.01";
  int crop = 64;
  int patch = 32;
  int threads = default_threads();
};

int run_gen(const GenArgs& args) {
  print_banner("gen", {{"images", args.images_dir},
                       {"out", args.out_dir},
                       {"mode", args.mode},
                       {"seed", std::to_string(args.seed)},
                       {"keypoints", std::to_string(args.keypoints)},
                       {"pairs", std::to_string(args.pairs)},
                       {"prune", std::to_string(args.prune_fraction)},
                       {"split", args.split_text},
                       {"crop", std::to_string(args.crop)},
                       {"patch", std::to_string(args.patch)},
                       {"threads", std::to_string(args.threads)}});
  if (args.mode != "grid" && args.mode != "continuous")
    throw ConfigError("mode must be grid or continuous, got " + args.mode);
  const std::vector<std::string> images = collect_images(args.images_dir);
  const std::array<double, 3> ratios = parse_ratios(args.split_text);

  GenConfig cfg;
  cfg.mode = args.mode == "grid" ? GenConfig::Mode::GridA : GenConfig::Mode::ContinuousB;
  cfg.seed = args.seed;
  cfg.keypoints_per_image = args.keypoints;
  cfg.pairs = args.pairs;
  cfg.prune_fraction = args.prune_fraction;
  cfg.split_ratios = ratios;
  cfg.crop_size = args.crop;
  cfg.output_size = args.patch;
  cfg.threads = args.threads;

  GenStats stats;
  Dataset ds = cfg.mode == GenConfig::Mode::GridA
                   ? generate_grid(images, cfg, &stats)
                   : generate_continuous(images, cfg, &stats);
  std::cout << "images: " << stats.images << ", keypoints: " << stats.keypoints
            << " (skipped " << stats.keypoints_skipped << ")\n";
  std::cout << "generated pairs: " << ds.size() << "\n";

  ds = prune(ds, cfg.prune_fraction, {}, cfg.threads);
  std::cout << "after pruning: " << ds.size() << " pairs\n";

  const SplitResult splits = split(ds, ratios, cfg.seed);
  save(splits.train, (fs::path(args.out_dir) / "train").string());
  save(splits.val, (fs::path(args.out_dir) / "val").string());
  save(splits.test, (fs::path(args.out_dir) / "test").string());
  std::cout << "train: " << splits.train.size() << ", val: " << splits.val.size()
            << ", test: " << splits.test.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  int epochs = 10;
  double lr = 3.0;
  double momentum = 0.9;
  int batch = 64;
  double tau = 20.0;
  std::uint64_t seed = 0;
  std::vector<int> widths{16, 32, 64, 128};
  int head_hidden = 128;
  bool separate_encoders = false;
  int threads = default_threads();
  int checkpoint_interval = 0;
  double stop_scale_acc = 0.0;
  double stop_ori_acc = 0.0;
};

int run_train(const TrainArgs& args) {
  std::ostringstream widths;
  for (size_t i = 0; i < args.widths.size(); ++i)
    widths << (i ? "," : "") << args.widths[i];
  print_banner("train", {{"data", args.data_dir},
                         {"out", args.out_dir},
                         {"epochs", std::to_string(args.epochs)},
                         {"lr", std::to_string(args.lr)},
                         {"momentum", std::to_string(args.momentum)},
                         {"batch", std::to_string(args.batch)},
                         {"tau", std::to_string(args.tau)},
                         {"seed", std::to_string(args.seed)},
                         {"widths", widths.str()},
                         {"head_hidden", std::to_string(args.head_hidden)},
                         {"separate_encoders", args.separate_encoders ? "true" : "false"},
                         {"threads", std::to_string(args.threads)}});
  if (!fs::is_directory(args.data_dir))
    throw ConfigError("dataset directory does not exist: " + args.data_dir);

  const Dataset train_split = load((fs::path(args.data_dir) / "train").string());
  Dataset val_split;
  if (fs::exists(fs::path(args.data_dir) / "val" / "manifest.jsonl"))
    val_split = load((fs::path(args.data_dir) / "val").string());

  ModelConfig mcfg;
  mcfg.conv_channels = args.widths;
  mcfg.head_hidden = args.head_hidden;
  mcfg.temperature = args.tau;
  mcfg.shared_encoder = !args.separate_encoders;
  mcfg.init_seed = args.seed + 1;
  EstimatorModel model(mcfg);
  std::cout << "parameters: " << model.parameter_count() << "\n";

  TrainConfig tcfg;
  tcfg.batch_size = args.batch;
  tcfg.learning_rate = args.lr;
  tcfg.momentum = args.momentum;
  tcfg.epochs = args.epochs;
  tcfg.seed = args.seed;
  tcfg.threads = args.threads;
  tcfg.checkpoint_interval = args.checkpoint_interval;
  tcfg.checkpoint_dir = (fs::path(args.out_dir) / "checkpoints").string();
  tcfg.stop_val_scale_acc = args.stop_scale_acc;
  tcfg.stop_val_ori_acc = args.stop_ori_acc;

  fs::create_directories(args.out_dir);
  std::ofstream curve(fs::path(args.out_dir) / "loss_curve.csv");
  curve << "epoch,mean_loss,val_scale_acc,val_ori_acc\n";
  const TrainResult result =
      train(model, train_split, val_split, tcfg, [&](const EpochStats& s) {
        std::cout << "epoch " << s.epoch << ": loss " << s.mean_loss << ", val scale@1/3 "
                  << s.val_scale_acc << ", val ori@pi/18 " << s.val_ori_acc << std::endl;
        curve << s.epoch << "," << s.mean_loss << "," << s.val_scale_acc << ","
              << s.val_ori_acc << "\n";
      });

  TrainState st;
  st.step = result.steps;
  save_checkpoint(result.model, st, (fs::path(args.out_dir) / "best.ppck").string());
  std::cout << "best epoch: " << result.best_epoch << ", checkpoint: "
            << (fs::path(args.out_dir) / "best.ppck").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data_dir;
  std::string checkpoint;
  std::string out_dir;
  int topk = 4;
  int threads = default_threads();
};

int run_eval(const EvalArgs& args) {
  print_banner("eval", {{"data", args.data_dir},
                        {"checkpoint", args.checkpoint},
                        {"out", args.out_dir},
                        {"topk", std::to_string(args.topk)},
                        {"threads", std::to_string(args.threads)}});
  const fs::path direct = fs::path(args.data_dir) / "manifest.jsonl";
  const std::string split_dir = fs::exists(direct)
                                    ? args.data_dir
                                    : (fs::path(args.data_dir) / "test").string();
  if (!fs::exists(fs::path(split_dir) / "manifest.jsonl"))
    throw ConfigError("no dataset manifest under " + args.data_dir);
  if (!fs::exists(args.checkpoint))
    throw ConfigError("checkpoint does not exist: " + args.checkpoint);

  const Dataset test_split = load(split_dir);
  const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint);
  const EvalReport report = full_report(test_split, model_predictor(ckpt.model), {},
                                        args.topk, args.threads);
  print_report(report, std::cout);
  fs::create_directories(args.out_dir);
  write_report_json(report, (fs::path(args.out_dir) / "report.json").string());
  write_rangewise_svg(report.rangewise, (fs::path(args.out_dir) / "rangewise.svg").string());
  std::cout << "report: " << (fs::path(args.out_dir) / "report.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string patch_path;
  std::string patch2_path;
  int topk = 1;
};

int run_infer(const InferArgs& args) {
  print_banner("infer", {{"checkpoint", args.checkpoint},
                         {"patch", args.patch_path},
                         {"patch2", args.patch2_path.empty() ? "-" : args.patch2_path},
                         {"topk", std::to_string(args.topk)}});
  if (!fs::exists(args.checkpoint))
    throw ConfigError("checkpoint does not exist: " + args.checkpoint);
  if (!fs::exists(args.patch_path))
    throw ConfigError("patch image does not exist: " + args.patch_path);

  const LoadedCheckpoint ckpt = load_checkpoint(args.checkpoint);
  const Patch a = image_to_patch(load_image(args.patch_path));
  const auto [hs_a, ho_a] = ckpt.model.forward(a);

  print_histogram("scale histogram (A)", hs_a);
  print_histogram("orientation histogram (A)", ho_a);
  std::cout << std::defaultfloat << std::setprecision(6);
  std::cout << "A: scale " << decode_argmax(hs_a) << ", orientation "
            << decode_argmax(ho_a) << " rad\n";
  if (args.topk > 1) {
    std::cout << "A top-" << args.topk << " scale:";
    for (double v : decode_topk(hs_a, args.topk)) std::cout << " " << v;
    std::cout << "\nA top-" << args.topk << " orientation:";
    for (double v : decode_topk(ho_a, args.topk)) std::cout << " " << v;
    std::cout << "\n";
  }

  if (!args.patch2_path.empty()) {
    if (!fs::exists(args.patch2_path))
      throw ConfigError("patch image does not exist: " + args.patch2_path);
    const Patch b = image_to_patch(load_image(args.patch2_path));
    const auto [hs_b, ho_b] = ckpt.model.forward(b);
    print_histogram("scale histogram (B)", hs_b);
    print_histogram("orientation histogram (B)", ho_b);
    std::cout << "B: scale " << decode_argmax(hs_b) << ", orientation "
              << decode_argmax(ho_b) << " rad\n";
    if (args.topk > 1) {
      std::cout << "B top-" << args.topk << " scale:";
      for (double v : decode_topk(hs_b, args.topk)) std::cout << " " << v;
      std::cout << "\nB top-" << args.topk << " orientation:";
      for (double v : decode_topk(ho_b, args.topk)) std::cout << " " << v;
      std::cout << "\n";
    }
    const double ds = std::log2(decode_argmax(hs_b) / decode_argmax(hs_a));
    double dor = std::fmod(decode_argmax(ho_b) - decode_argmax(ho_a), kTwoPi);
    if (dor < 0.0) dor += kTwoPi;
    std::cout << "relative pose: delta_s " << ds << " (log2), delta_o " << dor
              << " rad\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

void inspect_split(const std::string& name, const std::string& dir) {
  const Dataset ds = load(dir);
  double min_ds = 0.0, max_ds = 0.0, min_do = 0.0, max_do = 0.0;
  if (!ds.empty()) {
    min_ds = max_ds = ds.records.front().pose.delta_s;
    min_do = max_do = ds.records.front().pose.delta_o;
    for (const auto& r : ds.records) {
      min_ds = std::min(min_ds, r.pose.delta_s);
      max_ds = std::max(max_ds, r.pose.delta_s);
      min_do = std::min(min_do, r.pose.delta_o);
      max_do = std::max(max_do, r.pose.delta_o);
    }
  }
  std::cout << name << ": " << ds.size() << " pairs, patch " << ds.patch_shape[0] << "x"
            << ds.patch_shape[1] << "x" << ds.patch_shape[2] << ", delta_s ["
            << min_ds << ", " << max_ds << "], delta_o [" << min_do << ", " << max_do
            << "]\n";
}

int run_inspect(const std::string& data_dir) {
  print_banner("inspect", {{"data", data_dir}});
  if (fs::exists(fs::path(data_dir) / "manifest.jsonl")) {
    inspect_split("dataset", data_dir);
    return 0;
  }
  bool found = false;
  for (const char* name : {"train", "val", "test"}) {
    const fs::path dir = fs::path(data_dir) / name;
    if (fs::exists(dir / "manifest.jsonl")) {
      inspect_split(name, dir.string());
      found = true;
    }
  }
  if (!found) throw ConfigError("no dataset manifest under " + data_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch pose estimation: dataset generation, training, evaluation"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a patch-pair dataset");
  gen->set_config("--config", "", "flat key=value config file");
  gen->add_option("--images", gen_args.images_dir, "source image directory")->required();
  gen->add_option("--out", gen_args.out_dir, "output dataset directory")->required();
  gen->add_option("--mode", gen_args.mode, "grid | continuous");
  gen->add_option("--seed", gen_args.seed, "RNG seed");
  gen->add_option("--keypoints", gen_args.keypoints, "keypoints per image");
  gen->add_option("--pairs", gen_args.pairs, "total pairs (continuous mode)");
  gen->add_option("--prune", gen_args.prune_fraction, "fraction of patches to prune");
  gen->add_option("--split", gen_args.split_text, "train:val:test ratios");
  gen->add_option("--crop", gen_args.crop, "crop size in source pixels");
  gen->add_option("--patch", gen_args.patch, "output patch size");
  gen->add_option("--threads", gen_args.threads, "worker threads");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train the pose estimator");
  train_cmd->set_config("--config", "", "flat key=value config file");
  train_cmd->add_option("--data", train_args.data_dir, "dataset root (gen --out)")->required();
  train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--epochs", train_args.epochs, "training epochs");
  train_cmd->add_option("--lr", train_args.lr, "learning rate");
  train_cmd->add_option("--momentum", train_args.momentum, "SGD momentum");
  train_cmd->add_option("--batch", train_args.batch, "batch size");
  train_cmd->add_option("--tau", train_args.tau, "softmax temperature (logit multiplier)");
  train_cmd->add_option("--seed", train_args.seed, "RNG seed");
  train_cmd->add_option("--width", train_args.widths, "conv channels")->delimiter(',');
  train_cmd->add_option("--head-hidden", train_args.head_hidden, "MLP hidden width");
  train_cmd->add_flag("--separate-encoders", train_args.separate_encoders,
                      "train separate conv stacks per head");
  train_cmd->add_option("--threads", train_args.threads, "worker threads");
  train_cmd->add_option("--checkpoint-interval", train_args.checkpoint_interval,
                        "epochs between checkpoints (0 = off)");
  train_cmd->add_option("--stop-scale-acc", train_args.stop_scale_acc,
                        "early stop once val scale accuracy reaches this");
  train_cmd->add_option("--stop-ori-acc", train_args.stop_ori_acc,
                        "early stop once val orientation accuracy reaches this");

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->set_config("--config", "", "flat key=value config file");
  eval_cmd->add_option("--data", eval_args.data_dir, "dataset root or split dir")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--out", eval_args.out_dir, "report output directory")->required();
  eval_cmd->add_option("--topk", eval_args.topk, "max k for top-k recall");
  eval_cmd->add_option("--threads", eval_args.threads, "worker threads");

  InferArgs infer_args;
  CLI::App* infer_cmd = app.add_subcommand("infer", "decode poses for patch images");
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint, "model checkpoint")->required();
  infer_cmd->add_option("--patch", infer_args.patch_path, "patch image (square, side % 32 == 0)")->required();
  infer_cmd->add_option("--patch2", infer_args.patch2_path, "second patch image");
  infer_cmd->add_option("--topk", infer_args.topk, "candidates to print per axis");

  std::string inspect_dir;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "summarize a dataset");
  inspect_cmd->add_option("--data", inspect_dir, "dataset root or split dir")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(gen_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (infer_cmd->parsed()) return run_infer(infer_args);
    if (inspect_cmd->parsed()) return run_inspect(inspect_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
