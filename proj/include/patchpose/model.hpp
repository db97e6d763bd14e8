#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "patchpose/dataset.hpp"
#include "patchpose/histogram.hpp"
#include "patchpose/transform.hpp"

namespace patchpose {

struct ModelConfig {
  std::vector<int> conv_channels{16, 32, 64, 128};  // stride-2 conv stack
  int head_hidden = 128;
  int head_layers = 4;  // dense layers per head, output layer included
  int scale_bins = 13;
  int orientation_bins = 36;
  double temperature = 20.0;  // logit multiplier before softmax
  bool shared_encoder = true;
  int input_size = 32;
  std::uint64_t init_seed = 1;
};

struct ConvLayer {
  int in_c, out_c;
  int in_h, in_w, out_h, out_w;  // stride 2, pad 1, 3x3 kernel
  size_t w_off, b_off;
};

struct DenseLayer {
  int in_n, out_n;
  size_t w_off, b_off;
};

struct ModelLayout {
  std::vector<ConvLayer> encoder;    // shared (or scale) encoder
  std::vector<ConvLayer> encoder_o;  // orientation encoder when not shared
  std::vector<DenseLayer> head_s;
  std::vector<DenseLayer> head_o;
  size_t param_count = 0;
};

// Forward activations for one patch, kept for backprop. Reusable across
// calls; buffers are overwritten in place.
struct Tape {
  std::vector<std::vector<double>> enc_in, enc_pre;      // enc_in has one extra entry
  std::vector<std::vector<double>> enc_o_in, enc_o_pre;  // (the input to the pool)
  std::vector<double> feat_s, feat_o;
  std::vector<std::vector<double>> head_s_in, head_s_pre;
  std::vector<std::vector<double>> head_o_in, head_o_pre;
  std::vector<double> probs_s, probs_o;
};

struct PairWorkspace {
  Tape a, b;
};

struct PairLossBreakdown {
  double scale = 0.0;
  double orientation = 0.0;
  double total() const { return scale + orientation; }
};

// Conv encoder with global average pooling feeding two softmax MLP heads.
// He-initialized from cfg.init_seed; all arithmetic in 64-bit floats.
class EstimatorModel {
 public:
  explicit EstimatorModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const ModelLayout& layout() const { return layout_; }
  size_t parameter_count() const { return params_.size(); }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  // Normalized (scale, orientation) histograms for a 3 x input x input patch.
  std::pair<PoseHistogram, PoseHistogram> forward(const Patch& patch) const;
  std::pair<PoseHistogram, PoseHistogram> forward(const Patch& patch, Tape& tape) const;

  // Gradients of an arbitrary objective through one patch's forward pass:
  // dh_s/dh_o are d(objective)/d(histogram bin); parameter gradients are
  // accumulated into grad (sized parameter_count()).
  void backward(const Tape& tape, const std::vector<double>& dh_s,
                const std::vector<double>& dh_o, std::vector<double>& grad) const;

  // Symmetric scale + orientation losses for one pair.
  PairLossBreakdown pair_loss(const Patch& a, const Patch& b,
                              const RelativePose& pose) const;

  // Loss plus accumulated parameter gradients of both symmetric objectives.
  PairLossBreakdown pair_backward(const Patch& a, const Patch& b,
                                  const RelativePose& pose, std::vector<double>& grad,
                                  PairWorkspace& ws) const;
  PairLossBreakdown pair_backward(const Patch& a, const Patch& b,
                                  const RelativePose& pose,
                                  std::vector<double>& grad) const;

 private:
  ModelConfig cfg_;
  ModelLayout layout_;
  std::vector<double> params_;
};

struct SgdState {
  std::vector<double> velocity;
};

// Classical momentum: v <- mu*v + g; p <- p - lr*v. Throws on non-finite
// gradients (the step is aborted, parameters untouched).
void sgd_step(EstimatorModel& model, const std::vector<double>& grads, SgdState& state,
              double learning_rate, double momentum);

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 3.0;
  double momentum = 0.9;
  int epochs = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  int checkpoint_interval = 0;  // epochs between checkpoint writes, 0 = off
  std::string checkpoint_dir;
  // Early stop once both validation accuracies reach these levels (0 = off).
  double stop_val_scale_acc = 0.0;
  double stop_val_ori_acc = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_scale_acc = 0.0;  // at 1/3 log2 units
  double val_ori_acc = 0.0;    // at pi/18 radians
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
  EstimatorModel model;  // best validation score (last epoch when no val split)
  std::vector<EpochStats> curve;
  int best_epoch = -1;
  std::int64_t steps = 0;
};

// Seeded minibatch SGD on the symmetric alignment losses. Shuffles pair
// order each epoch; evaluates argmax-decode accuracy on the val split.
TrainResult train(const EstimatorModel& init, const Dataset& train_split,
                  const Dataset& val_split, const TrainConfig& cfg,
                  const EpochCallback& callback = {});

struct TrainState {
  SgdState sgd;
  std::int64_t step = 0;
  std::string rng_state;  // serialized shuffle RNG
};

// Binary checkpoint: "PPCK" magic, version, JSON config echo, f64 parameter
// and momentum vectors, trailing CRC32. Round trip is bit-exact.
void save_checkpoint(const EstimatorModel& model, const TrainState& state,
                     const std::string& path);

struct LoadedCheckpoint {
  EstimatorModel model;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace patchpose
