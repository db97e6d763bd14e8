#include "patchpose/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <zlib.h>

#include <json.hpp>

#include "patchpose/eval.hpp"
#include "patchpose/parallel.hpp"

namespace patchpose {

namespace {

int conv_out_size(int in) { return (in - 1) / 2 + 1; }  // stride 2, pad 1, k 3

ModelLayout build_layout(const ModelConfig& cfg) {
  ModelLayout lt;
  size_t off = 0;
  auto add_conv = [&](std::vector<ConvLayer>& stack, int in_c, int in_hw) {
    for (int out_c : cfg.conv_channels) {
      ConvLayer l;
      l.in_c = in_c;
      l.out_c = out_c;
      l.in_h = l.in_w = in_hw;
      l.out_h = l.out_w = conv_out_size(in_hw);
      l.w_off = off;
      off += static_cast<size_t>(out_c) * in_c * 9;
      l.b_off = off;
      off += static_cast<size_t>(out_c);
      stack.push_back(l);
      in_c = out_c;
      in_hw = l.out_h;
    }
  };
  auto add_head = [&](std::vector<DenseLayer>& head, int out_bins) {
    int in_n = cfg.conv_channels.back();
    for (int l = 0; l < cfg.head_layers; ++l) {
      const int out_n = l + 1 == cfg.head_layers ? out_bins : cfg.head_hidden;
      DenseLayer d;
      d.in_n = in_n;
      d.out_n = out_n;
      d.w_off = off;
      off += static_cast<size_t>(out_n) * in_n;
      d.b_off = off;
      off += static_cast<size_t>(out_n);
      head.push_back(d);
      in_n = out_n;
    }
  };
  add_conv(lt.encoder, 3, cfg.input_size);
  if (!cfg.shared_encoder) add_conv(lt.encoder_o, 3, cfg.input_size);
  add_head(lt.head_s, cfg.scale_bins);
  add_head(lt.head_o, cfg.orientation_bins);
  lt.param_count = off;
  return lt;
}

void conv_forward(const ConvLayer& L, const double* p, const double* x, double* z) {
  const int ihw = L.in_h * L.in_w;
  for (int oc = 0; oc < L.out_c; ++oc) {
    const double* w_oc = p + L.w_off + static_cast<size_t>(oc) * L.in_c * 9;
    const double bias = p[L.b_off + oc];
    double* zp = z + static_cast<size_t>(oc) * L.out_h * L.out_w;
    for (int oy = 0; oy < L.out_h; ++oy) {
      const int iy0 = oy * 2 - 1;
      for (int ox = 0; ox < L.out_w; ++ox) {
        const int ix0 = ox * 2 - 1;
        double acc = bias;
        for (int ic = 0; ic < L.in_c; ++ic) {
          const double* xp = x + static_cast<size_t>(ic) * ihw;
          const double* w = w_oc + ic * 9;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= L.in_h) continue;
            const double* xr = xp + static_cast<size_t>(iy) * L.in_w;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= L.in_w) continue;
              acc += w[ky * 3 + kx] * xr[ix];
            }
          }
        }
        zp[oy * L.out_w + ox] = acc;
      }
    }
  }
}

// dz is already masked through the ReLU; dx may be null for the first layer.
void conv_backward(const ConvLayer& L, const double* p, const double* x,
                   const double* dz, double* dx, double* dp) {
  const int ihw = L.in_h * L.in_w;
  if (dx) std::fill(dx, dx + static_cast<size_t>(L.in_c) * ihw, 0.0);
  for (int oc = 0; oc < L.out_c; ++oc) {
    const double* w_oc = p + L.w_off + static_cast<size_t>(oc) * L.in_c * 9;
    double* gw_oc = dp + L.w_off + static_cast<size_t>(oc) * L.in_c * 9;
    double gb = 0.0;
    const double* dzp = dz + static_cast<size_t>(oc) * L.out_h * L.out_w;
    for (int oy = 0; oy < L.out_h; ++oy) {
      const int iy0 = oy * 2 - 1;
      for (int ox = 0; ox < L.out_w; ++ox) {
        const double g = dzp[oy * L.out_w + ox];
        if (g == 0.0) continue;
        const int ix0 = ox * 2 - 1;
        gb += g;
        for (int ic = 0; ic < L.in_c; ++ic) {
          const double* xp = x + static_cast<size_t>(ic) * ihw;
          const double* w = w_oc + ic * 9;
          double* gw = gw_oc + ic * 9;
          double* dxp = dx ? dx + static_cast<size_t>(ic) * ihw : nullptr;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= L.in_h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= L.in_w) continue;
              gw[ky * 3 + kx] += g * xp[iy * L.in_w + ix];
              if (dxp) dxp[iy * L.in_w + ix] += g * w[ky * 3 + kx];
            }
          }
        }
      }
    }
    dp[L.b_off + oc] += gb;
  }
}

void dense_forward(const DenseLayer& L, const double* p, const double* x, double* z) {
  for (int o = 0; o < L.out_n; ++o) {
    const double* w = p + L.w_off + static_cast<size_t>(o) * L.in_n;
    double acc = p[L.b_off + o];
    for (int i = 0; i < L.in_n; ++i) acc += w[i] * x[i];
    z[o] = acc;
  }
}

void dense_backward(const DenseLayer& L, const double* p, const double* x,
                    const double* dz, double* dx, double* dp) {
  if (dx) std::fill(dx, dx + L.in_n, 0.0);
  for (int o = 0; o < L.out_n; ++o) {
    const double g = dz[o];
    dp[L.b_off + o] += g;
    const double* w = p + L.w_off + static_cast<size_t>(o) * L.in_n;
    double* gw = dp + L.w_off + static_cast<size_t>(o) * L.in_n;
    for (int i = 0; i < L.in_n; ++i) {
      gw[i] += g * x[i];
      if (dx) dx[i] += g * w[i];
    }
  }
}

void softmax_with_temperature(const std::vector<double>& logits, double tau,
                              std::vector<double>& probs) {
  probs.resize(logits.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) m = std::max(m, tau * z);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(tau * logits[i] - m);
    sum += probs[i];
  }
  for (double& v : probs) v /= sum;
}

// d(objective)/d(logits) from d(objective)/d(probs).
void softmax_backward(const std::vector<double>& probs, const std::vector<double>& dprobs,
                      double tau, std::vector<double>& dlogits) {
  dlogits.resize(probs.size());
  double dot = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) dot += dprobs[i] * probs[i];
  for (size_t i = 0; i < probs.size(); ++i) dlogits[i] = tau * probs[i] * (dprobs[i] - dot);
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v)
    if (x < 0.0) x = 0.0;
}

std::vector<double> patch_to_input(const Patch& patch, int expected_size) {
  if (patch.channels != 3 || patch.height != expected_size || patch.width != expected_size)
    throw std::invalid_argument("forward: expected a 3x" + std::to_string(expected_size) +
                                "x" + std::to_string(expected_size) + " patch, got " +
                                std::to_string(patch.channels) + "x" +
                                std::to_string(patch.height) + "x" +
                                std::to_string(patch.width));
  return std::vector<double>(patch.values.begin(), patch.values.end());
}

}  // namespace

EstimatorModel::EstimatorModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.conv_channels.empty()) throw std::invalid_argument("model: empty conv stack");
  if (cfg.head_layers < 1) throw std::invalid_argument("model: head needs layers");
  if (cfg.temperature <= 0.0) throw std::invalid_argument("model: temperature must be > 0");
  layout_ = build_layout(cfg_);
  params_.assign(layout_.param_count, 0.0);

  // He fan-in init, zero biases.
  std::mt19937_64 rng(cfg_.init_seed);
  auto init_conv = [&](const std::vector<ConvLayer>& stack) {
    for (const ConvLayer& l : stack) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (l.in_c * 9)));
      for (size_t i = 0; i < static_cast<size_t>(l.out_c) * l.in_c * 9; ++i)
        params_[l.w_off + i] = dist(rng);
    }
  };
  auto init_head = [&](const std::vector<DenseLayer>& head) {
    for (const DenseLayer& l : head) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / l.in_n));
      for (size_t i = 0; i < static_cast<size_t>(l.out_n) * l.in_n; ++i)
        params_[l.w_off + i] = dist(rng);
    }
  };
  init_conv(layout_.encoder);
  init_conv(layout_.encoder_o);
  init_head(layout_.head_s);
  init_head(layout_.head_o);
}

namespace {

// Runs the conv stack + pooling, recording activations.
void encoder_forward(const std::vector<ConvLayer>& stack, const double* params,
                     std::vector<double> input, std::vector<std::vector<double>>& ins,
                     std::vector<std::vector<double>>& pres, std::vector<double>& feat) {
  const size_t n = stack.size();
  ins.resize(n + 1);
  pres.resize(n);
  ins[0] = std::move(input);
  for (size_t l = 0; l < n; ++l) {
    const ConvLayer& L = stack[l];
    pres[l].resize(static_cast<size_t>(L.out_c) * L.out_h * L.out_w);
    conv_forward(L, params, ins[l].data(), pres[l].data());
    ins[l + 1] = pres[l];
    relu_inplace(ins[l + 1]);
  }
  const ConvLayer& last = stack.back();
  const int hw = last.out_h * last.out_w;
  feat.resize(last.out_c);
  for (int c = 0; c < last.out_c; ++c) {
    double acc = 0.0;
    const double* a = ins[n].data() + static_cast<size_t>(c) * hw;
    for (int i = 0; i < hw; ++i) acc += a[i];
    feat[c] = acc / hw;
  }
}

void head_forward(const std::vector<DenseLayer>& head, const double* params,
                  const std::vector<double>& feat, double tau,
                  std::vector<std::vector<double>>& ins,
                  std::vector<std::vector<double>>& pres, std::vector<double>& probs) {
  const size_t n = head.size();
  ins.resize(n);
  pres.resize(n);
  ins[0] = feat;
  for (size_t l = 0; l < n; ++l) {
    pres[l].resize(head[l].out_n);
    dense_forward(head[l], params, ins[l].data(), pres[l].data());
    if (l + 1 < n) {
      ins[l + 1] = pres[l];
      relu_inplace(ins[l + 1]);
    }
  }
  softmax_with_temperature(pres[n - 1], tau, probs);
}

// Backprop through the dense chain; returns d(feat) in dfeat.
void head_backward(const std::vector<DenseLayer>& head, const double* params,
                   const std::vector<std::vector<double>>& ins,
                   const std::vector<std::vector<double>>& pres,
                   std::vector<double> dlogits, std::vector<double>& dfeat,
                   double* dp) {
  std::vector<double> dz = std::move(dlogits);
  std::vector<double> dx;
  for (size_t l = head.size(); l-- > 0;) {
    dx.resize(head[l].in_n);
    dense_backward(head[l], params, ins[l].data(), dz.data(), dx.data(), dp);
    if (l > 0) {
      // through the ReLU that produced ins[l]
      for (int i = 0; i < head[l].in_n; ++i)
        if (pres[l - 1][i] <= 0.0) dx[i] = 0.0;
    }
    dz = dx;
  }
  dfeat = std::move(dz);
}

void encoder_backward(const std::vector<ConvLayer>& stack, const double* params,
                      const std::vector<std::vector<double>>& ins,
                      const std::vector<std::vector<double>>& pres,
                      const std::vector<double>& dfeat, double* dp) {
  const size_t n = stack.size();
  const ConvLayer& last = stack.back();
  const int hw = last.out_h * last.out_w;
  std::vector<double> da(static_cast<size_t>(last.out_c) * hw);
  for (int c = 0; c < last.out_c; ++c) {
    const double g = dfeat[c] / hw;
    for (int i = 0; i < hw; ++i) da[static_cast<size_t>(c) * hw + i] = g;
  }
  std::vector<double> dx;
  for (size_t l = n; l-- > 0;) {
    // mask through ReLU
    for (size_t i = 0; i < da.size(); ++i)
      if (pres[l][i] <= 0.0) da[i] = 0.0;
    if (l > 0) {
      dx.resize(ins[l].size());
      conv_backward(stack[l], params, ins[l].data(), da.data(), dx.data(), dp);
      da = dx;
    } else {
      conv_backward(stack[l], params, ins[l].data(), da.data(), nullptr, dp);
    }
  }
}

PoseHistogram probs_to_histogram(const BinSpec& spec, const std::vector<double>& probs) {
  return PoseHistogram{spec, probs};
}

}  // namespace

std::pair<PoseHistogram, PoseHistogram> EstimatorModel::forward(const Patch& patch,
                                                                Tape& tape) const {
  std::vector<double> input = patch_to_input(patch, cfg_.input_size);
  const double* p = params_.data();
  encoder_forward(layout_.encoder, p, std::move(input), tape.enc_in, tape.enc_pre,
                  tape.feat_s);
  if (cfg_.shared_encoder) {
    tape.feat_o = tape.feat_s;
  } else {
    std::vector<double> input2 = patch_to_input(patch, cfg_.input_size);
    encoder_forward(layout_.encoder_o, p, std::move(input2), tape.enc_o_in,
                    tape.enc_o_pre, tape.feat_o);
  }
  head_forward(layout_.head_s, p, tape.feat_s, cfg_.temperature, tape.head_s_in,
               tape.head_s_pre, tape.probs_s);
  head_forward(layout_.head_o, p, tape.feat_o, cfg_.temperature, tape.head_o_in,
               tape.head_o_pre, tape.probs_o);
  return {probs_to_histogram(BinSpec::scale(cfg_.scale_bins), tape.probs_s),
          probs_to_histogram(BinSpec::orientation(cfg_.orientation_bins), tape.probs_o)};
}

std::pair<PoseHistogram, PoseHistogram> EstimatorModel::forward(const Patch& patch) const {
  Tape tape;
  return forward(patch, tape);
}

void EstimatorModel::backward(const Tape& tape, const std::vector<double>& dh_s,
                              const std::vector<double>& dh_o,
                              std::vector<double>& grad) const {
  if (grad.size() != params_.size())
    throw std::invalid_argument("backward: gradient buffer has wrong size");
  const double* p = params_.data();
  std::vector<double> dlogits, dfeat_s, dfeat_o;

  softmax_backward(tape.probs_s, dh_s, cfg_.temperature, dlogits);
  head_backward(layout_.head_s, p, tape.head_s_in, tape.head_s_pre, std::move(dlogits),
                dfeat_s, grad.data());
  softmax_backward(tape.probs_o, dh_o, cfg_.temperature, dlogits);
  head_backward(layout_.head_o, p, tape.head_o_in, tape.head_o_pre, std::move(dlogits),
                dfeat_o, grad.data());

  if (cfg_.shared_encoder) {
    for (size_t i = 0; i < dfeat_s.size(); ++i) dfeat_s[i] += dfeat_o[i];
    encoder_backward(layout_.encoder, p, tape.enc_in, tape.enc_pre, dfeat_s, grad.data());
  } else {
    encoder_backward(layout_.encoder, p, tape.enc_in, tape.enc_pre, dfeat_s, grad.data());
    encoder_backward(layout_.encoder_o, p, tape.enc_o_in, tape.enc_o_pre, dfeat_o,
                     grad.data());
  }
}

PairLossBreakdown EstimatorModel::pair_loss(const Patch& a, const Patch& b,
                                            const RelativePose& pose) const {
  const auto [hs_a, ho_a] = forward(a);
  const auto [hs_b, ho_b] = forward(b);
  return {symmetric_loss(hs_a, hs_b, pose, PoseAxis::Scale),
          symmetric_loss(ho_a, ho_b, pose, PoseAxis::Orientation)};
}

PairLossBreakdown EstimatorModel::pair_backward(const Patch& a, const Patch& b,
                                                const RelativePose& pose,
                                                std::vector<double>& grad,
                                                PairWorkspace& ws) const {
  const auto [hs_a, ho_a] = forward(a, ws.a);
  const auto [hs_b, ho_b] = forward(b, ws.b);
  PairLossBreakdown loss{symmetric_loss(hs_a, hs_b, pose, PoseAxis::Scale),
                         symmetric_loss(ho_a, ho_b, pose, PoseAxis::Orientation)};
  const LossGradients gs = symmetric_loss_gradients(hs_a, hs_b, pose, PoseAxis::Scale);
  const LossGradients go =
      symmetric_loss_gradients(ho_a, ho_b, pose, PoseAxis::Orientation);
  backward(ws.a, gs.wrt_h, go.wrt_h, grad);
  backward(ws.b, gs.wrt_h_prime, go.wrt_h_prime, grad);
  return loss;
}

PairLossBreakdown EstimatorModel::pair_backward(const Patch& a, const Patch& b,
                                                const RelativePose& pose,
                                                std::vector<double>& grad) const {
  PairWorkspace ws;
  return pair_backward(a, b, pose, grad, ws);
}

void sgd_step(EstimatorModel& model, const std::vector<double>& grads, SgdState& state,
              double learning_rate, double momentum) {
  auto& params = model.parameters();
  if (grads.size() != params.size())
    throw std::invalid_argument("sgd_step: gradient size mismatch");
  if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
  if (state.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: velocity size mismatch");
  for (double g : grads)
    if (!std::isfinite(g))
      throw std::runtime_error("sgd_step: non-finite gradient, step aborted");
  for (size_t i = 0; i < params.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] + grads[i];
    params[i] -= learning_rate * state.velocity[i];
  }
}

namespace {

// Argmax-decode accuracy of the pair's relative pose on the val split.
std::pair<double, double> validation_accuracy(const EstimatorModel& model,
                                              const Dataset& val, int threads) {
  if (val.empty()) return {0.0, 0.0};
  std::vector<char> ok_s(val.size(), 0), ok_o(val.size(), 0);
  parallel_for(val.size(), threads, [&](size_t i) {
    Tape tape;
    const auto [hs_a, ho_a] = model.forward(val.patch_a(i), tape);
    const auto [hs_b, ho_b] = model.forward(val.patch_b(i), tape);
    const RelativePose& pose = val.records[i].pose;
    ok_s[i] = scale_error(decode_argmax(hs_a), decode_argmax(hs_b), pose.delta_s) <=
              1.0 / 3.0 + 1e-12;
    ok_o[i] = orientation_error(decode_argmax(ho_a), decode_argmax(ho_b), pose.delta_o) <=
              kPi / 18.0 + 1e-12;
  });
  double acc_s = 0.0, acc_o = 0.0;
  for (size_t i = 0; i < val.size(); ++i) {
    acc_s += ok_s[i];
    acc_o += ok_o[i];
  }
  return {acc_s / val.size(), acc_o / val.size()};
}

}  // namespace

TrainResult train(const EstimatorModel& init, const Dataset& train_split,
                  const Dataset& val_split, const TrainConfig& cfg,
                  const EpochCallback& callback) {
  if (train_split.empty()) throw std::invalid_argument("train: empty train split");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

  TrainResult result{init, {}, -1, 0};
  EstimatorModel& model = result.model;
  SgdState sgd;
  std::mt19937_64 shuffle_rng(cfg.seed);

  std::vector<size_t> order(train_split.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const int threads = std::max(1, cfg.threads);
  std::vector<std::vector<double>> grads(threads);
  std::vector<PairWorkspace> workspaces(threads);
  std::vector<double> batch_grad(model.parameter_count());

  std::vector<double> best_params;
  double best_score = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t count = std::min<size_t>(cfg.batch_size, order.size() - start);
      std::vector<double> losses(count, 0.0);
      for (auto& g : grads) g.assign(model.parameter_count(), 0.0);

      if (threads == 1) {
        for (size_t j = 0; j < count; ++j) {
          const size_t idx = order[start + j];
          losses[j] = model
                          .pair_backward(train_split.patch_a(idx), train_split.patch_b(idx),
                                         train_split.records[idx].pose, grads[0],
                                         workspaces[0])
                          .total();
        }
      } else {
        // contiguous chunks per worker; gradient reduction stays in worker order
        std::vector<std::thread> pool;
        const size_t chunk = (count + threads - 1) / threads;
        for (int w = 0; w < threads; ++w) {
          const size_t lo = w * chunk, hi = std::min(count, lo + chunk);
          if (lo >= hi) break;
          pool.emplace_back([&, w, lo, hi] {
            for (size_t j = lo; j < hi; ++j) {
              const size_t idx = order[start + j];
              losses[j] = model
                              .pair_backward(train_split.patch_a(idx),
                                             train_split.patch_b(idx),
                                             train_split.records[idx].pose, grads[w],
                                             workspaces[w])
                              .total();
            }
          });
        }
        for (auto& t : pool) t.join();
      }

      batch_grad.assign(model.parameter_count(), 0.0);
      for (const auto& g : grads)
        for (size_t i = 0; i < batch_grad.size(); ++i) batch_grad[i] += g[i];
      const double inv = 1.0 / static_cast<double>(count);
      for (double& g : batch_grad) g *= inv;

      sgd_step(model, batch_grad, sgd, cfg.learning_rate, cfg.momentum);
      ++result.steps;
      for (double l : losses) epoch_loss += l;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = epoch_loss / static_cast<double>(order.size());
    std::tie(stats.val_scale_acc, stats.val_ori_acc) =
        validation_accuracy(model, val_split, threads);
    result.curve.push_back(stats);
    if (callback) callback(stats);

    const double score = val_split.empty()
                             ? -stats.mean_loss
                             : 0.5 * (stats.val_scale_acc + stats.val_ori_acc);
    if (score > best_score) {
      best_score = score;
      best_params = model.parameters();
      result.best_epoch = epoch;
    }

    if (cfg.checkpoint_interval > 0 && !cfg.checkpoint_dir.empty() &&
        (epoch + 1) % cfg.checkpoint_interval == 0) {
      std::ostringstream rng_state;
      rng_state << shuffle_rng;
      TrainState st{sgd, result.steps, rng_state.str()};
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_checkpoint(model, st,
                      (std::filesystem::path(cfg.checkpoint_dir) /
                       ("epoch_" + std::to_string(epoch) + ".ppck"))
                          .string());
    }

    if (cfg.stop_val_scale_acc > 0.0 && cfg.stop_val_ori_acc > 0.0 &&
        stats.val_scale_acc >= cfg.stop_val_scale_acc &&
        stats.val_ori_acc >= cfg.stop_val_ori_acc)
      break;
  }

  if (!best_params.empty()) model.parameters() = best_params;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void append_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32(const std::string& buf, size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

void append_f64_vector(std::string& buf, const std::vector<double>& v) {
  static_assert(std::endian::native == std::endian::little);
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["conv_channels"] = cfg.conv_channels;
  j["head_hidden"] = cfg.head_hidden;
  j["head_layers"] = cfg.head_layers;
  j["scale_bins"] = cfg.scale_bins;
  j["orientation_bins"] = cfg.orientation_bins;
  j["temperature"] = cfg.temperature;
  j["shared_encoder"] = cfg.shared_encoder;
  j["input_size"] = cfg.input_size;
  j["init_seed"] = cfg.init_seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  cfg.head_hidden = j.at("head_hidden").get<int>();
  cfg.head_layers = j.at("head_layers").get<int>();
  cfg.scale_bins = j.at("scale_bins").get<int>();
  cfg.orientation_bins = j.at("orientation_bins").get<int>();
  cfg.temperature = j.at("temperature").get<double>();
  cfg.shared_encoder = j.at("shared_encoder").get<bool>();
  cfg.input_size = j.at("input_size").get<int>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void save_checkpoint(const EstimatorModel& model, const TrainState& state,
                     const std::string& path) {
  nlohmann::ordered_json meta;
  meta["config"] = config_to_json(model.config());
  meta["params"] = model.parameter_count();
  meta["velocity"] = state.sgd.velocity.size();
  meta["step"] = state.step;
  meta["rng"] = state.rng_state;
  const std::string meta_str = meta.dump();

  std::string buf;
  buf.append(kMagic, 4);
  append_u32(buf, kCheckpointVersion);
  append_u32(buf, static_cast<std::uint32_t>(meta_str.size()));
  buf += meta_str;
  append_f64_vector(buf, model.parameters());
  append_f64_vector(buf, state.sgd.velocity);

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size()));
  append_u32(buf, static_cast<std::uint32_t>(crc));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.close();
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  const std::streamsize bytes = in.tellg();
  if (bytes < 12) throw std::runtime_error("load_checkpoint: truncated file " + path);
  std::string buf(static_cast<size_t>(bytes), '\0');
  in.seekg(0);
  in.read(buf.data(), bytes);
  if (!in) throw std::runtime_error("load_checkpoint: read failed for " + path);

  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  const std::uint32_t version = read_u32(buf, 4);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: version mismatch (" +
                             std::to_string(version) + ")");

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size() - 4));
  if (static_cast<std::uint32_t>(crc) != read_u32(buf, buf.size() - 4))
    throw std::runtime_error("load_checkpoint: checksum failure in " + path);

  const std::uint32_t meta_len = read_u32(buf, 8);
  size_t off = 12;
  if (off + meta_len > buf.size() - 4)
    throw std::runtime_error("load_checkpoint: truncated metadata in " + path);
  const auto meta = nlohmann::json::parse(buf.substr(off, meta_len));
  off += meta_len;

  const size_t n_params = meta.at("params").get<size_t>();
  const size_t n_vel = meta.at("velocity").get<size_t>();
  if (off + (n_params + n_vel) * sizeof(double) + 4 != buf.size())
    throw std::runtime_error("load_checkpoint: truncated parameter data in " + path);

  LoadedCheckpoint out{EstimatorModel(config_from_json(meta.at("config"))), {}};
  if (out.model.parameter_count() != n_params)
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
  static_assert(std::endian::native == std::endian::little);
  std::memcpy(out.model.parameters().data(), buf.data() + off, n_params * sizeof(double));
  off += n_params * sizeof(double);
  out.state.sgd.velocity.resize(n_vel);
  std::memcpy(out.state.sgd.velocity.data(), buf.data() + off, n_vel * sizeof(double));
  out.state.step = meta.at("step").get<std::int64_t>();
  out.state.rng_state = meta.at("rng").get<std::string>();
  return out;
}

}  // namespace patchpose
