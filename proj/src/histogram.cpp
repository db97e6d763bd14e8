#include "patchpose/histogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace patchpose {

namespace {

// Shift amounts derived from grid poses land within a few ulp of an integer;
// snap them so grid-aligned pairs take the exact integer-shift path.
constexpr double kIntegerSnapTol = 1e-9;

double snap_integer(double d) {
  const double r = std::round(d);
  return std::abs(d - r) <= kIntegerSnapTol ? r : d;
}

int mod_index(long long i, int b) {
  return static_cast<int>(((i % b) + b) % b);
}

void check_same_spec(const PoseHistogram& h, const PoseHistogram& h_prime,
                     PoseAxis kind, const char* who) {
  if (h.spec != h_prime.spec)
    throw std::invalid_argument(std::string(who) + ": histograms use different bin specs");
  if (h.spec.kind != kind)
    throw std::invalid_argument(std::string(who) + ": wrong pose axis");
}

double scale_shift_amount(const BinSpec& spec, double delta_s) {
  return snap_integer((spec.count - 1) * delta_s / 4.0);
}

double orientation_shift_amount(const BinSpec& spec, double delta_o) {
  return snap_integer(spec.count * delta_o / kTwoPi);
}

}  // namespace

BinSpec BinSpec::scale(int count) {
  if (count < 2) throw std::invalid_argument("BinSpec: count must be >= 2");
  return BinSpec{PoseAxis::Scale, count};
}

BinSpec BinSpec::orientation(int count) {
  if (count < 2) throw std::invalid_argument("BinSpec: count must be >= 2");
  return BinSpec{PoseAxis::Orientation, count};
}

double BinSpec::coverage() const {
  return kind == PoseAxis::Scale ? (scale_log2_max - scale_log2_min) / (count - 1)
                                 : kTwoPi / count;
}

double BinSpec::center(int i) const {
  if (i < 0 || i >= count) throw std::out_of_range("BinSpec::center: bad index");
  if (kind == PoseAxis::Scale)
    return scale_log2_min + (scale_log2_max - scale_log2_min) * i / (count - 1);
  return kTwoPi * i / count;
}

PoseHistogram PoseHistogram::zeros(const BinSpec& spec) {
  return PoseHistogram{spec, std::vector<double>(spec.count, 0.0)};
}

PoseHistogram PoseHistogram::one_hot(const BinSpec& spec, int index) {
  PoseHistogram h = zeros(spec);
  h.bins.at(index) = 1.0;
  return h;
}

double PoseHistogram::sum() const {
  return std::accumulate(bins.begin(), bins.end(), 0.0);
}

bool PoseHistogram::is_normalized(double tol) const {
  for (double v : bins)
    if (!(v >= 0.0)) return false;
  return std::abs(sum() - 1.0) <= tol;
}

RelativePose RelativePose::negated() const {
  double o = std::fmod(kTwoPi - delta_o, kTwoPi);
  if (o < 0.0) o += kTwoPi;
  return RelativePose{-delta_s, o};
}

PoseHistogram shift_linear(const PoseHistogram& h, double d) {
  d = snap_integer(d);
  const int b = h.spec.count;
  const auto at = [&](long long i) { return (i >= 0 && i < b) ? h.bins[static_cast<size_t>(i)] : 0.0; };
  PoseHistogram out = PoseHistogram::zeros(h.spec);
  if (d == std::floor(d)) {
    const long long k = static_cast<long long>(d);
    for (int i = 0; i < b; ++i) out.bins[i] = at(i + k);
  } else {
    const long long lo = static_cast<long long>(std::floor(d));
    const long long hi = static_cast<long long>(std::ceil(d));
    const double w_lo = std::ceil(d) - d;
    const double w_hi = d - std::floor(d);
    for (int i = 0; i < b; ++i) out.bins[i] = w_lo * at(i + lo) + w_hi * at(i + hi);
  }
  return out;
}

PoseHistogram shift_circular(const PoseHistogram& h, double d) {
  d = snap_integer(d);
  const int b = h.spec.count;
  PoseHistogram out = PoseHistogram::zeros(h.spec);
  if (d == std::floor(d)) {
    const long long k = static_cast<long long>(std::fmod(d, b));
    for (int i = 0; i < b; ++i) out.bins[i] = h.bins[mod_index(i + k, b)];
  } else {
    const double df = std::fmod(d, b);  // keeps the index math in long long range
    const long long lo = static_cast<long long>(std::floor(df));
    const long long hi = lo + 1;
    const double w_lo = std::ceil(df) - df;
    const double w_hi = df - std::floor(df);
    for (int i = 0; i < b; ++i)
      out.bins[i] = w_lo * h.bins[mod_index(i + lo, b)] + w_hi * h.bins[mod_index(i + hi, b)];
  }
  return out;
}

std::vector<int> shared_bins(const BinSpec& spec, double delta_s) {
  if (spec.kind != PoseAxis::Scale)
    throw std::invalid_argument("shared_bins: spec must be a scale spec");
  const int b = spec.count;
  const double raw = (b - 1) * delta_s / 4.0;
  // Snap to the half-integer grid before rounding so the half-away-from-zero
  // rule is decided by the intended value, not floating-point noise.
  const double snapped = snap_integer(raw * 2.0) / 2.0;
  const long long k = std::llround(snapped);  // rounds half away from zero

  long long lo = 0, hi = b - 1;
  if (delta_s >= 0.0)
    hi = b - 1 - k;
  else
    lo = -k;
  std::vector<int> out;
  for (long long i = std::max<long long>(lo, 0); i <= std::min<long long>(hi, b - 1); ++i)
    out.push_back(static_cast<int>(i));
  return out;
}

double scale_alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                            double delta_s) {
  check_same_spec(h, h_prime, PoseAxis::Scale, "scale_alignment_loss");
  const std::vector<int> shared = shared_bins(h.spec, delta_s);
  if (shared.empty())
    throw InvalidPairError("scale_alignment_loss: no shared bins for delta_s=" +
                           std::to_string(delta_s));
  const PoseHistogram shifted = shift_linear(h_prime, scale_shift_amount(h.spec, delta_s));
  double acc = 0.0;
  for (int i : shared) {
    if (h.bins[i] == 0.0) continue;  // 0*log(0) := 0
    acc += h.bins[i] * std::log(std::max(shifted.bins[i], kLossLogClamp));
  }
  return -acc;
}

double orientation_alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                                  double delta_o) {
  check_same_spec(h, h_prime, PoseAxis::Orientation, "orientation_alignment_loss");
  const PoseHistogram shifted =
      shift_circular(h_prime, orientation_shift_amount(h.spec, delta_o));
  double acc = 0.0;
  for (int i = 0; i < h.spec.count; ++i) {
    if (h.bins[i] == 0.0) continue;
    acc += h.bins[i] * std::log(std::max(shifted.bins[i], kLossLogClamp));
  }
  return -acc;
}

double alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                      const RelativePose& delta, PoseAxis kind) {
  return kind == PoseAxis::Scale
             ? scale_alignment_loss(h, h_prime, delta.delta_s)
             : orientation_alignment_loss(h, h_prime, delta.delta_o);
}

double symmetric_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                      const RelativePose& delta, PoseAxis kind) {
  return alignment_loss(h, h_prime, delta, kind) +
         alignment_loss(h_prime, h, delta.negated(), kind);
}

namespace {

// Weight of h'(j) in the shifted histogram's bin i, as (index, weight) pairs.
struct ShiftTap {
  long long index;
  double weight;
};

// Accumulates d(loss)/d(h') for one direction given the shifted values.
void accumulate_prime_grad(const PoseHistogram& h, const PoseHistogram& shifted,
                           const std::vector<int>& bins, double d, bool circular,
                           int b, std::vector<double>& grad) {
  ShiftTap taps[2];
  int tap_count;
  if (d == std::floor(d)) {
    taps[0] = {static_cast<long long>(d), 1.0};
    tap_count = 1;
  } else {
    taps[0] = {static_cast<long long>(std::floor(d)), std::ceil(d) - d};
    taps[1] = {static_cast<long long>(std::ceil(d)), d - std::floor(d)};
    tap_count = 2;
  }
  for (int i : bins) {
    if (h.bins[i] == 0.0) continue;
    const double t = shifted.bins[i];
    if (t <= kLossLogClamp) continue;  // clamped: no gradient through the log
    const double coeff = -h.bins[i] / t;
    for (int k = 0; k < tap_count; ++k) {
      long long j = i + taps[k].index;
      if (circular)
        j = mod_index(j, b);
      else if (j < 0 || j >= b)
        continue;
      grad[static_cast<size_t>(j)] += coeff * taps[k].weight;
    }
  }
}

LossGradients single_direction_gradients(const PoseHistogram& h,
                                         const PoseHistogram& h_prime,
                                         const RelativePose& delta, PoseAxis kind) {
  const int b = h.spec.count;
  LossGradients g{std::vector<double>(b, 0.0), std::vector<double>(b, 0.0)};
  const bool circular = kind == PoseAxis::Orientation;

  std::vector<int> bins;
  double d;
  if (circular) {
    d = snap_integer(std::fmod(orientation_shift_amount(h.spec, delta.delta_o), b));
    bins.resize(b);
    for (int i = 0; i < b; ++i) bins[i] = i;
  } else {
    d = scale_shift_amount(h.spec, delta.delta_s);
    bins = shared_bins(h.spec, delta.delta_s);
    if (bins.empty())
      throw InvalidPairError("loss_gradients: no shared bins");
  }
  const PoseHistogram shifted =
      circular ? shift_circular(h_prime, d) : shift_linear(h_prime, d);

  for (int i : bins)
    g.wrt_h[i] = -std::log(std::max(shifted.bins[i], kLossLogClamp));
  accumulate_prime_grad(h, shifted, bins, d, circular, b, g.wrt_h_prime);
  return g;
}

}  // namespace

LossGradients loss_gradients(const PoseHistogram& h, const PoseHistogram& h_prime,
                             const RelativePose& delta, PoseAxis kind) {
  check_same_spec(h, h_prime, kind, "loss_gradients");
  return single_direction_gradients(h, h_prime, delta, kind);
}

LossGradients symmetric_loss_gradients(const PoseHistogram& h,
                                       const PoseHistogram& h_prime,
                                       const RelativePose& delta, PoseAxis kind) {
  check_same_spec(h, h_prime, kind, "symmetric_loss_gradients");
  LossGradients fwd = single_direction_gradients(h, h_prime, delta, kind);
  const LossGradients rev = single_direction_gradients(h_prime, h, delta.negated(), kind);
  for (int i = 0; i < h.spec.count; ++i) {
    fwd.wrt_h[i] += rev.wrt_h_prime[i];
    fwd.wrt_h_prime[i] += rev.wrt_h[i];
  }
  return fwd;
}

int argmax_bin(const PoseHistogram& h) {
  int best = 0;
  for (int i = 1; i < h.spec.count; ++i)
    if (h.bins[i] > h.bins[best]) best = i;
  return best;
}

double decode_bin_value(const BinSpec& spec, int i) {
  return spec.kind == PoseAxis::Scale ? std::exp2(spec.center(i)) : spec.center(i);
}

double decode_argmax(const PoseHistogram& h) {
  return decode_bin_value(h.spec, argmax_bin(h));
}

std::vector<int> topk_bins(const PoseHistogram& h, int k) {
  if (k < 1 || k > h.spec.count)
    throw std::invalid_argument("topk_bins: k out of range");
  std::vector<int> idx(h.spec.count);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return h.bins[a] > h.bins[b]; });
  idx.resize(k);
  return idx;
}

std::vector<double> decode_topk(const PoseHistogram& h, int k) {
  std::vector<double> out;
  for (int i : topk_bins(h, k)) out.push_back(decode_bin_value(h.spec, i));
  return out;
}

}  // namespace patchpose
