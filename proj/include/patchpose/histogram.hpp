#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace patchpose {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kPi = 3.141592653589793238462643383279;

// Floor for log arguments inside the alignment losses. Keeps the loss finite
// when a shifted bin is empty; gradients through clamped arguments are zero.
inline constexpr double kLossLogClamp = 1e-12;

enum class PoseAxis { Scale, Orientation };

// Discretization contract for one pose axis. Scale bins tile log2 space over
// [-2, 2]; orientation bins tile [0, 2pi).
struct BinSpec {
  PoseAxis kind = PoseAxis::Scale;
  int count = 0;

  static BinSpec scale(int count = 13);
  static BinSpec orientation(int count = 36);

  // Pose interval represented by one bin: 4/(B-1) in log2 units for scale,
  // 2pi/B radians for orientation.
  double coverage() const;

  // Bin center value: scale returns log2 units, orientation radians.
  double center(int i) const;

  bool operator==(const BinSpec&) const = default;

  static constexpr double scale_log2_min = -2.0;
  static constexpr double scale_log2_max = 2.0;
};

// Probability vector over a BinSpec. Model outputs are softmax-normalized;
// raw non-negative vectors are allowed as intermediates.
struct PoseHistogram {
  BinSpec spec;
  std::vector<double> bins;

  static PoseHistogram zeros(const BinSpec& spec);
  static PoseHistogram one_hot(const BinSpec& spec, int index);

  double sum() const;
  bool is_normalized(double tol = 1e-9) const;
};

// Ground-truth relative pose of a patch pair: log2 scale difference and
// rotation in radians.
struct RelativePose {
  double delta_s = 0.0;  // log2 units, in [-2, 2]
  double delta_o = 0.0;  // radians, in [0, 2pi)

  // Reversed-direction pose: (-delta_s, (2pi - delta_o) mod 2pi).
  RelativePose negated() const;
};

// Thrown when the shared-bin set of a scale pair is empty.
struct InvalidPairError : std::runtime_error {
  explicit InvalidPairError(const std::string& what) : std::runtime_error(what) {}
};

// Translates h to the left by d bins with linear interpolation; out-of-range
// source indices read as zero, so mass shifted off the ends is lost.
PoseHistogram shift_linear(const PoseHistogram& h, double d);

// Circular variant: indices wrap modulo B (floored division), total mass is
// preserved for every real d.
PoseHistogram shift_circular(const PoseHistogram& h, double d);

// Indices of the bins that represent the same absolute scales in both
// histograms once one is shifted by delta_s. Rounds the bin shift half away
// from zero so delta_s and -delta_s give mirror-image sets. Empty when the
// shift pushes every bin out of range (invalid pair).
std::vector<int> shared_bins(const BinSpec& spec, double delta_s);

// Cross-entropy between h and the shifted h', restricted to the shared bins.
// Throws InvalidPairError when no bins overlap.
double scale_alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                            double delta_s);

// Circular counterpart; every bin contributes.
double orientation_alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                                  double delta_o);

// Single-direction loss selected by axis.
double alignment_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                      const RelativePose& delta, PoseAxis kind);

// L(h, h', delta) + L(h', h, -delta).
double symmetric_loss(const PoseHistogram& h, const PoseHistogram& h_prime,
                      const RelativePose& delta, PoseAxis kind);

struct LossGradients {
  std::vector<double> wrt_h;
  std::vector<double> wrt_h_prime;
};

// Analytic partials of the single-direction clamped loss with respect to
// every bin of both histograms.
LossGradients loss_gradients(const PoseHistogram& h, const PoseHistogram& h_prime,
                             const RelativePose& delta, PoseAxis kind);

// Partials of the symmetric objective (both directions accumulated).
LossGradients symmetric_loss_gradients(const PoseHistogram& h,
                                       const PoseHistogram& h_prime,
                                       const RelativePose& delta, PoseAxis kind);

// Index of the largest bin; ties broken by lowest index.
int argmax_bin(const PoseHistogram& h);

// Pose value of bin i: scale bins decode to the factor 2^center, orientation
// bins to the center angle.
double decode_bin_value(const BinSpec& spec, int i);

// Pose value of the argmax bin.
double decode_argmax(const PoseHistogram& h);

// The k bin values with the largest mass, descending by mass, ties by lowest
// index. decode_topk(h, 1)[0] == decode_argmax(h).
std::vector<double> decode_topk(const PoseHistogram& h, int k);

// Same ordering, but returning bin indices.
std::vector<int> topk_bins(const PoseHistogram& h, int k);

}  // namespace patchpose
