#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "patchpose/dataset.hpp"
#include "patchpose/histogram.hpp"
#include "patchpose/model.hpp"

namespace patchpose {

// |log2(fs_b / fs_a) - delta_s|. Throws on non-positive scale values.
double scale_error(double fs_a, double fs_b, double delta_s);

// Circular distance between the predicted orientation difference and
// delta_o; result in [0, pi].
double orientation_error(double fo_a, double fo_b, double delta_o);

// Histograms predicted for both patches of one pair.
struct PairPrediction {
  PoseHistogram a_scale, a_orientation;
  PoseHistogram b_scale, b_orientation;
};

using PairPredictor =
    std::function<PairPrediction(const Patch& a, const Patch& b, const PatchPairRecord& rec)>;

// Wraps a trained model as a predictor (the record is ignored).
PairPredictor model_predictor(const EstimatorModel& model);

struct EvalThresholds {
  std::vector<double> scale{1.0 / 6.0, 1.0 / 3.0};
  std::vector<double> orientation{kPi / 36.0, kPi / 18.0};
};

struct AccuracySummary {
  size_t pairs = 0;
  std::vector<double> scale;        // aligned with EvalThresholds::scale
  std::vector<double> orientation;  // aligned with EvalThresholds::orientation
};

// Fraction of pairs whose argmax-decoded error is within each threshold.
AccuracySummary accuracy(const Dataset& ds, const PairPredictor& predictor,
                         const EvalThresholds& thresholds = {}, int threads = 1);

// A pair scores when any of the k x k top-k candidate combinations lands
// within the threshold.
double topk_recall(const Dataset& ds, const PairPredictor& predictor, int k,
                   double threshold, PoseAxis axis, int threads = 1);

struct RangewiseReport {
  double scale_threshold = 1.0 / 3.0;        // +-2^(1/3)
  double orientation_threshold = kPi / 18.0;  // +-10 degrees
  std::vector<int> scale_counts;                      // per scale grid value
  std::vector<std::optional<double>> scale_accuracy;  // absent when bucket empty
  std::vector<int> orientation_counts;
  std::vector<std::optional<double>> orientation_accuracy;
  double scale_total = 0.0;  // pair-weighted mean
  double orientation_total = 0.0;
};

// Accuracy bucketed by the ground-truth grid value of each axis.
RangewiseReport rangewise(const Dataset& ds, const PairPredictor& predictor,
                          double scale_threshold = 1.0 / 3.0,
                          double orientation_threshold = kPi / 18.0, int threads = 1);

struct TopkRecallRow {
  int k = 0;
  std::vector<double> scale;        // per scale threshold
  std::vector<double> orientation;  // per orientation threshold
};

struct EvalReport {
  EvalThresholds thresholds;
  AccuracySummary accuracy;
  std::vector<TopkRecallRow> topk;  // k = 1..max_k
  RangewiseReport rangewise;
};

// Single prediction pass producing the complete report.
EvalReport full_report(const Dataset& ds, const PairPredictor& predictor,
                       const EvalThresholds& thresholds = {}, int max_k = 4,
                       int threads = 1);

// JSON document with fixed field order.
void write_report_json(const EvalReport& report, const std::string& path);

// Human-readable tables.
void print_report(const EvalReport& report, std::ostream& os);

// Static bar plot of the range-wise accuracies.
void write_rangewise_svg(const RangewiseReport& report, const std::string& path);

}  // namespace patchpose
