#include "patchpose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "patchpose/parallel.hpp"

namespace patchpose {

double scale_error(double fs_a, double fs_b, double delta_s) {
  if (!(fs_a > 0.0) || !(fs_b > 0.0))
    throw std::invalid_argument("scale_error: scale estimates must be positive");
  return std::abs(std::log2(fs_b / fs_a) - delta_s);
}

double orientation_error(double fo_a, double fo_b, double delta_o) {
  double diff = std::fmod(fo_b - fo_a, kTwoPi);
  if (diff < 0.0) diff += kTwoPi;
  double x = std::fmod(std::abs(diff - delta_o), kTwoPi);
  return std::min(x, kTwoPi - x);
}

PairPredictor model_predictor(const EstimatorModel& model) {
  return [&model](const Patch& a, const Patch& b, const PatchPairRecord&) {
    auto [hs_a, ho_a] = model.forward(a);
    auto [hs_b, ho_b] = model.forward(b);
    return PairPrediction{std::move(hs_a), std::move(ho_a), std::move(hs_b),
                          std::move(ho_b)};
  };
}

namespace {

// Candidate pose values per pair, strongest first.
struct PairDecodes {
  std::vector<double> s_a, s_b;  // scale factors
  std::vector<double> o_a, o_b;  // radians
  double delta_s = 0.0;
  double delta_o = 0.0;
};

std::vector<PairDecodes> decode_pairs(const Dataset& ds, const PairPredictor& predictor,
                                      int max_k, int threads) {
  if (ds.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<PairDecodes> out(ds.size());
  parallel_for(ds.size(), threads, [&](size_t i) {
    const PairPrediction p = predictor(ds.patch_a(i), ds.patch_b(i), ds.records[i]);
    PairDecodes& d = out[i];
    const int ks = std::min(max_k, p.a_scale.spec.count);
    const int ko = std::min(max_k, p.a_orientation.spec.count);
    d.s_a = decode_topk(p.a_scale, ks);
    d.s_b = decode_topk(p.b_scale, ks);
    d.o_a = decode_topk(p.a_orientation, ko);
    d.o_b = decode_topk(p.b_orientation, ko);
    d.delta_s = ds.records[i].pose.delta_s;
    d.delta_o = ds.records[i].pose.delta_o;
  });
  return out;
}

bool topk_hit(const PairDecodes& d, int k, double threshold, PoseAxis axis) {
  const auto& ca = axis == PoseAxis::Scale ? d.s_a : d.o_a;
  const auto& cb = axis == PoseAxis::Scale ? d.s_b : d.o_b;
  const int ka = std::min<int>(k, static_cast<int>(ca.size()));
  const int kb = std::min<int>(k, static_cast<int>(cb.size()));
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      const double err = axis == PoseAxis::Scale
                             ? scale_error(ca[i], cb[j], d.delta_s)
                             : orientation_error(ca[i], cb[j], d.delta_o);
      if (err <= threshold) return true;
    }
  return false;
}

AccuracySummary accuracy_from(const std::vector<PairDecodes>& decodes,
                              const EvalThresholds& thresholds) {
  AccuracySummary sum;
  sum.pairs = decodes.size();
  sum.scale.assign(thresholds.scale.size(), 0.0);
  sum.orientation.assign(thresholds.orientation.size(), 0.0);
  for (const PairDecodes& d : decodes) {
    const double es = scale_error(d.s_a[0], d.s_b[0], d.delta_s);
    const double eo = orientation_error(d.o_a[0], d.o_b[0], d.delta_o);
    for (size_t t = 0; t < thresholds.scale.size(); ++t)
      if (es <= thresholds.scale[t]) sum.scale[t] += 1.0;
    for (size_t t = 0; t < thresholds.orientation.size(); ++t)
      if (eo <= thresholds.orientation[t]) sum.orientation[t] += 1.0;
  }
  for (double& v : sum.scale) v /= static_cast<double>(sum.pairs);
  for (double& v : sum.orientation) v /= static_cast<double>(sum.pairs);
  return sum;
}

RangewiseReport rangewise_from(const std::vector<PairDecodes>& decodes,
                               double scale_threshold, double orientation_threshold) {
  const BinSpec ss = BinSpec::scale();
  const BinSpec os = BinSpec::orientation();
  RangewiseReport rep;
  rep.scale_threshold = scale_threshold;
  rep.orientation_threshold = orientation_threshold;
  rep.scale_counts.assign(ss.count, 0);
  rep.orientation_counts.assign(os.count, 0);
  std::vector<int> scale_hits(ss.count, 0), ori_hits(os.count, 0);

  size_t s_total_hit = 0, o_total_hit = 0;
  for (const PairDecodes& d : decodes) {
    int sb = static_cast<int>(std::lround((d.delta_s - BinSpec::scale_log2_min) / ss.coverage()));
    sb = std::clamp(sb, 0, ss.count - 1);
    int ob = static_cast<int>(std::lround(d.delta_o / os.coverage())) % os.count;
    if (ob < 0) ob += os.count;

    const bool s_ok = scale_error(d.s_a[0], d.s_b[0], d.delta_s) <= scale_threshold;
    const bool o_ok =
        orientation_error(d.o_a[0], d.o_b[0], d.delta_o) <= orientation_threshold;
    rep.scale_counts[sb] += 1;
    rep.orientation_counts[ob] += 1;
    scale_hits[sb] += s_ok;
    ori_hits[ob] += o_ok;
    s_total_hit += s_ok;
    o_total_hit += o_ok;
  }

  rep.scale_accuracy.resize(ss.count);
  for (int i = 0; i < ss.count; ++i)
    if (rep.scale_counts[i] > 0)
      rep.scale_accuracy[i] = static_cast<double>(scale_hits[i]) / rep.scale_counts[i];
  rep.orientation_accuracy.resize(os.count);
  for (int i = 0; i < os.count; ++i)
    if (rep.orientation_counts[i] > 0)
      rep.orientation_accuracy[i] =
          static_cast<double>(ori_hits[i]) / rep.orientation_counts[i];
  rep.scale_total = static_cast<double>(s_total_hit) / decodes.size();
  rep.orientation_total = static_cast<double>(o_total_hit) / decodes.size();
  return rep;
}

}  // namespace

AccuracySummary accuracy(const Dataset& ds, const PairPredictor& predictor,
                         const EvalThresholds& thresholds, int threads) {
  return accuracy_from(decode_pairs(ds, predictor, 1, threads), thresholds);
}

double topk_recall(const Dataset& ds, const PairPredictor& predictor, int k,
                   double threshold, PoseAxis axis, int threads) {
  if (k < 1) throw std::invalid_argument("topk_recall: k must be >= 1");
  const std::vector<PairDecodes> decodes = decode_pairs(ds, predictor, k, threads);
  size_t hits = 0;
  for (const PairDecodes& d : decodes) hits += topk_hit(d, k, threshold, axis);
  return static_cast<double>(hits) / decodes.size();
}

RangewiseReport rangewise(const Dataset& ds, const PairPredictor& predictor,
                          double scale_threshold, double orientation_threshold,
                          int threads) {
  return rangewise_from(decode_pairs(ds, predictor, 1, threads), scale_threshold,
                        orientation_threshold);
}

EvalReport full_report(const Dataset& ds, const PairPredictor& predictor,
                       const EvalThresholds& thresholds, int max_k, int threads) {
  const std::vector<PairDecodes> decodes = decode_pairs(ds, predictor, max_k, threads);
  EvalReport report;
  report.thresholds = thresholds;
  report.accuracy = accuracy_from(decodes, thresholds);

  for (int k = 1; k <= max_k; ++k) {
    TopkRecallRow row;
    row.k = k;
    for (double thr : thresholds.scale) {
      size_t hits = 0;
      for (const PairDecodes& d : decodes) hits += topk_hit(d, k, thr, PoseAxis::Scale);
      row.scale.push_back(static_cast<double>(hits) / decodes.size());
    }
    for (double thr : thresholds.orientation) {
      size_t hits = 0;
      for (const PairDecodes& d : decodes)
        hits += topk_hit(d, k, thr, PoseAxis::Orientation);
      row.orientation.push_back(static_cast<double>(hits) / decodes.size());
    }
    report.topk.push_back(std::move(row));
  }

  report.rangewise = rangewise_from(decodes, 1.0 / 3.0, kPi / 18.0);
  return report;
}

namespace {

nlohmann::ordered_json optional_vector_json(const std::vector<std::optional<double>>& v) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& x : v) {
    if (x)
      arr.push_back(*x);
    else
      arr.push_back(nullptr);
  }
  return arr;
}

}  // namespace

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::ordered_json j;
  j["pairs"] = report.accuracy.pairs;
  j["thresholds"]["scale"] = report.thresholds.scale;
  j["thresholds"]["orientation"] = report.thresholds.orientation;
  j["accuracy"]["scale"] = report.accuracy.scale;
  j["accuracy"]["orientation"] = report.accuracy.orientation;
  nlohmann::ordered_json topk = nlohmann::ordered_json::array();
  for (const TopkRecallRow& row : report.topk) {
    nlohmann::ordered_json r;
    r["k"] = row.k;
    r["scale"] = row.scale;
    r["orientation"] = row.orientation;
    topk.push_back(std::move(r));
  }
  j["topk_recall"] = std::move(topk);
  j["rangewise"]["scale_threshold"] = report.rangewise.scale_threshold;
  j["rangewise"]["orientation_threshold"] = report.rangewise.orientation_threshold;
  j["rangewise"]["scale_counts"] = report.rangewise.scale_counts;
  j["rangewise"]["scale_accuracy"] = optional_vector_json(report.rangewise.scale_accuracy);
  j["rangewise"]["orientation_counts"] = report.rangewise.orientation_counts;
  j["rangewise"]["orientation_accuracy"] =
      optional_vector_json(report.rangewise.orientation_accuracy);
  j["rangewise"]["scale_total"] = report.rangewise.scale_total;
  j["rangewise"]["orientation_total"] = report.rangewise.orientation_total;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report_json: cannot write " + path);
  out << j.dump(2) << "\n";
}

void print_report(const EvalReport& report, std::ostream& os) {
  os << "pairs: " << report.accuracy.pairs << "\n";
  os << std::fixed << std::setprecision(4);
  os << "accuracy (scale, log2 thresholds):\n";
  for (size_t t = 0; t < report.thresholds.scale.size(); ++t)
    os << "  <= " << report.thresholds.scale[t] << " : " << report.accuracy.scale[t]
       << "\n";
  os << "accuracy (orientation, radian thresholds):\n";
  for (size_t t = 0; t < report.thresholds.orientation.size(); ++t)
    os << "  <= " << report.thresholds.orientation[t] << " : "
       << report.accuracy.orientation[t] << "\n";
  if (!report.topk.empty()) {
    os << "top-k recall (scale @ each threshold | orientation @ each threshold):\n";
    for (const TopkRecallRow& row : report.topk) {
      os << "  k=" << row.k << " :";
      for (double v : row.scale) os << " " << v;
      os << " |";
      for (double v : row.orientation) os << " " << v;
      os << "\n";
    }
  }
  os << "rangewise totals: scale " << report.rangewise.scale_total << " @ "
     << report.rangewise.scale_threshold << ", orientation "
     << report.rangewise.orientation_total << " @ "
     << report.rangewise.orientation_threshold << "\n";
}

namespace {

void svg_bars(std::ostream& os, const std::vector<std::optional<double>>& acc, int x0,
              int y0, int bar_w, int height, const std::string& color) {
  for (size_t i = 0; i < acc.size(); ++i) {
    const int x = x0 + static_cast<int>(i) * bar_w;
    if (!acc[i]) {
      os << "<rect x='" << x << "' y='" << y0 + height - 2 << "' width='" << bar_w - 2
         << "' height='2' fill='#cccccc'/>\n";
      continue;
    }
    const int h = std::max(1, static_cast<int>(*acc[i] * height));
    os << "<rect x='" << x << "' y='" << y0 + height - h << "' width='" << bar_w - 2
       << "' height='" << h << "' fill='" << color << "'/>\n";
  }
}

}  // namespace

void write_rangewise_svg(const RangewiseReport& report, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_rangewise_svg: cannot write " + path);
  const int bar_w = 16, height = 120, gap = 50;
  const int width =
      40 + bar_w * static_cast<int>(std::max(report.scale_accuracy.size(),
                                             report.orientation_accuracy.size()));
  const int total_h = 2 * (height + gap) + 20;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
     << total_h << "'>\n";
  os << "<text x='10' y='15' font-size='12'>scale accuracy per log2 difference "
        "(total "
     << report.scale_total << ")</text>\n";
  svg_bars(os, report.scale_accuracy, 20, 25, bar_w, height, "#4477aa");
  os << "<text x='10' y='" << height + gap + 15
     << "' font-size='12'>orientation accuracy per rotation (total "
     << report.orientation_total << ")</text>\n";
  svg_bars(os, report.orientation_accuracy, 20, height + gap + 25, bar_w, height,
           "#aa4444");
  os << "</svg>\n";
}

}  // namespace patchpose
