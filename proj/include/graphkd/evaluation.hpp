#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphkd/data_io.hpp"
#include "graphkd/error.hpp"
#include "graphkd/geometry.hpp"
#include "graphkd/schema.hpp"

// COCO-style detection metrics: greedy IoU matching per class over the
// 0.50:0.05:0.95 threshold ladder, 101-point interpolated AP, and pixel-area
// size buckets.
namespace graphkd {

struct EvalReport {
  double ap = -1.0;
  double ap50 = -1.0;
  double ap75 = -1.0;
  double aps = -1.0;
  double apm = -1.0;
  double apl = -1.0;
  std::map<std::string, double> per_class;
  long matched = 0;
  long unmatched_detections = 0;
  long unmatched_ground_truth = 0;
};

namespace evaldetail {

constexpr double kSmallArea = 32.0 * 32.0;
constexpr double kLargeArea = 96.0 * 96.0;

struct AreaRange {
  double lo = 0.0;
  double hi = 1e18;
};

struct FlatDetection {
  int image = 0;
  BoxGeometry box;
  double score = 0.0;
};

struct FlatGt {
  int image = 0;
  BoxGeometry box;
};

// Canonical ranking: descending score with coordinate tie-breaks, so equal
// scores process in an input-order-independent sequence.
inline bool canonical_before(const FlatDetection& a, const FlatDetection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image != b.image) return a.image < b.image;
  if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
  if (a.box.y1 != b.box.y1) return a.box.y1 < b.box.y1;
  if (a.box.x2 != b.box.x2) return a.box.x2 < b.box.x2;
  return a.box.y2 < b.box.y2;
}

struct MatchOutcome {
  std::vector<bool> tp;  // per ranked detection
  int n_gt = 0;
};

// Greedy matching at one threshold: each detection, in ranked order, claims
// the unclaimed ground truth of its image with the highest IoU >= threshold.
inline MatchOutcome greedy_match(const std::vector<FlatDetection>& ranked,
                                 const std::vector<FlatGt>& gts,
                                 double threshold) {
  MatchOutcome out;
  out.n_gt = static_cast<int>(gts.size());
  std::vector<bool> claimed(gts.size(), false);
  out.tp.assign(ranked.size(), false);
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (claimed[g] || gts[g].image != ranked[d].image) continue;
      double v = iou(ranked[d].box, gts[g].box);
      if (v >= threshold && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      claimed[static_cast<std::size_t>(best)] = true;
      out.tp[d] = true;
    }
  }
  return out;
}

// 101-point interpolated AP from ranked TP flags.
inline double interpolated_ap(const std::vector<bool>& tp, int n_gt) {
  if (n_gt == 0) return -1.0;
  std::vector<double> precision, recall;
  int cum_tp = 0, cum_fp = 0;
  for (bool hit : tp) {
    hit ? ++cum_tp : ++cum_fp;
    precision.push_back(static_cast<double>(cum_tp) / (cum_tp + cum_fp));
    recall.push_back(static_cast<double>(cum_tp) / n_gt);
  }
  // Precision envelope from the right.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)],
                 precision[static_cast<std::size_t>(i) + 1]);
  double total = 0.0;
  for (int r = 0; r <= 100; ++r) {
    double want = r / 100.0;
    double best = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
      if (recall[k] >= want - 1e-12) {
        best = precision[k];
        break;
      }
    }
    total += best;
  }
  return total / 101.0;
}

inline const std::vector<double>& threshold_ladder() {
  static const std::vector<double> t = {0.50, 0.55, 0.60, 0.65, 0.70,
                                        0.75, 0.80, 0.85, 0.90, 0.95};
  return t;
}

}  // namespace evaldetail

// Detections are provided per image, aligned with the dataset order. The
// report averages per-class APs over the ten-threshold ladder; classes with
// no ground truth are excluded from means (and from bucket means when they
// have no ground truth in the bucket).
inline EvalReport evaluate(
    const std::vector<std::vector<DetectionRecord>>& detections,
    const Dataset& ground_truth, const ClassSchema& schema) {
  require(schema == ground_truth.schema, errkind::kSchemaMismatch,
          "schema differs from dataset schema");
  require(detections.size() == ground_truth.images.size(),
          errkind::kMisalignedGraphs,
          "one detection list per dataset image required");
  for (const auto& per_image : detections)
    for (const auto& det : per_image)
      require(det.class_id >= 0 && det.class_id < schema.size(),
              errkind::kSchemaMismatch, "detection class outside schema");

  using evaldetail::AreaRange;
  using evaldetail::FlatDetection;
  using evaldetail::FlatGt;

  auto pixel_area = [&](int image_idx, const BoxGeometry& box) {
    const AnnotatedImage& img =
        ground_truth.images[static_cast<std::size_t>(image_idx)];
    return box.area() * img.width() * img.height();
  };

  // Mean AP over the ladder for one area range; -1 when no class qualifies.
  auto evaluate_range = [&](const AreaRange& range, double only_threshold,
                            std::map<std::string, double>* per_class_out,
                            long* matched, long* unmatched_det,
                            long* unmatched_gt) -> double {
    double class_sum = 0.0;
    int class_count = 0;
    for (int cls = 0; cls < schema.size(); ++cls) {
      std::vector<FlatDetection> flat;
      std::vector<FlatGt> gts;
      for (std::size_t i = 0; i < ground_truth.images.size(); ++i) {
        for (const auto& [gt_cls, box] :
             ground_truth.images[i].annotations) {
          if (gt_cls != cls) continue;
          double a = pixel_area(static_cast<int>(i), box);
          if (a < range.lo || a >= range.hi) continue;
          gts.push_back({static_cast<int>(i), box});
        }
        for (const auto& det : detections[i]) {
          if (det.class_id != cls) continue;
          double a = pixel_area(static_cast<int>(i), det.box);
          if (a < range.lo || a >= range.hi) continue;
          flat.push_back({static_cast<int>(i), det.box, det.score});
        }
      }
      if (gts.empty()) continue;  // class excluded from the mean
      std::sort(flat.begin(), flat.end(), evaldetail::canonical_before);

      double threshold_sum = 0.0;
      int threshold_count = 0;
      for (double tau : evaldetail::threshold_ladder()) {
        if (only_threshold > 0.0 && tau != only_threshold) continue;
        auto m = evaldetail::greedy_match(flat, gts, tau);
        threshold_sum += evaldetail::interpolated_ap(m.tp, m.n_gt);
        ++threshold_count;
        if (matched != nullptr && tau == 0.50) {
          long tp = 0;
          for (bool hit : m.tp) tp += hit ? 1 : 0;
          *matched += tp;
          *unmatched_det += static_cast<long>(m.tp.size()) - tp;
          *unmatched_gt += m.n_gt - tp;
        }
      }
      double class_ap = threshold_sum / threshold_count;
      if (per_class_out != nullptr)
        (*per_class_out)[schema.classes[static_cast<std::size_t>(cls)]] =
            class_ap;
      class_sum += class_ap;
      ++class_count;
    }
    return class_count > 0 ? class_sum / class_count : -1.0;
  };

  EvalReport report;
  AreaRange all;
  report.ap = evaluate_range(all, -1.0, &report.per_class, &report.matched,
                             &report.unmatched_detections,
                             &report.unmatched_ground_truth);
  report.ap50 = evaluate_range(all, 0.50, nullptr, nullptr, nullptr, nullptr);
  report.ap75 = evaluate_range(all, 0.75, nullptr, nullptr, nullptr, nullptr);
  report.aps = evaluate_range({0.0, evaldetail::kSmallArea}, -1.0, nullptr,
                              nullptr, nullptr, nullptr);
  report.apm = evaluate_range({evaldetail::kSmallArea, evaldetail::kLargeArea},
                              -1.0, nullptr, nullptr, nullptr, nullptr);
  report.apl = evaluate_range({evaldetail::kLargeArea, 1e18}, -1.0, nullptr,
                              nullptr, nullptr, nullptr);
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["ap"] = r.ap;
  j["ap50"] = r.ap50;
  j["ap75"] = r.ap75;
  j["aps"] = r.aps;
  j["apm"] = r.apm;
  j["apl"] = r.apl;
  j["per_class"] = r.per_class;
  j["counts"] = {{"matched", r.matched},
                 {"unmatched_detections", r.unmatched_detections},
                 {"unmatched_ground_truth", r.unmatched_ground_truth}};
  return j;
}

// Aligned-column table with the usual AP / AP@50 / AP@75 / APs / APm / APl
// layout plus per-class columns.
inline std::string report_to_table(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  auto cell = [](double v) {
    std::ostringstream c;
    if (v < 0.0)
      c << "   -";
    else
      c << std::setw(5) << std::fixed << std::setprecision(1) << 100.0 * v;
    return c.str();
  };
  out << std::setw(8) << "AP" << std::setw(8) << "AP@50" << std::setw(8)
      << "AP@75" << std::setw(8) << "APs" << std::setw(8) << "APm"
      << std::setw(8) << "APl";
  for (const auto& [name, _] : r.per_class) out << std::setw(9) << name;
  out << "\n";
  out << std::setw(8) << cell(r.ap) << std::setw(8) << cell(r.ap50)
      << std::setw(8) << cell(r.ap75) << std::setw(8) << cell(r.aps)
      << std::setw(8) << cell(r.apm) << std::setw(8) << cell(r.apl);
  for (const auto& [_, v] : r.per_class) out << std::setw(9) << cell(v);
  out << "\n";
  return out.str();
}

}  // namespace graphkd
