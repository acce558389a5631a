#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "snippetprop/data.hpp"
#include "snippetprop/detect.hpp"
#include "snippetprop/mat.hpp"

namespace snippetprop {

// Temporal intersection over union of [a_start, a_end] and [b_start, b_end].
// Disjoint or merely touching segments score 0.
double tiou(double a_start, double a_end, double b_start, double b_end);

// Named average over a contiguous slice of the tIoU threshold grid.
struct EvalBand {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

std::vector<double> default_tiou_thresholds();  // 0.1 .. 0.7, step 0.1
std::vector<EvalBand> default_eval_bands();     // 0.1:0.5, 0.3:0.7, 0.1:0.7

// Single-class average precision at one tIoU threshold. Detections are ranked
// by score (ties: earlier start, then earlier end); each one greedily claims
// the unmatched ground-truth segment it overlaps best, and counts as a true
// positive when that overlap strictly exceeds the threshold. AP is the sum of
// precision-at-rank times 1/num_gt over the true positives. Requires at least
// one ground-truth segment.
double average_precision(std::vector<ActionInstance> dets,
                         const std::vector<std::pair<double, double>>& gts,
                         double tiou_thr);

struct EvalReport {
  std::vector<int> class_ids;   // classes with ground truth, ascending
  std::vector<double> thresholds;
  Mat ap;                       // class_ids.size() x thresholds.size()
  std::vector<double> map_per_threshold;
  std::vector<std::pair<std::string, double>> band_averages;
};

// Detection metrics over a corpus: per-class AP at every threshold, mean AP
// per threshold over the classes that have ground truth (classes without any
// are left out of the mean, not scored zero), and band averages of the mAP
// curve. Matching never crosses videos. Throws ConfigError when there is no
// ground truth at all or a band selects no thresholds.
EvalReport map_report(
    const std::map<std::string, std::vector<ActionInstance>>& dets,
    const std::vector<GroundTruthSegment>& gts,
    const std::vector<double>& thresholds, const std::vector<EvalBand>& bands);

// "class,tiou,AP" rows, one per grid cell.
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);
// Summary document with the AP grid, the mAP curve, and the band averages.
void write_eval_json(const EvalReport& report, const std::filesystem::path& path);

}  // namespace snippetprop
