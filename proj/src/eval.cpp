#include "snippetprop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "snippetprop/errors.hpp"

namespace snippetprop {

double tiou(double a_start, double a_end, double b_start, double b_end) {
  if (!(a_end > a_start) || !(b_end > b_start)) {
    throw std::invalid_argument("tiou: segments must have positive length");
  }
  double inter = std::min(a_end, b_end) - std::max(a_start, b_start);
  if (inter <= 0.0) return 0.0;
  // Overlapping intervals, so the union is a single interval.
  return inter / (std::max(a_end, b_end) - std::min(a_start, b_start));
}

std::vector<double> default_tiou_thresholds() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
}

std::vector<EvalBand> default_eval_bands() {
  return {{"avg(0.1:0.5)", 0.1, 0.5},
          {"avg(0.3:0.7)", 0.3, 0.7},
          {"avg(0.1:0.7)", 0.1, 0.7}};
}

namespace {

struct RankedDet {
  double score = 0.0;
  double start = 0.0;
  double end = 0.0;
  int video = 0;
};

struct GtSlot {
  double start = 0.0;
  double end = 0.0;
  int video = 0;
};

// Greedy score-ordered matching; a detection only ever matches ground truth
// from its own video. Shared by the public single-pool entry point and the
// corpus report.
double ap_ranked(std::vector<RankedDet> dets, std::vector<GtSlot> gts,
                 double thr) {
  std::sort(dets.begin(), dets.end(),
            [](const RankedDet& a, const RankedDet& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.video != b.video) return a.video < b.video;
              if (a.start != b.start) return a.start < b.start;
              return a.end < b.end;
            });
  std::sort(gts.begin(), gts.end(), [](const GtSlot& a, const GtSlot& b) {
    if (a.video != b.video) return a.video < b.video;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  std::vector<bool> used(gts.size(), false);
  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < dets.size(); ++r) {
    double best = 0.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].video != dets[r].video) continue;
      double o = tiou(dets[r].start, dets[r].end, gts[j].start, gts[j].end);
      if (o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best > thr) {
      used[best_j] = true;
      ++tp;
      ap += static_cast<double>(tp) / static_cast<double>(r + 1);
    }
  }
  return ap / static_cast<double>(gts.size());
}

}  // namespace

double average_precision(std::vector<ActionInstance> dets,
                         const std::vector<std::pair<double, double>>& gts,
                         double tiou_thr) {
  if (gts.empty()) {
    throw std::invalid_argument("average_precision: no ground truth");
  }
  std::vector<RankedDet> rd;
  rd.reserve(dets.size());
  for (const ActionInstance& d : dets) {
    rd.push_back({d.score, d.start_s, d.end_s, 0});
  }
  std::vector<GtSlot> gs;
  gs.reserve(gts.size());
  for (const auto& [s, e] : gts) gs.push_back({s, e, 0});
  return ap_ranked(std::move(rd), std::move(gs), tiou_thr);
}

EvalReport map_report(
    const std::map<std::string, std::vector<ActionInstance>>& dets,
    const std::vector<GroundTruthSegment>& gts,
    const std::vector<double>& thresholds,
    const std::vector<EvalBand>& bands) {
  if (gts.empty()) {
    throw ConfigError("eval: no ground truth segments");
  }
  if (thresholds.empty()) {
    throw ConfigError("eval: tIoU threshold grid must not be empty");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0) || !(thresholds[i] < 1.0)) {
      throw ConfigError("eval: tIoU thresholds must lie in (0,1)");
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw ConfigError("eval: tIoU thresholds must be strictly ascending");
    }
  }

  // Stable video numbering across ground truth and detections; detections in
  // videos without ground truth still rank (and count as false positives).
  std::set<std::string> video_ids;
  for (const auto& g : gts) video_ids.insert(g.video_id);
  for (const auto& [id, _] : dets) video_ids.insert(id);
  std::map<std::string, int> video_index;
  for (const auto& id : video_ids) {
    video_index.emplace(id, static_cast<int>(video_index.size()));
  }

  std::set<int> class_set;
  for (const auto& g : gts) class_set.insert(g.class_id);

  EvalReport report;
  report.class_ids.assign(class_set.begin(), class_set.end());
  report.thresholds = thresholds;
  report.ap = Mat(report.class_ids.size(), thresholds.size());

  for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
    const int k = report.class_ids[ci];
    std::vector<RankedDet> rd;
    for (const auto& [id, instances] : dets) {
      for (const ActionInstance& d : instances) {
        if (d.class_id != k) continue;
        rd.push_back({d.score, d.start_s, d.end_s, video_index.at(id)});
      }
    }
    std::vector<GtSlot> gs;
    for (const auto& g : gts) {
      if (g.class_id != k) continue;
      gs.push_back({g.start_s, g.end_s, video_index.at(g.video_id)});
    }
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      report.ap(ci, ti) = ap_ranked(rd, gs, thresholds[ti]);
    }
  }

  report.map_per_threshold.assign(thresholds.size(), 0.0);
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    double sum = 0.0;
    for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
      sum += report.ap(ci, ti);
    }
    report.map_per_threshold[ti] = sum / static_cast<double>(report.class_ids.size());
  }

  for (const EvalBand& band : bands) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      if (thresholds[ti] >= band.lo - 1e-9 && thresholds[ti] <= band.hi + 1e-9) {
        sum += report.map_per_threshold[ti];
        ++count;
      }
    }
    if (count == 0) {
      throw ConfigError("eval: band '" + band.name +
                        "' selects no tIoU thresholds");
    }
    report.band_averages.emplace_back(band.name,
                                      sum / static_cast<double>(count));
  }
  return report;
}

void write_eval_csv(const EvalReport& report,
                    const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << "class,tiou,AP\n";
  char buf[128];
  for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
    for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n",
                    report.class_ids[ci], report.thresholds[ti],
                    report.ap(ci, ti));
      os << buf;
    }
  }
}

void write_eval_json(const EvalReport& report,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["classes"] = report.class_ids;
  doc["thresholds"] = report.thresholds;
  auto& ap = doc["ap"] = nlohmann::json::array();
  for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
      row.push_back(report.ap(ci, ti));
    }
    ap.push_back(std::move(row));
  }
  doc["map_per_threshold"] = report.map_per_threshold;
  auto& bands = doc["bands"] = nlohmann::json::array();
  for (const auto& [name, avg] : report.band_averages) {
    bands.push_back({{"name", name}, {"average", avg}});
  }
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << doc.dump(2) << "\n";
}

}  // namespace snippetprop
