#include "snippetprop/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "snippetprop/errors.hpp"
#include "snippetprop/eval.hpp"

namespace snippetprop {

void DetectConfig::validate() const {
  if (!(class_threshold >= 0.0) || !(class_threshold <= 1.0)) {
    throw ConfigError("detect: class_threshold must be in [0,1]");
  }
  if (act_thresholds.empty()) {
    throw ConfigError("detect: act_thresholds must not be empty");
  }
  for (std::size_t i = 0; i < act_thresholds.size(); ++i) {
    double t = act_thresholds[i];
    if (!(t > 0.0) || !(t < 1.0)) {
      throw ConfigError("detect: act_thresholds must lie in (0,1)");
    }
    if (i > 0 && !(t > act_thresholds[i - 1])) {
      throw ConfigError("detect: act_thresholds must be strictly ascending");
    }
  }
  if (!(nms_tiou >= 0.0) || !(nms_tiou <= 1.0)) {
    throw ConfigError("detect: nms_tiou must be in [0,1]");
  }
  if (!(outer_ratio >= 0.0)) {
    throw ConfigError("detect: outer_ratio must be >= 0");
  }
  if (!(fusion_main_intra >= 0.0) || !(fusion_main_intra <= 1.0)) {
    throw ConfigError("detect: fusion_main_intra must be in [0,1]");
  }
  if (upsample && upsample_factor < 1) {
    throw ConfigError("detect: upsample_factor must be >= 1");
  }
}

namespace {

// Video-level score of one branch: attention and mil distributions averaged.
std::vector<double> branch_video_scores(const HeadOutput& h) {
  std::vector<double> p(h.p_ca.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = 0.5 * (h.p_ca[k] + h.p_mil[k]);
  }
  return p;
}

}  // namespace

FusedTestOutputs fuse_test_outputs(const HeadOutput& main,
                                   const HeadOutput& intra, double weight) {
  if (!(weight >= 0.0) || !(weight <= 1.0)) {
    throw ConfigError("fuse_test_outputs: weight must be in [0,1]");
  }
  if (main.tcam.rows != intra.tcam.rows ||
      main.tcam.cols != intra.tcam.cols ||
      main.lambda_f.size() != intra.lambda_f.size() ||
      main.p_ca.size() != intra.p_ca.size()) {
    throw std::invalid_argument(
        "fuse_test_outputs: branch outputs have mismatched shapes");
  }
  std::vector<double> pm = branch_video_scores(main);
  std::vector<double> pi = branch_video_scores(intra);
  FusedTestOutputs out;
  out.video_scores.resize(pm.size());
  for (std::size_t k = 0; k < pm.size(); ++k) {
    out.video_scores[k] = weight * pm[k] + (1.0 - weight) * pi[k];
  }
  out.tcam = Mat(main.tcam.rows, main.tcam.cols);
  for (std::size_t i = 0; i < out.tcam.data.size(); ++i) {
    out.tcam.data[i] =
        weight * main.tcam.data[i] + (1.0 - weight) * intra.tcam.data[i];
  }
  out.lambda_f.resize(main.lambda_f.size());
  for (std::size_t i = 0; i < out.lambda_f.size(); ++i) {
    out.lambda_f[i] =
        weight * main.lambda_f[i] + (1.0 - weight) * intra.lambda_f[i];
  }
  return out;
}

Mat upsample_linear(const Mat& seq, std::size_t target_len) {
  if (seq.rows < 1) {
    throw std::invalid_argument("upsample_linear: empty input");
  }
  if (target_len < 1) {
    throw std::invalid_argument("upsample_linear: target length must be >= 1");
  }
  Mat out(target_len, seq.cols);
  if (seq.rows == 1) {
    for (std::size_t t = 0; t < target_len; ++t) {
      for (std::size_t j = 0; j < seq.cols; ++j) out(t, j) = seq(0, j);
    }
    return out;
  }
  if (target_len == 1) {
    for (std::size_t j = 0; j < seq.cols; ++j) out(0, j) = seq(0, j);
    return out;
  }
  for (std::size_t t = 0; t < target_len; ++t) {
    double pos = static_cast<double>(t) * static_cast<double>(seq.rows - 1) /
                 static_cast<double>(target_len - 1);
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= seq.rows - 1) i0 = seq.rows - 2;
    std::size_t i1 = i0 + 1;
    double frac = pos - static_cast<double>(i0);
    for (std::size_t j = 0; j < seq.cols; ++j) {
      out(t, j) = (1.0 - frac) * seq(i0, j) + frac * seq(i1, j);
    }
  }
  return out;
}

std::vector<double> upsample_linear(const std::vector<double>& seq,
                                    std::size_t target_len) {
  Mat m(seq.size(), 1);
  for (std::size_t i = 0; i < seq.size(); ++i) m(i, 0) = seq[i];
  Mat up = upsample_linear(m, target_len);
  std::vector<double> out(target_len);
  for (std::size_t i = 0; i < target_len; ++i) out[i] = up(i, 0);
  return out;
}

std::vector<std::pair<double, double>> propose(
    const std::vector<double>& act, const std::vector<double>& thresholds,
    double snippet_duration_s) {
  if (!(snippet_duration_s > 0.0)) {
    throw std::invalid_argument("propose: snippet duration must be > 0");
  }
  std::vector<std::pair<double, double>> segs;
  for (double thr : thresholds) {
    std::size_t i = 0;
    while (i < act.size()) {
      if (!(act[i] > thr)) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j + 1 < act.size() && act[j + 1] > thr) ++j;
      segs.emplace_back(static_cast<double>(i) * snippet_duration_s,
                        static_cast<double>(j + 1) * snippet_duration_s);
      i = j + 1;
    }
  }
  return segs;
}

double score_proposal(const std::vector<double>& act, double start_s,
                      double end_s, double outer_ratio,
                      double video_class_score, double snippet_duration_s) {
  if (!(snippet_duration_s > 0.0)) {
    throw std::invalid_argument("score_proposal: snippet duration must be > 0");
  }
  const auto l = static_cast<long long>(act.size());
  long long a = std::llround(start_s / snippet_duration_s);
  long long b = std::llround(end_s / snippet_duration_s);
  if (a < 0 || b <= a || b > l) {
    throw std::invalid_argument(
        "score_proposal: segment does not align with the video");
  }
  double inner = 0.0;
  for (long long i = a; i < b; ++i) inner += act[static_cast<std::size_t>(i)];
  inner /= static_cast<double>(b - a);

  const auto flank =
      static_cast<long long>(std::ceil(outer_ratio * static_cast<double>(b - a)));
  long long lo = std::max(0ll, a - flank);
  long long hi = std::min(l, b + flank);
  double outer_sum = 0.0;
  long long outer_count = (a - lo) + (hi - b);
  for (long long i = lo; i < a; ++i) outer_sum += act[static_cast<std::size_t>(i)];
  for (long long i = b; i < hi; ++i) outer_sum += act[static_cast<std::size_t>(i)];
  double outer = outer_count > 0 ? outer_sum / static_cast<double>(outer_count)
                                 : 0.0;
  return inner - outer + video_class_score;
}

std::vector<ActionInstance> temporal_nms(std::vector<ActionInstance> instances,
                                         double tiou_threshold) {
  std::sort(instances.begin(), instances.end(),
            [](const ActionInstance& a, const ActionInstance& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.start_s != b.start_s) return a.start_s < b.start_s;
              double da = a.end_s - a.start_s;
              double db = b.end_s - b.start_s;
              if (da != db) return da < db;
              return a.class_id < b.class_id;
            });
  std::vector<ActionInstance> kept;
  for (const ActionInstance& cand : instances) {
    bool suppressed = false;
    for (const ActionInstance& k : kept) {
      if (k.class_id != cand.class_id) continue;
      if (tiou(k.start_s, k.end_s, cand.start_s, cand.end_s) > tiou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<ActionInstance> detect_video(const HeadOutput& main,
                                         const HeadOutput& intra,
                                         const DetectConfig& cfg,
                                         double snippet_duration_s) {
  cfg.validate();
  if (!(snippet_duration_s > 0.0)) {
    throw std::invalid_argument("detect_video: snippet duration must be > 0");
  }
  FusedTestOutputs fused =
      fuse_test_outputs(main, intra, cfg.fusion_main_intra);

  Mat tcam = fused.tcam;
  std::vector<double> lambda = fused.lambda_f;
  double step = snippet_duration_s;
  if (cfg.upsample && cfg.upsample_factor > 1) {
    std::size_t target = tcam.rows * static_cast<std::size_t>(cfg.upsample_factor);
    tcam = upsample_linear(tcam, target);
    lambda = upsample_linear(lambda, target);
    step = snippet_duration_s / static_cast<double>(cfg.upsample_factor);
  }

  const std::size_t num_classes = tcam.cols - 1;  // background proposes nothing
  std::vector<ActionInstance> all;
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (fused.video_scores[k] < cfg.class_threshold) continue;
    std::vector<double> act(tcam.rows);
    for (std::size_t i = 0; i < tcam.rows; ++i) act[i] = lambda[i] * tcam(i, k);
    for (const auto& [s, e] : propose(act, cfg.act_thresholds, step)) {
      ActionInstance inst;
      inst.class_id = static_cast<int>(k);
      inst.start_s = s;
      inst.end_s = e;
      inst.score = score_proposal(act, s, e, cfg.outer_ratio,
                                  fused.video_scores[k], step);
      all.push_back(inst);
    }
  }
  return temporal_nms(std::move(all), cfg.nms_tiou);
}

void write_detections(
    const std::map<std::string, std::vector<ActionInstance>>& dets,
    const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [video_id, instances] : dets) {
    auto& arr = doc[video_id] = nlohmann::json::array();
    for (const ActionInstance& inst : instances) {
      arr.push_back({{"class", inst.class_id},
                     {"score", inst.score},
                     {"start_s", inst.start_s},
                     {"end_s", inst.end_s}});
    }
  }
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << doc.dump(2) << "\n";
}

std::map<std::string, std::vector<ActionInstance>> read_detections(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("detections '" + path.string() + "': " + e.what());
  }
  std::map<std::string, std::vector<ActionInstance>> dets;
  try {
    if (!doc.is_object()) {
      throw FormatError("detections '" + path.string() +
                        "': top level must be an object");
    }
    for (const auto& [video_id, arr] : doc.items()) {
      std::vector<ActionInstance> instances;
      for (const auto& item : arr) {
        ActionInstance inst;
        inst.class_id = item.at("class").get<int>();
        inst.score = item.at("score").get<double>();
        inst.start_s = item.at("start_s").get<double>();
        inst.end_s = item.at("end_s").get<double>();
        if (inst.class_id < 0) {
          throw FormatError("detections '" + path.string() +
                            "': negative class id in '" + video_id + "'");
        }
        if (!std::isfinite(inst.score)) {
          throw FormatError("detections '" + path.string() +
                            "': non-finite score in '" + video_id + "'");
        }
        if (!(inst.start_s >= 0.0) || !(inst.start_s < inst.end_s)) {
          throw FormatError("detections '" + path.string() +
                            "': invalid extent in '" + video_id + "'");
        }
        instances.push_back(inst);
      }
      dets.emplace(video_id, std::move(instances));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("detections '" + path.string() + "': " + e.what());
  }
  return dets;
}

}  // namespace snippetprop
