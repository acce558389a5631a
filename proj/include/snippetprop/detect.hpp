#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "snippetprop/head.hpp"
#include "snippetprop/mat.hpp"

namespace snippetprop {

// One scored temporal detection.
struct ActionInstance {
  int class_id = 0;
  double score = 0.0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct DetectConfig {
  double class_threshold = 0.1;  // video-level gate per class
  std::vector<double> act_thresholds = {0.1, 0.2, 0.3, 0.4, 0.5,
                                        0.6, 0.7, 0.8, 0.9};
  double nms_tiou = 0.5;
  double outer_ratio = 0.25;      // flank length as a share of the segment
  double fusion_main_intra = 0.5; // main-branch share when fusing
  bool upsample = false;
  int upsample_factor = 4;        // applies only when upsample is set

  void validate() const;  // throws ConfigError
};

// Test-time fusion of the main branch with the summarized branch.
struct FusedTestOutputs {
  std::vector<double> video_scores;  // c+1 entries, background last
  Tcam tcam;
  std::vector<double> lambda_f;
};

// Convex combination (weight on the main branch) of the per-branch video
// scores (p_ca and p_mil averaged within each branch first), the activation
// maps, and the attention profiles.
FusedTestOutputs fuse_test_outputs(const HeadOutput& main,
                                   const HeadOutput& intra, double weight);

// Per-column linear interpolation to the requested number of rows. Endpoints
// are preserved; a single input row broadcasts; a single output row takes the
// first input row.
Mat upsample_linear(const Mat& seq, std::size_t target_len);
std::vector<double> upsample_linear(const std::vector<double>& seq,
                                    std::size_t target_len);

// Threshold sweep: for every threshold, each maximal run of consecutive
// entries strictly above it becomes one candidate segment (run [i..j] maps to
// [i*step, (j+1)*step] seconds). Candidates from all thresholds are returned
// together, duplicates and all — NMS sorts them out later.
std::vector<std::pair<double, double>> propose(
    const std::vector<double>& act, const std::vector<double>& thresholds,
    double snippet_duration_s);

// Inner-mean minus flank-mean contrast plus the video-level class score. The
// flanks extend outer_ratio times the segment length to each side, rounded up
// to whole snippets and clipped to the video; the mean runs over both flanks
// together, and no flank snippets at all makes the flank term 0.
double score_proposal(const std::vector<double>& act, double start_s,
                      double end_s, double outer_ratio,
                      double video_class_score, double snippet_duration_s);

// Greedy same-class suppression: sort by score (ties: earlier start, then
// shorter, then class), keep an instance unless it overlaps a kept instance
// of its class with tIoU above the threshold. Kept instances come back in
// processing order, i.e. score descending.
std::vector<ActionInstance> temporal_nms(std::vector<ActionInstance> instances,
                                         double tiou_threshold);

// Full test-time pipeline for one video: fuse the two branches, gate classes
// on the fused video score, threshold the attention-gated class activation,
// score the candidates, suppress. Background proposes nothing.
std::vector<ActionInstance> detect_video(const HeadOutput& main,
                                         const HeadOutput& intra,
                                         const DetectConfig& cfg,
                                         double snippet_duration_s);

// Detections document: {"video_id": [{"class", "score", "start_s", "end_s"}]}.
void write_detections(
    const std::map<std::string, std::vector<ActionInstance>>& dets,
    const std::filesystem::path& path);
std::map<std::string, std::vector<ActionInstance>> read_detections(
    const std::filesystem::path& path);

}  // namespace snippetprop
