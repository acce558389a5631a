#pragma once

#include <vector>

#include "snippetprop/mat.hpp"

namespace snippetprop {

// Temporal class activation map: one row per snippet, softmax over c+1
// classes (the last one is background).
using Tcam = Mat;

struct HeadParams {
  Mat w_f;  // 1 x d foreground direction
  Mat w_a;  // (c+1) x d class directions, last row background
  double attn_scale = 8.0;

  int num_classes() const { return static_cast<int>(w_a.rows) - 1; }
  void validate() const;  // throws ConfigError on inconsistent shapes
};

struct HeadOutput {
  std::vector<double> lambda_f;  // per-snippet foreground attention, in (0,1)
  Mat fbar;                      // 1 x d attention-weighted video feature
  Mat s_logits;                  // l x (c+1), already multiplied by attn_scale
  Tcam tcam;                     // row softmax of s_logits
  Mat lambda_w;                  // column softmax of s_logits over time
  std::vector<double> p_ca;      // video-level class distribution (attention)
  std::vector<double> p_mil;     // video-level class distribution (mil)
};

// Runs the two-branch head: foreground attention plus snippet/video class
// scores, all driven by cosine similarity against the parameter directions.
HeadOutput head_forward(const Mat& f, const HeadParams& params);

// Class probabilities for arbitrary rows; identical to the tcam the forward
// pass would produce for them.
Mat score_snippets(const Mat& rows, const HeadParams& params);

// Individually tracked loss terms.
struct LossParts {
  double cls = 0.0;
  double kd = 0.0;
  double att = 0.0;
};

// Video-level cross-entropy: attention branch against [y, 0], MIL branch
// against [y, 1], both l1-normalized; gamma weights the MIL part.
double loss_cls(const HeadOutput& out, const std::vector<int>& y, double gamma);

// Mean row-wise cross-entropy of the main activation map against a fused
// target map; the target is a constant, never differentiated through.
double loss_kd(const Tcam& t_main, const Tcam& t_fused);

// Bimodality pressure on the attention profile: bottom-k values pushed to 0,
// top-k pushed to 1, k = max(1, floor(k_ratio * l)).
double loss_att(const std::vector<double>& lambda_f, double k_ratio);

double loss_total(const LossParts& parts, double alpha, double beta);

}  // namespace snippetprop
