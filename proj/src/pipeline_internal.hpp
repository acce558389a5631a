#pragma once

// Shared between pipeline.cpp and backward.cpp only. The trace records every
// intermediate of the frozen per-video loss so the hand-written reverse pass
// can walk the computation backwards without re-deriving anything.

#include <optional>
#include <vector>

#include "snippetprop/head.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/pipeline.hpp"

namespace snippetprop {
namespace detail {

// One head evaluation plus the internals head_forward keeps to itself. The
// numbers are produced by the same primitive calls in the same order, so they
// are bit-identical to what head_forward would output for the same input.
struct HeadTrace {
  Mat g;    // raw input rows, l x d
  Mat gn;   // l2-normalized rows of g
  Mat wfn;  // normalized foreground direction, 1 x d
  Mat wan;  // normalized class directions, (c+1) x d
  std::vector<double> fg_sim;  // gn . wfn per snippet
  double lambda_sum = 0.0;
  Mat fbarn;  // normalized fbar, 1 x d
  HeadOutput out;
};

// One closed-form walk through a representative set.
struct WalkTrace {
  Mat mu;      // representative rows used by this walk
  Mat mun;     // their normalized rows
  Mat z;       // snippet-to-representative affinity
  Mat c;       // z with unit-mass columns
  Mat colsum;  // 1 x n column masses of z
  Mat a;       // I - w^2 z c^T
  Mat rhs;     // w z mu + x
  Mat ysol;    // solve(a, rhs)
  Mat fprop;   // (1 - w) ysol
};

// The summarization loop: mu[0] is the raw initial means; for each round r,
// z[r] is the assignment against mu[r], c[r] its column-normalized form and
// mu[r+1] the resulting weighted means. mun[r] = l2-normalized mu[r].
struct EmTrace {
  std::vector<Mat> mu;   // size R + 1
  std::vector<Mat> mun;  // size R + 1
  std::vector<Mat> z;    // size R
  std::vector<Mat> c;    // size R
  std::vector<Mat> colsum;  // size R, each 1 x n
};

struct LossTrace {
  Mat x;   // embedded snippets, l x d
  Mat xn;  // l2-normalized rows of x
  bool has_prop = false;
  EmTrace em;
  WalkTrace wa;                  // intra-video walk (valid when has_prop)
  std::optional<WalkTrace> we;   // retrieved-row walk
  HeadTrace hm;                  // main branch head
  HeadTrace ha;                  // intra branch head (valid when has_prop)
  std::optional<HeadTrace> he;   // retrieved branch head
  std::optional<Tcam> target;    // frozen distillation target
  LossParts parts;
  double total = 0.0;
};

// Forward pass of frozen_video_loss with every intermediate kept.
LossTrace run_frozen_forward(const ModelParams& params,
                             const FeatureSequence& video,
                             const std::vector<int>& y,
                             const std::optional<Mat>& mu_e,
                             const std::optional<Tcam>& frozen_target,
                             const TrainConfig& cfg);

}  // namespace detail
}  // namespace snippetprop
