#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snippetprop/mat.hpp"

namespace snippetprop {

enum class PropagationMode { iterative, closed_form, vanilla_rw };

std::string to_string(PropagationMode m);
PropagationMode propagation_mode_from_string(const std::string& s);

struct PropagationConfig {
  double w = 0.5;  // trade-off between propagated and original features
  PropagationMode mode = PropagationMode::closed_form;
  int iterations = 20;  // unroll depth for iterative mode
  double lambda = 5.0;  // affinity temperature

  void validate() const;  // throws ConfigError; w must stay in [0,1)
};

// Row-stochastic affinity between snippets and representatives, shared with
// the summarization E-step.
Mat affinity(const Mat& f, const Mat& mu, double lambda);

// Unrolled bipartite walk: t rounds of pushing snippet mass into the
// representatives and back, each round blended with the originals by w.
Mat birw_iterate(const Mat& f, const Mat& mu, const Mat& z, double w, int t);

// Fixed point of the walk above: (1-w) * (I - w^2 z Norm1(z)^T)^-1 (w z mu + f),
// computed via a linear solve rather than an explicit inverse.
Mat birw_closed_form(const Mat& f, const Mat& mu, const Mat& z, double w);

enum class RwMode { closed_form, single_step };

// Ordinary random walk over the snippet self-affinity graph, the baseline the
// bipartite version is measured against.
Mat vanilla_rw(const Mat& f, const Mat& z_ff, double w, RwMode mode);

struct PropagationResult {
  Mat fa;                 // propagated through intra-video representatives
  std::optional<Mat> fe;  // propagated through retrieved rows, when available
};

// Runs the configured propagation once per representative source. The two
// sources are deliberately kept separate; concatenating them would let a
// large retrieved set drown out the intra-video rows.
PropagationResult propagate_both(const Mat& f, const Mat& mu_a,
                                 const std::optional<Mat>& mu_e,
                                 const PropagationConfig& cfg);

// Timing sweep of iterative versus closed-form inference.
struct BirwBenchRow {
  std::size_t l = 0;
  std::size_t n = 0;
  std::string mode;
  int t = 0;  // 0 for closed form
  long long wall_ns = 0;
  double max_err_vs_closed = 0.0;
};

std::vector<BirwBenchRow> birw_benchmark(const std::vector<std::size_t>& ls,
                                         const std::vector<std::size_t>& ns,
                                         const std::vector<int>& ts, double w,
                                         double lambda, std::uint64_t seed);

void write_benchmark_csv(const std::vector<BirwBenchRow>& rows,
                         const std::filesystem::path& path);

}  // namespace snippetprop
