#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snippetprop/mat.hpp"

namespace snippetprop {

enum class SummarizeStrategy { em_attention, top_score, kmeans };

std::string to_string(SummarizeStrategy s);

// A condensed stand-in for a snippet sequence: n representative rows plus the
// soft (or hard) assignment of each original snippet to them.
struct RepresentativeSet {
  Mat mu;  // n x d representatives
  Mat z;   // l x n assignment weights
  SummarizeStrategy strategy = SummarizeStrategy::em_attention;
};

struct EmConfig {
  int n = 8;
  double lambda = 5.0;
  int iterations = 2;
  bool learn_init = true;

  void validate() const;  // throws ConfigError
};

// Soft assignment of each snippet to each representative: row-wise softmax of
// lambda times the cosine similarity. Rows sum to one.
Mat em_e_step(const Mat& f, const Mat& mu, double lambda);

// Weighted means: normalize z's columns to unit mass, then accumulate
// snippets. A component with zero total mass yields a zero row.
Mat em_m_step(const Mat& f, const Mat& z);

// Alternate E and M steps starting from mu0, then recompute the assignment
// against the final means so that downstream consumers see a consistent pair.
RepresentativeSet summarize_em(const Mat& f, const EmConfig& cfg, const Mat& mu0);

// Pick the n highest-scoring snippets (ties broken toward the earlier
// snippet); the assignment is a final E-step against the picked rows.
RepresentativeSet summarize_top_score(const Mat& f,
                                      const std::vector<double>& scores, int n,
                                      double lambda = 5.0);

// Lloyd's algorithm with farthest-point seeding; empty clusters are re-seeded
// from the point farthest from its centroid. The assignment is one-hot.
RepresentativeSet summarize_kmeans(const Mat& f, int n, int iters,
                                   std::uint64_t seed);

// For each representative, label it with the class of its nearest snippet,
// then report per threshold the fraction of same-class snippets whose cosine
// similarity to it exceeds the threshold, averaged over representatives.
std::vector<double> representativeness_profile(
    const Mat& f, const Mat& mu, const std::vector<int>& snippet_class,
    const std::vector<double>& thresholds);

// The usual diagnostic grid 0.1, 0.2, ..., 0.9.
std::vector<double> default_profile_thresholds();

}  // namespace snippetprop
