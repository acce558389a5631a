#include "snippetprop/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "snippetprop/errors.hpp"
#include "snippetprop/rng.hpp"

namespace snippetprop {

std::string to_string(SummarizeStrategy s) {
  switch (s) {
    case SummarizeStrategy::em_attention: return "em_attention";
    case SummarizeStrategy::top_score: return "top_score";
    case SummarizeStrategy::kmeans: return "kmeans";
  }
  return "unknown";
}

void EmConfig::validate() const {
  if (n < 1) throw ConfigError("em: n must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("em: lambda must be > 0");
  if (iterations < 1) throw ConfigError("em: iterations must be >= 1");
}

Mat em_e_step(const Mat& f, const Mat& mu, double lambda) {
  if (f.cols != mu.cols) {
    throw std::invalid_argument("em_e_step: feature dimensions disagree");
  }
  return row_softmax(cosine_sim(f, mu), lambda);
}

Mat em_m_step(const Mat& f, const Mat& z) {
  if (z.rows != f.rows) {
    throw std::invalid_argument("em_m_step: z rows must match snippet count");
  }
  return matmul(l1_normalize_cols(z).transposed(), f);
}

RepresentativeSet summarize_em(const Mat& f, const EmConfig& cfg,
                               const Mat& mu0) {
  cfg.validate();
  if (mu0.rows != static_cast<std::size_t>(cfg.n) || mu0.cols != f.cols) {
    throw std::invalid_argument("summarize_em: mu0 must be n x d");
  }
  Mat mu = mu0;
  for (int r = 0; r < cfg.iterations; ++r) {
    Mat z = em_e_step(f, mu, cfg.lambda);
    mu = em_m_step(f, z);
  }
  RepresentativeSet out;
  out.z = em_e_step(f, mu, cfg.lambda);
  out.mu = std::move(mu);
  out.strategy = SummarizeStrategy::em_attention;
  return out;
}

RepresentativeSet summarize_top_score(const Mat& f,
                                      const std::vector<double>& scores, int n,
                                      double lambda) {
  if (scores.size() != f.rows) {
    throw std::invalid_argument("summarize_top_score: one score per snippet");
  }
  if (n < 1 || static_cast<std::size_t>(n) > f.rows) {
    throw std::invalid_argument(
        "summarize_top_score: n must be in [1, snippet count]");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("summarize_top_score: non-finite score");
    }
  }
  std::vector<std::size_t> order(f.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  RepresentativeSet out;
  out.mu = Mat(n, f.cols);
  for (int i = 0; i < n; ++i) out.mu.set_row(i, f.row_copy(order[i]));
  out.z = em_e_step(f, out.mu, lambda);
  out.strategy = SummarizeStrategy::top_score;
  return out;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double t = a[j] - b[j];
    acc += t * t;
  }
  return acc;
}

}  // namespace

namespace {

// One Lloyd run from a farthest-point seeding anchored at first_seed.
Mat lloyd_run(const Mat& f, int n, int iters, std::size_t first_seed) {
  const std::size_t l = f.rows, d = f.cols;
  std::vector<std::size_t> seeds{first_seed};
  std::vector<double> dist(l, std::numeric_limits<double>::infinity());
  while (seeds.size() < static_cast<std::size_t>(n)) {
    const double* last = f.row_ptr(seeds.back());
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < l; ++i) {
      dist[i] = std::min(dist[i], sq_dist(f.row_ptr(i), last, d));
      if (dist[i] > far_d) {
        far_d = dist[i];
        far = i;
      }
    }
    seeds.push_back(far);
  }
  Mat mu(n, d);
  for (int k = 0; k < n; ++k) mu.set_row(k, f.row_copy(seeds[k]));

  std::vector<int> assign(l, 0);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < l; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k) {
        double dd = sq_dist(f.row_ptr(i), mu.row_ptr(k), d);
        if (dd < best_d) {
          best_d = dd;
          best = k;
        }
      }
      assign[i] = best;
    }
    Mat sums(n, d, 0.0);
    std::vector<int> count(n, 0);
    for (std::size_t i = 0; i < l; ++i) {
      ++count[assign[i]];
      const double* r = f.row_ptr(i);
      double* s = sums.row_ptr(assign[i]);
      for (std::size_t j = 0; j < d; ++j) s[j] += r[j];
    }
    for (int k = 0; k < n; ++k) {
      if (count[k] > 0) {
        for (std::size_t j = 0; j < d; ++j) sums(k, j) /= count[k];
        mu.set_row(k, sums.row_copy(k));
      } else {
        // Re-seed the empty cluster from the worst-fit point.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < l; ++i) {
          double dd = sq_dist(f.row_ptr(i), mu.row_ptr(assign[i]), d);
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        mu.set_row(k, f.row_copy(far));
        assign[far] = k;
      }
    }
  }
  return mu;
}

double inertia(const Mat& f, const Mat& mu) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mu.rows; ++k)
      best = std::min(best, sq_dist(f.row_ptr(i), mu.row_ptr(k), f.cols));
    acc += best;
  }
  return acc;
}

}  // namespace

RepresentativeSet summarize_kmeans(const Mat& f, int n, int iters,
                                   std::uint64_t seed) {
  if (n < 1 || static_cast<std::size_t>(n) > f.rows) {
    throw std::invalid_argument("summarize_kmeans: n must be in [1, snippet count]");
  }
  if (iters < 1) throw std::invalid_argument("summarize_kmeans: iters >= 1");
  const std::size_t l = f.rows, d = f.cols;

  // Farthest-point seeding still lands in poor basins now and then, so try a
  // handful of anchor points (seed-shuffled) and keep the lowest-inertia run.
  Rng rng(seed);
  std::vector<std::size_t> anchors(l);
  for (std::size_t i = 0; i < l; ++i) anchors[i] = i;
  rng.shuffle(anchors);
  std::size_t restarts = std::min<std::size_t>(l, 12);

  Mat mu;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Mat cand = lloyd_run(f, n, iters, anchors[r]);
    double s = inertia(f, cand);
    if (s < best_sse) {
      best_sse = s;
      mu = std::move(cand);
    }
  }

  // Final hard assignment against the winning centroids.
  RepresentativeSet out;
  out.z = Mat(l, n, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
      double dd = sq_dist(f.row_ptr(i), mu.row_ptr(k), d);
      if (dd < best_d) {
        best_d = dd;
        best = k;
      }
    }
    out.z(i, best) = 1.0;
  }
  out.mu = std::move(mu);
  out.strategy = SummarizeStrategy::kmeans;
  return out;
}

std::vector<double> representativeness_profile(
    const Mat& f, const Mat& mu, const std::vector<int>& snippet_class,
    const std::vector<double>& thresholds) {
  if (snippet_class.size() != f.rows) {
    throw std::invalid_argument(
        "representativeness_profile: one class label per snippet");
  }
  Mat sim = cosine_sim(mu, f);  // n x l
  std::vector<double> out(thresholds.size(), 0.0);
  for (std::size_t r = 0; r < mu.rows; ++r) {
    // Label the representative by its nearest snippet.
    std::size_t nearest = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.rows; ++i) {
      if (sim(r, i) > best) {
        best = sim(r, i);
        nearest = i;
      }
    }
    int cls = snippet_class[nearest];
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      int above = 0, total = 0;
      for (std::size_t i = 0; i < f.rows; ++i) {
        if (snippet_class[i] != cls) continue;
        ++total;
        if (sim(r, i) > thresholds[t]) ++above;
      }
      // the nearest snippet itself shares the class, so total >= 1
      out[t] += static_cast<double>(above) / total;
    }
  }
  for (double& v : out) v /= static_cast<double>(mu.rows);
  return out;
}

std::vector<double> default_profile_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 9; ++i) t.push_back(i / 10.0);
  return t;
}

}  // namespace snippetprop
