#include "snippetprop/propagate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "snippetprop/errors.hpp"
#include "snippetprop/rng.hpp"
#include "snippetprop/summarize.hpp"

namespace snippetprop {

std::string to_string(PropagationMode m) {
  switch (m) {
    case PropagationMode::iterative: return "iterative";
    case PropagationMode::closed_form: return "closed_form";
    case PropagationMode::vanilla_rw: return "vanilla_rw";
  }
  return "unknown";
}

PropagationMode propagation_mode_from_string(const std::string& s) {
  if (s == "iterative") return PropagationMode::iterative;
  if (s == "closed_form") return PropagationMode::closed_form;
  if (s == "vanilla_rw") return PropagationMode::vanilla_rw;
  throw ConfigError("unknown propagation mode '" + s + "'");
}

void PropagationConfig::validate() const {
  if (!(w >= 0.0) || !(w < 1.0)) {
    throw ConfigError("propagation: w must lie in [0,1), got " +
                      std::to_string(w));
  }
  if (iterations < 1) throw ConfigError("propagation: iterations must be >= 1");
  if (!(lambda > 0.0)) throw ConfigError("propagation: lambda must be > 0");
}

namespace {

void check_walk_inputs(const Mat& f, const Mat& mu, const Mat& z, double w) {
  if (!(w >= 0.0) || !(w < 1.0)) {
    throw std::invalid_argument("walk weight w must lie in [0,1)");
  }
  if (mu.cols != f.cols) {
    throw std::invalid_argument("walk: feature dimensions disagree");
  }
  if (z.rows != f.rows || z.cols != mu.rows) {
    throw std::invalid_argument("walk: z must be snippet-by-representative");
  }
  for (std::size_t i = 0; i < z.rows; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < z.cols; ++k) {
      if (z(i, k) < 0.0) {
        throw std::invalid_argument("walk: z has a negative entry");
      }
      sum += z(i, k);
    }
    if (std::fabs(sum - 1.0) > 1e-7) {
      throw std::invalid_argument("walk: z rows must sum to 1");
    }
  }
}

}  // namespace

Mat affinity(const Mat& f, const Mat& mu, double lambda) {
  return em_e_step(f, mu, lambda);
}

Mat birw_iterate(const Mat& f, const Mat& mu, const Mat& z, double w, int t) {
  check_walk_inputs(f, mu, z, w);
  if (t < 1) throw std::invalid_argument("birw_iterate: t must be >= 1");
  Mat nzt = l1_normalize_cols(z).transposed();  // n x l
  Mat f_t = f;
  for (int k = 0; k < t; ++k) {
    Mat mu_t = add(scaled(matmul(nzt, f_t), w), scaled(mu, 1.0 - w));
    f_t = add(scaled(matmul(z, mu_t), w), scaled(f, 1.0 - w));
  }
  return f_t;
}

Mat birw_closed_form(const Mat& f, const Mat& mu, const Mat& z, double w) {
  check_walk_inputs(f, mu, z, w);
  Mat nzt = l1_normalize_cols(z).transposed();
  Mat r = matmul(z, nzt);  // l x l, row sums <= 1
  Mat a = sub(Mat::identity(f.rows), scaled(r, w * w));
  Mat rhs = add(scaled(matmul(z, mu), w), f);
  return scaled(solve(a, rhs), 1.0 - w);
}

Mat vanilla_rw(const Mat& f, const Mat& z_ff, double w, RwMode mode) {
  if (z_ff.rows != z_ff.cols || z_ff.rows != f.rows) {
    throw std::invalid_argument(
        "vanilla_rw: z_ff must be the square snippet self-affinity");
  }
  check_walk_inputs(f, Mat(z_ff.cols, f.cols), z_ff, w);
  if (mode == RwMode::single_step) {
    return add(scaled(matmul(z_ff, f), w), scaled(f, 1.0 - w));
  }
  Mat a = sub(Mat::identity(f.rows), scaled(z_ff, w));
  return scaled(solve(a, f), 1.0 - w);
}

PropagationResult propagate_both(const Mat& f, const Mat& mu_a,
                                 const std::optional<Mat>& mu_e,
                                 const PropagationConfig& cfg) {
  cfg.validate();
  if (mu_a.rows == 0) {
    throw std::invalid_argument("propagate_both: mu_a must be nonempty");
  }
  auto run = [&](const Mat& mu) -> Mat {
    switch (cfg.mode) {
      case PropagationMode::iterative:
        return birw_iterate(f, mu, affinity(f, mu, cfg.lambda), cfg.w,
                            cfg.iterations);
      case PropagationMode::closed_form:
        return birw_closed_form(f, mu, affinity(f, mu, cfg.lambda), cfg.w);
      case PropagationMode::vanilla_rw:
        // baseline: the walk runs over the snippet self-affinity instead of
        // the representatives, which are ignored by construction
        return vanilla_rw(f, affinity(f, f, cfg.lambda), cfg.w,
                          RwMode::closed_form);
    }
    throw std::logic_error("unreachable propagation mode");
  };
  PropagationResult out;
  out.fa = run(mu_a);
  if (mu_e.has_value()) out.fe = run(*mu_e);
  return out;
}

std::vector<BirwBenchRow> birw_benchmark(const std::vector<std::size_t>& ls,
                                         const std::vector<std::size_t>& ns,
                                         const std::vector<int>& ts, double w,
                                         double lambda, std::uint64_t seed) {
  using clock = std::chrono::steady_clock;
  Rng rng(seed);
  std::vector<BirwBenchRow> rows;
  for (std::size_t l : ls) {
    for (std::size_t n : ns) {
      Mat f(l, 16);
      for (double& v : f.data) v = rng.normal();
      Mat mu(n, 16);
      for (double& v : mu.data) v = rng.normal();
      Mat z = affinity(f, mu, lambda);

      auto t0 = clock::now();
      Mat closed = birw_closed_form(f, mu, z, w);
      auto t1 = clock::now();
      BirwBenchRow base;
      base.l = l;
      base.n = n;
      base.mode = "closed_form";
      base.t = 0;
      base.wall_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
      base.max_err_vs_closed = 0.0;
      rows.push_back(base);

      for (int t : ts) {
        auto t2 = clock::now();
        Mat it = birw_iterate(f, mu, z, w, t);
        auto t3 = clock::now();
        BirwBenchRow row;
        row.l = l;
        row.n = n;
        row.mode = "iterative";
        row.t = t;
        row.wall_ns =
            std::chrono::duration_cast<std::chrono::nanoseconds>(t3 - t2)
                .count();
        row.max_err_vs_closed = max_abs_diff(it, closed);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_benchmark_csv(const std::vector<BirwBenchRow>& rows,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << "l,n,mode,t,wall_ns,max_err_vs_closed\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.max_err_vs_closed);
    os << r.l << ',' << r.n << ',' << r.mode << ',' << r.t << ',' << r.wall_ns
       << ',' << buf << '\n';
  }
}

}  // namespace snippetprop
