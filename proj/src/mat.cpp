#include "snippetprop/mat.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "snippetprop/errors.hpp"
#include "snippetprop/rng.hpp"

namespace snippetprop {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " +
                                std::to_string(b.rows) + "x" +
                                std::to_string(b.cols) + ")");
  }
}

}  // namespace

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rws) {
  Mat m;
  m.rows = rws.size();
  m.cols = rws.size() ? rws.begin()->size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rws) {
    if (r.size() != m.cols) {
      throw std::invalid_argument("from_rows: ragged rows");
    }
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> Mat::row_copy(std::size_t i) const {
  return std::vector<double>(row_ptr(i), row_ptr(i) + cols);
}

void Mat::set_row(std::size_t i, const std::vector<double>& v) {
  if (v.size() != cols) throw std::invalid_argument("set_row: length mismatch");
  std::copy(v.begin(), v.end(), row_ptr(i));
}

Mat Mat::transposed() const {
  Mat t(cols, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Mat::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Mat add(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "add");
  Mat out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Mat sub(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "sub");
  Mat out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Mat scaled(const Mat& a, double s) {
  Mat out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "hadamard");
  Mat out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

void add_inplace(Mat& a, const Mat& b) {
  check_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void axpy_inplace(Mat& a, double s, const Mat& b) {
  check_same_shape(a, b, "axpy_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

double frob_norm(const Mat& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return std::sqrt(acc);
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::fabs(v));
  return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument(
        "matmul: inner dimensions disagree (" + std::to_string(a.rows) + "x" +
        std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
        std::to_string(b.cols) + ")");
  }
  Mat out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Mat row_softmax(const Mat& x, double scale) {
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xr = x.row_ptr(i);
    double* orow = out.row_ptr(i);
    double mx = -1e300;
    for (std::size_t j = 0; j < x.cols; ++j) mx = std::max(mx, scale * xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      orow[j] = std::exp(scale * xr[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < x.cols; ++j) orow[j] /= sum;
  }
  return out;
}

Mat l2_normalize_rows(const Mat& x) {
  Mat out = x;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double* r = out.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) acc += r[j] * r[j];
    if (acc == 0.0) continue;
    double inv = 1.0 / std::sqrt(acc);
    for (std::size_t j = 0; j < x.cols; ++j) r[j] *= inv;
  }
  return out;
}

Mat l1_normalize_cols(const Mat& x) {
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      if (x(i, j) < 0.0) {
        throw std::invalid_argument(
            "l1_normalize_cols: negative entry at (" + std::to_string(i) +
            "," + std::to_string(j) + ")");
      }
  Mat out = x;
  for (std::size_t j = 0; j < x.cols; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sum += x(i, j);
    if (sum == 0.0) continue;
    for (std::size_t i = 0; i < x.rows; ++i) out(i, j) /= sum;
  }
  return out;
}

Mat solve(const Mat& a, const Mat& b) {
  if (a.rows != a.cols) {
    throw std::invalid_argument("solve: coefficient matrix must be square");
  }
  if (b.rows != a.rows) {
    throw std::invalid_argument("solve: right-hand side has wrong row count");
  }
  const std::size_t n = a.rows;
  Mat lu = a;
  Mat x = b;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::fabs(lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      double v = std::fabs(lu(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best == 0.0) {
      throw NumericError("solve: singular system, no pivot in column " +
                         std::to_string(k));
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      for (std::size_t j = 0; j < x.cols; ++j) std::swap(x(k, j), x(piv, j));
    }
    double inv = 1.0 / lu(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = lu(i, k) * inv;
      lu(i, k) = f;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      for (std::size_t j = 0; j < x.cols; ++j) x(i, j) -= f * x(k, j);
    }
  }
  // Back substitution on the upper factor.
  for (std::size_t ri = n; ri-- > 0;) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      double acc = x(ri, j);
      for (std::size_t k = ri + 1; k < n; ++k) acc -= lu(ri, k) * x(k, j);
      x(ri, j) = acc / lu(ri, ri);
    }
  }
  return x;
}

Mat semi_orthogonal_init(std::size_t rows, std::size_t cols,
                         std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("semi_orthogonal_init: zero dimension");
  }
  bool wide = rows <= cols;  // orthonormalize the shorter side
  std::size_t m = wide ? rows : cols;
  std::size_t k = wide ? cols : rows;
  Rng rng(seed);
  Mat g(m, k);
  for (double& v : g.data) v = rng.normal();
  // Two passes of modified Gram-Schmidt; the second pass repairs the loss of
  // orthogonality the first leaves behind for ill-conditioned draws.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ri = g.row_ptr(i);
      for (std::size_t p = 0; p < i; ++p) {
        const double* rp = g.row_ptr(p);
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += ri[j] * rp[j];
        for (std::size_t j = 0; j < k; ++j) ri[j] -= dot * rp[j];
      }
      double nrm = 0.0;
      for (std::size_t j = 0; j < k; ++j) nrm += ri[j] * ri[j];
      if (nrm == 0.0) {
        // Vanishing probability, but keep the routine total: re-draw the row.
        for (std::size_t j = 0; j < k; ++j) ri[j] = rng.normal();
        nrm = 0.0;
        for (std::size_t j = 0; j < k; ++j) nrm += ri[j] * ri[j];
      }
      double inv = 1.0 / std::sqrt(nrm);
      for (std::size_t j = 0; j < k; ++j) ri[j] *= inv;
    }
  }
  return wide ? g : g.transposed();
}

Mat cosine_sim(const Mat& a, const Mat& b) {
  if (a.cols != b.cols) {
    throw std::invalid_argument("cosine_sim: feature dimensions disagree");
  }
  Mat an = l2_normalize_rows(a);
  Mat bn = l2_normalize_rows(b);
  return matmul(an, bn.transposed());
}

}  // namespace snippetprop
