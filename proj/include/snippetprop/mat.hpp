#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace snippetprop {

// Dense row-major matrix of doubles. All kernels in this project iterate rows
// outer, columns inner, accumulating left to right, so results are identical
// from run to run on the same platform.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rws);
  static Mat identity(std::size_t n);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }

  const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }
  double* row_ptr(std::size_t i) { return data.data() + i * cols; }

  std::vector<double> row_copy(std::size_t i) const;
  void set_row(std::size_t i, const std::vector<double>& v);

  Mat transposed() const;
  bool all_finite() const;
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Elementwise helpers used throughout the gradient code.
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scaled(const Mat& a, double s);
Mat hadamard(const Mat& a, const Mat& b);
void add_inplace(Mat& a, const Mat& b);
void axpy_inplace(Mat& a, double s, const Mat& b);  // a += s * b
double frob_norm(const Mat& a);
double max_abs(const Mat& a);
double max_abs_diff(const Mat& a, const Mat& b);

// a (m x k) times b (k x n). Throws on inner-dimension mismatch.
Mat matmul(const Mat& a, const Mat& b);

// Row-wise softmax of scale * x. Subtracts the row max before exponentiating.
Mat row_softmax(const Mat& x, double scale);

// Rows rescaled to unit Euclidean norm; all-zero rows pass through unchanged.
Mat l2_normalize_rows(const Mat& x);

// Columns rescaled to unit l1 mass. Entries must be non-negative; columns
// that sum to zero pass through unchanged.
Mat l1_normalize_cols(const Mat& x);

// Solves a * x = b for x with partially pivoted LU. a is n x n, b is n x m.
// Throws NumericError naming the failing pivot column when a is singular.
Mat solve(const Mat& a, const Mat& b);

// Seeded random matrix with orthonormal rows (rows <= cols) or orthonormal
// columns (rows > cols): Gaussian init followed by two rounds of modified
// Gram-Schmidt. Throws when the requested shape has a zero dimension.
Mat semi_orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

// Pairwise cosine similarity between rows of a and rows of b; zero rows give
// zero similarity.
Mat cosine_sim(const Mat& a, const Mat& b);

}  // namespace snippetprop
