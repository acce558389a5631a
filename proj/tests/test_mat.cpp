#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "snippetprop/errors.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/rng.hpp"

using namespace snippetprop;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

// Plain triple loop in a different accumulation order than the library.
Mat matmul_naive(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < a.cols; ++k)
        acc += static_cast<long double>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<double>(acc);
    }
  return out;
}

// Extended-precision softmax without the max-shift trick.
std::vector<double> softmax_ref(const std::vector<double>& x, double scale) {
  long double sum = 0.0L;
  std::vector<long double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = expl(static_cast<long double>(scale) * x[i]);
    sum += e[i];
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<double>(e[i] / sum);
  return out;
}

}  // namespace

TEST_CASE("matmul matches a naive reference") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t m = 1 + rng.index(12), k = 1 + rng.index(12),
                n = 1 + rng.index(12);
    Mat a = random_mat(m, k, rng);
    Mat b = random_mat(k, n, rng);
    Mat got = matmul(a, b);
    Mat want = matmul_naive(a, b);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
  CHECK_THROWS_AS(matmul(Mat(2, 3), Mat(4, 2)), std::invalid_argument);
}

TEST_CASE("row_softmax matches extended-precision reference") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng.index(10);
    Mat x = random_mat(1, n, rng, 3.0);
    double scale = 0.25 + 8.0 * rng.uniform();
    Mat y = row_softmax(x, scale);
    auto want = softmax_ref(x.row_copy(0), scale);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(std::fabs(y(0, j) - want[j]) < 1e-12);
      CHECK(y(0, j) > 0.0);
      sum += y(0, j);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("row_softmax is invariant to constant row shifts and large inputs") {
  Mat a = Mat::from_rows({{1.0, 2.0, 3.0}});
  Mat b = Mat::from_rows({{1001.0, 1002.0, 1003.0}});
  Mat ya = row_softmax(a, 1.0);
  Mat yb = row_softmax(b, 1.0);
  CHECK(max_abs_diff(ya, yb) < 1e-12);
  CHECK(yb.all_finite());
}

TEST_CASE("l2_normalize_rows") {
  Mat m = Mat::from_rows({{3.0, 4.0}, {0.0, 0.0}});
  Mat n = l2_normalize_rows(m);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n(1, 0) == 0.0);
  CHECK(n(1, 1) == 0.0);

  Rng rng(13);
  Mat r = random_mat(7, 5, rng);
  Mat rn = l2_normalize_rows(r);
  for (std::size_t i = 0; i < r.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < r.cols; ++j) acc += rn(i, j) * rn(i, j);
    CHECK(std::fabs(acc - 1.0) < 1e-12);
  }
}

TEST_CASE("l1_normalize_cols") {
  Mat m = Mat::from_rows({{1.0, 0.0}, {3.0, 0.0}});
  Mat n = l1_normalize_cols(m);
  CHECK(n(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(n(1, 0) == doctest::Approx(0.75).epsilon(1e-15));
  // zero column passes through
  CHECK(n(0, 1) == 0.0);
  CHECK(n(1, 1) == 0.0);

  Mat bad = Mat::from_rows({{1.0}, {-0.5}});
  CHECK_THROWS_AS(l1_normalize_cols(bad), std::invalid_argument);
}

TEST_CASE("solve recovers a planted solution and reports singularity") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 1 + rng.index(10), m = 1 + rng.index(4);
    Mat a = random_mat(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 4.0;  // well conditioned
    Mat want = random_mat(n, m, rng);
    Mat b = matmul(a, want);
    Mat got = solve(a, b);
    CHECK(max_abs_diff(got, want) < 1e-9);
  }

  // Anti-diagonal system forces pivoting on every column.
  Mat p = Mat::from_rows({{0.0, 2.0}, {3.0, 0.0}});
  Mat rhs = Mat::from_rows({{2.0}, {6.0}});
  Mat x = solve(p, rhs);
  CHECK(x(0, 0) == doctest::Approx(2.0));
  CHECK(x(1, 0) == doctest::Approx(1.0));

  Mat sing = Mat::from_rows({{1.0, 2.0}, {2.0, 4.0}});
  CHECK_THROWS_WITH_AS(solve(sing, rhs),
                       "solve: singular system, no pivot in column 1",
                       NumericError);
  CHECK_THROWS_AS(solve(Mat(2, 3), rhs), std::invalid_argument);
  CHECK_THROWS_AS(solve(Mat::identity(2), Mat(3, 1)), std::invalid_argument);
}

TEST_CASE("semi_orthogonal_init yields orthonormal rows or columns") {
  // wide: rows <= cols, expect G * G^T = I
  Mat g = semi_orthogonal_init(4, 9, 77);
  Mat gram = matmul(g, g.transposed());
  CHECK(max_abs_diff(gram, Mat::identity(4)) < 1e-12);

  // tall: rows > cols, expect G^T * G = I
  Mat t = semi_orthogonal_init(9, 4, 78);
  Mat gram2 = matmul(t.transposed(), t);
  CHECK(max_abs_diff(gram2, Mat::identity(4)) < 1e-12);

  // square
  Mat s = semi_orthogonal_init(5, 5, 79);
  CHECK(max_abs_diff(matmul(s, s.transposed()), Mat::identity(5)) < 1e-12);

  // determinism and seed sensitivity
  Mat g2 = semi_orthogonal_init(4, 9, 77);
  CHECK(max_abs_diff(g, g2) == 0.0);
  Mat g3 = semi_orthogonal_init(4, 9, 80);
  CHECK(max_abs_diff(g, g3) > 1e-3);

  CHECK_THROWS_AS(semi_orthogonal_init(0, 3, 1), std::invalid_argument);
}

TEST_CASE("cosine_sim") {
  Mat a = Mat::from_rows({{1.0, 0.0}, {0.0, 0.0}});
  Mat b = Mat::from_rows({{2.0, 0.0}, {0.0, -3.0}, {1.0, 1.0}});
  Mat c = cosine_sim(a, b);
  CHECK(c.rows == 2);
  CHECK(c.cols == 3);
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c(0, 1) == doctest::Approx(0.0));
  CHECK(c(0, 2) == doctest::Approx(std::sqrt(0.5)));
  // zero row of a gives zero similarity everywhere
  CHECK(c(1, 0) == 0.0);
  CHECK(c(1, 1) == 0.0);

  Rng rng(15);
  Mat r = random_mat(6, 8, rng);
  Mat sim = cosine_sim(r, r);
  for (std::size_t i = 0; i < sim.rows; ++i) {
    CHECK(sim(i, i) == doctest::Approx(1.0));
    for (std::size_t j = 0; j < sim.cols; ++j) {
      CHECK(sim(i, j) <= 1.0 + 1e-12);
      CHECK(sim(i, j) >= -1.0 - 1e-12);
    }
  }
}

TEST_CASE("deterministic rng building blocks") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
  }
  Rng c(42), d(42);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> w = v;
  c.shuffle(v);
  d.shuffle(w);
  CHECK(v == w);
  Rng e(43);
  std::vector<int> u{0, 1, 2, 3, 4, 5, 6, 7};
  e.shuffle(u);
  CHECK(u != v);
}
