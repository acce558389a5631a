#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "snippetprop/errors.hpp"
#include "snippetprop/head.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/rng.hpp"

using namespace snippetprop;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

HeadParams random_params(int c, int d, Rng& rng) {
  HeadParams p;
  p.w_f = random_mat(1, d, rng);
  p.w_a = random_mat(c + 1, d, rng);
  return p;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("distribution invariants hold on random inputs") {
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t l = 1 + rng.index(12);
    int c = 1 + static_cast<int>(rng.index(5));
    Mat f = random_mat(l, 6, rng);
    HeadParams p = random_params(c, 6, rng);
    HeadOutput out = head_forward(f, p);

    for (double v : out.lambda_f) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    for (std::size_t i = 0; i < l; ++i) {
      double s = 0.0;
      for (int k = 0; k <= c; ++k) s += out.tcam(i, k);
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
    for (int k = 0; k <= c; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < l; ++i) s += out.lambda_w(i, k);
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
    double sca = 0.0, smil = 0.0;
    for (int k = 0; k <= c; ++k) {
      sca += out.p_ca[k];
      smil += out.p_mil[k];
    }
    CHECK(std::fabs(sca - 1.0) < 1e-9);
    CHECK(std::fabs(smil - 1.0) < 1e-9);
  }
}

TEST_CASE("single snippet collapses the temporal softmax") {
  Rng rng(82);
  Mat f = random_mat(1, 4, rng);
  HeadParams p = random_params(2, 4, rng);
  HeadOutput out = head_forward(f, p);
  for (int k = 0; k <= 2; ++k) CHECK(out.lambda_w(0, k) == 1.0);
  // p_mil reduces to the softmax of the single logits row
  Mat t = row_softmax(out.s_logits, 1.0);
  for (int k = 0; k <= 2; ++k) {
    CHECK(out.p_mil[k] == doctest::Approx(t(0, k)).epsilon(1e-12));
  }
}

TEST_CASE("constant snippets make every row agree with the video feature") {
  Rng rng(83);
  std::vector<double> row{0.3, -1.2, 0.7};
  Mat f(4, 3);
  for (int i = 0; i < 4; ++i) f.set_row(i, row);
  HeadParams p = random_params(2, 3, rng);
  HeadOutput out = head_forward(f, p);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(out.fbar(0, j) == doctest::Approx(row[j]).epsilon(1e-12));
  }
  for (int i = 1; i < 4; ++i)
    for (int k = 0; k <= 2; ++k)
      CHECK(out.tcam(i, k) == doctest::Approx(out.tcam(0, k)).epsilon(1e-12));
  // p_ca = softmax of the shared row's class similarities
  Mat sim = cosine_sim(f, p.w_a);
  std::vector<double> logits(3);
  for (int k = 0; k <= 2; ++k) logits[k] = p.attn_scale * sim(0, k);
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  for (int k = 0; k <= 2; ++k) {
    CHECK(out.p_ca[k] ==
          doctest::Approx(std::exp(logits[k] - mx) / sum).epsilon(1e-9));
  }
}

TEST_CASE("two-snippet walkthrough with scalar arithmetic") {
  // c=1, d=2; everything recomputed with plain doubles below.
  Mat f = Mat::from_rows({{1.0, 0.0}, {0.6, 0.8}});
  HeadParams p;
  p.w_f = Mat::from_rows({{2.0, 0.0}});    // direction (1,0)
  p.w_a = Mat::from_rows({{0.0, 1.0},      // class 0 direction (0,1)
                          {-1.0, 0.0}});   // background (-1,0)
  p.attn_scale = 8.0;
  HeadOutput out = head_forward(f, p);

  auto sigmoid = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double lam0 = sigmoid(8.0 * 1.0);
  double lam1 = sigmoid(8.0 * 0.6);
  CHECK(out.lambda_f[0] == doctest::Approx(lam0).epsilon(1e-9));
  CHECK(out.lambda_f[1] == doctest::Approx(lam1).epsilon(1e-9));

  double fbar_x = (lam0 * 1.0 + lam1 * 0.6) / (lam0 + lam1);
  double fbar_y = (lam0 * 0.0 + lam1 * 0.8) / (lam0 + lam1);
  CHECK(out.fbar(0, 0) == doctest::Approx(fbar_x).epsilon(1e-9));
  CHECK(out.fbar(0, 1) == doctest::Approx(fbar_y).epsilon(1e-9));

  double fbar_n = std::sqrt(fbar_x * fbar_x + fbar_y * fbar_y);
  double ca0 = 8.0 * (fbar_y / fbar_n);   // cos to (0,1)
  double ca1 = 8.0 * (-fbar_x / fbar_n);  // cos to (-1,0)
  double ca_sum = std::exp(ca0) + std::exp(ca1);
  CHECK(out.p_ca[0] == doctest::Approx(std::exp(ca0) / ca_sum).epsilon(1e-6));
  CHECK(out.p_ca[1] == doctest::Approx(std::exp(ca1) / ca_sum).epsilon(1e-6));

  // s_logits: row 0 of f is unit (1,0); row 1 is unit (0.6,0.8)
  double s00 = 8.0 * 0.0, s01 = 8.0 * -1.0;
  double s10 = 8.0 * 0.8, s11 = 8.0 * -0.6;
  CHECK(out.s_logits(0, 0) == doctest::Approx(s00).epsilon(1e-9));
  CHECK(out.s_logits(0, 1) == doctest::Approx(s01).epsilon(1e-9));
  CHECK(out.s_logits(1, 0) == doctest::Approx(s10).epsilon(1e-9));
  CHECK(out.s_logits(1, 1) == doctest::Approx(s11).epsilon(1e-9));

  double t00 = std::exp(s00) / (std::exp(s00) + std::exp(s01));
  double t10 = std::exp(s10) / (std::exp(s10) + std::exp(s11));
  CHECK(out.tcam(0, 0) == doctest::Approx(t00).epsilon(1e-6));
  CHECK(out.tcam(1, 0) == doctest::Approx(t10).epsilon(1e-6));

  double w00 = std::exp(s00) / (std::exp(s00) + std::exp(s10));
  double w10 = std::exp(s10) / (std::exp(s00) + std::exp(s10));
  double w01 = std::exp(s01) / (std::exp(s01) + std::exp(s11));
  double w11 = std::exp(s11) / (std::exp(s01) + std::exp(s11));
  CHECK(out.lambda_w(0, 0) == doctest::Approx(w00).epsilon(1e-6));
  CHECK(out.lambda_w(1, 0) == doctest::Approx(w10).epsilon(1e-6));

  double m0 = w00 * s00 + w10 * s10;
  double m1 = w01 * s01 + w11 * s11;
  double mil_sum = std::exp(m0) + std::exp(m1);
  CHECK(out.p_mil[0] == doctest::Approx(std::exp(m0) / mil_sum).epsilon(1e-6));
  CHECK(out.p_mil[1] == doctest::Approx(std::exp(m1) / mil_sum).epsilon(1e-6));
}

TEST_CASE("score_snippets matches the forward tcam and self-similarity peaks") {
  Rng rng(84);
  Mat f = random_mat(7, 5, rng);
  HeadParams p = random_params(3, 5, rng);
  Mat scores = score_snippets(f, p);
  HeadOutput out = head_forward(f, p);
  CHECK(max_abs_diff(scores, out.tcam) == 0.0);

  // a row equal to a class direction puts the argmax on that class
  Mat probe(1, 5);
  probe.set_row(0, p.w_a.row_copy(1));
  Mat ps = score_snippets(probe, p);
  std::size_t best = 0;
  for (std::size_t k = 0; k < ps.cols; ++k)
    if (ps(0, k) > ps(0, best)) best = k;
  CHECK(best == 1);
  double sum = 0.0;
  for (std::size_t k = 0; k < ps.cols; ++k) sum += ps(0, k);
  CHECK(std::fabs(sum - 1.0) < 1e-12);
}

TEST_CASE("loss_cls equals a scalar recomputation and bottoms at entropy") {
  Rng rng(85);
  Mat f = random_mat(6, 4, rng);
  HeadParams p = random_params(3, 4, rng);
  HeadOutput out = head_forward(f, p);
  std::vector<int> y{1, 0, 1};
  double gamma = 0.2;

  double l_ca = -0.5 * std::log(out.p_ca[0]) - 0.5 * std::log(out.p_ca[2]);
  double l_mil = -(std::log(out.p_mil[0]) + std::log(out.p_mil[2]) +
                   std::log(out.p_mil[3])) / 3.0;
  CHECK(loss_cls(out, y, gamma) ==
        doctest::Approx(l_ca + gamma * l_mil).epsilon(1e-9));

  // prediction exactly equal to the target hits the entropy lower bound
  HeadOutput ideal = out;
  ideal.p_ca = {0.5, 0.0, 0.5, 0.0};
  ideal.p_mil = {1.0 / 3, 0.0, 1.0 / 3, 1.0 / 3};
  double want = entropy(ideal.p_ca) + gamma * entropy(ideal.p_mil);
  CHECK(loss_cls(ideal, y, gamma) == doctest::Approx(want).epsilon(1e-9));

  // single-class video with a perfectly confident attention branch
  HeadOutput one = out;
  one.p_ca = {0.0, 1.0, 0.0, 0.0};
  std::vector<int> y1{0, 1, 0};
  double l1 = loss_cls(one, y1, 0.0);
  CHECK(l1 == doctest::Approx(0.0));

  CHECK_THROWS_AS(loss_cls(out, std::vector<int>{0, 0, 0}, gamma),
                  std::invalid_argument);
  CHECK_THROWS_AS(loss_cls(out, std::vector<int>{1, 0}, gamma),
                  std::invalid_argument);
}

TEST_CASE("loss_kd: equality gives entropy, Gibbs bound holds") {
  Rng rng(86);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t l = 1 + rng.index(8);
    std::size_t cb = 2 + rng.index(4);
    Mat t_fused = row_softmax(random_mat(l, cb, rng, 2.0), 1.0);
    Mat t_main = row_softmax(random_mat(l, cb, rng, 2.0), 1.0);

    double h = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
      std::vector<double> row = t_fused.row_copy(i);
      h += entropy(row);
    }
    h /= static_cast<double>(l);
    CHECK(loss_kd(t_fused, t_fused) == doctest::Approx(h).epsilon(1e-9));
    CHECK(loss_kd(t_main, t_fused) - h >= -1e-12);
  }

  // 2x2 hand computation
  Mat tm = Mat::from_rows({{0.7, 0.3}, {0.2, 0.8}});
  Mat tf = Mat::from_rows({{1.0, 0.0}, {0.5, 0.5}});
  double want = -(1.0 * std::log(0.7) + 0.5 * std::log(0.2) +
                  0.5 * std::log(0.8)) / 2.0;
  CHECK(loss_kd(tm, tf) == doctest::Approx(want).epsilon(1e-9));

  CHECK_THROWS_AS(loss_kd(tm, Mat(3, 2, 0.5)), std::invalid_argument);
}

TEST_CASE("loss_att matches a sort oracle and its closed cases") {
  CHECK(loss_att({1.0, 1.0, 0.0, 0.0}, 0.25) == 0.0);
  CHECK(loss_att(std::vector<double>(9, 0.5), 1.0 / 8.0) == doctest::Approx(1.0));

  Rng rng(87);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t l = 1 + rng.index(20);
    std::vector<double> lam(l);
    for (double& v : lam) v = rng.uniform();
    double k_ratio = 1.0 / 8.0;
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(k_ratio * l)));
    auto sorted = lam;
    std::sort(sorted.begin(), sorted.end());
    double want = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      want += sorted[i] + (1.0 - sorted[l - 1 - i]);
    }
    want /= static_cast<double>(k);
    CHECK(loss_att(lam, k_ratio) == doctest::Approx(want).epsilon(1e-12));
  }

  CHECK_THROWS_AS(loss_att({}, 0.125), std::invalid_argument);
}

TEST_CASE("loss_total is the advertised weighted sum") {
  LossParts parts;
  parts.cls = 1.25;
  parts.kd = 0.5;
  parts.att = 0.75;
  CHECK(loss_total(parts, 0.0, 0.0) == 1.25);
  CHECK(loss_total(parts, 1.0, 0.1) ==
        doctest::Approx(1.25 + 0.5 + 0.075).epsilon(1e-12));
  CHECK(loss_total(LossParts{}, 1.0, 0.1) == 0.0);
}

TEST_CASE("joint snippet permutation leaves losses unchanged") {
  Rng rng(88);
  Mat f = random_mat(9, 4, rng);
  HeadParams p = random_params(2, 4, rng);
  std::vector<int> y{1, 0};

  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Mat fp(9, 4);
  for (std::size_t i = 0; i < 9; ++i) fp.set_row(i, f.row_copy(perm[i]));

  HeadOutput a = head_forward(f, p);
  HeadOutput b = head_forward(fp, p);
  CHECK(loss_cls(a, y, 0.2) == doctest::Approx(loss_cls(b, y, 0.2)).epsilon(1e-12));
  CHECK(loss_att(a.lambda_f, 0.125) ==
        doctest::Approx(loss_att(b.lambda_f, 0.125)).epsilon(1e-12));

  Mat target = row_softmax(random_mat(9, 3, rng), 1.0);
  Mat target_p(9, 3);
  for (std::size_t i = 0; i < 9; ++i) target_p.set_row(i, target.row_copy(perm[i]));
  CHECK(loss_kd(a.tcam, target) ==
        doctest::Approx(loss_kd(b.tcam, target_p)).epsilon(1e-12));
}

TEST_CASE("scaling all snippets by one positive factor changes nothing") {
  Rng rng(89);
  Mat f = random_mat(7, 5, rng);
  HeadParams p = random_params(3, 5, rng);
  HeadOutput a = head_forward(f, p);
  HeadOutput b = head_forward(scaled(f, 3.7), p);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(std::fabs(a.lambda_f[i] - b.lambda_f[i]) < 1e-7);
  }
  CHECK(max_abs_diff(a.tcam, b.tcam) < 1e-7);
  for (std::size_t k = 0; k < a.p_ca.size(); ++k) {
    CHECK(std::fabs(a.p_ca[k] - b.p_ca[k]) < 1e-7);
    CHECK(std::fabs(a.p_mil[k] - b.p_mil[k]) < 1e-7);
  }
}
