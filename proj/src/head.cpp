#include "snippetprop/head.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "snippetprop/errors.hpp"

namespace snippetprop {

void HeadParams::validate() const {
  if (w_f.rows != 1 || w_f.cols == 0) {
    throw ConfigError("head: w_f must be a single row");
  }
  if (w_a.rows < 2 || w_a.cols != w_f.cols) {
    throw ConfigError("head: w_a needs c+1 rows of the same dimension as w_f");
  }
  if (!(attn_scale > 0.0)) throw ConfigError("head: attn_scale must be > 0");
}

namespace {

std::vector<double> softmax_vec(const std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace

HeadOutput head_forward(const Mat& f, const HeadParams& params) {
  params.validate();
  if (f.cols != params.w_f.cols) {
    throw std::invalid_argument("head_forward: feature dimension mismatch");
  }
  const std::size_t l = f.rows;
  const std::size_t cb = params.w_a.rows;  // c + 1

  HeadOutput out;

  Mat fg_sim = cosine_sim(f, params.w_f);  // l x 1
  out.lambda_f.resize(l);
  double lam_sum = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    out.lambda_f[i] = 1.0 / (1.0 + std::exp(-params.attn_scale * fg_sim(i, 0)));
    lam_sum += out.lambda_f[i];
  }

  out.fbar = Mat(1, f.cols, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = f.row_ptr(i);
    for (std::size_t j = 0; j < f.cols; ++j) {
      out.fbar(0, j) += out.lambda_f[i] * row[j];
    }
  }
  for (std::size_t j = 0; j < f.cols; ++j) out.fbar(0, j) /= lam_sum;

  Mat ca_sim = cosine_sim(out.fbar, params.w_a);  // 1 x (c+1)
  std::vector<double> ca_logits(cb);
  for (std::size_t k = 0; k < cb; ++k) {
    ca_logits[k] = params.attn_scale * ca_sim(0, k);
  }
  out.p_ca = softmax_vec(ca_logits);

  out.s_logits = scaled(cosine_sim(f, params.w_a), params.attn_scale);
  out.tcam = row_softmax(out.s_logits, 1.0);
  out.lambda_w = row_softmax(out.s_logits.transposed(), 1.0).transposed();

  std::vector<double> mil_logits(cb, 0.0);
  for (std::size_t k = 0; k < cb; ++k) {
    for (std::size_t i = 0; i < l; ++i) {
      mil_logits[k] += out.lambda_w(i, k) * out.s_logits(i, k);
    }
  }
  out.p_mil = softmax_vec(mil_logits);
  return out;
}

Mat score_snippets(const Mat& rows, const HeadParams& params) {
  params.validate();
  if (rows.cols != params.w_a.cols) {
    throw std::invalid_argument("score_snippets: feature dimension mismatch");
  }
  return row_softmax(cosine_sim(rows, params.w_a), params.attn_scale);
}

double loss_cls(const HeadOutput& out, const std::vector<int>& y, double gamma) {
  const std::size_t cb = out.p_ca.size();
  if (y.size() + 1 != cb) {
    throw std::invalid_argument("loss_cls: label length must be c");
  }
  double active = 0.0;
  for (int v : y) {
    if (v != 0 && v != 1) {
      throw std::invalid_argument("loss_cls: labels must be 0/1");
    }
    active += v;
  }
  if (active == 0.0) {
    throw std::invalid_argument("loss_cls: a training video needs a class");
  }

  // attention target [y, 0], mil target [y, 1], both l1-normalized
  double l_ca = 0.0, l_mil = 0.0;
  for (std::size_t k = 0; k < cb - 1; ++k) {
    if (!y[k]) continue;
    l_ca -= (1.0 / active) * std::log(std::max(out.p_ca[k], 1e-300));
    l_mil -= (1.0 / (active + 1.0)) * std::log(std::max(out.p_mil[k], 1e-300));
  }
  l_mil -= (1.0 / (active + 1.0)) * std::log(std::max(out.p_mil[cb - 1], 1e-300));
  return l_ca + gamma * l_mil;
}

double loss_kd(const Tcam& t_main, const Tcam& t_fused) {
  if (!t_main.same_shape(t_fused)) {
    throw std::invalid_argument("loss_kd: activation maps differ in shape");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < t_main.rows; ++i) {
    for (std::size_t k = 0; k < t_main.cols; ++k) {
      acc -= t_fused(i, k) * std::log(std::max(t_main(i, k), 1e-300));
    }
  }
  return acc / static_cast<double>(t_main.rows);
}

double loss_att(const std::vector<double>& lambda_f, double k_ratio) {
  if (lambda_f.empty()) {
    throw std::invalid_argument("loss_att: empty attention profile");
  }
  const std::size_t l = lambda_f.size();
  std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(k_ratio * static_cast<double>(l))));
  k = std::min(k, l);
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (lambda_f[a] != lambda_f[b]) return lambda_f[a] < lambda_f[b];
    return a < b;
  });
  double bottom = 0.0, top = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    bottom += lambda_f[order[i]];
    top += 1.0 - lambda_f[order[l - 1 - i]];
  }
  return (bottom + top) / static_cast<double>(k);
}

double loss_total(const LossParts& parts, double alpha, double beta) {
  return parts.cls + alpha * parts.kd + beta * parts.att;
}

}  // namespace snippetprop
