// Hand-written reverse-mode gradient of the frozen per-video loss. Walks the
// recorded forward trace backwards, one adjoint per forward operation. The
// finite-difference path is the reference; grad_check keeps the two honest.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pipeline_internal.hpp"
#include "snippetprop/errors.hpp"
#include "snippetprop/pipeline.hpp"

namespace snippetprop {

namespace {

using detail::HeadTrace;
using detail::LossTrace;
using detail::WalkTrace;

// Adjoint of y = x / |x| per row, norms recomputed from the raw rows. Rows
// that were exactly zero passed through the forward unchanged, so their
// gradient does too.
Mat l2_rows_backward(const Mat& raw, const Mat& dnorm) {
  Mat out(raw.rows, raw.cols, 0.0);
  for (std::size_t i = 0; i < raw.rows; ++i) {
    const double* x = raw.row_ptr(i);
    const double* dy = dnorm.row_ptr(i);
    double* dx = out.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < raw.cols; ++j) acc += x[j] * x[j];
    if (acc == 0.0) {
      for (std::size_t j = 0; j < raw.cols; ++j) dx[j] = dy[j];
      continue;
    }
    const double r = std::sqrt(acc);
    double dot = 0.0;
    for (std::size_t j = 0; j < raw.cols; ++j) dot += (x[j] / r) * dy[j];
    for (std::size_t j = 0; j < raw.cols; ++j) {
      dx[j] = (dy[j] - (x[j] / r) * dot) / r;
    }
  }
  return out;
}

// Adjoint of z = row_softmax(q, scale) given z and dz.
Mat row_softmax_backward(const Mat& z, const Mat& dz, double scale) {
  Mat dq(z.rows, z.cols, 0.0);
  for (std::size_t i = 0; i < z.rows; ++i) {
    const double* zi = z.row_ptr(i);
    const double* di = dz.row_ptr(i);
    double* qi = dq.row_ptr(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < z.cols; ++j) dot += di[j] * zi[j];
    for (std::size_t j = 0; j < z.cols; ++j) {
      qi[j] = scale * zi[j] * (di[j] - dot);
    }
  }
  return dq;
}

// Adjoint of c = l1_normalize_cols(z); colsum holds the column masses and
// zero-mass columns passed through unchanged.
Mat l1_cols_backward(const Mat& c, const Mat& colsum, const Mat& dc) {
  Mat dz(c.rows, c.cols, 0.0);
  for (std::size_t j = 0; j < c.cols; ++j) {
    const double m = colsum(0, j);
    if (m == 0.0) {
      for (std::size_t i = 0; i < c.rows; ++i) dz(i, j) = dc(i, j);
      continue;
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i) dot += dc(i, j) * c(i, j);
    for (std::size_t i = 0; i < c.rows; ++i) {
      dz(i, j) = (dc(i, j) - dot) / m;
    }
  }
  return dz;
}

// Adjoint of one head evaluation. Seeds come in as gradients of the logits
// (cross-entropy terms collapse to p - target there) plus optional direct
// gradients on the snippet logits and the attention profile. Gradients for
// the shared directions accumulate into dwf/dwa; the return value is the
// gradient with respect to the head's raw input rows.
Mat head_backward(const HeadTrace& t, const HeadParams& hp,
                  const std::vector<double>& dca_logits,
                  const std::vector<double>& dmil_logits, const Mat* ds_extra,
                  const std::vector<double>* dlam_extra, Mat& dwf_acc,
                  Mat& dwa_acc) {
  const std::size_t l = t.g.rows;
  const std::size_t d = t.g.cols;
  const std::size_t cb = hp.w_a.rows;
  const double s = hp.attn_scale;
  const Mat& S = t.out.s_logits;
  const Mat& lw = t.out.lambda_w;

  // mil aggregation m_k = sum_i lw(i,k) S(i,k), then column softmax of S
  Mat dS(l, cb, 0.0);
  Mat dLw(l, cb, 0.0);
  for (std::size_t k = 0; k < cb; ++k) {
    for (std::size_t i = 0; i < l; ++i) {
      dLw(i, k) = dmil_logits[k] * S(i, k);
      dS(i, k) += dmil_logits[k] * lw(i, k);
    }
  }
  for (std::size_t k = 0; k < cb; ++k) {
    double dot = 0.0;
    for (std::size_t i = 0; i < l; ++i) dot += dLw(i, k) * lw(i, k);
    for (std::size_t i = 0; i < l; ++i) {
      dS(i, k) += lw(i, k) * (dLw(i, k) - dot);
    }
  }
  if (ds_extra) add_inplace(dS, *ds_extra);

  // S = s * Gn Wan^T
  Mat dGn = scaled(matmul(dS, t.wan), s);
  Mat dwan = scaled(matmul(dS.transposed(), t.gn), s);

  // ca logits = s * fbarn Wan^T
  Mat dfbarn(1, d, 0.0);
  for (std::size_t k = 0; k < cb; ++k) {
    const double coef = s * dca_logits[k];
    for (std::size_t j = 0; j < d; ++j) {
      dfbarn(0, j) += coef * t.wan(k, j);
      dwan(k, j) += coef * t.fbarn(0, j);
    }
  }

  // fbarn = fbar / |fbar|; fbar = sum_i lam_i g_i / sum lam
  Mat dfbar = l2_rows_backward(t.out.fbar, dfbarn);
  Mat dG(l, d, 0.0);
  std::vector<double> dlam(l, 0.0);
  const double lam_sum = t.lambda_sum;
  for (std::size_t i = 0; i < l; ++i) {
    const double* gi = t.g.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      acc += dfbar(0, j) * (gi[j] - t.out.fbar(0, j));
      dG(i, j) += dfbar(0, j) * t.out.lambda_f[i] / lam_sum;
    }
    dlam[i] = acc / lam_sum;
  }
  if (dlam_extra) {
    for (std::size_t i = 0; i < l; ++i) dlam[i] += (*dlam_extra)[i];
  }

  // lam_i = sigmoid(s * fg_i); fg = Gn wfn^T
  Mat dwfn(1, d, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    const double lam = t.out.lambda_f[i];
    const double dfg = dlam[i] * s * lam * (1.0 - lam);
    const double* gni = t.gn.row_ptr(i);
    for (std::size_t j = 0; j < d; ++j) {
      dGn(i, j) += dfg * t.wfn(0, j);
      dwfn(0, j) += dfg * gni[j];
    }
  }

  add_inplace(dG, l2_rows_backward(t.g, dGn));
  add_inplace(dwf_acc, l2_rows_backward(hp.w_f, dwfn));
  add_inplace(dwa_acc, l2_rows_backward(hp.w_a, dwan));
  return dG;
}

// Adjoint of the closed-form walk fprop = (1-w) A^-1 (w z mu + x) with
// A = I - w^2 z c^T and z the affinity against mu. Contributions to the
// snippet features go into dx/dxn; the returned matrix is the gradient with
// respect to mu (skipped for the retrieved rows, which are constants).
Mat walk_backward(const WalkTrace& t, const Mat& xn, const Mat& dfp, double w,
                  double lambda, Mat& dx, Mat& dxn, bool want_dmu) {
  Mat dY = scaled(dfp, 1.0 - w);
  Mat dRhs = solve(t.a.transposed(), dY);
  Mat dA = scaled(matmul(dRhs, t.ysol.transposed()), -1.0);
  Mat dR = scaled(dA, -w * w);

  Mat dz = matmul(dR, t.c);
  add_inplace(dz, scaled(matmul(dRhs, t.mu.transposed()), w));
  Mat dc = matmul(dR.transposed(), t.z);
  add_inplace(dz, l1_cols_backward(t.c, t.colsum, dc));
  add_inplace(dx, dRhs);

  Mat dq = row_softmax_backward(t.z, dz, lambda);
  add_inplace(dxn, matmul(dq, t.mun));

  Mat dmu;
  if (want_dmu) {
    dmu = scaled(matmul(t.z.transposed(), dRhs), w);
    Mat dmun = matmul(dq.transposed(), xn);
    add_inplace(dmu, l2_rows_backward(t.mu, dmun));
  }
  return dmu;
}

}  // namespace

ParamGrads analytic_gradient(const ModelParams& params,
                             const FeatureSequence& video,
                             const std::vector<int>& y,
                             const std::optional<Mat>& mu_e,
                             const std::optional<Tcam>& frozen_target,
                             const TrainConfig& cfg, LossParts* parts_out) {
  cfg.validate();
  if (cfg.use_propagation && cfg.prop_mode != PropagationMode::closed_form) {
    throw ConfigError(
        "analytic gradients support only closed_form propagation");
  }

  LossTrace t =
      detail::run_frozen_forward(params, video, y, mu_e, frozen_target, cfg);
  if (parts_out) *parts_out = t.parts;

  const std::size_t l = t.x.rows;
  const std::size_t cb = params.head.w_a.rows;
  ParamGrads g = ParamGrads::zeros_like(params);
  Mat dx(t.x.rows, t.x.cols, 0.0);
  Mat dxn(t.x.rows, t.x.cols, 0.0);

  // classification targets: [y, 0] and [y, 1], l1-normalized
  double active = 0.0;
  for (int v : y) active += v;
  std::vector<double> t_ca(cb, 0.0), t_mil(cb, 0.0);
  for (std::size_t k = 0; k + 1 < cb; ++k) {
    t_ca[k] = y[k] / active;
    t_mil[k] = y[k] / (active + 1.0);
  }
  t_mil[cb - 1] = 1.0 / (active + 1.0);

  auto branch_backward = [&](const HeadTrace& ht, bool is_main) -> Mat {
    std::vector<double> dca(cb), dmil(cb);
    for (std::size_t k = 0; k < cb; ++k) {
      dca[k] = ht.out.p_ca[k] - t_ca[k];
      dmil[k] = cfg.gamma * (ht.out.p_mil[k] - t_mil[k]);
    }

    Mat ds_kd;
    std::vector<double> dlam_att;
    if (is_main) {
      if (t.target) {
        // mean row cross-entropy against the frozen map, through the row
        // softmax: alpha/l * (tcam - target)
        ds_kd = scaled(sub(ht.out.tcam, *t.target), cfg.alpha /
                                                        static_cast<double>(l));
      }
      // bimodality term: +beta/k on the bottom k, -beta/k on the top k,
      // ranked exactly like the forward pass
      const std::vector<double>& lam = ht.out.lambda_f;
      std::size_t k = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor(cfg.k_ratio * static_cast<double>(l))));
      k = std::min(k, l);
      std::vector<std::size_t> order(l);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (lam[a] != lam[b]) return lam[a] < lam[b];
        return a < b;
      });
      dlam_att.assign(l, 0.0);
      const double unit = cfg.beta / static_cast<double>(k);
      for (std::size_t i = 0; i < k; ++i) {
        dlam_att[order[i]] += unit;
        dlam_att[order[l - 1 - i]] -= unit;
      }
    }
    return head_backward(ht, params.head, dca, dmil,
                         is_main && t.target ? &ds_kd : nullptr,
                         is_main ? &dlam_att : nullptr, g.w_f, g.w_a);
  };

  add_inplace(dx, branch_backward(t.hm, true));

  if (t.has_prop) {
    Mat dfa = branch_backward(t.ha, false);
    Mat dmu_cur = walk_backward(t.wa, t.xn, dfa, cfg.w, cfg.lambda, dx, dxn,
                                /*want_dmu=*/true);
    if (t.he) {
      Mat dfe = branch_backward(*t.he, false);
      walk_backward(*t.we, t.xn, dfe, cfg.w, cfg.lambda, dx, dxn,
                    /*want_dmu=*/false);
    }

    // summarization loop in reverse: mu[r+1] = c[r]^T x
    for (int r = cfg.em_iterations - 1; r >= 0; --r) {
      const std::size_t ur = static_cast<std::size_t>(r);
      Mat dc = matmul(t.x, dmu_cur.transposed());
      add_inplace(dx, matmul(t.em.c[ur], dmu_cur));
      Mat dz = l1_cols_backward(t.em.c[ur], t.em.colsum[ur], dc);
      Mat dq = row_softmax_backward(t.em.z[ur], dz, cfg.lambda);
      add_inplace(dxn, matmul(dq, t.em.mun[ur]));
      Mat dmun = matmul(dq.transposed(), t.xn);
      dmu_cur = l2_rows_backward(t.em.mu[ur], dmun);
    }
    if (cfg.learn_init) g.mu0 = dmu_cur;
  }

  add_inplace(dx, l2_rows_backward(t.x, dxn));
  g.embed = matmul(video.snippets.transposed(), dx);
  return g;
}

}  // namespace snippetprop
