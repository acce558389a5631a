#include "snippetprop/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "pipeline_internal.hpp"
#include "snippetprop/errors.hpp"
#include "snippetprop/rng.hpp"

namespace snippetprop {

using nlohmann::json;

void ModelParams::validate() const {
  head.validate();
  if (embed.rows == 0 || embed.cols == 0) {
    throw ConfigError("params: embed must be nonempty");
  }
  if (embed.cols != head.w_f.cols) {
    throw ConfigError("params: embed output dim must match the head dim");
  }
  if (mu0.rows == 0 || mu0.cols != embed.cols) {
    throw ConfigError("params: mu0 must be n x embed dim");
  }
}

std::string to_string(GradMode m) {
  switch (m) {
    case GradMode::finite_difference: return "finite_difference";
    case GradMode::analytic: return "analytic";
  }
  return "unknown";
}

GradMode grad_mode_from_string(const std::string& s) {
  if (s == "finite_difference") return GradMode::finite_difference;
  if (s == "analytic") return GradMode::analytic;
  throw ConfigError("unknown gradient mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (bank_start_epoch < 0 || bank_start_epoch > epochs) {
    throw ConfigError("train: bank_start_epoch must lie in [0, epochs]");
  }
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  if (!(w >= 0.0) || !(w < 1.0)) throw ConfigError("train: w must lie in [0,1)");
  if (!(lambda > 0.0)) throw ConfigError("train: lambda must be > 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw ConfigError("train: loss weights must be >= 0");
  }
  if (!(fusion_ae >= 0.0 && fusion_ae <= 1.0)) {
    throw ConfigError("train: fusion_ae must lie in [0,1]");
  }
  if (!(fd_step > 0.0)) throw ConfigError("train: fd_step must be > 0");
  if (embed_dim < 1) throw ConfigError("train: embed_dim must be >= 1");
  if (num_representatives < 1) {
    throw ConfigError("train: num_representatives must be >= 1");
  }
  if (em_iterations < 1) throw ConfigError("train: em_iterations must be >= 1");
  if (!(attn_scale > 0.0)) throw ConfigError("train: attn_scale must be > 0");
  if (!(k_ratio > 0.0 && k_ratio <= 1.0)) {
    throw ConfigError("train: k_ratio must lie in (0,1]");
  }
  if (slot_count < 1) throw ConfigError("train: slot_count must be >= 1");
  if (prop_iterations < 1) {
    throw ConfigError("train: prop_iterations must be >= 1");
  }
}

namespace detail {
namespace {

// Mirrors the private helper in head.cpp so traced numbers stay bit-identical.
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

Mat column_sums(const Mat& z) {
  Mat out(1, z.cols, 0.0);
  for (std::size_t i = 0; i < z.rows; ++i) {
    for (std::size_t j = 0; j < z.cols; ++j) out(0, j) += z(i, j);
  }
  return out;
}

// Same arithmetic as head_forward, with the internals kept for the reverse
// pass. Any edit to head_forward must be mirrored here (the pipeline tests
// assert bitwise agreement between the two).
HeadTrace head_trace_forward(const Mat& g, const HeadParams& hp) {
  hp.validate();
  if (g.cols != hp.w_f.cols) {
    throw std::invalid_argument("head_forward: feature dimension mismatch");
  }
  const std::size_t l = g.rows;
  const std::size_t cb = hp.w_a.rows;

  HeadTrace t;
  t.g = g;
  t.gn = l2_normalize_rows(g);
  t.wfn = l2_normalize_rows(hp.w_f);
  t.wan = l2_normalize_rows(hp.w_a);

  Mat fg = matmul(t.gn, t.wfn.transposed());
  t.fg_sim.resize(l);
  t.out.lambda_f.resize(l);
  double lam_sum = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    t.fg_sim[i] = fg(i, 0);
    t.out.lambda_f[i] = 1.0 / (1.0 + std::exp(-hp.attn_scale * fg(i, 0)));
    lam_sum += t.out.lambda_f[i];
  }
  t.lambda_sum = lam_sum;

  t.out.fbar = Mat(1, g.cols, 0.0);
  for (std::size_t i = 0; i < l; ++i) {
    const double* row = g.row_ptr(i);
    for (std::size_t j = 0; j < g.cols; ++j) {
      t.out.fbar(0, j) += t.out.lambda_f[i] * row[j];
    }
  }
  for (std::size_t j = 0; j < g.cols; ++j) t.out.fbar(0, j) /= lam_sum;

  t.fbarn = l2_normalize_rows(t.out.fbar);
  Mat ca_sim = matmul(t.fbarn, t.wan.transposed());
  std::vector<double> ca_logits(cb);
  for (std::size_t k = 0; k < cb; ++k) {
    ca_logits[k] = hp.attn_scale * ca_sim(0, k);
  }
  t.out.p_ca = softmax_vec(ca_logits);

  t.out.s_logits = scaled(matmul(t.gn, t.wan.transposed()), hp.attn_scale);
  t.out.tcam = row_softmax(t.out.s_logits, 1.0);
  t.out.lambda_w = row_softmax(t.out.s_logits.transposed(), 1.0).transposed();

  std::vector<double> mil_logits(cb, 0.0);
  for (std::size_t k = 0; k < cb; ++k) {
    for (std::size_t i = 0; i < l; ++i) {
      mil_logits[k] += t.out.lambda_w(i, k) * t.out.s_logits(i, k);
    }
  }
  t.out.p_mil = softmax_vec(mil_logits);
  return t;
}

// Closed-form walk, intermediates kept. Mirrors birw_closed_form.
WalkTrace walk_trace_forward(const Mat& x, const Mat& xn, const Mat& mu,
                             const Mat& mun, double w, double lambda) {
  WalkTrace t;
  t.mu = mu;
  t.mun = mun;
  t.z = row_softmax(matmul(xn, mun.transposed()), lambda);
  t.colsum = column_sums(t.z);
  t.c = l1_normalize_cols(t.z);
  Mat r = matmul(t.z, t.c.transposed());
  t.a = sub(Mat::identity(x.rows), scaled(r, w * w));
  t.rhs = add(scaled(matmul(t.z, mu), w), x);
  t.ysol = solve(t.a, t.rhs);
  t.fprop = scaled(t.ysol, 1.0 - w);
  return t;
}

// Summarization loop, intermediates kept. Mirrors summarize_em.
EmTrace em_trace_forward(const Mat& x, const Mat& xn, const Mat& mu0,
                         const TrainConfig& cfg) {
  if (mu0.rows != static_cast<std::size_t>(cfg.num_representatives) ||
      mu0.cols != x.cols) {
    throw std::invalid_argument("summarize_em: mu0 must be n x d");
  }
  EmTrace t;
  t.mu.push_back(mu0);
  for (int r = 0; r < cfg.em_iterations; ++r) {
    t.mun.push_back(l2_normalize_rows(t.mu.back()));
    t.z.push_back(row_softmax(matmul(xn, t.mun.back().transposed()), cfg.lambda));
    t.colsum.push_back(column_sums(t.z.back()));
    t.c.push_back(l1_normalize_cols(t.z.back()));
    t.mu.push_back(matmul(t.c.back().transposed(), x));
  }
  t.mun.push_back(l2_normalize_rows(t.mu.back()));
  return t;
}

}  // namespace

LossTrace run_frozen_forward(const ModelParams& params,
                             const FeatureSequence& video,
                             const std::vector<int>& y,
                             const std::optional<Mat>& mu_e,
                             const std::optional<Tcam>& frozen_target,
                             const TrainConfig& cfg) {
  params.validate();
  LossTrace t;
  t.x = matmul(video.snippets, params.embed);
  t.xn = l2_normalize_rows(t.x);
  t.has_prop = cfg.use_propagation;
  t.hm = head_trace_forward(t.x, params.head);
  if (t.has_prop) {
    t.em = em_trace_forward(t.x, t.xn, params.mu0, cfg);
    t.wa = walk_trace_forward(t.x, t.xn, t.em.mu.back(), t.em.mun.back(),
                              cfg.w, cfg.lambda);
    t.ha = head_trace_forward(t.wa.fprop, params.head);
    if (mu_e.has_value()) {
      Mat mun_e = l2_normalize_rows(*mu_e);
      t.we = walk_trace_forward(t.x, t.xn, *mu_e, mun_e, cfg.w, cfg.lambda);
      t.he = head_trace_forward(t.we->fprop, params.head);
    }
  }
  t.target = frozen_target;

  t.parts.cls = loss_cls(t.hm.out, y, cfg.gamma);
  if (t.has_prop) t.parts.cls += loss_cls(t.ha.out, y, cfg.gamma);
  if (t.he) t.parts.cls += loss_cls(t.he->out, y, cfg.gamma);
  t.parts.kd = t.target ? loss_kd(t.hm.out.tcam, *t.target) : 0.0;
  t.parts.att = loss_att(t.hm.out.lambda_f, cfg.k_ratio);
  t.total = loss_total(t.parts, cfg.alpha, cfg.beta);
  return t;
}

}  // namespace detail

double frozen_video_loss(const ModelParams& params,
                         const FeatureSequence& video,
                         const std::vector<int>& y,
                         const std::optional<Mat>& mu_e,
                         const std::optional<Tcam>& frozen_target,
                         const TrainConfig& cfg, LossParts* parts_out) {
  detail::LossTrace t =
      detail::run_frozen_forward(params, video, y, mu_e, frozen_target, cfg);
  if (parts_out) *parts_out = t.parts;
  return t.total;
}

Tcam fuse_pseudo(const Tcam& t_a, const std::optional<Tcam>& t_e,
                 double fusion_ae) {
  if (!(fusion_ae >= 0.0 && fusion_ae <= 1.0)) {
    throw ConfigError("fuse_pseudo: fusion_ae must lie in [0,1]");
  }
  if (!t_e.has_value()) return t_a;
  if (!t_a.same_shape(*t_e)) {
    throw std::invalid_argument("fuse_pseudo: activation maps differ in shape");
  }
  return add(scaled(t_a, fusion_ae), scaled(*t_e, 1.0 - fusion_ae));
}

BranchOutputs forward_video(const ModelParams& params,
                            const FeatureSequence& video,
                            const std::vector<int>& y, const MemoryBank* bank,
                            bool use_bank, const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  video.validate();

  BranchOutputs out;
  out.embedded = matmul(video.snippets, params.embed);
  out.main = head_forward(out.embedded, params.head);
  if (!cfg.use_propagation) return out;

  EmConfig emc;
  emc.n = cfg.num_representatives;
  emc.lambda = cfg.lambda;
  emc.iterations = cfg.em_iterations;
  emc.learn_init = cfg.learn_init;
  RepresentativeSet rs = summarize_em(out.embedded, emc, params.mu0);
  out.mu_a = rs.mu;
  out.z_a = rs.z;

  std::optional<Mat> mu_e;
  if (use_bank && bank != nullptr) {
    VideoLabel lbl{video.video_id, y};
    mu_e = bank->retrieve(lbl.active_classes());
  }

  PropagationConfig pc;
  pc.w = cfg.w;
  pc.mode = cfg.prop_mode;
  pc.iterations = cfg.prop_iterations;
  pc.lambda = cfg.lambda;
  PropagationResult pr = propagate_both(out.embedded, rs.mu, mu_e, pc);
  out.fa = pr.fa;
  out.intra = head_forward(pr.fa, params.head);
  if (pr.fe.has_value()) {
    out.mu_e = mu_e;
    out.z_e = affinity(out.embedded, *mu_e, cfg.lambda);
    out.fe = pr.fe;
    out.inter = head_forward(*pr.fe, params.head);
  }
  return out;
}

VideoLossResult video_loss(const ModelParams& params,
                           const FeatureSequence& video,
                           const std::vector<int>& y, const MemoryBank* bank,
                           int epoch, const TrainConfig& cfg) {
  cfg.validate();
  const bool use_bank = epoch >= cfg.bank_start_epoch;

  VideoLossResult r;
  r.outputs = forward_video(params, video, y, bank, use_bank, cfg);
  if (cfg.use_propagation) {
    std::optional<Tcam> te;
    if (r.outputs.inter) te = r.outputs.inter->tcam;
    r.frozen_target = fuse_pseudo(r.outputs.intra->tcam, te, cfg.fusion_ae);
  }

  r.parts.cls = loss_cls(r.outputs.main, y, cfg.gamma);
  if (r.outputs.intra) r.parts.cls += loss_cls(*r.outputs.intra, y, cfg.gamma);
  if (r.outputs.inter) r.parts.cls += loss_cls(*r.outputs.inter, y, cfg.gamma);
  r.parts.kd =
      r.frozen_target ? loss_kd(r.outputs.main.tcam, *r.frozen_target) : 0.0;
  r.parts.att = loss_att(r.outputs.main.lambda_f, cfg.k_ratio);
  r.total = loss_total(r.parts, cfg.alpha, cfg.beta);
  return r;
}

ParamGrads ParamGrads::zeros_like(const ModelParams& p) {
  ParamGrads g;
  g.embed = Mat(p.embed.rows, p.embed.cols, 0.0);
  g.w_f = Mat(p.head.w_f.rows, p.head.w_f.cols, 0.0);
  g.w_a = Mat(p.head.w_a.rows, p.head.w_a.cols, 0.0);
  g.mu0 = Mat(p.mu0.rows, p.mu0.cols, 0.0);
  return g;
}

ParamGrads fd_gradient(const std::function<double(const ModelParams&)>& loss,
                       const ModelParams& at, double fd_step,
                       bool include_mu0) {
  if (!(fd_step > 0.0)) throw ConfigError("fd_gradient: fd_step must be > 0");
  ParamGrads g = ParamGrads::zeros_like(at);
  ModelParams p = at;

  auto block = [&](Mat& theta, Mat& grad) {
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      const double v = theta.data[i];
      const double h = fd_step * (1.0 + std::fabs(v));
      theta.data[i] = v + h;
      const double lp = loss(p);
      theta.data[i] = v - h;
      const double lm = loss(p);
      theta.data[i] = v;
      grad.data[i] = (lp - lm) / (2.0 * h);
    }
  };
  block(p.embed, g.embed);
  block(p.head.w_f, g.w_f);
  block(p.head.w_a, g.w_a);
  if (include_mu0) block(p.mu0, g.mu0);
  return g;
}

ParamGrads compute_gradient(const ModelParams& params,
                            const FeatureSequence& video,
                            const std::vector<int>& y,
                            const std::optional<Mat>& mu_e,
                            const std::optional<Tcam>& frozen_target,
                            const TrainConfig& cfg) {
  if (cfg.grad_mode == GradMode::analytic) {
    return analytic_gradient(params, video, y, mu_e, frozen_target, cfg);
  }
  auto loss = [&](const ModelParams& p) {
    return frozen_video_loss(p, video, y, mu_e, frozen_target, cfg);
  };
  // mu0 only matters when the summarized branches exist and it is trainable;
  // skipping it otherwise saves probes and yields the same (zero) gradient.
  const bool include_mu0 = cfg.learn_init && cfg.use_propagation;
  return fd_gradient(loss, params, cfg.fd_step, include_mu0);
}

ModelParams init_params(int d_in, int num_classes, const TrainConfig& cfg) {
  cfg.validate();
  if (d_in < 1) throw ConfigError("init_params: d_in must be >= 1");
  if (num_classes < 1) throw ConfigError("init_params: need >= 1 class");
  const auto d = static_cast<std::size_t>(cfg.embed_dim);
  ModelParams p;
  p.embed = semi_orthogonal_init(static_cast<std::size_t>(d_in), d, cfg.seed + 1);
  p.head.w_f = semi_orthogonal_init(1, d, cfg.seed + 2);
  p.head.w_a =
      semi_orthogonal_init(static_cast<std::size_t>(num_classes) + 1, d,
                           cfg.seed + 3);
  p.head.attn_scale = cfg.attn_scale;
  p.mu0 = semi_orthogonal_init(
      static_cast<std::size_t>(cfg.num_representatives), d, cfg.seed + 4);
  return p;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.features.empty()) throw ConfigError("train: dataset has no videos");
  const int c = ds.num_classes();
  if (c < 1) throw ConfigError("train: dataset has no classes");
  const auto d_in = ds.features[0].snippets.cols;
  for (const FeatureSequence& f : ds.features) {
    if (f.snippets.cols != d_in) {
      throw ConfigError("train: videos disagree on feature dimension");
    }
  }

  TrainResult res{init_params(static_cast<int>(d_in), c, cfg),
                  MemoryBank(c, cfg.slot_count, cfg.embed_dim),
                  {}};

  EmConfig emc;
  emc.n = cfg.num_representatives;
  emc.lambda = cfg.lambda;
  emc.iterations = cfg.em_iterations;
  emc.learn_init = cfg.learn_init;

  Rng order_rng(cfg.seed + 17);  // dedicated stream for the epoch shuffles
  std::vector<std::size_t> order(ds.features.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);

    LossParts acc;
    double acc_total = 0.0;
    for (std::size_t idx : order) {
      const FeatureSequence& video = ds.features[idx];
      const std::vector<int>& y = ds.label_for(video.video_id).y;

      VideoLossResult base =
          video_loss(res.params, video, y, &res.bank, epoch, cfg);
      if (!std::isfinite(base.total)) {
        throw NumericError("train: non-finite loss on video '" +
                           video.video_id + "'");
      }

      ParamGrads g = compute_gradient(res.params, video, y, base.outputs.mu_e,
                                      base.frozen_target, cfg);
      axpy_inplace(res.params.embed, -cfg.lr, g.embed);
      axpy_inplace(res.params.head.w_f, -cfg.lr, g.w_f);
      axpy_inplace(res.params.head.w_a, -cfg.lr, g.w_a);
      if (cfg.learn_init && cfg.use_propagation) {
        axpy_inplace(res.params.mu0, -cfg.lr, g.mu0);
      }

      if (cfg.use_propagation && epoch >= cfg.bank_start_epoch) {
        // Offer the updated representatives, scored by the updated head.
        Mat x = matmul(video.snippets, res.params.embed);
        RepresentativeSet rs = summarize_em(x, emc, res.params.mu0);
        Mat probs = score_snippets(rs.mu, res.params.head);
        std::vector<double> col(rs.mu.rows);
        for (int k = 0; k < c; ++k) {
          if (!y[static_cast<std::size_t>(k)]) continue;
          for (std::size_t i = 0; i < rs.mu.rows; ++i) {
            col[i] = probs(i, static_cast<std::size_t>(k));
          }
          res.bank.offer(k, rs.mu, col);
        }
      }

      acc.cls += base.parts.cls;
      acc.kd += base.parts.kd;
      acc.att += base.parts.att;
      acc_total += base.total;
    }

    const double m = static_cast<double>(order.size());
    TrainHistoryRow row;
    row.epoch = epoch;
    row.cls = acc.cls / m;
    row.kd = acc.kd / m;
    row.att = acc.att / m;
    row.total = acc_total / m;
    res.history.push_back(row);
  }
  return res;
}

GradCheckReport grad_check(const ModelParams& params,
                           const FeatureSequence& video,
                           const std::vector<int>& y, const TrainConfig& cfg,
                           const std::optional<Mat>& mu_e) {
  cfg.validate();

  // Freeze the distillation target exactly as one trainer step would.
  std::optional<Tcam> target;
  if (cfg.use_propagation) {
    detail::LossTrace t0 =
        detail::run_frozen_forward(params, video, y, mu_e, std::nullopt, cfg);
    std::optional<Tcam> te;
    if (t0.he) te = t0.he->out.tcam;
    target = fuse_pseudo(t0.ha.out.tcam, te, cfg.fusion_ae);
  }

  ParamGrads ga = analytic_gradient(params, video, y, mu_e, target, cfg);
  auto loss = [&](const ModelParams& p) {
    return frozen_video_loss(p, video, y, mu_e, target, cfg);
  };
  const bool include_mu0 = cfg.learn_init && cfg.use_propagation;
  ParamGrads gf = fd_gradient(loss, params, cfg.fd_step, include_mu0);

  GradCheckReport rep;
  auto scan = [&](const Mat& a, const Mat& f, const char* name) {
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double rel = std::fabs(a.data[i] - f.data[i]) /
                         (1e-6 + std::max(std::fabs(a.data[i]),
                                          std::fabs(f.data[i])));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_block = name;
        rep.worst_index = i;
      }
      ++rep.num_params;
    }
  };
  scan(ga.embed, gf.embed, "embed");
  scan(ga.w_f, gf.w_f, "w_f");
  scan(ga.w_a, gf.w_a, "w_a");
  if (include_mu0) scan(ga.mu0, gf.mu0, "mu0");
  return rep;
}

namespace {

void write_mat_payload(const Mat& m, const std::string& name,
                       const std::filesystem::path& dir) {
  FeatureSequence f;
  f.video_id = name;
  f.snippets = m;
  f.snippet_duration_s = 1.0;  // payload rows are not a time series
  write_features(f, dir / (name + ".snpf"));
}

Mat read_mat_payload(const std::filesystem::path& dir, const std::string& name,
                     std::size_t rows, std::size_t cols) {
  FeatureSequence f = read_features(dir / (name + ".snpf"));
  if (f.snippets.rows != rows || f.snippets.cols != cols) {
    throw FormatError("checkpoint: payload '" + name +
                      "' does not match the manifest shape");
  }
  return f.snippets;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const MemoryBank& bank,
                     const std::filesystem::path& dir) {
  params.validate();
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["format"] = "snippetprop-checkpoint";
  manifest["version"] = 1;
  manifest["d_in"] = params.embed.rows;
  manifest["embed_dim"] = params.embed.cols;
  manifest["num_classes"] = params.head.w_a.rows - 1;
  manifest["num_representatives"] = params.mu0.rows;
  manifest["attn_scale"] = params.head.attn_scale;

  write_mat_payload(params.embed, "embed", dir);
  write_mat_payload(params.head.w_f, "w_f", dir);
  write_mat_payload(params.head.w_a, "w_a", dir);
  write_mat_payload(params.mu0, "mu0", dir);
  bank.save(dir / "bank.json");

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) {
    throw FormatError("checkpoint: cannot write manifest in " + dir.string());
  }
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) {
    throw FormatError("checkpoint: cannot open manifest in " + dir.string());
  }
  json manifest;
  std::size_t d_in = 0, d = 0, cb = 0, n = 0;
  double attn_scale = 0.0;
  try {
    in >> manifest;
    if (manifest.at("format").get<std::string>() != "snippetprop-checkpoint") {
      throw FormatError("checkpoint: unrecognized manifest format");
    }
    if (manifest.at("version").get<int>() != 1) {
      throw FormatError("checkpoint: unsupported version");
    }
    d_in = manifest.at("d_in").get<std::size_t>();
    d = manifest.at("embed_dim").get<std::size_t>();
    cb = manifest.at("num_classes").get<std::size_t>() + 1;
    n = manifest.at("num_representatives").get<std::size_t>();
    attn_scale = manifest.at("attn_scale").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }

  ModelParams params;
  params.embed = read_mat_payload(dir, "embed", d_in, d);
  params.head.w_f = read_mat_payload(dir, "w_f", 1, d);
  params.head.w_a = read_mat_payload(dir, "w_a", cb, d);
  params.head.attn_scale = attn_scale;
  params.mu0 = read_mat_payload(dir, "mu0", n, d);
  params.validate();

  MemoryBank bank = MemoryBank::load(dir / "bank.json");
  if (bank.dim() != static_cast<int>(d)) {
    throw FormatError("checkpoint: bank dimension disagrees with the params");
  }
  return Checkpoint{std::move(params), std::move(bank)};
}

void write_history_csv(const std::vector<TrainHistoryRow>& history,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("history: cannot write " + path.string());
  }
  out << "epoch,L_cls,L_kd,L_att,total\n";
  char buf[128];
  for (const TrainHistoryRow& r : history) {
    out << r.epoch;
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g,%.17g\n", r.cls, r.kd,
                  r.att, r.total);
    out << buf;
  }
}

}  // namespace snippetprop
