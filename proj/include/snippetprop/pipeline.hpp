#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "snippetprop/data.hpp"
#include "snippetprop/head.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/membank.hpp"
#include "snippetprop/propagate.hpp"
#include "snippetprop/summarize.hpp"

namespace snippetprop {

// Everything the trainer learns: a per-snippet linear embedding, the shared
// two-branch head, and the initial representative means.
struct ModelParams {
  Mat embed;  // d_in x d
  HeadParams head;
  Mat mu0;  // n x d

  void validate() const;
};

enum class GradMode { finite_difference, analytic };

std::string to_string(GradMode m);
GradMode grad_mode_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 200;
  int bank_start_epoch = 100;  // the retrieved branch stays off before this
  double lr = 0.05;
  double w = 0.5;       // propagation blend
  double lambda = 5.0;  // affinity temperature
  double alpha = 1.0;   // distillation weight
  double beta = 0.1;    // attention bimodality weight
  double gamma = 0.2;   // MIL classification weight
  double fusion_ae = 0.5;  // intra share when fusing the two auxiliary maps
  GradMode grad_mode = GradMode::finite_difference;
  double fd_step = 1e-4;
  std::uint64_t seed = 1;

  int embed_dim = 16;
  int num_representatives = 8;
  int em_iterations = 2;
  bool learn_init = true;  // back-propagate into mu0
  double attn_scale = 8.0;
  double k_ratio = 0.125;
  int slot_count = 5;
  // Ablation switch: false trains the plain single-branch head with no
  // summarization or propagation at all.
  bool use_propagation = true;
  PropagationMode prop_mode = PropagationMode::closed_form;
  int prop_iterations = 20;

  void validate() const;  // throws ConfigError
};

struct BranchOutputs {
  Mat embedded;  // X = snippets * embed
  HeadOutput main;
  std::optional<HeadOutput> intra;
  std::optional<HeadOutput> inter;
  Mat mu_a;                  // intra-video representatives (empty if unused)
  Mat z_a;                   // affinity used for the intra propagation
  std::optional<Mat> mu_e;   // retrieved rows, when the bank provided any
  std::optional<Mat> z_e;
  std::optional<Mat> fa;
  std::optional<Mat> fe;
};

// One full pass over a video: embed, summarize, propagate, run the shared
// head over every available feature stream. The retrieved branch exists only
// when use_bank is set and the bank has rows for the video's classes.
BranchOutputs forward_video(const ModelParams& params,
                            const FeatureSequence& video,
                            const std::vector<int>& y, const MemoryBank* bank,
                            bool use_bank, const TrainConfig& cfg);

// Convex fusion of the two auxiliary activation maps into the distillation
// target; the absent retrieved map leaves the intra map as the target.
Tcam fuse_pseudo(const Tcam& t_a, const std::optional<Tcam>& t_e,
                 double fusion_ae);

struct VideoLossResult {
  double total = 0.0;
  LossParts parts;
  BranchOutputs outputs;
  std::optional<Tcam> frozen_target;  // the fused map the kd term trained on
};

// Loss of one video at the given epoch (the epoch only gates bank usage).
VideoLossResult video_loss(const ModelParams& params,
                           const FeatureSequence& video,
                           const std::vector<int>& y, const MemoryBank* bank,
                           int epoch, const TrainConfig& cfg);

// Loss with the stochastic context pinned: the retrieved rows and the fused
// distillation target are inputs, not recomputed. Both the finite-difference
// loop and the analytic backward differentiate exactly this function.
double frozen_video_loss(const ModelParams& params,
                         const FeatureSequence& video,
                         const std::vector<int>& y,
                         const std::optional<Mat>& mu_e,
                         const std::optional<Tcam>& frozen_target,
                         const TrainConfig& cfg, LossParts* parts_out = nullptr);

struct ParamGrads {
  Mat embed;
  Mat w_f;
  Mat w_a;
  Mat mu0;

  static ParamGrads zeros_like(const ModelParams& p);
};

// Central differences with per-coordinate step fd_step * (1 + |theta|),
// treating `loss` as a black box. mu0 is skipped when include_mu0 is false.
ParamGrads fd_gradient(const std::function<double(const ModelParams&)>& loss,
                       const ModelParams& at, double fd_step, bool include_mu0);

// Hand-derived reverse-mode gradient of frozen_video_loss. Must agree with
// fd_gradient; grad_check enforces that.
ParamGrads analytic_gradient(const ModelParams& params,
                             const FeatureSequence& video,
                             const std::vector<int>& y,
                             const std::optional<Mat>& mu_e,
                             const std::optional<Tcam>& frozen_target,
                             const TrainConfig& cfg,
                             LossParts* parts_out = nullptr);

ParamGrads compute_gradient(const ModelParams& params,
                            const FeatureSequence& video,
                            const std::vector<int>& y,
                            const std::optional<Mat>& mu_e,
                            const std::optional<Tcam>& frozen_target,
                            const TrainConfig& cfg);

struct TrainHistoryRow {
  int epoch = 0;
  double cls = 0.0;
  double kd = 0.0;
  double att = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  MemoryBank bank;
  std::vector<TrainHistoryRow> history;
};

// Fresh seeded parameters sized for the dataset.
ModelParams init_params(int d_in, int num_classes, const TrainConfig& cfg);

// Per-video gradient descent over shuffled epochs. From bank_start_epoch
// onward each update is followed by an offer of the video's representatives,
// and the retrieved branch joins the loss.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t num_params = 0;
};

// Analytic versus central-difference gradients on one video, relative error
// |ga - gf| / (1e-6 + max(|ga|, |gf|)) maximized over every coordinate.
// Passing retrieved rows exercises the third branch as well.
GradCheckReport grad_check(const ModelParams& params,
                           const FeatureSequence& video,
                           const std::vector<int>& y, const TrainConfig& cfg,
                           const std::optional<Mat>& mu_e = std::nullopt);

// Checkpoint directory: manifest.json plus one feature-file payload per
// parameter block and the bank snapshot. Payloads inherit the feature file's
// f32 storage, so a reloaded model carries f32-rounded parameters.
void save_checkpoint(const ModelParams& params, const MemoryBank& bank,
                     const std::filesystem::path& dir);

struct Checkpoint {
  ModelParams params;
  MemoryBank bank;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

void write_history_csv(const std::vector<TrainHistoryRow>& history,
                       const std::filesystem::path& path);

}  // namespace snippetprop
