#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "snippetprop/config.hpp"
#include "snippetprop/data.hpp"
#include "snippetprop/detect.hpp"
#include "snippetprop/errors.hpp"
#include "snippetprop/eval.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/pipeline.hpp"
#include "snippetprop/propagate.hpp"
#include "snippetprop/summarize.hpp"

#ifndef SNIPPETPROP_BUILD_HASH
#define SNIPPETPROP_BUILD_HASH "unknown"
#endif

namespace fs = std::filesystem;
using namespace snippetprop;

namespace {

// "8,16,32" and "1..64" (both mixable: "1,2,4..8") into a sorted-as-given
// list of positive integers.
std::vector<int> parse_int_spec(const std::string& spec, const char* what) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string tok;
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": '" + s +
                        "' is not an integer");
    }
  };
  while (std::getline(ss, tok, ',')) {
    auto dots = tok.find("..");
    if (dots != std::string::npos) {
      int a = to_int(tok.substr(0, dots));
      int b = to_int(tok.substr(dots + 2));
      if (a < 1 || b < a) {
        throw ConfigError(std::string(what) + ": bad range '" + tok + "'");
      }
      for (int v = a; v <= b; ++v) out.push_back(v);
    } else if (!tok.empty()) {
      int v = to_int(tok);
      if (v < 1) {
        throw ConfigError(std::string(what) + ": values must be >= 1");
      }
      out.push_back(v);
    }
  }
  if (out.empty()) {
    throw ConfigError(std::string(what) + ": empty grid");
  }
  return out;
}

// The shape-bearing fields follow the checkpoint, not the config file, so a
// model trained under one config can be probed under another.
TrainConfig forward_config(const RunConfig& rc, const Checkpoint& ck) {
  TrainConfig fc = rc.train;
  fc.embed_dim = static_cast<int>(ck.params.embed.cols);
  fc.num_representatives = static_cast<int>(ck.params.mu0.rows);
  return fc;
}

void check_dataset_matches(const Checkpoint& ck, const Dataset& ds) {
  int ckpt_classes = static_cast<int>(ck.params.head.w_a.rows) - 1;
  if (ckpt_classes != ds.num_classes()) {
    throw FormatError("checkpoint was trained for " +
                      std::to_string(ckpt_classes) +
                      " classes but the dataset defines " +
                      std::to_string(ds.num_classes()));
  }
  for (const auto& f : ds.features) {
    if (f.snippets.cols != ck.params.embed.rows) {
      throw FormatError("checkpoint expects " +
                        std::to_string(ck.params.embed.rows) +
                        "-dimensional features but video '" + f.video_id +
                        "' has dimension " + std::to_string(f.snippets.cols));
    }
  }
}

int cmd_synth(const fs::path& config, const fs::path& out) {
  RunConfig rc = read_run_config(config);
  Dataset ds = generate_synthetic(rc.synth);
  write_dataset(ds, &rc.synth, out);
  std::cout << "synth: wrote " << ds.features.size() << " videos ("
            << ds.num_classes() << " classes) to " << out.string() << "\n";
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& data,
              const fs::path& out) {
  RunConfig rc = read_run_config(config);
  Dataset ds = read_dataset(data);
  TrainResult tr = train(ds, rc.train);
  save_checkpoint(tr.params, tr.bank, out);
  write_history_csv(tr.history, out / "history.csv");
  char msg[160];
  if (tr.history.empty()) {
    std::snprintf(msg, sizeof(msg), "train: 0 epochs, checkpoint is the seed "
                                    "initialization");
  } else {
    std::snprintf(msg, sizeof(msg), "train: %d epochs, final loss %.6g",
                  static_cast<int>(tr.history.size()),
                  tr.history.back().total);
  }
  std::cout << msg << " -> " << out.string() << "\n";
  return 0;
}

int cmd_infer(const fs::path& config, const fs::path& ckpt,
              const fs::path& data, const fs::path& out) {
  RunConfig rc = read_run_config(config);
  Checkpoint ck = load_checkpoint(ckpt);
  Dataset ds = read_dataset(data);
  check_dataset_matches(ck, ds);
  TrainConfig fc = forward_config(rc, ck);
  const std::vector<int> no_labels(ds.num_classes(), 0);

  std::vector<std::vector<ActionInstance>> results(ds.features.size());
  int workers = std::min<int>(worker_count(),
                              std::max<int>(1, static_cast<int>(ds.features.size())));
  std::atomic<std::size_t> cursor{0};
  std::vector<std::exception_ptr> errors(workers);
  auto run_range = [&](int slot) {
    try {
      for (std::size_t i = cursor.fetch_add(1); i < ds.features.size();
           i = cursor.fetch_add(1)) {
        const FeatureSequence& video = ds.features[i];
        BranchOutputs bo =
            forward_video(ck.params, video, no_labels, nullptr, false, fc);
        const HeadOutput& intra = bo.intra ? *bo.intra : bo.main;
        results[i] =
            detect_video(bo.main, intra, rc.detect, video.snippet_duration_s);
      }
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  };
  if (workers <= 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run_range, t);
    for (auto& th : pool) th.join();
  }
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }

  std::map<std::string, std::vector<ActionInstance>> dets;
  std::size_t total = 0;
  for (std::size_t i = 0; i < ds.features.size(); ++i) {
    total += results[i].size();
    dets.emplace(ds.features[i].video_id, std::move(results[i]));
  }
  write_detections(dets, out);
  std::cout << "infer: " << ds.features.size() << " videos, " << total
            << " instances -> " << out.string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& config, const fs::path& detections,
             const fs::path& annotations, const fs::path& out_prefix) {
  RunConfig rc = read_run_config(config);
  auto dets = read_detections(detections);
  Dataset ds = read_annotations(annotations);
  for (const auto& [video_id, instances] : dets) {
    bool known = false;
    for (const auto& lbl : ds.labels) known = known || lbl.video_id == video_id;
    if (!known) {
      throw FormatError("detections reference unknown video '" + video_id +
                        "'");
    }
    for (const ActionInstance& inst : instances) {
      if (inst.class_id >= ds.num_classes()) {
        throw FormatError("detections name class " +
                          std::to_string(inst.class_id) +
                          " but the annotations define only " +
                          std::to_string(ds.num_classes()) + " classes");
      }
    }
  }
  EvalReport report =
      map_report(dets, ds.segments, rc.eval_thresholds, rc.eval_bands);
  fs::path csv = out_prefix;
  csv += ".csv";
  fs::path summary = out_prefix;
  summary += ".json";
  write_eval_csv(report, csv);
  write_eval_json(report, summary);
  char line[160];
  for (const auto& [name, avg] : report.band_averages) {
    std::snprintf(line, sizeof(line), "eval: %s = %.4f", name.c_str(), avg);
    std::cout << line << "\n";
  }
  std::cout << "eval: report -> " << csv.string() << ", " << summary.string()
            << "\n";
  return 0;
}

int cmd_bench(const std::string& l_spec, const std::string& n_spec,
              const std::string& t_spec, double w, double lambda,
              std::uint64_t seed, const fs::path& out) {
  std::vector<std::size_t> ls, ns;
  for (int v : parse_int_spec(l_spec, "bench-birw --l")) {
    ls.push_back(static_cast<std::size_t>(v));
  }
  for (int v : parse_int_spec(n_spec, "bench-birw --n")) {
    ns.push_back(static_cast<std::size_t>(v));
  }
  std::vector<int> ts = parse_int_spec(t_spec, "bench-birw --t");
  auto rows = birw_benchmark(ls, ns, ts, w, lambda, seed);
  write_benchmark_csv(rows, out);
  std::cout << "bench-birw: " << rows.size() << " rows -> " << out.string()
            << "\n";
  return 0;
}

int cmd_analyze(const fs::path& config, const fs::path& ckpt,
                const fs::path& data, const fs::path& out) {
  RunConfig rc = read_run_config(config);
  Checkpoint ck = load_checkpoint(ckpt);
  Dataset ds = read_dataset(data);
  check_dataset_matches(ck, ds);
  if (ds.features.empty()) {
    throw FormatError("analyze: dataset has no videos");
  }
  TrainConfig fc = forward_config(rc, ck);
  const std::vector<int> no_labels(ds.num_classes(), 0);

  EmConfig em;
  em.n = fc.num_representatives;
  em.lambda = fc.lambda;
  em.iterations = fc.em_iterations;
  em.learn_init = fc.learn_init;
  // The untrained seed initialization, for measuring what training bought.
  Mat mu0_fixed =
      init_params(static_cast<int>(ck.params.embed.rows), ds.num_classes(), fc)
          .mu0;

  const std::vector<std::string> strategies = {
      "em_attention", "em_attention_fixed_init", "top_score", "kmeans"};
  const std::vector<double> thresholds = default_profile_thresholds();
  std::map<std::string, std::vector<double>> profile_sum;
  for (const auto& s : strategies) {
    profile_sum[s] = std::vector<double>(thresholds.size(), 0.0);
    fs::create_directories(out / "mu" / s);
  }
  fs::create_directories(out / "fprop");

  for (std::size_t vi = 0; vi < ds.features.size(); ++vi) {
    const FeatureSequence& video = ds.features[vi];
    BranchOutputs bo =
        forward_video(ck.params, video, no_labels, nullptr, false, fc);
    Mat xn = l2_normalize_rows(bo.embedded);

    // Snippet class labels from the ground truth: the segment covering the
    // snippet center names it, anything uncovered is background (-1).
    std::vector<int> snippet_class(xn.rows, -1);
    auto segs = ds.segments_for(video.video_id);
    for (std::size_t i = 0; i < xn.rows; ++i) {
      double center =
          (static_cast<double>(i) + 0.5) * video.snippet_duration_s;
      for (const auto& g : segs) {
        if (center >= g.start_s && center < g.end_s) {
          snippet_class[i] = g.class_id;
          break;
        }
      }
    }

    int n_eff = std::min<int>(em.n, static_cast<int>(xn.rows));
    std::map<std::string, Mat> mus;
    mus["em_attention"] = summarize_em(xn, em, ck.params.mu0).mu;
    mus["em_attention_fixed_init"] = summarize_em(xn, em, mu0_fixed).mu;
    mus["top_score"] =
        summarize_top_score(xn, bo.main.lambda_f, n_eff, em.lambda).mu;
    mus["kmeans"] = summarize_kmeans(xn, n_eff, 20, fc.seed + vi).mu;

    for (const auto& s : strategies) {
      auto profile =
          representativeness_profile(xn, mus[s], snippet_class, thresholds);
      for (std::size_t t = 0; t < thresholds.size(); ++t) {
        profile_sum[s][t] += profile[t];
      }
      FeatureSequence dump;
      dump.video_id = video.video_id;
      dump.snippets = mus[s];
      dump.snippet_duration_s = 1.0;
      write_features(dump, out / "mu" / s / (video.video_id + ".snpf"));
    }
    if (bo.fa) {
      FeatureSequence dump;
      dump.video_id = video.video_id;
      dump.snippets = *bo.fa;
      dump.snippet_duration_s = video.snippet_duration_s;
      write_features(dump, out / "fprop" / (video.video_id + ".snpf"));
    }
  }

  std::ofstream os(out / "profiles.csv");
  if (!os) {
    throw FormatError("cannot open '" + (out / "profiles.csv").string() +
                      "' for writing");
  }
  os << "strategy,threshold,value\n";
  char buf[128];
  for (const auto& s : strategies) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      double v = profile_sum[s][t] / static_cast<double>(ds.features.size());
      std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n", s.c_str(),
                    thresholds[t], v);
      os << buf;
    }
  }
  std::cout << "analyze: " << ds.features.size() << " videos -> "
            << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly-supervised temporal action localization toolkit: "
               "synthetic data, training, inference, scoring, benchmarks."};
  app.set_version_flag("--version", std::string("snippetprop 0.1.0 (") +
                                        SNIPPETPROP_BUILD_HASH + ")");
  app.require_subcommand(1);

  std::string config, data, ckpt, out, detections, annotations;
  std::string l_spec = "8,16,32,64", n_spec = "2,4,8", t_spec = "1..64";
  double bench_w = 0.5, bench_lambda = 5.0;
  std::uint64_t bench_seed = 1;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config, "Run configuration JSON")->required();
  synth->add_option("--out", out, "Output dataset directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", config, "Run configuration JSON")
      ->required();
  train_cmd->add_option("--data", data, "Dataset directory")->required();
  train_cmd->add_option("--out", out, "Checkpoint output directory")
      ->required();

  auto* infer = app.add_subcommand("infer", "Detect actions in every video");
  infer->add_option("--config", config, "Run configuration JSON")->required();
  infer->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  infer->add_option("--data", data, "Dataset directory")->required();
  infer->add_option("--out", out, "Detections JSON output path")->required();

  auto* eval_cmd =
      app.add_subcommand("eval", "Score detections against annotations");
  eval_cmd->add_option("--config", config, "Run configuration JSON")
      ->required();
  eval_cmd->add_option("--detections", detections, "Detections JSON")
      ->required();
  eval_cmd->add_option("--annotations", annotations, "Annotations JSON")
      ->required();
  eval_cmd->add_option("--out", out, "Report path prefix (.csv/.json added)")
      ->required();

  auto* bench = app.add_subcommand(
      "bench-birw", "Time iterative against closed-form propagation");
  bench->add_option("--l", l_spec, "Snippet counts, e.g. 8,16,32,64");
  bench->add_option("--n", n_spec, "Representative counts, e.g. 2,4,8");
  bench->add_option("--t", t_spec, "Iteration grid, e.g. 1..64");
  bench->add_option("--w", bench_w, "Propagation blend weight");
  bench->add_option("--lambda", bench_lambda, "Affinity temperature");
  bench->add_option("--seed", bench_seed, "Instance seed");
  bench->add_option("--out", out, "Benchmark CSV output path")->required();

  auto* analyze = app.add_subcommand(
      "analyze", "Representativeness profiles and feature dumps");
  analyze->add_option("--config", config, "Run configuration JSON")
      ->required();
  analyze->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  analyze->add_option("--data", data, "Dataset directory")->required();
  analyze->add_option("--out", out, "Analysis output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(config, out);
    if (train_cmd->parsed()) return cmd_train(config, data, out);
    if (infer->parsed()) return cmd_infer(config, ckpt, data, out);
    if (eval_cmd->parsed()) return cmd_eval(config, detections, annotations, out);
    if (bench->parsed()) {
      return cmd_bench(l_spec, n_spec, t_spec, bench_w, bench_lambda,
                       bench_seed, out);
    }
    if (analyze->parsed()) return cmd_analyze(config, ckpt, data, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
