#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "snippetprop/config.hpp"
#include "snippetprop/data.hpp"
#include "snippetprop/detect.hpp"
#include "snippetprop/errors.hpp"
#include "snippetprop/eval.hpp"
#include "snippetprop/head.hpp"
#include "snippetprop/mat.hpp"
#include "snippetprop/pipeline.hpp"
#include "snippetprop/propagate.hpp"
#include "snippetprop/summarize.hpp"

namespace py = pybind11;
using namespace snippetprop;

namespace {

using DoubleArray =
    py::array_t<double, py::array::c_style | py::array::forcecast>;

Mat to_mat(const DoubleArray& a, const char* what) {
  if (a.ndim() != 2) {
    throw std::invalid_argument(std::string(what) + " must be a 2-D array");
  }
  Mat m(static_cast<std::size_t>(a.shape(0)),
        static_cast<std::size_t>(a.shape(1)));
  if (!m.data.empty()) {
    std::memcpy(m.data.data(), a.data(), m.data.size() * sizeof(double));
  }
  return m;
}

py::array_t<double> to_array(const Mat& m) {
  py::array_t<double> a({static_cast<py::ssize_t>(m.rows),
                         static_cast<py::ssize_t>(m.cols)});
  if (!m.data.empty()) {
    std::memcpy(a.mutable_data(), m.data.data(),
                m.data.size() * sizeof(double));
  }
  return a;
}

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

// The shape-bearing fields follow the checkpoint, not the caller's config,
// mirroring the command-line tool.
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

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Weakly-supervised temporal action localization core: snippet "
      "summarization, bipartite random-walk propagation, detection "
      "post-processing and scoring.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError",
                                       PyExc_ArithmeticError);

  py::class_<ActionInstance>(m, "Instance")
      .def(py::init([](int class_id, double score, double start_s,
                       double end_s) {
             ActionInstance a;
             a.class_id = class_id;
             a.score = score;
             a.start_s = start_s;
             a.end_s = end_s;
             return a;
           }),
           py::arg("class_id"), py::arg("score"), py::arg("start_s"),
           py::arg("end_s"))
      .def_readwrite("class_id", &ActionInstance::class_id)
      .def_readwrite("score", &ActionInstance::score)
      .def_readwrite("start_s", &ActionInstance::start_s)
      .def_readwrite("end_s", &ActionInstance::end_s)
      .def("__repr__", [](const ActionInstance& a) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "Instance(class_id=%d, score=%.6g, start_s=%.6g, "
                      "end_s=%.6g)",
                      a.class_id, a.score, a.start_s, a.end_s);
        return std::string(buf);
      });

  // --- numeric kernels -----------------------------------------------------

  m.def(
      "affinity",
      [](const DoubleArray& f, const DoubleArray& mu, double lam) {
        return to_array(affinity(to_mat(f, "f"), to_mat(mu, "mu"), lam));
      },
      py::arg("f"), py::arg("mu"), py::arg("lam") = 5.0,
      "Row-stochastic snippet-to-representative affinity (softmax of lam "
      "times cosine similarity).");

  m.def(
      "summarize_em",
      [](const DoubleArray& f, const DoubleArray& mu0, double lam,
         int iterations) {
        Mat mu0_m = to_mat(mu0, "mu0");
        EmConfig cfg;
        cfg.n = static_cast<int>(mu0_m.rows);
        cfg.lambda = lam;
        cfg.iterations = iterations;
        cfg.validate();
        RepresentativeSet rs = summarize_em(to_mat(f, "f"), cfg, mu0_m);
        return py::make_tuple(to_array(rs.mu), to_array(rs.z));
      },
      py::arg("f"), py::arg("mu0"), py::arg("lam") = 5.0,
      py::arg("iterations") = 2,
      "EM attention summarization started from mu0; returns (mu, z).");

  m.def(
      "summarize_top_score",
      [](const DoubleArray& f, const std::vector<double>& scores, int n,
         double lam) {
        RepresentativeSet rs =
            summarize_top_score(to_mat(f, "f"), scores, n, lam);
        return py::make_tuple(to_array(rs.mu), to_array(rs.z));
      },
      py::arg("f"), py::arg("scores"), py::arg("n"), py::arg("lam") = 5.0,
      "Picks the n highest-scoring snippets as representatives; returns "
      "(mu, z).");

  m.def(
      "summarize_kmeans",
      [](const DoubleArray& f, int n, int iters, std::uint64_t seed) {
        RepresentativeSet rs = summarize_kmeans(to_mat(f, "f"), n, iters, seed);
        return py::make_tuple(to_array(rs.mu), to_array(rs.z));
      },
      py::arg("f"), py::arg("n"), py::arg("iters") = 20, py::arg("seed") = 1,
      "Lloyd's algorithm with farthest-point seeding; returns (mu, z).");

  m.def(
      "birw_iterate",
      [](const DoubleArray& f, const DoubleArray& mu, const DoubleArray& z,
         double w, int t) {
        return to_array(
            birw_iterate(to_mat(f, "f"), to_mat(mu, "mu"), to_mat(z, "z"), w, t));
      },
      py::arg("f"), py::arg("mu"), py::arg("z"), py::arg("w") = 0.5,
      py::arg("t") = 20,
      "t unrolled rounds of the bipartite walk, blended with the originals "
      "by w.");

  m.def(
      "birw_closed_form",
      [](const DoubleArray& f, const DoubleArray& mu, const DoubleArray& z,
         double w) {
        return to_array(
            birw_closed_form(to_mat(f, "f"), to_mat(mu, "mu"), to_mat(z, "z"), w));
      },
      py::arg("f"), py::arg("mu"), py::arg("z"), py::arg("w") = 0.5,
      "Fixed point of the bipartite walk via a linear solve.");

  m.def(
      "propagate",
      [](const DoubleArray& f, const DoubleArray& mu, double w,
         const std::string& mode, int iterations, double lam) {
        PropagationConfig cfg;
        cfg.w = w;
        cfg.mode = propagation_mode_from_string(mode);
        cfg.iterations = iterations;
        cfg.lambda = lam;
        cfg.validate();
        PropagationResult r =
            propagate_both(to_mat(f, "f"), to_mat(mu, "mu"), std::nullopt, cfg);
        return to_array(r.fa);
      },
      py::arg("f"), py::arg("mu"), py::arg("w") = 0.5,
      py::arg("mode") = "closed_form", py::arg("iterations") = 20,
      py::arg("lam") = 5.0,
      "Affinity plus walk in one step: propagates f through the given "
      "representatives.");

  m.def(
      "head_forward",
      [](const DoubleArray& f, const DoubleArray& w_f, const DoubleArray& w_a,
         double attn_scale) {
        HeadParams params;
        params.w_f = to_mat(w_f, "w_f");
        params.w_a = to_mat(w_a, "w_a");
        params.attn_scale = attn_scale;
        params.validate();
        HeadOutput out = head_forward(to_mat(f, "f"), params);
        py::dict d;
        d["lambda_f"] = to_array(out.lambda_f);
        d["fbar"] = to_array(out.fbar);
        d["tcam"] = to_array(out.tcam);
        d["lambda_w"] = to_array(out.lambda_w);
        d["p_ca"] = to_array(out.p_ca);
        d["p_mil"] = to_array(out.p_mil);
        return d;
      },
      py::arg("f"), py::arg("w_f"), py::arg("w_a"),
      py::arg("attn_scale") = 8.0,
      "Two-branch head over snippet rows: attention, activation map and "
      "video-level class scores.");

  m.def(
      "upsample_linear",
      [](const DoubleArray& x, std::size_t target_len) {
        return to_array(upsample_linear(to_mat(x, "x"), target_len));
      },
      py::arg("x"), py::arg("target_len"),
      "Per-column linear interpolation onto target_len rows; endpoints are "
      "preserved.");

  m.def("tiou", &tiou, py::arg("a_start"), py::arg("a_end"),
        py::arg("b_start"), py::arg("b_end"),
        "Temporal intersection over union of two segments.");

  m.def(
      "temporal_nms",
      [](std::vector<ActionInstance> instances, double tiou_threshold) {
        return temporal_nms(std::move(instances), tiou_threshold);
      },
      py::arg("instances"), py::arg("tiou_threshold") = 0.5,
      "Greedy same-class suppression; keeps the highest-scoring instance of "
      "each overlapping group.");

  m.def(
      "average_precision",
      [](const std::vector<ActionInstance>& dets,
         const std::vector<std::pair<double, double>>& gts, double tiou_thr) {
        return average_precision(dets, gts, tiou_thr);
      },
      py::arg("detections"), py::arg("ground_truths"),
      py::arg("tiou_threshold"),
      "All-point average precision of one class in one video at the given "
      "overlap threshold.");

  // --- pipeline ------------------------------------------------------------

  m.def(
      "generate_dataset",
      [](const std::string& config_json, const std::string& out_dir) {
        RunConfig rc = parse_run_config(config_json);
        Dataset ds = generate_synthetic(rc.synth);
        write_dataset(ds, &rc.synth, out_dir);
        return static_cast<int>(ds.features.size());
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Synthesizes a dataset into out_dir; returns the number of videos.");

  m.def(
      "train_model",
      [](const std::string& config_json, const std::string& data_dir,
         const std::string& out_dir) {
        RunConfig rc = parse_run_config(config_json);
        Dataset ds = read_dataset(data_dir);
        TrainResult tr = train(ds, rc.train);
        save_checkpoint(tr.params, tr.bank, out_dir);
        write_history_csv(tr.history,
                          std::filesystem::path(out_dir) / "history.csv");
        py::list rows;
        for (const auto& r : tr.history) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["cls"] = r.cls;
          d["kd"] = r.kd;
          d["att"] = r.att;
          d["total"] = r.total;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"),
      "Trains on a dataset directory, saves a checkpoint into out_dir and "
      "returns the loss history.");

  m.def(
      "detect_dataset",
      [](const std::string& config_json, const std::string& ckpt_dir,
         const std::string& data_dir) {
        RunConfig rc = parse_run_config(config_json);
        Checkpoint ck = load_checkpoint(ckpt_dir);
        Dataset ds = read_dataset(data_dir);
        check_dataset_matches(ck, ds);
        TrainConfig fc = forward_config(rc, ck);
        const std::vector<int> no_labels(ds.num_classes(), 0);
        std::map<std::string, std::vector<ActionInstance>> out;
        for (const auto& video : ds.features) {
          BranchOutputs bo =
              forward_video(ck.params, video, no_labels, nullptr, false, fc);
          const HeadOutput& intra = bo.intra ? *bo.intra : bo.main;
          out[video.video_id] =
              detect_video(bo.main, intra, rc.detect, video.snippet_duration_s);
        }
        return out;
      },
      py::arg("config_json"), py::arg("ckpt_dir"), py::arg("data_dir"),
      "Runs detection over every video in a dataset; returns {video_id: "
      "[Instance, ...]}.");

  m.def(
      "evaluate",
      [](const std::map<std::string, std::vector<ActionInstance>>& dets,
         const std::string& annotations_path,
         std::optional<std::vector<double>> thresholds,
         std::optional<std::vector<std::tuple<std::string, double, double>>>
             bands) {
        Dataset ds = read_annotations(annotations_path);
        std::vector<double> thr =
            thresholds ? *thresholds : default_tiou_thresholds();
        std::vector<EvalBand> bd;
        if (bands) {
          for (const auto& [name, lo, hi] : *bands) {
            bd.push_back(EvalBand{name, lo, hi});
          }
        } else {
          bd = default_eval_bands();
        }
        EvalReport report = map_report(dets, ds.segments, thr, bd);
        py::dict d;
        d["class_ids"] = report.class_ids;
        d["thresholds"] = to_array(report.thresholds);
        d["ap"] = to_array(report.ap);
        d["map_per_threshold"] = to_array(report.map_per_threshold);
        py::dict bands_out;
        for (const auto& [name, avg] : report.band_averages) {
          bands_out[py::str(name)] = avg;
        }
        d["bands"] = bands_out;
        return d;
      },
      py::arg("detections"), py::arg("annotations_path"),
      py::arg("thresholds") = py::none(), py::arg("bands") = py::none(),
      "Scores detections against an annotations file; returns per-class AP, "
      "mAP per threshold and band averages.");

  m.def(
      "write_detections",
      [](const std::map<std::string, std::vector<ActionInstance>>& dets,
         const std::string& path) { write_detections(dets, path); },
      py::arg("detections"), py::arg("path"),
      "Writes a detections JSON file.");

  m.def(
      "read_detections",
      [](const std::string& path) { return read_detections(path); },
      py::arg("path"), "Reads a detections JSON file.");
}
