#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "snippetprop/detect.hpp"
#include "snippetprop/errors.hpp"
#include "snippetprop/eval.hpp"
#include "snippetprop/head.hpp"
#include "snippetprop/rng.hpp"

using namespace snippetprop;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "snippetprop_detect_test";
  fs::create_directories(p);
  return p;
}

Mat random_mat(std::size_t r, std::size_t c, Rng& rng) {
  Mat m(r, c);
  for (double& v : m.data) v = rng.normal();
  return m;
}

HeadOutput random_head(std::size_t l, int c, Rng& rng) {
  HeadParams p;
  p.w_f = random_mat(1, 6, rng);
  p.w_a = random_mat(c + 1, 6, rng);
  return head_forward(random_mat(l, 6, rng), p);
}

// A head output with one bright class-0 block on rows [2,5) of 8, everything
// else leaning background. main == intra keeps the fusion transparent.
HeadOutput planted_head() {
  HeadOutput h;
  std::size_t l = 8;
  h.tcam = Mat(l, 3);
  h.lambda_f.assign(l, 0.05);
  for (std::size_t i = 0; i < l; ++i) {
    bool in = i >= 2 && i < 5;
    h.tcam(i, 0) = in ? 0.8 : 0.1;
    h.tcam(i, 1) = 0.1;
    h.tcam(i, 2) = in ? 0.1 : 0.8;
    if (in) h.lambda_f[i] = 0.9;
  }
  h.p_ca = {0.6, 0.05, 0.35};
  h.p_mil = {0.6, 0.05, 0.35};
  h.s_logits = Mat(l, 3);
  h.lambda_w = Mat(l, 3);
  h.fbar = Mat(1, 6);
  return h;
}

bool same_instances(const std::vector<ActionInstance>& a,
                    const std::vector<ActionInstance>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].class_id != b[i].class_id || a[i].score != b[i].score ||
        a[i].start_s != b[i].start_s || a[i].end_s != b[i].end_s) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("branch fusion is convex and respects the weight") {
  Rng rng(501);
  HeadOutput a = random_head(10, 3, rng);
  HeadOutput b = random_head(10, 3, rng);

  FusedTestOutputs main_only = fuse_test_outputs(a, b, 1.0);
  for (std::size_t k = 0; k < a.p_ca.size(); ++k) {
    CHECK(main_only.video_scores[k] == 0.5 * (a.p_ca[k] + a.p_mil[k]));
  }
  CHECK(main_only.tcam.data == a.tcam.data);
  CHECK(main_only.lambda_f == a.lambda_f);

  FusedTestOutputs intra_only = fuse_test_outputs(a, b, 0.0);
  CHECK(intra_only.tcam.data == b.tcam.data);
  CHECK(intra_only.lambda_f == b.lambda_f);

  // Equal branches pass through untouched (0.5 keeps the sum exact).
  FusedTestOutputs same = fuse_test_outputs(a, a, 0.5);
  CHECK(same.tcam.data == a.tcam.data);
  CHECK(same.lambda_f == a.lambda_f);

  FusedTestOutputs mix = fuse_test_outputs(a, b, 0.5);
  // Rows of a convex combination of row-stochastic maps stay stochastic.
  for (std::size_t i = 0; i < mix.tcam.rows; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < mix.tcam.cols; ++k) s += mix.tcam(i, k);
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
  for (std::size_t k = 0; k < mix.video_scores.size(); ++k) {
    double lo = std::min(0.5 * (a.p_ca[k] + a.p_mil[k]),
                         0.5 * (b.p_ca[k] + b.p_mil[k]));
    double hi = std::max(0.5 * (a.p_ca[k] + a.p_mil[k]),
                         0.5 * (b.p_ca[k] + b.p_mil[k]));
    CHECK(mix.video_scores[k] >= lo - 1e-12);
    CHECK(mix.video_scores[k] <= hi + 1e-12);
  }

  CHECK_THROWS_AS(fuse_test_outputs(a, b, 1.5), ConfigError);
  HeadOutput c = random_head(7, 3, rng);
  CHECK_THROWS_AS(fuse_test_outputs(a, c, 0.5), std::invalid_argument);
}

TEST_CASE("linear upsampling interpolates and preserves endpoints") {
  Mat two(2, 1);
  two(0, 0) = 0.0;
  two(1, 0) = 1.0;
  Mat three = upsample_linear(two, 3);
  CHECK(three(0, 0) == 0.0);
  CHECK(three(1, 0) == 0.5);
  CHECK(three(2, 0) == 1.0);

  Rng rng(502);
  Mat m = random_mat(7, 3, rng);
  // Matching length reproduces the input exactly.
  CHECK(upsample_linear(m, 7).data == m.data);

  Mat up = upsample_linear(m, 28);
  for (std::size_t j = 0; j < m.cols; ++j) {
    CHECK(up(0, j) == m(0, j));
    CHECK(up(27, j) == m(6, j));
  }

  // Single-row input broadcasts; single-row output takes the first row.
  Mat one(1, 2);
  one(0, 0) = 3.0;
  one(0, 1) = -1.0;
  Mat bc = upsample_linear(one, 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(bc(t, 0) == 3.0);
    CHECK(bc(t, 1) == -1.0);
  }
  CHECK(upsample_linear(m, 1)(0, 2) == m(0, 2));

  // Monotone columns stay monotone under linear interpolation.
  std::vector<double> mono(9);
  for (auto& v : mono) v = rng.uniform();
  std::sort(mono.begin(), mono.end());
  std::vector<double> up_mono = upsample_linear(mono, 27);
  for (std::size_t i = 1; i < up_mono.size(); ++i) {
    CHECK(up_mono[i] >= up_mono[i - 1]);
  }

  CHECK_THROWS_AS(upsample_linear(m, 0), std::invalid_argument);
}

TEST_CASE("proposal generation matches a brute-force run scan") {
  // Hand case: one interior run.
  std::vector<double> act = {0.0, 1.0, 1.0, 0.0};
  auto segs = propose(act, {0.5}, 2.0);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].first == 2.0);
  CHECK(segs[0].second == 6.0);

  // Nothing above the thresholds means nothing proposed.
  CHECK(propose({0.1, 0.2, 0.1}, {0.5, 0.7}, 1.0).empty());

  Rng rng(503);
  std::vector<double> thresholds = {0.2, 0.4, 0.6, 0.8};
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t l = 1 + rng.index(14);
    std::vector<double> a(l);
    for (auto& v : a) v = rng.uniform();
    double step = 0.5 + rng.uniform();

    // Oracle: a span is emitted iff every entry inside beats the threshold
    // and both neighbours (when present) do not.
    std::vector<std::pair<double, double>> expect;
    for (double thr : thresholds) {
      for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i; j < l; ++j) {
          bool run = true;
          for (std::size_t t = i; t <= j; ++t) run = run && a[t] > thr;
          if (i > 0) run = run && !(a[i - 1] > thr);
          if (j + 1 < l) run = run && !(a[j + 1] > thr);
          if (run) {
            expect.emplace_back(static_cast<double>(i) * step,
                                static_cast<double>(j + 1) * step);
          }
        }
      }
    }
    auto got = propose(a, thresholds, step);
    std::sort(expect.begin(), expect.end());
    std::sort(got.begin(), got.end());
    CHECK(got == expect);
  }

  // More thresholds only ever add candidates (duplicates retained).
  std::vector<double> a = {0.3, 0.9, 0.7, 0.1, 0.8};
  CHECK(propose(a, {0.2, 0.5}, 1.0).size() >= propose(a, {0.5}, 1.0).size());
}

TEST_CASE("proposal scoring contrasts the segment with its flanks") {
  // Perfect contrast: ones inside, zeros outside.
  std::vector<double> act = {0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  CHECK(score_proposal(act, 2.0, 5.0, 0.25, 0.0, 1.0) == 1.0);

  // Hand recomputation with a wider flank and a video score.
  std::vector<double> a = {0.1, 0.2, 0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
  double inner = (a[2] + a[3] + a[4]) / 3.0;
  // flank = ceil(0.5 * 3) = 2 snippets per side
  double outer = (a[0] + a[1] + a[5] + a[6]) / 4.0;
  CHECK(score_proposal(a, 2.0, 5.0, 0.5, 0.25, 1.0) == inner - outer + 0.25);

  // Constant activation has zero contrast, so only the video score remains.
  std::vector<double> flat(10, 0.5);
  CHECK(score_proposal(flat, 4.0, 6.0, 0.25, 0.3, 1.0) == 0.3);

  // A segment at the video edge only has one flank; the other is clipped
  // away. flank = ceil(0.5 * 2) = 1 snippet.
  double left_clipped = score_proposal(a, 0.0, 2.0, 0.5, 0.0, 1.0);
  double inner2 = (a[0] + a[1]) / 2.0;
  CHECK(left_clipped == inner2 - a[2]);

  // Zero ratio disables the flanks entirely.
  double whole = score_proposal(a, 0.0, 8.0, 0.0, 0.1, 1.0);
  double mean_all =
      (a[0] + a[1] + a[2] + a[3] + a[4] + a[5] + a[6] + a[7]) / 8.0;
  CHECK(whole == mean_all + 0.1);

  // Non-integral steps follow the snippet duration, not unit spacing.
  CHECK(score_proposal(act, 1.0, 2.5, 0.25, 0.0, 0.5) == 1.0);

  CHECK_THROWS_AS(score_proposal(a, -1.0, 2.0, 0.25, 0.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(score_proposal(a, 3.0, 3.0, 0.25, 0.0, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(score_proposal(a, 3.0, 9.0, 0.25, 0.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("suppression agrees with a select-and-prune reference") {
  auto make = [](int cls, double score, double s, double e) {
    ActionInstance i;
    i.class_id = cls;
    i.score = score;
    i.start_s = s;
    i.end_s = e;
    return i;
  };

  // Disjoint same-class instances all survive.
  std::vector<ActionInstance> disjoint = {make(0, 0.9, 0.0, 1.0),
                                          make(0, 0.8, 2.0, 3.0),
                                          make(0, 0.7, 4.0, 5.0)};
  CHECK(temporal_nms(disjoint, 0.5).size() == 3);

  // Exact duplicates collapse to one.
  std::vector<ActionInstance> dup = {make(1, 0.5, 1.0, 2.0),
                                     make(1, 0.4, 1.0, 2.0)};
  auto kept = temporal_nms(dup, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.5);

  // Identical extents in different classes never suppress each other.
  std::vector<ActionInstance> cross = {make(0, 0.9, 1.0, 2.0),
                                       make(1, 0.1, 1.0, 2.0)};
  CHECK(temporal_nms(cross, 0.5).size() == 2);

  auto before = [](const ActionInstance& x, const ActionInstance& y) {
    if (x.score != y.score) return x.score > y.score;
    if (x.start_s != y.start_s) return x.start_s < y.start_s;
    double dx = x.end_s - x.start_s;
    double dy = y.end_s - y.start_s;
    if (dx != dy) return dx < dy;
    return x.class_id < y.class_id;
  };

  Rng rng(504);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ActionInstance> pool;
    std::size_t n = 1 + rng.index(12);
    for (std::size_t i = 0; i < n; ++i) {
      double start = 0.5 * static_cast<double>(rng.index(10));
      double len = 0.5 * static_cast<double>(1 + rng.index(4));
      pool.push_back(make(static_cast<int>(rng.index(2)),
                          0.25 * static_cast<double>(rng.index(5)), start,
                          start + len));
    }
    double thr = 0.25 + 0.5 * rng.uniform();

    // Reference: repeatedly pick the best remaining instance by linear scan,
    // then prune everything it suppresses.
    std::vector<ActionInstance> remaining = pool;
    std::vector<ActionInstance> expect;
    while (!remaining.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < remaining.size(); ++i) {
        if (before(remaining[i], remaining[best])) best = i;
      }
      ActionInstance top = remaining[best];
      expect.push_back(top);
      std::vector<ActionInstance> next;
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        if (i == best) continue;
        const ActionInstance& r = remaining[i];
        if (r.class_id == top.class_id &&
            tiou(r.start_s, r.end_s, top.start_s, top.end_s) > thr) {
          continue;
        }
        next.push_back(r);
      }
      remaining = std::move(next);
    }

    auto got = temporal_nms(pool, thr);
    CHECK(same_instances(got, expect));

    // Survivors of one class form a tIoU antichain.
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = i + 1; j < got.size(); ++j) {
        if (got[i].class_id != got[j].class_id) continue;
        CHECK(tiou(got[i].start_s, got[i].end_s, got[j].start_s,
                   got[j].end_s) <= thr);
      }
    }
  }
}

TEST_CASE("video detection gates classes and localizes the bright block") {
  HeadOutput h = planted_head();
  DetectConfig cfg;

  auto dets = detect_video(h, h, cfg, 1.0);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_id == 0);  // class 1 fails the 0.1 video gate
  CHECK(dets[0].start_s == 2.0);
  CHECK(dets[0].end_s == 5.0);
  CHECK(tiou(dets[0].start_s, dets[0].end_s, 2.0, 5.0) >= 0.5);

  // Raising the gate above every video score yields nothing.
  DetectConfig strict = cfg;
  strict.class_threshold = 0.9;
  CHECK(detect_video(h, h, strict, 1.0).empty());

  // Upsampling refines the grid but keeps the detection on the block.
  DetectConfig up = cfg;
  up.upsample = true;
  up.upsample_factor = 4;
  auto fine = detect_video(h, h, up, 1.0);
  REQUIRE(!fine.empty());
  CHECK(tiou(fine[0].start_s, fine[0].end_s, 2.0, 5.0) >= 0.5);
  for (const auto& d : fine) {
    double units = d.start_s / 0.25;
    CHECK(std::fabs(units - std::round(units)) < 1e-9);
    CHECK(d.start_s >= 0.0);
    CHECK(d.end_s <= 8.0 + 1e-9);
  }
}

TEST_CASE("video detection output is well-formed on random heads") {
  Rng rng(505);
  DetectConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t l = 2 + rng.index(12);
    HeadOutput main = random_head(l, 3, rng);
    HeadOutput intra = random_head(l, 3, rng);
    double step = 0.5 + rng.uniform();
    auto dets = detect_video(main, intra, cfg, step);
    for (const auto& d : dets) {
      CHECK(d.class_id >= 0);
      CHECK(d.class_id < 3);
      CHECK(std::isfinite(d.score));
      CHECK(d.start_s >= -1e-12);
      CHECK(d.end_s <= static_cast<double>(l) * step + 1e-9);
      CHECK(d.start_s < d.end_s);
      double units = d.start_s / step;
      CHECK(std::fabs(units - std::round(units)) < 1e-9);
      units = d.end_s / step;
      CHECK(std::fabs(units - std::round(units)) < 1e-9);
    }
    // Same-class survivors never overlap beyond the NMS threshold.
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = i + 1; j < dets.size(); ++j) {
        if (dets[i].class_id != dets[j].class_id) continue;
        CHECK(tiou(dets[i].start_s, dets[i].end_s, dets[j].start_s,
                   dets[j].end_s) <= cfg.nms_tiou);
      }
    }
  }
}

TEST_CASE("detection documents round trip and reject malformed input") {
  auto dir = temp_dir();
  std::map<std::string, std::vector<ActionInstance>> dets;
  ActionInstance a;
  a.class_id = 2;
  a.score = 1.0 / 3.0;
  a.start_s = 0.25;
  a.end_s = 7.75;
  ActionInstance b;
  b.class_id = 0;
  b.score = -0.125;
  b.start_s = 3.0;
  b.end_s = 4.5;
  dets["vid_a"] = {a, b};
  dets["vid_b"] = {};

  auto path = dir / "dets.json";
  write_detections(dets, path);
  auto back = read_detections(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back.at("vid_a").size() == 2);
  CHECK(back.at("vid_b").empty());
  CHECK(back.at("vid_a")[0].class_id == 2);
  CHECK(back.at("vid_a")[0].score == a.score);
  CHECK(back.at("vid_a")[0].start_s == a.start_s);
  CHECK(back.at("vid_a")[0].end_s == a.end_s);
  CHECK(back.at("vid_a")[1].score == b.score);

  auto bad = dir / "bad.json";
  std::ofstream(bad) << "[1,2,3]\n";
  CHECK_THROWS_AS(read_detections(bad), FormatError);
  std::ofstream(bad) << "{\"v\": [{\"class\": -1, \"score\": 0.5, "
                        "\"start_s\": 0, \"end_s\": 1}]}\n";
  CHECK_THROWS_AS(read_detections(bad), FormatError);
  std::ofstream(bad) << "{\"v\": [{\"class\": 1, \"score\": 0.5, "
                        "\"start_s\": 2, \"end_s\": 1}]}\n";
  CHECK_THROWS_AS(read_detections(bad), FormatError);
  std::ofstream(bad) << "{\"v\": [{\"class\": 1, \"start_s\": 0, "
                        "\"end_s\": 1}]}\n";
  CHECK_THROWS_AS(read_detections(bad), FormatError);
  std::ofstream(bad) << "not json";
  CHECK_THROWS_AS(read_detections(bad), FormatError);
  CHECK_THROWS_AS(read_detections(dir / "missing.json"), FormatError);

  fs::remove_all(dir);
}

TEST_CASE("detect configuration validation") {
  DetectConfig ok;
  CHECK_NOTHROW(ok.validate());

  DetectConfig bad = ok;
  bad.class_threshold = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.act_thresholds = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.act_thresholds = {0.5, 0.3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.act_thresholds = {0.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.nms_tiou = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.outer_ratio = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.fusion_main_intra = 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = ok;
  bad.upsample = true;
  bad.upsample_factor = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
