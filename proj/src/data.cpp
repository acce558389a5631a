#include "snippetprop/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "snippetprop/errors.hpp"
#include "snippetprop/rng.hpp"

namespace snippetprop {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;
// Generous payload cap so corrupt headers fail fast instead of allocating.
constexpr std::uint64_t kMaxElements = 1ull << 30;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  static_assert(sizeof(v) == sizeof(f));
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

std::uint32_t take_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("feature file truncated while reading ") +
                      what);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

float take_f32(std::istream& is, const char* what) {
  std::uint32_t v = take_u32(is, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void FeatureSequence::validate() const {
  if (snippets.rows == 0 || snippets.cols == 0) {
    throw FormatError("feature sequence '" + video_id +
                      "' must have at least one snippet and one dimension");
  }
  if (!snippets.all_finite()) {
    throw FormatError("feature sequence '" + video_id +
                      "' contains non-finite values");
  }
  if (!(snippet_duration_s > 0.0) || !std::isfinite(snippet_duration_s)) {
    throw FormatError("feature sequence '" + video_id +
                      "' has invalid snippet duration");
  }
}

std::vector<int> VideoLabel::active_classes() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < y.size(); ++k)
    if (y[k]) out.push_back(static_cast<int>(k));
  return out;
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& msg) { throw ConfigError("synth: " + msg); };
  if (num_classes < 1) bad("num_classes must be >= 1");
  if (feature_dim < 1) bad("feature_dim must be >= 1");
  if (prototypes_per_class < 1) bad("prototypes_per_class must be >= 1");
  if (num_videos < 1) bad("num_videos must be >= 1");
  if (snippets_per_video[0] < 1 || snippets_per_video[1] < snippets_per_video[0])
    bad("snippets_per_video range is empty or below 1");
  if (actions_per_video[0] < 1 || actions_per_video[1] < actions_per_video[0])
    bad("actions_per_video range is empty or below 1");
  if (noise_sigma < 0.0 || background_sigma < 0.0) bad("sigmas must be >= 0");
  // Worst case packing: most actions into fewest snippets. Segments take at
  // least two snippets and neighbours are separated by one background snippet.
  int worst = actions_per_video[1] * 2 + (actions_per_video[1] - 1);
  if (worst > snippets_per_video[0]) {
    bad("packing infeasible: " + std::to_string(actions_per_video[1]) +
        " actions need " + std::to_string(worst) + " snippets but videos may " +
        "have only " + std::to_string(snippets_per_video[0]));
  }
}

const FeatureSequence& Dataset::features_for(const std::string& video_id) const {
  for (const auto& f : features)
    if (f.video_id == video_id) return f;
  throw FormatError("no features for video '" + video_id + "'");
}

const VideoLabel& Dataset::label_for(const std::string& video_id) const {
  for (const auto& l : labels)
    if (l.video_id == video_id) return l;
  throw FormatError("no label for video '" + video_id + "'");
}

double Dataset::duration_for(const std::string& video_id) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].video_id == video_id) return durations_s[i];
  throw FormatError("no duration for video '" + video_id + "'");
}

std::vector<GroundTruthSegment> Dataset::segments_for(
    const std::string& video_id) const {
  std::vector<GroundTruthSegment> out;
  for (const auto& s : segments)
    if (s.video_id == video_id) out.push_back(s);
  return out;
}

void write_features(const FeatureSequence& f, const std::filesystem::path& path) {
  f.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(f.snippets.rows));
  put_u32(os, static_cast<std::uint32_t>(f.snippets.cols));
  put_f32(os, static_cast<float>(f.snippet_duration_s));
  for (double v : f.snippets.data) put_f32(os, static_cast<float>(v));
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("'" + path.string() + "' is not a feature file (bad magic)");
  }
  std::uint32_t version = take_u32(is, "version");
  if (version != kVersion) {
    throw FormatError("unsupported feature file version " +
                      std::to_string(version));
  }
  std::uint64_t l = take_u32(is, "snippet count");
  std::uint64_t d = take_u32(is, "feature dimension");
  if (l == 0 || d == 0 || l * d > kMaxElements) {
    throw FormatError("feature file header has invalid shape " +
                      std::to_string(l) + "x" + std::to_string(d));
  }
  FeatureSequence f;
  f.video_id = path.stem().string();
  f.snippet_duration_s = take_f32(is, "snippet duration");
  f.snippets = Mat(static_cast<std::size_t>(l), static_cast<std::size_t>(d));
  for (double& v : f.snippets.data) v = take_f32(is, "payload");
  char extra;
  if (is.read(&extra, 1)) {
    throw FormatError("trailing bytes after feature payload in '" +
                      path.string() + "'");
  }
  f.validate();
  return f;
}

void write_annotations(const Dataset& ds, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["classes"] = ds.class_names;
  auto& videos = doc["videos"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const std::string& id = ds.labels[i].video_id;
    nlohmann::json v;
    v["id"] = id;
    v["labels"] = ds.labels[i].active_classes();
    v["duration_s"] = ds.durations_s[i];
    auto& segs = v["segments"] = nlohmann::json::array();
    for (const auto& s : ds.segments_for(id)) {
      segs.push_back({{"class", s.class_id},
                      {"start_s", s.start_s},
                      {"end_s", s.end_s}});
    }
    videos.push_back(std::move(v));
  }
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << doc.dump(2) << "\n";
}

Dataset read_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("annotations '" + path.string() + "': " + e.what());
  }
  Dataset ds;
  try {
    ds.class_names = doc.at("classes").get<std::vector<std::string>>();
    const int c = static_cast<int>(ds.class_names.size());
    std::set<std::string> seen;
    for (const auto& v : doc.at("videos")) {
      std::string id = v.at("id").get<std::string>();
      if (!seen.insert(id).second) {
        throw FormatError("duplicate video id '" + id + "'");
      }
      double duration = v.at("duration_s").get<double>();
      if (!(duration > 0.0)) {
        throw FormatError("video '" + id + "' has non-positive duration");
      }
      VideoLabel lbl;
      lbl.video_id = id;
      lbl.y.assign(c, 0);
      for (int k : v.at("labels").get<std::vector<int>>()) {
        if (k < 0 || k >= c) {
          throw FormatError("video '" + id + "' labels class " +
                            std::to_string(k) + " outside [0," +
                            std::to_string(c) + ")");
        }
        lbl.y[k] = 1;
      }
      ds.labels.push_back(std::move(lbl));
      ds.durations_s.push_back(duration);
      for (const auto& s : v.at("segments")) {
        GroundTruthSegment g;
        g.video_id = id;
        g.class_id = s.at("class").get<int>();
        g.start_s = s.at("start_s").get<double>();
        g.end_s = s.at("end_s").get<double>();
        if (g.class_id < 0 || g.class_id >= c) {
          throw FormatError("segment in '" + id + "' names class " +
                            std::to_string(g.class_id) + " outside [0," +
                            std::to_string(c) + ")");
        }
        if (!(g.start_s >= 0.0) || !(g.start_s < g.end_s)) {
          throw FormatError("segment in '" + id + "' has invalid extent");
        }
        if (g.end_s > duration + 1e-9) {
          throw FormatError("segment in '" + id + "' ends after the video");
        }
        ds.segments.push_back(std::move(g));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("annotations '" + path.string() + "': " + e.what());
  }
  return ds;
}

void write_dataset(const Dataset& ds, const SynthConfig* cfg,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (const auto& f : ds.features) {
    write_features(f, dir / "features" / (f.video_id + ".snpf"));
  }
  write_annotations(ds, dir / "annotations.json");
  nlohmann::json manifest;
  manifest["format"] = "snippetprop-dataset";
  manifest["version"] = 1;
  manifest["num_classes"] = ds.num_classes();
  manifest["num_videos"] = ds.features.size();
  auto& ids = manifest["videos"] = nlohmann::json::array();
  for (const auto& lbl : ds.labels) ids.push_back(lbl.video_id);
  if (cfg) {
    manifest["synth"] = {{"num_classes", cfg->num_classes},
                         {"feature_dim", cfg->feature_dim},
                         {"snippets_per_video", cfg->snippets_per_video},
                         {"actions_per_video", cfg->actions_per_video},
                         {"prototypes_per_class", cfg->prototypes_per_class},
                         {"noise_sigma", cfg->noise_sigma},
                         {"background_sigma", cfg->background_sigma},
                         {"num_videos", cfg->num_videos},
                         {"seed", cfg->seed}};
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw FormatError("cannot write manifest in '" + dir.string() + "'");
  os << manifest.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds = read_annotations(dir / "annotations.json");
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    const std::string& id = ds.labels[i].video_id;
    FeatureSequence f = read_features(dir / "features" / (id + ".snpf"));
    double have = static_cast<double>(f.snippets.rows) * f.snippet_duration_s;
    double want = ds.durations_s[i];
    if (std::fabs(have - want) > 1e-6 * (1.0 + want)) {
      throw FormatError("video '" + id + "': feature file covers " +
                        std::to_string(have) + "s but annotations say " +
                        std::to_string(want) + "s");
    }
    ds.features.push_back(std::move(f));
  }
  return ds;
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int c = cfg.num_classes;
  const int d = cfg.feature_dim;
  const int per = cfg.prototypes_per_class;

  Dataset ds;
  for (int k = 0; k < c; ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%02d", k);
    ds.class_names.emplace_back(buf);
  }

  // Fixed unit-norm prototype directions, one block of rows per class.
  Mat protos(static_cast<std::size_t>(c) * per, d);
  for (double& v : protos.data) v = rng.normal();
  protos = l2_normalize_rows(protos);

  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };

  for (int vid = 0; vid < cfg.num_videos; ++vid) {
    int l = rng.range(cfg.snippets_per_video[0], cfg.snippets_per_video[1]);
    // validate() already guaranteed the largest action count fits the
    // smallest video, so any draw from the range packs.
    int a = rng.range(cfg.actions_per_video[0], cfg.actions_per_video[1]);

    // Lay out [gap0][seg0][gap1][seg1]...[gap_a]; segments start at 2
    // snippets, inner gaps at 1, outer gaps at 0, then spread the slack
    // uniformly over all 2a+1 slots one snippet at a time.
    std::vector<int> seg_len(a, 2);
    std::vector<int> gap_len(a + 1, 1);
    gap_len.front() = 0;
    gap_len.back() = 0;
    int used = 2 * a + (a - 1);
    for (int s = l - used; s > 0; --s) {
      std::size_t slot = rng.index(static_cast<std::size_t>(2 * a + 1));
      if (slot < static_cast<std::size_t>(a))
        ++seg_len[slot];
      else
        ++gap_len[slot - a];
    }

    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%04d", vid);
    FeatureSequence fs;
    fs.video_id = buf;
    fs.snippet_duration_s = 1.0;
    fs.snippets = Mat(l, d);
    for (std::size_t i = 0; i < fs.snippets.data.size(); ++i) {
      fs.snippets.data[i] = f32(cfg.background_sigma * rng.normal());
    }

    VideoLabel lbl;
    lbl.video_id = fs.video_id;
    lbl.y.assign(c, 0);

    int cursor = 0;
    for (int s = 0; s < a; ++s) {
      cursor += gap_len[s];
      int cls = static_cast<int>(rng.index(c));
      int proto = static_cast<int>(rng.index(per));
      const double* p = protos.row_ptr(static_cast<std::size_t>(cls) * per + proto);
      for (int i = cursor; i < cursor + seg_len[s]; ++i) {
        double* row = fs.snippets.row_ptr(i);
        for (int j = 0; j < d; ++j) {
          row[j] = f32(p[j] + cfg.noise_sigma * rng.normal());
        }
      }
      GroundTruthSegment g;
      g.video_id = fs.video_id;
      g.class_id = cls;
      g.start_s = cursor * fs.snippet_duration_s;
      g.end_s = (cursor + seg_len[s]) * fs.snippet_duration_s;
      ds.segments.push_back(g);
      lbl.y[cls] = 1;
      cursor += seg_len[s];
    }

    ds.durations_s.push_back(l * fs.snippet_duration_s);
    ds.features.push_back(std::move(fs));
    ds.labels.push_back(std::move(lbl));
  }
  return ds;
}

}  // namespace snippetprop
