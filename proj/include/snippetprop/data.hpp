#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snippetprop/mat.hpp"

namespace snippetprop {

// One video's snippet features, l rows of dimension d.
struct FeatureSequence {
  std::string video_id;
  Mat snippets;
  double snippet_duration_s = 1.0;

  // Throws FormatError unless l >= 1, d >= 1, all entries finite and the
  // snippet duration is a positive finite number.
  void validate() const;
};

struct VideoLabel {
  std::string video_id;
  std::vector<int> y;  // one 0/1 flag per class

  std::vector<int> active_classes() const;
};

struct GroundTruthSegment {
  std::string video_id;
  int class_id = 0;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SynthConfig {
  int num_classes = 4;
  int feature_dim = 16;
  std::array<int, 2> snippets_per_video{20, 30};
  std::array<int, 2> actions_per_video{1, 3};
  int prototypes_per_class = 2;
  double noise_sigma = 0.25;
  double background_sigma = 0.25;
  int num_videos = 20;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

// Everything the pipeline needs about a dataset, kept together for plumbing.
// `features` may be empty when only annotations were loaded; `durations_s`
// mirrors `labels` by position and is always filled.
struct Dataset {
  std::vector<std::string> class_names;
  std::vector<FeatureSequence> features;
  std::vector<VideoLabel> labels;
  std::vector<GroundTruthSegment> segments;
  std::vector<double> durations_s;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  const FeatureSequence& features_for(const std::string& video_id) const;
  const VideoLabel& label_for(const std::string& video_id) const;
  double duration_for(const std::string& video_id) const;
  std::vector<GroundTruthSegment> segments_for(const std::string& video_id) const;
};

// Binary feature file round trip. Layout: "SNPF" magic, u32 version (1),
// u32 l, u32 d, f32 snippet duration in seconds, then l*d f32 row-major,
// everything little-endian. Values are stored at f32 precision.
void write_features(const FeatureSequence& f, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);

// Annotations JSON document for a dataset (classes, per-video labels,
// durations and ground-truth segments).
void write_annotations(const Dataset& ds, const std::filesystem::path& path);
Dataset read_annotations(const std::filesystem::path& path);  // no features

// Dataset directory: features/<video_id>.snpf + annotations.json + manifest.
void write_dataset(const Dataset& ds, const SynthConfig* cfg,
                   const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Synthesizes a dataset of planted-prototype Gaussian features: each class
// owns a few fixed unit-norm prototype directions, action snippets are a
// prototype plus noise, background snippets are pure noise.
Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace snippetprop
