#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "snippetprop/data.hpp"
#include "snippetprop/detect.hpp"
#include "snippetprop/eval.hpp"
#include "snippetprop/pipeline.hpp"

namespace snippetprop {

// One archivable document that drives every command: data generation,
// training, detection and scoring settings plus the run seed.
struct RunConfig {
  std::uint64_t seed = 1;
  SynthConfig synth;
  TrainConfig train;
  DetectConfig detect;
  std::vector<double> eval_thresholds = default_tiou_thresholds();
  std::vector<EvalBand> eval_bands = default_eval_bands();

  void validate() const;  // throws ConfigError
};

// Strict parse: `seed` is required, every key must be known, every value
// well-typed and in range. The run seed flows into the synth and train
// sections unless those set their own. Unknown keys anywhere are an error
// naming the key.
RunConfig parse_run_config(const std::string& text);
RunConfig read_run_config(const std::filesystem::path& path);

// Full document with every field spelled out, so a run can be archived and
// replayed byte-for-byte.
void write_run_config(const RunConfig& cfg, const std::filesystem::path& path);

// Worker cap for commands that fan out across videos: SNIPPETPROP_THREADS
// when set (a positive integer, anything else is a ConfigError), otherwise
// the hardware concurrency.
int worker_count();

}  // namespace snippetprop
