#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "snippetprop/mat.hpp"

namespace snippetprop {

// Per-class store of the highest-scoring representative rows seen so far,
// at most `slot_count` per class. Offers stream in during training; ties keep
// the incumbent so the bank is stable under replays of identical rows.
class MemoryBank {
 public:
  MemoryBank(int num_classes, int slot_count, int dim);

  int num_classes() const { return c_; }
  int slot_count() const { return s_; }
  int dim() const { return d_; }

  // Merge candidate rows for one class and keep the per-class top-s by score
  // (equal scores resolved toward the earlier arrival). Returns how many slot
  // positions ended up with a different occupant.
  int offer(int class_id, const Mat& rows, const std::vector<double>& scores);

  // Filled rows of the requested classes, class ascending and score
  // descending within a class. Empty result (no filled slot in any requested
  // class) reports the inter-video branch as unavailable via nullopt.
  std::optional<Mat> retrieve(const std::vector<int>& active_classes) const;

  int filled(int class_id) const;
  bool any_filled() const;
  double score_at(int class_id, int slot) const;
  std::vector<double> feature_at(int class_id, int slot) const;

  // Snapshot: JSON header (shape, fill counts, scores) plus the filled rows
  // as one feature-file payload next to it. An all-empty bank writes no
  // payload file.
  void save(const std::filesystem::path& json_path) const;
  static MemoryBank load(const std::filesystem::path& json_path);

 private:
  struct Entry {
    double score;
    std::uint64_t seq;  // arrival order, breaks score ties toward older
    std::vector<double> feature;
  };

  int c_;
  int s_;
  int d_;
  std::uint64_t next_seq_ = 0;
  std::vector<std::vector<Entry>> slots_;  // sorted (score desc, seq asc)
};

}  // namespace snippetprop
