#include "snippetprop/membank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "snippetprop/data.hpp"
#include "snippetprop/errors.hpp"

namespace snippetprop {

MemoryBank::MemoryBank(int num_classes, int slot_count, int dim)
    : c_(num_classes), s_(slot_count), d_(dim) {
  if (c_ < 1 || s_ < 1 || d_ < 1) {
    throw std::invalid_argument("memory bank needs positive shape");
  }
  slots_.resize(c_);
}

int MemoryBank::offer(int class_id, const Mat& rows,
                      const std::vector<double>& scores) {
  if (class_id < 0 || class_id >= c_) {
    throw std::invalid_argument("offer: class " + std::to_string(class_id) +
                                " outside [0," + std::to_string(c_) + ")");
  }
  if (rows.cols != static_cast<std::size_t>(d_)) {
    throw std::invalid_argument("offer: rows have dimension " +
                                std::to_string(rows.cols) + ", bank stores " +
                                std::to_string(d_));
  }
  if (scores.size() != rows.rows) {
    throw std::invalid_argument("offer: need one score per row");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("offer: non-finite score");
  }

  auto& v = slots_[class_id];
  std::vector<std::uint64_t> before;
  for (const auto& e : v) before.push_back(e.seq);

  for (std::size_t i = 0; i < rows.rows; ++i) {
    v.push_back(Entry{scores[i], next_seq_++, rows.row_copy(i)});
  }
  std::sort(v.begin(), v.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.seq < b.seq;  // incumbent wins ties
  });
  if (v.size() > static_cast<std::size_t>(s_)) v.resize(s_);

  int changed = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i >= before.size() || before[i] != v[i].seq) ++changed;
  }
  return changed;
}

std::optional<Mat> MemoryBank::retrieve(
    const std::vector<int>& active_classes) const {
  std::set<int> wanted;
  for (int k : active_classes) {
    if (k < 0 || k >= c_) {
      throw std::invalid_argument("retrieve: class " + std::to_string(k) +
                                  " outside [0," + std::to_string(c_) + ")");
    }
    wanted.insert(k);
  }
  std::size_t total = 0;
  for (int k : wanted) total += slots_[k].size();
  if (total == 0) return std::nullopt;

  Mat out(total, d_);
  std::size_t r = 0;
  for (int k : wanted) {
    for (const auto& e : slots_[k]) out.set_row(r++, e.feature);
  }
  return out;
}

int MemoryBank::filled(int class_id) const {
  if (class_id < 0 || class_id >= c_) {
    throw std::invalid_argument("filled: class out of range");
  }
  return static_cast<int>(slots_[class_id].size());
}

bool MemoryBank::any_filled() const {
  for (const auto& v : slots_)
    if (!v.empty()) return true;
  return false;
}

double MemoryBank::score_at(int class_id, int slot) const {
  if (class_id < 0 || class_id >= c_ || slot < 0 ||
      slot >= filled(class_id)) {
    throw std::invalid_argument("score_at: empty or out-of-range slot");
  }
  return slots_[class_id][slot].score;
}

std::vector<double> MemoryBank::feature_at(int class_id, int slot) const {
  if (class_id < 0 || class_id >= c_ || slot < 0 ||
      slot >= filled(class_id)) {
    throw std::invalid_argument("feature_at: empty or out-of-range slot");
  }
  return slots_[class_id][slot].feature;
}

void MemoryBank::save(const std::filesystem::path& json_path) const {
  nlohmann::json doc;
  doc["format"] = "snippetprop-membank";
  doc["version"] = 1;
  doc["c"] = c_;
  doc["s"] = s_;
  doc["d"] = d_;
  doc["next_seq"] = next_seq_;
  std::vector<int> fill(c_);
  nlohmann::json scores = nlohmann::json::array();
  nlohmann::json seqs = nlohmann::json::array();
  std::size_t total = 0;
  for (int k = 0; k < c_; ++k) {
    fill[k] = static_cast<int>(slots_[k].size());
    total += slots_[k].size();
    nlohmann::json srow = nlohmann::json::array();
    nlohmann::json qrow = nlohmann::json::array();
    for (const auto& e : slots_[k]) {
      srow.push_back(e.score);
      qrow.push_back(e.seq);
    }
    scores.push_back(std::move(srow));
    seqs.push_back(std::move(qrow));
  }
  doc["filled"] = fill;
  doc["scores"] = std::move(scores);
  doc["seqs"] = std::move(seqs);

  std::filesystem::path payload = json_path;
  payload.replace_extension(".snpf");
  if (total > 0) {
    doc["payload"] = payload.filename().string();
    FeatureSequence fs;
    fs.video_id = payload.stem().string();
    fs.snippet_duration_s = 1.0;  // placeholder, rows are not a time series
    fs.snippets = Mat(total, d_);
    std::size_t r = 0;
    for (int k = 0; k < c_; ++k)
      for (const auto& e : slots_[k]) fs.snippets.set_row(r++, e.feature);
    write_features(fs, payload);
  } else {
    doc["payload"] = nullptr;
    std::filesystem::remove(payload);
  }

  std::ofstream os(json_path);
  if (!os) {
    throw FormatError("cannot open '" + json_path.string() + "' for writing");
  }
  os << doc.dump(2) << "\n";
}

MemoryBank MemoryBank::load(const std::filesystem::path& json_path) {
  std::ifstream is(json_path);
  if (!is) throw FormatError("cannot open '" + json_path.string() + "'");
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bank snapshot '" + json_path.string() + "': " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "snippetprop-membank" ||
        doc.at("version").get<int>() != 1) {
      throw FormatError("'" + json_path.string() +
                        "' is not a version-1 bank snapshot");
    }
    MemoryBank bank(doc.at("c").get<int>(), doc.at("s").get<int>(),
                    doc.at("d").get<int>());
    bank.next_seq_ = doc.at("next_seq").get<std::uint64_t>();
    auto fill = doc.at("filled").get<std::vector<int>>();
    if (fill.size() != static_cast<std::size_t>(bank.c_)) {
      throw FormatError("bank snapshot fill counts disagree with class count");
    }
    Mat payload_rows;
    if (!doc.at("payload").is_null()) {
      auto payload = json_path.parent_path() / doc.at("payload").get<std::string>();
      payload_rows = read_features(payload).snippets;
    }
    std::size_t r = 0;
    for (int k = 0; k < bank.c_; ++k) {
      if (fill[k] < 0 || fill[k] > bank.s_) {
        throw FormatError("bank snapshot has invalid fill count");
      }
      for (int slot = 0; slot < fill[k]; ++slot) {
        if (r >= payload_rows.rows) {
          throw FormatError("bank snapshot payload is shorter than fill counts");
        }
        Entry e;
        e.score = doc.at("scores").at(k).at(slot).get<double>();
        e.seq = doc.at("seqs").at(k).at(slot).get<std::uint64_t>();
        e.feature = payload_rows.row_copy(r++);
        bank.slots_[k].push_back(std::move(e));
      }
    }
    if (r != payload_rows.rows) {
      throw FormatError("bank snapshot payload is longer than fill counts");
    }
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bank snapshot '" + json_path.string() + "': " + e.what());
  }
}

}  // namespace snippetprop
