#include "snippetprop/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>
#include <thread>

#include <json.hpp>

#include "snippetprop/errors.hpp"

namespace snippetprop {

namespace {

using nlohmann::json;

// Rejects keys outside the allowed set so typos never silently fall back to
// defaults.
void check_keys(const json& obj, const char* where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(std::string("config: unknown key '") + key + "' in " +
                        where);
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double take_number(const json& obj, const char* where, const char* key,
                   double fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be a number");
  }
  return v->get<double>();
}

int take_int(const json& obj, const char* where, const char* key,
             int fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be an integer");
  }
  return v->get<int>();
}

bool take_bool(const json& obj, const char* where, const char* key,
               bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be a boolean");
  }
  return v->get<bool>();
}

std::uint64_t take_seed(const json& obj, const char* where, const char* key,
                        std::uint64_t fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be a non-negative integer");
  }
  return v->get<std::uint64_t>();
}

std::string take_string(const json& obj, const char* where, const char* key,
                        const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be a string");
  }
  return v->get<std::string>();
}

std::array<int, 2> take_range(const json& obj, const char* where,
                              const char* key, std::array<int, 2> fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() ||
      !(*v)[1].is_number_integer()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be a two-integer array");
  }
  return {(*v)[0].get<int>(), (*v)[1].get<int>()};
}

std::vector<double> take_number_list(const json& obj, const char* where,
                                     const char* key,
                                     std::vector<double> fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_array()) {
    throw ConfigError(std::string("config: '") + where + "." + key +
                      "' must be an array of numbers");
  }
  std::vector<double> out;
  for (const auto& item : *v) {
    if (!item.is_number()) {
      throw ConfigError(std::string("config: '") + where + "." + key +
                        "' must be an array of numbers");
    }
    out.push_back(item.get<double>());
  }
  return out;
}

SynthConfig parse_synth(const json& obj, std::uint64_t run_seed) {
  check_keys(obj, "'synth'",
             {"num_classes", "feature_dim", "snippets_per_video",
              "actions_per_video", "prototypes_per_class", "noise_sigma",
              "background_sigma", "num_videos", "seed"});
  SynthConfig s;
  s.num_classes = take_int(obj, "synth", "num_classes", s.num_classes);
  s.feature_dim = take_int(obj, "synth", "feature_dim", s.feature_dim);
  s.snippets_per_video =
      take_range(obj, "synth", "snippets_per_video", s.snippets_per_video);
  s.actions_per_video =
      take_range(obj, "synth", "actions_per_video", s.actions_per_video);
  s.prototypes_per_class =
      take_int(obj, "synth", "prototypes_per_class", s.prototypes_per_class);
  s.noise_sigma = take_number(obj, "synth", "noise_sigma", s.noise_sigma);
  s.background_sigma =
      take_number(obj, "synth", "background_sigma", s.background_sigma);
  s.num_videos = take_int(obj, "synth", "num_videos", s.num_videos);
  s.seed = take_seed(obj, "synth", "seed", run_seed);
  return s;
}

TrainConfig parse_train(const json& obj, std::uint64_t run_seed) {
  check_keys(obj, "'train'",
             {"epochs", "bank_start_epoch", "lr", "w", "lambda", "alpha",
              "beta", "gamma", "fusion_ae", "grad_mode", "fd_step", "seed",
              "embed_dim", "num_representatives", "em_iterations",
              "learn_init", "attn_scale", "k_ratio", "slot_count",
              "use_propagation", "prop_mode", "prop_iterations"});
  TrainConfig t;
  t.epochs = take_int(obj, "train", "epochs", t.epochs);
  t.bank_start_epoch =
      take_int(obj, "train", "bank_start_epoch", t.bank_start_epoch);
  t.lr = take_number(obj, "train", "lr", t.lr);
  t.w = take_number(obj, "train", "w", t.w);
  t.lambda = take_number(obj, "train", "lambda", t.lambda);
  t.alpha = take_number(obj, "train", "alpha", t.alpha);
  t.beta = take_number(obj, "train", "beta", t.beta);
  t.gamma = take_number(obj, "train", "gamma", t.gamma);
  t.fusion_ae = take_number(obj, "train", "fusion_ae", t.fusion_ae);
  t.grad_mode = grad_mode_from_string(
      take_string(obj, "train", "grad_mode", to_string(t.grad_mode)));
  t.fd_step = take_number(obj, "train", "fd_step", t.fd_step);
  t.seed = take_seed(obj, "train", "seed", run_seed);
  t.embed_dim = take_int(obj, "train", "embed_dim", t.embed_dim);
  t.num_representatives =
      take_int(obj, "train", "num_representatives", t.num_representatives);
  t.em_iterations = take_int(obj, "train", "em_iterations", t.em_iterations);
  t.learn_init = take_bool(obj, "train", "learn_init", t.learn_init);
  t.attn_scale = take_number(obj, "train", "attn_scale", t.attn_scale);
  t.k_ratio = take_number(obj, "train", "k_ratio", t.k_ratio);
  t.slot_count = take_int(obj, "train", "slot_count", t.slot_count);
  t.use_propagation =
      take_bool(obj, "train", "use_propagation", t.use_propagation);
  t.prop_mode = propagation_mode_from_string(
      take_string(obj, "train", "prop_mode", to_string(t.prop_mode)));
  t.prop_iterations =
      take_int(obj, "train", "prop_iterations", t.prop_iterations);
  return t;
}

DetectConfig parse_detect(const json& obj) {
  check_keys(obj, "'detect'",
             {"class_threshold", "act_thresholds", "nms_tiou", "outer_ratio",
              "fusion_main_intra", "upsample", "upsample_factor"});
  DetectConfig d;
  d.class_threshold =
      take_number(obj, "detect", "class_threshold", d.class_threshold);
  d.act_thresholds =
      take_number_list(obj, "detect", "act_thresholds", d.act_thresholds);
  d.nms_tiou = take_number(obj, "detect", "nms_tiou", d.nms_tiou);
  d.outer_ratio = take_number(obj, "detect", "outer_ratio", d.outer_ratio);
  d.fusion_main_intra =
      take_number(obj, "detect", "fusion_main_intra", d.fusion_main_intra);
  d.upsample = take_bool(obj, "detect", "upsample", d.upsample);
  d.upsample_factor =
      take_int(obj, "detect", "upsample_factor", d.upsample_factor);
  return d;
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  train.validate();
  detect.validate();
  if (eval_thresholds.empty()) {
    throw ConfigError("config: 'eval.tiou_thresholds' must not be empty");
  }
  for (std::size_t i = 0; i < eval_thresholds.size(); ++i) {
    double t = eval_thresholds[i];
    if (!(t > 0.0) || !(t < 1.0)) {
      throw ConfigError("config: 'eval.tiou_thresholds' must lie in (0,1)");
    }
    if (i > 0 && !(t > eval_thresholds[i - 1])) {
      throw ConfigError(
          "config: 'eval.tiou_thresholds' must be strictly ascending");
    }
  }
  for (const EvalBand& b : eval_bands) {
    if (b.name.empty()) {
      throw ConfigError("config: every eval band needs a name");
    }
    if (!(b.lo <= b.hi)) {
      throw ConfigError("config: eval band '" + b.name +
                        "' has lo above hi");
    }
  }
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ConfigError("config: top level must be an object");
  }
  check_keys(doc, "the top level", {"seed", "synth", "train", "detect", "eval"});
  if (!find(doc, "seed")) {
    throw ConfigError("config: missing required key 'seed'");
  }

  RunConfig cfg;
  cfg.seed = take_seed(doc, "", "seed", cfg.seed);
  if (const json* s = find(doc, "synth")) {
    if (!s->is_object()) throw ConfigError("config: 'synth' must be an object");
    cfg.synth = parse_synth(*s, cfg.seed);
  } else {
    cfg.synth.seed = cfg.seed;
  }
  if (const json* t = find(doc, "train")) {
    if (!t->is_object()) throw ConfigError("config: 'train' must be an object");
    cfg.train = parse_train(*t, cfg.seed);
  } else {
    cfg.train.seed = cfg.seed;
  }
  if (const json* d = find(doc, "detect")) {
    if (!d->is_object())
      throw ConfigError("config: 'detect' must be an object");
    cfg.detect = parse_detect(*d);
  }
  if (const json* e = find(doc, "eval")) {
    if (!e->is_object()) throw ConfigError("config: 'eval' must be an object");
    check_keys(*e, "'eval'", {"tiou_thresholds", "bands"});
    cfg.eval_thresholds = take_number_list(*e, "eval", "tiou_thresholds",
                                           cfg.eval_thresholds);
    if (const json* bands = find(*e, "bands")) {
      if (!bands->is_array()) {
        throw ConfigError("config: 'eval.bands' must be an array");
      }
      cfg.eval_bands.clear();
      for (const auto& item : *bands) {
        if (!item.is_object()) {
          throw ConfigError("config: every entry of 'eval.bands' must be an "
                            "object");
        }
        check_keys(item, "'eval.bands[]'", {"name", "lo", "hi"});
        EvalBand band;
        band.name = take_string(item, "eval.bands[]", "name", "");
        band.lo = take_number(item, "eval.bands[]", "lo", -1.0);
        band.hi = take_number(item, "eval.bands[]", "hi", -1.0);
        cfg.eval_bands.push_back(std::move(band));
      }
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("config: cannot open '" + path.string() + "'");
  }
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  try {
    return parse_run_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  json doc;
  doc["seed"] = cfg.seed;
  doc["synth"] = {{"num_classes", cfg.synth.num_classes},
                  {"feature_dim", cfg.synth.feature_dim},
                  {"snippets_per_video", cfg.synth.snippets_per_video},
                  {"actions_per_video", cfg.synth.actions_per_video},
                  {"prototypes_per_class", cfg.synth.prototypes_per_class},
                  {"noise_sigma", cfg.synth.noise_sigma},
                  {"background_sigma", cfg.synth.background_sigma},
                  {"num_videos", cfg.synth.num_videos},
                  {"seed", cfg.synth.seed}};
  doc["train"] = {{"epochs", cfg.train.epochs},
                  {"bank_start_epoch", cfg.train.bank_start_epoch},
                  {"lr", cfg.train.lr},
                  {"w", cfg.train.w},
                  {"lambda", cfg.train.lambda},
                  {"alpha", cfg.train.alpha},
                  {"beta", cfg.train.beta},
                  {"gamma", cfg.train.gamma},
                  {"fusion_ae", cfg.train.fusion_ae},
                  {"grad_mode", to_string(cfg.train.grad_mode)},
                  {"fd_step", cfg.train.fd_step},
                  {"seed", cfg.train.seed},
                  {"embed_dim", cfg.train.embed_dim},
                  {"num_representatives", cfg.train.num_representatives},
                  {"em_iterations", cfg.train.em_iterations},
                  {"learn_init", cfg.train.learn_init},
                  {"attn_scale", cfg.train.attn_scale},
                  {"k_ratio", cfg.train.k_ratio},
                  {"slot_count", cfg.train.slot_count},
                  {"use_propagation", cfg.train.use_propagation},
                  {"prop_mode", to_string(cfg.train.prop_mode)},
                  {"prop_iterations", cfg.train.prop_iterations}};
  doc["detect"] = {{"class_threshold", cfg.detect.class_threshold},
                   {"act_thresholds", cfg.detect.act_thresholds},
                   {"nms_tiou", cfg.detect.nms_tiou},
                   {"outer_ratio", cfg.detect.outer_ratio},
                   {"fusion_main_intra", cfg.detect.fusion_main_intra},
                   {"upsample", cfg.detect.upsample},
                   {"upsample_factor", cfg.detect.upsample_factor}};
  json bands = json::array();
  for (const EvalBand& b : cfg.eval_bands) {
    bands.push_back({{"name", b.name}, {"lo", b.lo}, {"hi", b.hi}});
  }
  doc["eval"] = {{"tiou_thresholds", cfg.eval_thresholds},
                 {"bands", std::move(bands)}};
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os << doc.dump(2) << "\n";
}

int worker_count() {
  const char* env = std::getenv("SNIPPETPROP_THREADS");
  if (env && *env) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError("SNIPPETPROP_THREADS must be a positive integer");
    }
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace snippetprop
