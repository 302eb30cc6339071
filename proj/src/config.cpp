#include "trireid/config.hpp"

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "trireid/error.hpp"

namespace trireid {
namespace {

using nlohmann::json;

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": invalid JSON: " + e.what());
  }
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  return j;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ValueError(std::string(what) + ": unknown key \"" + it.key() + "\"");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValueError(std::string("config key \"") + key + "\" has the wrong type");
  }
}

void expect_one_of(const std::string& value, std::initializer_list<const char*> allowed,
                   const char* key) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string msg = std::string("config key \"") + key + "\" must be one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw ValueError(msg + "}, got \"" + value + "\"");
}

std::array<int, 2> read_shift(const json& v, const char* key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
    throw ValueError(std::string("gen config key \"") + key +
                     "\" must be a two-element integer array");
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace

int auto_k1(int l) {
  int k = static_cast<int>(std::lround(l * 80.0 / 128.0));
  if (k < 1) k = 1;
  if (k > l) k = l;
  return k;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j = parse_object(json_text, "run config");
  static const std::set<std::string> known = {
      "D",           "heads",          "k1",
      "k2",          "mask_mode",      "drop_mode",
      "use_sim",     "use_gam",        "use_lam",
      "gam_anchor",  "gam_tau_init",   "gam_pool_source",
      "alpha",       "lam_r",          "lam_delta_max",
      "offset_sharing", "lam_pairs",   "beta",
      "ce_epsilon",  "tri_margin",     "epochs",
      "batch",       "samples_per_id", "lr",
      "encoder_lr",  "encoder_lr_factor", "seed",
      "eval_feature", "eval_metric",   "data_dir",
      "out_dir"};
  reject_unknown(j, known, "run config");

  RunConfig c;
  read_field(j, "D", c.d);
  read_field(j, "heads", c.heads);
  read_field(j, "k1", c.k1);
  read_field(j, "k2", c.k2);
  read_field(j, "mask_mode", c.mask_mode);
  read_field(j, "drop_mode", c.drop_mode);
  read_field(j, "use_sim", c.use_sim);
  read_field(j, "use_gam", c.use_gam);
  read_field(j, "use_lam", c.use_lam);
  read_field(j, "gam_anchor", c.gam_anchor);
  read_field(j, "gam_tau_init", c.gam_tau_init);
  read_field(j, "gam_pool_source", c.gam_pool_source);
  read_field(j, "alpha", c.alpha);
  read_field(j, "lam_r", c.lam_r);
  read_field(j, "lam_delta_max", c.lam_delta_max);
  read_field(j, "offset_sharing", c.offset_sharing);
  read_field(j, "lam_pairs", c.lam_pairs);
  read_field(j, "beta", c.beta);
  read_field(j, "ce_epsilon", c.ce_epsilon);
  read_field(j, "tri_margin", c.tri_margin);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch", c.batch);
  read_field(j, "samples_per_id", c.samples_per_id);
  read_field(j, "lr", c.lr);
  read_field(j, "encoder_lr", c.encoder_lr);
  read_field(j, "encoder_lr_factor", c.encoder_lr_factor);
  read_field(j, "seed", c.seed);
  read_field(j, "eval_feature", c.eval_feature);
  read_field(j, "eval_metric", c.eval_metric);
  read_field(j, "data_dir", c.data_dir);
  read_field(j, "out_dir", c.out_dir);
  validate_run_config(c);
  return c;
}

std::string run_config_json(const RunConfig& c) {
  json j = json::object();
  j["D"] = c.d;
  j["heads"] = c.heads;
  j["k1"] = c.k1;
  j["k2"] = c.k2;
  j["mask_mode"] = c.mask_mode;
  j["drop_mode"] = c.drop_mode;
  j["use_sim"] = c.use_sim;
  j["use_gam"] = c.use_gam;
  j["use_lam"] = c.use_lam;
  j["gam_anchor"] = c.gam_anchor;
  j["gam_tau_init"] = c.gam_tau_init;
  j["gam_pool_source"] = c.gam_pool_source;
  j["alpha"] = c.alpha;
  j["lam_r"] = c.lam_r;
  j["lam_delta_max"] = c.lam_delta_max;
  j["offset_sharing"] = c.offset_sharing;
  j["lam_pairs"] = c.lam_pairs;
  j["beta"] = c.beta;
  j["ce_epsilon"] = c.ce_epsilon;
  j["tri_margin"] = c.tri_margin;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["samples_per_id"] = c.samples_per_id;
  j["lr"] = c.lr;
  j["encoder_lr"] = c.encoder_lr;
  j["encoder_lr_factor"] = c.encoder_lr_factor;
  j["seed"] = c.seed;
  j["eval_feature"] = c.eval_feature;
  j["eval_metric"] = c.eval_metric;
  // data/out paths are run-local and deliberately excluded from the snapshot
  // so a checkpoint can be evaluated against a dataset at any location.
  return j.dump();
}

void validate_run_config(const RunConfig& c) {
  if (c.d < 2 || c.d % 2 != 0) throw ValueError("config: D must be even and >= 2");
  if (c.heads < 1 || c.d % c.heads != 0) {
    throw ValueError("config: heads must be >= 1 and divide D");
  }
  if ((c.d / 2) % 2 != 0) {
    // the offset net halves the channel count once more internally
    throw ValueError("config: D must be divisible by 4 for the offset net");
  }
  if (c.k1 < 0 || c.k2 < 0) throw ValueError("config: k1/k2 must be >= 0 (0 = auto)");
  expect_one_of(c.mask_mode, {"union", "intersection"}, "mask_mode");
  expect_one_of(c.drop_mode, {"zero", "gather"}, "drop_mode");
  expect_one_of(c.gam_anchor, {"R", "N", "T"}, "gam_anchor");
  expect_one_of(c.gam_pool_source, {"original", "selected"}, "gam_pool_source");
  expect_one_of(c.lam_pairs, {"all", "to_anchor"}, "lam_pairs");
  expect_one_of(c.eval_feature, {"frnt", "frnt+cls"}, "eval_feature");
  expect_one_of(c.eval_metric, {"euclidean", "cosine"}, "eval_metric");
  if (c.gam_pool_source == "selected" && !c.use_sim) {
    throw ValueError("config: gam_pool_source=selected requires use_sim=true");
  }
  if (c.gam_tau_init <= 0.0) throw ValueError("config: gam_tau_init must be > 0");
  if (c.alpha < 0.0 || c.beta < 0.0) throw ValueError("config: alpha/beta must be >= 0");
  if (c.lam_r < 1) throw ValueError("config: lam_r must be >= 1");
  if (c.lam_delta_max < 0.0) throw ValueError("config: lam_delta_max must be >= 0 (0 = auto)");
  if (c.ce_epsilon < 0.0 || c.ce_epsilon >= 1.0) {
    throw ValueError("config: ce_epsilon must lie in [0, 1)");
  }
  if (c.tri_margin < 0.0) throw ValueError("config: tri_margin must be >= 0");
  if (c.epochs < 1) throw ValueError("config: epochs must be >= 1");
  if (c.samples_per_id < 2) {
    throw ValueError("config: samples_per_id must be >= 2 for hard mining");
  }
  if (c.batch < 2 * c.samples_per_id || c.batch % c.samples_per_id != 0) {
    throw ValueError(
        "config: batch must be a multiple of samples_per_id covering >= 2 identities");
  }
  if (c.lr <= 0.0 || c.encoder_lr <= 0.0 || c.encoder_lr_factor <= 0.0) {
    throw ValueError("config: learning rates must be > 0");
  }
}

synth::SynthConfig parse_synth_config(const std::string& json_text) {
  json j = parse_object(json_text, "gen config");
  static const std::set<std::string> known = {
      "preset",     "num_ids",     "samples_per_id", "query_per_id",
      "gallery_per_id", "grid",    "d_raw",          "rho",
      "sigma_fg",   "sigma_bg",    "shift_n",        "shift_t",
      "seed"};
  reject_unknown(j, known, "gen config");

  synth::SynthConfig c;
  if (auto it = j.find("preset"); it != j.end()) {
    std::string preset;
    read_field(j, "preset", preset);
    if (preset == "easy") {
      c.rho = 0.375;
      c.sigma_fg = 0.4;
      c.sigma_bg = 1.0;
      c.shifts = {{{0, 0}, {1, 0}, {0, 1}}};
    } else if (preset == "hard") {
      c.rho = 0.375;
      c.sigma_fg = 0.4;
      c.sigma_bg = 1.8;
      c.shifts = {{{0, 0}, {2, 0}, {0, 2}}};
    } else {
      throw ValueError("gen config: preset must be \"easy\" or \"hard\"");
    }
  }
  read_field(j, "num_ids", c.num_ids);
  read_field(j, "samples_per_id", c.samples_per_id);
  read_field(j, "query_per_id", c.query_per_id);
  read_field(j, "gallery_per_id", c.gallery_per_id);
  if (auto it = j.find("grid"); it != j.end()) {
    if (!it->is_array() || it->size() != 2) {
      throw ValueError("gen config: grid must be [rows, cols]");
    }
    c.hp = (*it)[0].get<int>();
    c.wp = (*it)[1].get<int>();
  }
  read_field(j, "d_raw", c.d_raw);
  read_field(j, "rho", c.rho);
  read_field(j, "sigma_fg", c.sigma_fg);
  read_field(j, "sigma_bg", c.sigma_bg);
  if (auto it = j.find("shift_n"); it != j.end()) c.shifts[1] = read_shift(*it, "shift_n");
  if (auto it = j.find("shift_t"); it != j.end()) c.shifts[2] = read_shift(*it, "shift_t");
  read_field(j, "seed", c.seed);
  return c;  // structural validation happens in synth::generate
}

}  // namespace trireid
