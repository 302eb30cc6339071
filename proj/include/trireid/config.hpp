#pragma once

#include <cstdint>
#include <string>

#include "trireid/synthdata.hpp"

namespace trireid {

// Run settings for training and evaluation. Multi-word JSON keys are
// snake_case; unknown keys are rejected so typos cannot silently fall back
// to defaults.
struct RunConfig {
  // architecture
  int d = 32;
  int heads = 4;
  int k1 = 0;  // 0 resolves to the default fraction of L (80 of 128)
  int k2 = 0;  // 0 resolves to k1
  std::string mask_mode = "union";
  std::string drop_mode = "zero";
  bool use_sim = true;
  bool use_gam = true;
  bool use_lam = true;

  // global alignment
  std::string gam_anchor = "R";
  double gam_tau_init = 0.07;
  std::string gam_pool_source = "original";
  double alpha = 0.2;

  // local alignment
  int lam_r = 1;
  double lam_delta_max = 0.0;  // 0 resolves to one coarse-grid cell
  bool offset_sharing = false;
  std::string lam_pairs = "all";
  double beta = 0.2;

  // identity losses
  double ce_epsilon = 0.1;
  double tri_margin = 0.3;

  // optimization
  int epochs = 50;
  int batch = 16;
  int samples_per_id = 4;
  double lr = 3.5e-4;
  double encoder_lr = 5e-6;
  double encoder_lr_factor = 900.0;  // desk-scale boost: no pretrained encoder
  uint64_t seed = 1;

  // evaluation
  std::string eval_feature = "frnt";
  std::string eval_metric = "euclidean";

  // paths (normally supplied by CLI flags)
  std::string data_dir;
  std::string out_dir;
};

/// Default k1 for a patch count: the reference ratio 80/128, at least 1.
int auto_k1(int l);

/// Parse from JSON text. Every key optional, unknown keys are errors.
RunConfig parse_run_config(const std::string& json_text);

/// Canonical JSON snapshot (stable key order); checkpoint compatibility is
/// decided by comparing these strings.
std::string run_config_json(const RunConfig& cfg);

/// Structural checks: enum values, P x K divisibility, positive sizes.
void validate_run_config(const RunConfig& cfg);

/// Dataset generation settings: either a named preset ("easy" presents mild
/// clutter and one-cell shifts, "hard" heavy clutter and two-cell shifts),
/// individual overrides, or both (overrides win).
synth::SynthConfig parse_synth_config(const std::string& json_text);

}  // namespace trireid
