#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trireid/tensor.hpp"

// Controllable tri-modal toy data. Every sample is a patch grid whose
// foreground block carries an identity latent pushed through a per-modality
// mixing map; the rest is clutter. Each modality's grid is translated
// toroidally by a configured cell shift, reproducing the two pathologies the
// model targets: background interference and cross-modal misalignment.
namespace trireid::synth {

struct SynthConfig {
  int num_ids = 10;
  int samples_per_id = 8;  // train split; query/gallery sized separately
  int query_per_id = 2;
  int gallery_per_id = 2;
  int hp = 8, wp = 4;
  int d_raw = 16;
  double rho = 0.375;     // fraction of patches carrying the identity
  double sigma_fg = 0.4;  // per-patch jitter on foreground content
  double sigma_bg = 1.0;  // clutter scale (shared direction + per-patch noise)
  // (row, col) toroidal shift per modality, in cells, order (R, N, T)
  std::array<std::array<int, 2>, 3> shifts = {{{0, 0}, {1, 0}, {0, 1}}};
  uint64_t seed = 1;
  // optional fixed mixing maps [d_raw, d_raw]; drawn from the seed when unset
  std::array<Tensor, 3> mixing;
};

struct SampleRecord {
  int id = -1;
  std::array<Tensor, 3> tokens;             // [L, d_raw] per modality, shifted
  Tensor fg_mask;                           // [L] binary, unshifted frame
  std::array<std::array<int, 2>, 3> shifts; // applied (row, col) per modality
};

struct Dataset {
  int hp = 0, wp = 0, d_raw = 0;
  std::vector<SampleRecord> train, query, gallery;
};

/// Deterministic generation: one seeded stream, fixed draw order. Same
/// config and seed give bit-identical tensors.
Dataset generate(const SynthConfig& config);

/// One SGT1 file per tensor plus manifest.json; returns the manifest path.
std::string save_dataset(const Dataset& data, const std::string& dir);

Dataset load_dataset(const std::string& manifest_path);

}  // namespace trireid::synth
