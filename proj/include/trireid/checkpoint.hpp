#pragma once

#include <cstdint>
#include <string>

#include "trireid/adam.hpp"
#include "trireid/model.hpp"
#include "trireid/rng.hpp"

// Full-precision training state container (magic "TRCK"). Values are stored
// as raw f64 so save -> load -> save is byte-identical and a resumed run
// reproduces the original losses bit for bit; the f32 tensor format used for
// datasets is deliberately not reused here.
namespace trireid::ckpt {

struct CheckpointMeta {
  uint32_t version = 1;
  std::string config_json;  // canonical snapshot of the training RunConfig
  int d_raw = 0, hp = 0, wp = 0;
  int num_classes = 0;
  int epoch = 0;  // completed epochs
  int64_t adam_steps = 0;
  std::string rng_state;
};

void save_checkpoint(const std::string& path, const model::Model& m, const Adam& opt,
                     const Rng& rng, int epoch);

/// Header only; enough to rebuild the model skeleton before a full load.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// Restores parameter values (and optimizer moments / RNG when given) into a
/// model already built from the same configuration. A snapshot or shape
/// mismatch is an error, never a silent partial load.
CheckpointMeta load_checkpoint(const std::string& path, const model::Model& m, Adam* opt,
                               Rng* rng);

}  // namespace trireid::ckpt
