#pragma once

#include <array>
#include <string>
#include <vector>

#include "trireid/config.hpp"
#include "trireid/gam.hpp"
#include "trireid/lam.hpp"
#include "trireid/rng.hpp"
#include "trireid/sim.hpp"
#include "trireid/synthdata.hpp"
#include "trireid/tensor.hpp"

namespace trireid::model {

// Lightweight per-modality encoder: a linear patch projection plus a learned
// class vector refined by one round of cross-attention pooling over the
// projected patches, layer-normed. It stands in for a pretrained backbone at
// desk scale and is the only block on the reduced learning rate.
struct EncoderParams {
  Tensor patch_proj;  // [d_raw, D]
  Tensor patch_bias;  // [D]
  Tensor cls_seed;    // [D]
  Tensor pool_wq, pool_wk, pool_wv, pool_wo;  // [D, D]
  Tensor ln_gain, ln_bias;                    // [D]
};

struct Model {
  RunConfig cfg;
  int d_raw = 0, hp = 0, wp = 0, l = 0;
  int num_classes = 0;
  int k1 = 0, k2 = 0;        // resolved token budgets
  double delta_max = 0.0;    // resolved offset bound
  Tensor ref_grid;           // [(hp/r)*(wp/r), 2], plain data

  std::array<EncoderParams, 3> enc;  // (R, N, T)
  sim::InteractionParams fuse;
  Tensor gam_log_tau;  // [1]
  std::array<lam::OffsetNetParams, 3> offset_nets;
  Tensor head;  // [3D, num_classes], bias-free classifier

  sim::MaskMode mask_mode() const;
  sim::DropMode drop_mode() const;
  int anchor_index() const;  // gam_anchor as 0/1/2
};

/// Builds every parameter in one fixed order from the stream, independent of
/// the ablation switches, so a seed names the same initial weights whether or
/// not a block is active in the forward pass.
Model build_model(const RunConfig& cfg, int d_raw, int hp, int wp, int num_classes, Rng& rng);

struct NamedParam {
  std::string name;  // dotted path, e.g. "enc.R.patch_proj"
  Tensor tensor;
  bool encoder;  // true for the reduced-rate group
};

/// Stable registry: declaration order matches build order and defines the
/// checkpoint and optimizer-slot layout.
std::vector<NamedParam> named_params(const Model& m);

sim::ModalityFeatures encode_modality(const Tensor& raw, const EncoderParams& p);

struct BatchForward {
  Tensor features;  // [B, 3D] fused descriptors
  Tensor logits;    // [B, num_classes]
  Tensor ce, triplet, d2a, a2d, align;  // scalar components (zeros when off)
  Tensor total;
};

/// Full training-graph forward for one identity-balanced batch. labels must
/// be contiguous class indices aligned with samples.
BatchForward forward_batch(const Model& m, const std::vector<const synth::SampleRecord*>& samples,
                           const std::vector<int>& labels);

/// Retrieval descriptor for one sample under cfg.eval_feature, computed with
/// grad recording off.
Tensor embed_sample(const Model& m, const synth::SampleRecord& s);

}  // namespace trireid::model
