#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trireid/config.hpp"
#include "trireid/model.hpp"
#include "trireid/reid_eval.hpp"
#include "trireid/synthdata.hpp"

namespace trireid::train {

struct EpochMetrics {
  int epoch = 0;  // 1-based, completed
  double ce = 0, triplet = 0, d2a = 0, a2d = 0, align = 0, total = 0;
};

/// One JSONL line per epoch, every loss component spelled out.
std::string metrics_json(const EpochMetrics& m);

/// Identity-balanced batch plan: each identity's sample indices are shuffled
/// and cut into chunks of samples_per_id, chunks are shuffled, and
/// batch/samples_per_id chunks form a batch. Chunks that do not fill a batch
/// are dropped for the epoch. Batches that would collapse to one identity are
/// repaired by a deterministic swap.
std::vector<std::vector<int>> make_batches(const std::vector<int>& labels, int batch_size,
                                           int samples_per_id, Rng& rng);

/// Raw sample ids remapped to contiguous class labels in ascending id order.
std::vector<int> contiguous_labels(const std::vector<synth::SampleRecord>& split);

struct TrainResult {
  model::Model model;
  std::vector<EpochMetrics> history;   // epochs run in this call
  std::string checkpoint_path;
  std::string metrics_path;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Runs the training loop: one seeded stream drives init and sampling, the
/// checkpoint in out_dir is rewritten after every epoch, and metrics append
/// to out_dir/metrics.jsonl. resume_path restores parameters, optimizer
/// moments and the RNG so the continuation is bit-identical to an unbroken
/// run. A non-finite loss aborts with NumericError.
TrainResult train_run(const RunConfig& cfg, const synth::Dataset& data,
                      const std::string& out_dir, const EpochCallback& on_epoch = {},
                      const std::string& resume_path = {});

/// Embeds the query and gallery splits with the model's eval feature and
/// metric, then scores retrieval.
eval::RetrievalReport evaluate_model(const model::Model& m, const synth::Dataset& data);

}  // namespace trireid::train
