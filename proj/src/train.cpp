#include "trireid/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <utility>

#include "json.hpp"
#include "trireid/adam.hpp"
#include "trireid/checkpoint.hpp"
#include "trireid/error.hpp"
#include "trireid/ops.hpp"

namespace trireid::train {
namespace {

namespace fs = std::filesystem;

eval::Metric metric_of(const RunConfig& cfg) {
  return cfg.eval_metric == "cosine" ? eval::Metric::kCosine : eval::Metric::kEuclidean;
}

}  // namespace

std::string metrics_json(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["ce"] = m.ce;
  j["triplet"] = m.triplet;
  j["d2a"] = m.d2a;
  j["a2d"] = m.a2d;
  j["align"] = m.align;
  j["total"] = m.total;
  return j.dump();
}

std::vector<int> contiguous_labels(const std::vector<synth::SampleRecord>& split) {
  std::map<int, int> remap;
  for (const auto& s : split) remap.emplace(s.id, 0);
  int next = 0;
  for (auto& [id, label] : remap) label = next++;
  std::vector<int> labels;
  labels.reserve(split.size());
  for (const auto& s : split) labels.push_back(remap.at(s.id));
  return labels;
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& labels, int batch_size,
                                           int samples_per_id, Rng& rng) {
  int k = samples_per_id;
  if (k < 2 || batch_size < 2 * k || batch_size % k != 0) {
    throw ValueError("make_batches: batch must be a multiple of samples_per_id with >= 2 chunks");
  }
  std::map<int, std::vector<int>> by_label;
  for (size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(static_cast<int>(i));
  if (by_label.size() < 2) throw ValueError("make_batches: need at least two identities");

  struct Chunk {
    int label;
    std::vector<int> idx;
  };
  std::vector<Chunk> chunks;
  for (auto& [label, idxs] : by_label) {
    if (static_cast<int>(idxs.size()) < k) {
      throw ValueError("make_batches: identity " + std::to_string(label) + " has fewer than " +
                       std::to_string(k) + " samples");
    }
    rng.shuffle(idxs);
    for (size_t start = 0; start + k <= idxs.size(); start += k) {
      chunks.push_back({label, {idxs.begin() + start, idxs.begin() + start + k}});
    }
  }
  rng.shuffle(chunks);

  size_t per_batch = static_cast<size_t>(batch_size / k);
  size_t nb = chunks.size() / per_batch;
  if (nb == 0) throw ValueError("make_batches: not enough samples for one batch");

  // hard mining needs two identities per batch; swap in a differing chunk
  // from outside the window when a batch comes out uniform
  for (size_t b = 0; b < nb; ++b) {
    size_t lo = b * per_batch, hi = lo + per_batch;
    bool uniform = true;
    for (size_t i = lo + 1; i < hi && uniform; ++i) {
      uniform = chunks[i].label == chunks[lo].label;
    }
    if (!uniform) continue;
    bool fixed = false;
    for (size_t j = 0; j < chunks.size() && !fixed; ++j) {
      if ((j < lo || j >= hi) && chunks[j].label != chunks[lo].label) {
        std::swap(chunks[hi - 1], chunks[j]);
        fixed = true;
      }
    }
    if (!fixed) throw ValueError("make_batches: cannot form a two-identity batch");
  }

  std::vector<std::vector<int>> batches(nb);
  for (size_t b = 0; b < nb; ++b) {
    for (size_t c = b * per_batch; c < (b + 1) * per_batch; ++c) {
      batches[b].insert(batches[b].end(), chunks[c].idx.begin(), chunks[c].idx.end());
    }
  }
  return batches;
}

TrainResult train_run(const RunConfig& cfg, const synth::Dataset& data,
                      const std::string& out_dir, const EpochCallback& on_epoch,
                      const std::string& resume_path) {
  validate_run_config(cfg);
  if (data.train.empty()) throw ValueError("train: empty training split");

  std::vector<int> labels = contiguous_labels(data.train);
  int num_classes = 0;
  for (int l : labels) num_classes = std::max(num_classes, l + 1);
  if (num_classes < 2) throw ValueError("train: need at least two identities");

  Rng rng(cfg.seed);
  model::Model m = model::build_model(cfg, data.d_raw, data.hp, data.wp, num_classes, rng);

  Adam opt;
  int module_group = opt.add_group(cfg.lr);
  int encoder_group = opt.add_group(cfg.encoder_lr * cfg.encoder_lr_factor);
  for (const auto& p : model::named_params(m)) {
    opt.add_param(p.encoder ? encoder_group : module_group, p.tensor);
  }

  int done_epochs = 0;
  if (!resume_path.empty()) {
    done_epochs = ckpt::load_checkpoint(resume_path, m, &opt, &rng).epoch;
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + out_dir);
  TrainResult res;
  res.checkpoint_path = (fs::path(out_dir) / "checkpoint.trck").string();
  res.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(res.metrics_path,
                        done_epochs > 0 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open metrics file: " + res.metrics_path);

  for (int epoch = done_epochs; epoch < cfg.epochs; ++epoch) {
    auto batches = make_batches(labels, cfg.batch, cfg.samples_per_id, rng);
    EpochMetrics em;
    em.epoch = epoch + 1;
    for (const auto& bidx : batches) {
      std::vector<const synth::SampleRecord*> samples;
      std::vector<int> blabels;
      samples.reserve(bidx.size());
      for (int i : bidx) {
        samples.push_back(&data.train[static_cast<size_t>(i)]);
        blabels.push_back(labels[static_cast<size_t>(i)]);
      }
      opt.zero_grad();
      TapeScope scope;
      auto out = model::forward_batch(m, samples, blabels);
      if (!std::isfinite(out.total.item())) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      backward(out.total);
      opt.step();
      em.ce += out.ce.item();
      em.triplet += out.triplet.item();
      em.d2a += out.d2a.item();
      em.a2d += out.a2d.item();
      em.align += out.align.item();
      em.total += out.total.item();
    }
    double nb = static_cast<double>(batches.size());
    em.ce /= nb;
    em.triplet /= nb;
    em.d2a /= nb;
    em.a2d /= nb;
    em.align /= nb;
    em.total /= nb;

    metrics << metrics_json(em) << "\n";
    metrics.flush();
    ckpt::save_checkpoint(res.checkpoint_path, m, opt, rng, epoch + 1);
    res.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }

  res.model = std::move(m);
  return res;
}

eval::RetrievalReport evaluate_model(const model::Model& m, const synth::Dataset& data) {
  if (data.query.empty() || data.gallery.empty()) {
    throw ValueError("evaluate_model: empty query or gallery split");
  }
  NoGradGuard ng;
  std::vector<Tensor> qrows, grows;
  std::vector<int> qlabels, glabels;
  for (const auto& s : data.query) {
    qrows.push_back(model::embed_sample(m, s));
    qlabels.push_back(s.id);
  }
  for (const auto& s : data.gallery) {
    grows.push_back(model::embed_sample(m, s));
    glabels.push_back(s.id);
  }
  Tensor dist = eval::distance_matrix(ops::stack_rows(qrows), ops::stack_rows(grows),
                                      metric_of(m.cfg));
  return eval::evaluate(dist, qlabels, glabels);
}

}  // namespace trireid::train
