#include "trireid/model.hpp"

#include <cmath>

#include "trireid/error.hpp"
#include "trireid/losses.hpp"
#include "trireid/ops.hpp"

namespace trireid::model {
namespace {

constexpr const char* kModalityNames[3] = {"R", "N", "T"};

// Non-finite tokens would hit undefined behaviour deep inside sorting-based
// selection and lattice sampling, so the model boundary rejects them.
void check_finite_tokens(const synth::SampleRecord& s) {
  for (const auto& t : s.tokens) {
    for (double v : t.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("model: sample " + std::to_string(s.id) +
                           " carries a non-finite token value");
      }
    }
  }
}

Tensor init_matrix(Rng& rng, int rows, int cols) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  double s = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& x : v) x = rng.normal(0.0, s);
  return Tensor::from_data({rows, cols}, std::move(v), true);
}

Tensor init_vector(Rng& rng, int n, double s) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal(0.0, s);
  return Tensor::from_data({n}, std::move(v), true);
}

EncoderParams build_encoder(Rng& rng, int d_raw, int d) {
  EncoderParams p;
  p.patch_proj = init_matrix(rng, d_raw, d);
  p.patch_bias = Tensor::zeros({d}, true);
  p.cls_seed = init_vector(rng, d, 0.02);
  p.pool_wq = init_matrix(rng, d, d);
  p.pool_wk = init_matrix(rng, d, d);
  p.pool_wv = init_matrix(rng, d, d);
  p.pool_wo = init_matrix(rng, d, d);
  p.ln_gain = Tensor::ones({d}, true);
  p.ln_bias = Tensor::zeros({d}, true);
  return p;
}

lam::OffsetNetParams build_offset_net(Rng& rng, int d) {
  lam::OffsetNetParams p;
  p.proj = init_matrix(rng, d, d);
  p.conv1_w = init_matrix(rng, 9 * d, d / 2);
  p.conv1_b = Tensor::zeros({d / 2}, true);
  p.conv2_w = init_matrix(rng, 9 * (d / 2), 2);
  p.conv2_b = Tensor::zeros({2}, true);
  return p;
}

void push_encoder(std::vector<NamedParam>& out, const std::string& prefix,
                  const EncoderParams& p) {
  out.push_back({prefix + ".patch_proj", p.patch_proj, true});
  out.push_back({prefix + ".patch_bias", p.patch_bias, true});
  out.push_back({prefix + ".cls_seed", p.cls_seed, true});
  out.push_back({prefix + ".pool_wq", p.pool_wq, true});
  out.push_back({prefix + ".pool_wk", p.pool_wk, true});
  out.push_back({prefix + ".pool_wv", p.pool_wv, true});
  out.push_back({prefix + ".pool_wo", p.pool_wo, true});
  out.push_back({prefix + ".ln_gain", p.ln_gain, true});
  out.push_back({prefix + ".ln_bias", p.ln_bias, true});
}

void push_offset_net(std::vector<NamedParam>& out, const std::string& prefix,
                     const lam::OffsetNetParams& p) {
  out.push_back({prefix + ".proj", p.proj, false});
  out.push_back({prefix + ".conv1_w", p.conv1_w, false});
  out.push_back({prefix + ".conv1_b", p.conv1_b, false});
  out.push_back({prefix + ".conv2_w", p.conv2_w, false});
  out.push_back({prefix + ".conv2_b", p.conv2_b, false});
}

Tensor concat_vectors(const std::vector<Tensor>& vs) {
  std::vector<Tensor> rows;
  int total = 0;
  for (const auto& v : vs) {
    rows.push_back(ops::reshape(v, {1, v.dim(0)}));
    total += v.dim(0);
  }
  return ops::reshape(ops::concat_cols(rows), {total});
}

// Hard token choices for all three modalities: intra scores per modality,
// one shared inter score matrix, fused per the config. Values only, so the
// whole thing runs with recording off; gradients reach the shared projections
// through the fusion block instead.
std::array<sim::Selected, 3> select_tokens(const Model& m,
                                           const std::array<sim::ModalityFeatures, 3>& feats) {
  NoGradGuard ng;
  Tensor inter = sim::inter_modal_scores(feats[0], feats[1], feats[2], m.fuse);
  std::array<sim::Selected, 3> fused;
  for (int mod = 0; mod < 3; ++mod) {
    sim::Selected intra = sim::intra_select(sim::intra_modal_scores(feats[mod]), m.k1);
    sim::Selected cross = sim::inter_select(inter, mod, m.k2);
    fused[mod] = sim::fuse_masks(intra, cross, m.mask_mode());
  }
  return fused;
}

Tensor fused_descriptor(const Model& m, const std::array<sim::ModalityFeatures, 3>& feats,
                        const std::array<sim::Selected, 3>& fused) {
  if (!m.cfg.use_sim) {
    return concat_vectors({feats[0].cls, feats[1].cls, feats[2].cls});
  }
  std::array<Tensor, 3> sel;
  for (int mod = 0; mod < 3; ++mod) {
    sel[mod] = sim::apply_selection(feats[mod].patches, fused[mod], m.drop_mode());
  }
  return sim::modal_interaction(feats[0].cls, feats[1].cls, feats[2].cls, sel[0], sel[1], sel[2],
                                m.fuse);
}

gam::EmbeddingTriple pooled_embeddings(const Model& m,
                                       const std::array<sim::ModalityFeatures, 3>& feats,
                                       const std::array<sim::Selected, 3>& fused) {
  gam::EmbeddingTriple e;
  for (int mod = 0; mod < 3; ++mod) {
    if (m.cfg.gam_pool_source == "selected") {
      if (fused[mod].indices.empty()) {
        throw ValueError("forward: empty selection cannot be pooled");
      }
      e[mod] = gam::pool_normalize(ops::gather_rows(feats[mod].patches, fused[mod].indices));
    } else {
      e[mod] = gam::pool_normalize(feats[mod].patches);
    }
  }
  return e;
}

Tensor sample_align_loss(const Model& m, const std::array<sim::ModalityFeatures, 3>& feats) {
  std::array<Tensor, 3> field;
  for (int mod = 0; mod < 3; ++mod) {
    const auto& net = m.cfg.offset_sharing ? m.offset_nets[0] : m.offset_nets[mod];
    Tensor off = lam::predict_offsets(feats[mod].patches, m.hp, m.wp, m.cfg.lam_r, m.delta_max,
                                      net);
    field[mod] = lam::deform_sample(feats[mod].patches, m.hp, m.wp, m.ref_grid, off);
  }
  if (m.cfg.lam_pairs == "to_anchor") {
    int a = m.anchor_index();
    return lam::local_align_loss_to_anchor(field[a], field[(a + 1) % 3], field[(a + 2) % 3]);
  }
  return lam::local_align_loss(field[0], field[1], field[2]);
}

}  // namespace

sim::MaskMode Model::mask_mode() const {
  return cfg.mask_mode == "union" ? sim::MaskMode::kUnion : sim::MaskMode::kIntersection;
}

sim::DropMode Model::drop_mode() const {
  return cfg.drop_mode == "zero" ? sim::DropMode::kZero : sim::DropMode::kGather;
}

int Model::anchor_index() const {
  return cfg.gam_anchor == "R" ? 0 : (cfg.gam_anchor == "N" ? 1 : 2);
}

Model build_model(const RunConfig& cfg, int d_raw, int hp, int wp, int num_classes, Rng& rng) {
  validate_run_config(cfg);
  if (d_raw < 1 || hp < 1 || wp < 1) throw ValueError("build_model: bad grid");
  if (num_classes < 2) throw ValueError("build_model: need at least two classes");
  if (hp % cfg.lam_r != 0 || wp % cfg.lam_r != 0) {
    throw ValueError("build_model: lam_r must divide both grid dims");
  }

  Model m;
  m.cfg = cfg;
  m.d_raw = d_raw;
  m.hp = hp;
  m.wp = wp;
  m.l = hp * wp;
  m.num_classes = num_classes;
  m.k1 = cfg.k1 == 0 ? auto_k1(m.l) : cfg.k1;
  m.k2 = cfg.k2 == 0 ? m.k1 : cfg.k2;
  if (m.k1 > m.l || m.k2 > m.l) {
    throw ValueError("build_model: token budget exceeds patch count");
  }
  int hg = hp / cfg.lam_r, wg = wp / cfg.lam_r;
  m.delta_max = cfg.lam_delta_max == 0.0 ? lam::default_delta_max(hg, wg) : cfg.lam_delta_max;
  m.ref_grid = lam::make_reference_grid(hp, wp, cfg.lam_r);

  int d = cfg.d;
  for (int mod = 0; mod < 3; ++mod) m.enc[mod] = build_encoder(rng, d_raw, d);

  m.fuse.heads = cfg.heads;
  m.fuse.stack_proj = init_matrix(rng, d, d);
  m.fuse.concat_proj = init_matrix(rng, d, d);
  m.fuse.att_wq = init_matrix(rng, d, d);
  m.fuse.att_wk = init_matrix(rng, d, d);
  m.fuse.att_wv = init_matrix(rng, d, d);
  m.fuse.att_wo = init_matrix(rng, d, d);
  m.fuse.ffn_w1 = init_matrix(rng, d, 4 * d);
  m.fuse.ffn_b1 = Tensor::zeros({4 * d}, true);
  m.fuse.ffn_w2 = init_matrix(rng, 4 * d, d);
  m.fuse.ffn_b2 = Tensor::zeros({d}, true);
  m.fuse.ln1_gain = Tensor::ones({d}, true);
  m.fuse.ln1_bias = Tensor::zeros({d}, true);
  m.fuse.ln2_gain = Tensor::ones({d}, true);
  m.fuse.ln2_bias = Tensor::zeros({d}, true);

  m.gam_log_tau = Tensor::from_data({1}, {std::log(cfg.gam_tau_init)}, true);

  for (int mod = 0; mod < 3; ++mod) m.offset_nets[mod] = build_offset_net(rng, d);

  m.head = init_matrix(rng, 3 * d, num_classes);
  return m;
}

std::vector<NamedParam> named_params(const Model& m) {
  std::vector<NamedParam> out;
  for (int mod = 0; mod < 3; ++mod) {
    push_encoder(out, std::string("enc.") + kModalityNames[mod], m.enc[mod]);
  }
  out.push_back({"fuse.stack_proj", m.fuse.stack_proj, false});
  out.push_back({"fuse.concat_proj", m.fuse.concat_proj, false});
  out.push_back({"fuse.att_wq", m.fuse.att_wq, false});
  out.push_back({"fuse.att_wk", m.fuse.att_wk, false});
  out.push_back({"fuse.att_wv", m.fuse.att_wv, false});
  out.push_back({"fuse.att_wo", m.fuse.att_wo, false});
  out.push_back({"fuse.ffn_w1", m.fuse.ffn_w1, false});
  out.push_back({"fuse.ffn_b1", m.fuse.ffn_b1, false});
  out.push_back({"fuse.ffn_w2", m.fuse.ffn_w2, false});
  out.push_back({"fuse.ffn_b2", m.fuse.ffn_b2, false});
  out.push_back({"fuse.ln1_gain", m.fuse.ln1_gain, false});
  out.push_back({"fuse.ln1_bias", m.fuse.ln1_bias, false});
  out.push_back({"fuse.ln2_gain", m.fuse.ln2_gain, false});
  out.push_back({"fuse.ln2_bias", m.fuse.ln2_bias, false});
  out.push_back({"gam.log_tau", m.gam_log_tau, false});
  for (int mod = 0; mod < 3; ++mod) {
    push_offset_net(out, std::string("lam.") + kModalityNames[mod], m.offset_nets[mod]);
  }
  out.push_back({"head.weight", m.head, false});
  return out;
}

sim::ModalityFeatures encode_modality(const Tensor& raw, const EncoderParams& p) {
  if (raw.rank() != 2 || raw.dim(1) != p.patch_proj.dim(0)) {
    throw ShapeError("encode_modality: raw tokens must be [L, d_raw], got " +
                     shape_str(raw.shape()));
  }
  int d = p.patch_proj.dim(1);
  Tensor patches = ops::add_rowvec(ops::matmul(raw, p.patch_proj), p.patch_bias);
  Tensor q = ops::matmul(ops::reshape(p.cls_seed, {1, d}), p.pool_wq);
  Tensor k = ops::matmul(patches, p.pool_wk);
  Tensor v = ops::matmul(patches, p.pool_wv);
  Tensor att = ops::softmax_lastdim(
      ops::scale(ops::matmul(q, ops::transpose2d(k)), 1.0 / std::sqrt(static_cast<double>(d))));
  Tensor pooled = ops::matmul(ops::matmul(att, v), p.pool_wo);
  Tensor cls = ops::layer_norm(ops::add(ops::reshape(p.cls_seed, {1, d}), pooled), p.ln_gain,
                               p.ln_bias);
  return {ops::reshape(cls, {d}), patches};
}

BatchForward forward_batch(const Model& m, const std::vector<const synth::SampleRecord*>& samples,
                           const std::vector<int>& labels) {
  size_t b = samples.size();
  if (b < 2) throw ValueError("forward_batch: need at least two samples");
  if (labels.size() != b) throw ValueError("forward_batch: labels/samples size mismatch");

  std::vector<Tensor> rows;
  std::vector<gam::EmbeddingTriple> triples;
  std::vector<Tensor> aligns;
  rows.reserve(b);
  for (const auto* s : samples) {
    check_finite_tokens(*s);
    std::array<sim::ModalityFeatures, 3> feats;
    for (int mod = 0; mod < 3; ++mod) feats[mod] = encode_modality(s->tokens[mod], m.enc[mod]);
    std::array<sim::Selected, 3> fused;
    if (m.cfg.use_sim) fused = select_tokens(m, feats);
    rows.push_back(fused_descriptor(m, feats, fused));
    if (m.cfg.use_gam) triples.push_back(pooled_embeddings(m, feats, fused));
    if (m.cfg.use_lam) aligns.push_back(sample_align_loss(m, feats));
  }

  BatchForward out;
  out.features = ops::stack_rows(rows);
  out.logits = ops::matmul(out.features, m.head);
  out.ce = losses::label_smooth_ce(out.logits, labels, m.cfg.ce_epsilon);
  out.triplet = losses::batch_hard_triplet(out.features, labels, m.cfg.tri_margin);
  if (m.cfg.use_gam) {
    auto pair = gam::gram_contrastive_loss(triples, m.anchor_index(), m.gam_log_tau);
    out.d2a = pair.d2a;
    out.a2d = pair.a2d;
  } else {
    out.d2a = Tensor::scalar(0.0);
    out.a2d = Tensor::scalar(0.0);
  }
  out.align = m.cfg.use_lam ? ops::mean_all(ops::stack_scalars(aligns)) : Tensor::scalar(0.0);
  out.total = losses::total_loss(out.ce, out.triplet, out.d2a, out.a2d, out.align, m.cfg.alpha,
                                 m.cfg.beta);
  return out;
}

Tensor embed_sample(const Model& m, const synth::SampleRecord& s) {
  NoGradGuard ng;
  check_finite_tokens(s);
  std::array<sim::ModalityFeatures, 3> feats;
  for (int mod = 0; mod < 3; ++mod) feats[mod] = encode_modality(s.tokens[mod], m.enc[mod]);
  std::array<sim::Selected, 3> fused;
  if (m.cfg.use_sim) fused = select_tokens(m, feats);
  Tensor frnt = fused_descriptor(m, feats, fused);
  if (m.cfg.eval_feature == "frnt+cls") {
    return concat_vectors({frnt, feats[0].cls, feats[1].cls, feats[2].cls});
  }
  return frnt;
}

}  // namespace trireid::model
