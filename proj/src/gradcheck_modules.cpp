#include <cmath>

#include "gradcheck_registry.hpp"
#include "trireid/gam.hpp"
#include "trireid/gradcheck.hpp"
#include "trireid/lam.hpp"
#include "trireid/losses.hpp"
#include "trireid/model.hpp"
#include "trireid/ops.hpp"
#include "trireid/sim.hpp"

namespace trireid::gck {

namespace o = ops;

namespace {

sim::InteractionParams tiny_interaction(Rng& rng, int d, int heads) {
  sim::InteractionParams p;
  p.heads = heads;
  p.stack_proj = randt(rng, {d, d}, -0.5, 0.5);
  p.concat_proj = randt(rng, {d, d}, -0.5, 0.5);
  p.att_wq = randt(rng, {d, d}, -0.5, 0.5);
  p.att_wk = randt(rng, {d, d}, -0.5, 0.5);
  p.att_wv = randt(rng, {d, d}, -0.5, 0.5);
  p.att_wo = randt(rng, {d, d}, -0.5, 0.5);
  p.ffn_w1 = randt(rng, {d, 4 * d}, -0.3, 0.3);
  p.ffn_b1 = randt(rng, {4 * d}, -0.1, 0.1);
  p.ffn_w2 = randt(rng, {4 * d, d}, -0.3, 0.3);
  p.ffn_b2 = randt(rng, {d}, -0.1, 0.1);
  p.ln1_gain = randt(rng, {d}, 0.75, 1.25);
  p.ln1_bias = randt(rng, {d}, -0.1, 0.1);
  p.ln2_gain = randt(rng, {d}, 0.75, 1.25);
  p.ln2_bias = randt(rng, {d}, -0.1, 0.1);
  return p;
}

// Raw 3xD directions whose normalized rows span a clearly non-degenerate
// volume, so the probe stays away from the determinant clamp.
Tensor spanning_triple(Rng& rng, int d) {
  while (true) {
    Tensor x = randt(rng, {3, d});
    NoGradGuard ng;
    TapeScope scope;
    Tensor u = o::l2_normalize(x);
    double vol = gam::gram_volume(o::row(u, 0), o::row(u, 1), o::row(u, 2)).item();
    if (vol > 0.2) return x;
  }
}

double volume_of_rows(const Tensor& x, int a, int b, int c) {
  NoGradGuard ng;
  TapeScope scope;
  Tensor u = o::l2_normalize(x);
  return gam::gram_volume(o::row(u, a), o::row(u, b), o::row(u, c)).item();
}

// The composite path joins every kinked piece; these predicates redraw a
// probe configuration whenever a finite-difference step could cross one.

// Batch-hard mining: unique argmax/argmin per anchor and a hinge away from 0.
bool triplet_probe_safe(const Tensor& features, const std::vector<int>& labels, double margin) {
  int b = features.dim(0);
  auto dist = [&](int i, int j) {
    double s = 0;
    for (int e = 0; e < features.dim(1); ++e) {
      double d = features(i, e) - features(j, e);
      s += d * d;
    }
    return std::sqrt(s);
  };
  const double gap = 5e-3;
  for (int a = 0; a < b; ++a) {
    double best_p = -1, second_p = -1, best_n = 1e30, second_n = 1e30;
    for (int j = 0; j < b; ++j) {
      if (j == a) continue;
      double dj = dist(a, j);
      if (labels[j] == labels[a]) {
        if (dj > best_p) second_p = best_p, best_p = dj;
        else second_p = std::max(second_p, dj);
      } else {
        if (dj < best_n) second_n = best_n, best_n = dj;
        else second_n = std::min(second_n, dj);
      }
    }
    if (second_p >= 0 && best_p - second_p < gap) return false;
    if (second_n < 1e29 && second_n - best_n < gap) return false;
    if (std::abs(best_p - best_n + margin) < gap) return false;
  }
  return true;
}

// Bilinear sampling on a 2x2 grid kinks only where a coordinate meets the
// border at +-1 (interior lattice and clamp coincide there).
bool lam_probe_safe(const model::Model& m, const std::vector<synth::SampleRecord>& recs) {
  for (const auto& r : recs) {
    for (int mod = 0; mod < 3; ++mod) {
      auto feats = model::encode_modality(r.tokens[mod], m.enc[mod]);
      const auto& net = m.cfg.offset_sharing ? m.offset_nets[0] : m.offset_nets[mod];
      Tensor off =
          lam::predict_offsets(feats.patches, m.hp, m.wp, m.cfg.lam_r, m.delta_max, net);
      Tensor pts = o::add(m.ref_grid, off);
      for (double p : pts.data()) {
        if (std::abs(std::abs(p) - 1.0) < 1e-3) return false;
      }
    }
  }
  return true;
}

// Keep every cross-sample parallelotope clear of the determinant clamp.
bool gam_probe_safe(const model::Model& m, const std::vector<synth::SampleRecord>& recs) {
  std::vector<gam::EmbeddingTriple> pooled;
  for (const auto& r : recs) {
    gam::EmbeddingTriple e;
    for (int mod = 0; mod < 3; ++mod) {
      e[mod] = gam::pool_normalize(model::encode_modality(r.tokens[mod], m.enc[mod]).patches);
    }
    pooled.push_back(e);
  }
  for (size_t x = 0; x < pooled.size(); ++x) {
    for (size_t y = 0; y < pooled.size(); ++y) {
      if (gam::gram_volume(pooled[x][0], pooled[y][1], pooled[y][2]).item() < 0.05) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Check> module_checks() {
  std::vector<Check> cs;
  auto add = [&](std::string name, CheckFn fn) { cs.push_back({std::move(name), std::move(fn)}); };

  add("gram_volume", [](Rng& rng, int) {
    Tensor x = spanning_triple(rng, 5);
    return finite_diff_check(
        [&](const Tensor& t) {
          Tensor u = o::l2_normalize(t);
          return gam::gram_volume(o::row(u, 0), o::row(u, 1), o::row(u, 2));
        },
        x);
  });

  add("mhca_ffn", [](Rng& rng, int trial) {
    int d = 8, l = 4, h = 2;
    sim::InteractionParams p = tiny_interaction(rng, d, h);
    Tensor cls_r = randt(rng, {d}), cls_n = randt(rng, {d}), cls_t = randt(rng, {d});
    Tensor sel_r = randt(rng, {l, d}), sel_n = randt(rng, {l, d}), sel_t = randt(rng, {l, d});
    Tensor w = randt(rng, {3 * d});
    auto fwd = [&](const sim::InteractionParams& q, const Tensor& cr, const Tensor& sn) {
      return pin(sim::modal_interaction(cr, cls_n, cls_t, sel_r, sn, sel_t, q), w);
    };
    switch (trial % 8) {
      case 0:
        return finite_diff_check([&](const Tensor& t) { return fwd(p, t, sel_n); }, cls_r);
      case 1:
        return finite_diff_check([&](const Tensor& t) { return fwd(p, cls_r, t); }, sel_n);
      case 2: {
        auto vary = [&](const Tensor& t) { auto q = p; q.stack_proj = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.stack_proj);
      }
      case 3: {
        auto vary = [&](const Tensor& t) { auto q = p; q.concat_proj = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.concat_proj);
      }
      case 4: {
        auto vary = [&](const Tensor& t) { auto q = p; q.att_wq = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.att_wq);
      }
      case 5: {
        auto vary = [&](const Tensor& t) { auto q = p; q.att_wo = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.att_wo);
      }
      case 6: {
        auto vary = [&](const Tensor& t) { auto q = p; q.ffn_w1 = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.ffn_w1);
      }
      default: {
        auto vary = [&](const Tensor& t) { auto q = p; q.ln1_gain = t; return fwd(q, cls_r, sel_n); };
        return finite_diff_check(vary, p.ln1_gain);
      }
    }
  });

  add("offset_net", [](Rng& rng, int trial) {
    int hp = 2, wp = 2, d = 4;
    lam::OffsetNetParams p;
    p.proj = randt(rng, {d, d}, -0.5, 0.5);
    p.conv1_w = randt(rng, {9 * d, d / 2}, -0.3, 0.3);
    p.conv1_b = randt(rng, {d / 2}, -0.1, 0.1);
    p.conv2_w = randt(rng, {9 * (d / 2), 2}, -0.3, 0.3);
    p.conv2_b = randt(rng, {2}, -0.1, 0.1);
    Tensor patches = randt(rng, {hp * wp, d});
    Tensor w = randt(rng, {hp * wp, 2});
    auto fwd = [&](const lam::OffsetNetParams& q, const Tensor& pt) {
      return pin(lam::predict_offsets(pt, hp, wp, 1, 0.5, q), w);
    };
    switch (trial % 6) {
      case 0:
        return finite_diff_check([&](const Tensor& t) { return fwd(p, t); }, patches);
      case 1: {
        auto vary = [&](const Tensor& t) { auto q = p; q.proj = t; return fwd(q, patches); };
        return finite_diff_check(vary, p.proj);
      }
      case 2: {
        auto vary = [&](const Tensor& t) { auto q = p; q.conv1_w = t; return fwd(q, patches); };
        return finite_diff_check(vary, p.conv1_w);
      }
      case 3: {
        auto vary = [&](const Tensor& t) { auto q = p; q.conv1_b = t; return fwd(q, patches); };
        return finite_diff_check(vary, p.conv1_b);
      }
      case 4: {
        auto vary = [&](const Tensor& t) { auto q = p; q.conv2_w = t; return fwd(q, patches); };
        return finite_diff_check(vary, p.conv2_w);
      }
      default: {
        auto vary = [&](const Tensor& t) { auto q = p; q.conv2_b = t; return fwd(q, patches); };
        return finite_diff_check(vary, p.conv2_b);
      }
    }
  });

  add("deform_align", [](Rng& rng, int trial) {
    int hp = 3, wp = 3, d = 2, g = hp * wp;
    Tensor pr = randt(rng, {hp * wp, d});
    Tensor pn = randt(rng, {hp * wp, d});
    Tensor pt = randt(rng, {hp * wp, d});
    Tensor grid = lam::make_reference_grid(hp, wp, 1);
    // displaced points chosen strictly interior and off-lattice so the
    // bilinear kinks stay out of the probe's reach
    Tensor off_r = o::sub(interior_points(rng, g, hp, wp), grid);
    Tensor off_n = o::sub(interior_points(rng, g, hp, wp), grid);
    Tensor off_t = o::sub(interior_points(rng, g, hp, wp), grid);
    auto fwd = [&](const Tensor& orr, const Tensor& pnn) {
      return lam::local_align_loss(lam::deform_sample(pr, hp, wp, grid, orr),
                                   lam::deform_sample(pnn, hp, wp, grid, off_n),
                                   lam::deform_sample(pt, hp, wp, grid, off_t));
    };
    if (trial % 2 == 0)
      return finite_diff_check([&](const Tensor& t) { return fwd(t, pn); }, off_r);
    return finite_diff_check([&](const Tensor& t) { return fwd(off_r, t); }, pn);
  });

  add("loss_ce", [](Rng& rng, int) {
    Tensor logits = randt(rng, {4, 3}, -2.0, 2.0);
    std::vector<int> labels(4);
    for (auto& l : labels) l = rng.uniform_int(3);
    return finite_diff_check(
        [&](const Tensor& t) { return losses::label_smooth_ce(t, labels, 0.1); }, logits);
  });

  add("loss_triplet", [](Rng& rng, int) {
    std::vector<int> labels = {0, 0, 1, 1};
    while (true) {
      Tensor x = randt(rng, {4, 3}, -2.0, 2.0);
      // reject draws where a hinge or an argmin/argmax sits close enough to a
      // tie that the probe could cross it
      bool ok = true;
      {
        NoGradGuard ng;
        TapeScope scope;
        Tensor dist = o::pairwise_euclidean(x);
        for (int i = 0; i < 4 && ok; ++i) {
          double best_p = -1.0, second_p = -1.0, best_n = 1e9, second_n = 1e9;
          for (int j = 0; j < 4; ++j) {
            if (j == i) continue;
            double dv = dist(i, j);
            if (labels[j] == labels[i]) {
              if (dv > best_p) { second_p = best_p; best_p = dv; }
              else if (dv > second_p) second_p = dv;
            } else {
              if (dv < best_n) { second_n = best_n; best_n = dv; }
              else if (dv < second_n) second_n = dv;
            }
          }
          if (second_p >= 0.0 && best_p - second_p < 0.05) ok = false;
          if (second_n < 1e8 && second_n - best_n < 0.05) ok = false;
          if (std::abs(best_p - best_n + 0.3) < 0.05) ok = false;
        }
      }
      if (!ok) continue;
      return finite_diff_check(
          [&](const Tensor& t) { return losses::batch_hard_triplet(t, labels, 0.3); }, x);
    }
  });

  add("loss_gram_d2a", [](Rng& rng, int trial) {
    int b = 3, d = 4;
    Tensor x;
    while (true) {
      x = randt(rng, {3 * b, d});
      bool ok = true;
      for (int i = 0; i < b && ok; ++i)
        for (int j = 0; j < b && ok; ++j)
          if (volume_of_rows(x, 3 * i, 3 * j + 1, 3 * j + 2) < 0.05) ok = false;
      if (ok) break;
    }
    Tensor log_tau = Tensor::scalar(std::log(0.2));
    auto loss = [&](const Tensor& raw, const Tensor& lt, bool d2a) {
      Tensor u = o::l2_normalize(raw);
      std::vector<gam::EmbeddingTriple> batch;
      for (int i = 0; i < b; ++i)
        batch.push_back({o::row(u, 3 * i), o::row(u, 3 * i + 1), o::row(u, 3 * i + 2)});
      auto pair = gam::gram_contrastive_loss(batch, 0, lt);
      return d2a ? pair.d2a : pair.a2d;
    };
    if (trial % 2 == 0)
      return finite_diff_check([&](const Tensor& t) { return loss(t, log_tau, true); }, x);
    return finite_diff_check([&](const Tensor& t) { return loss(x, t, true); }, log_tau);
  });

  add("loss_gram_a2d", [](Rng& rng, int trial) {
    int b = 3, d = 4;
    Tensor x;
    while (true) {
      x = randt(rng, {3 * b, d});
      bool ok = true;
      for (int i = 0; i < b && ok; ++i)
        for (int j = 0; j < b && ok; ++j)
          if (volume_of_rows(x, 3 * i, 3 * j + 1, 3 * j + 2) < 0.05) ok = false;
      if (ok) break;
    }
    Tensor log_tau = Tensor::scalar(std::log(0.2));
    auto loss = [&](const Tensor& raw, const Tensor& lt) {
      Tensor u = o::l2_normalize(raw);
      std::vector<gam::EmbeddingTriple> batch;
      for (int i = 0; i < b; ++i)
        batch.push_back({o::row(u, 3 * i), o::row(u, 3 * i + 1), o::row(u, 3 * i + 2)});
      return gam::gram_contrastive_loss(batch, 0, lt).a2d;
    };
    if (trial % 2 == 0) return finite_diff_check([&](const Tensor& t) { return loss(t, log_tau); }, x);
    return finite_diff_check([&](const Tensor& t) { return loss(x, t); }, log_tau);
  });

  add("loss_mse", [](Rng& rng, int) {
    Tensor a = randt(rng, {4, 3});
    Tensor b = randt(rng, {4, 3});
    Tensor c = randt(rng, {4, 3});
    return finite_diff_check([&](const Tensor& t) { return lam::local_align_loss(t, b, c); }, a);
  });

  // Whole training objective through a miniature model: encoders, selection,
  // fusion, both alignment branches and the identity losses in one graph.
  add("model_forward", [](Rng& rng, int trial) {
    RunConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.k1 = 4;  // keep the full token set so the hard top-k cannot flip
    cfg.k2 = 4;
    cfg.batch = 4;
    cfg.samples_per_id = 2;
    cfg.lam_delta_max = 0.7;
    int hp = 2, wp = 2, d_raw = 5;
    std::vector<int> labels = {0, 0, 1, 1};

    while (true) {
      model::Model m = model::build_model(cfg, d_raw, hp, wp, 2, rng);
      std::vector<synth::SampleRecord> recs(4);
      for (auto& r : recs) {
        for (int mod = 0; mod < 3; ++mod) r.tokens[mod] = randt(rng, {hp * wp, d_raw});
      }
      std::vector<const synth::SampleRecord*> batch;
      for (auto& r : recs) batch.push_back(&r);

      {
        NoGradGuard ng;
        TapeScope scope;
        auto probe = model::forward_batch(m, batch, labels);
        if (!triplet_probe_safe(probe.features, labels, cfg.tri_margin)) continue;
        if (!lam_probe_safe(m, recs)) continue;
        if (!gam_probe_safe(m, recs)) continue;
      }

      auto fwd = [&](const model::Model& mm) {
        return model::forward_batch(mm, batch, labels).total;
      };
      switch (trial % 8) {
        case 0:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.enc[0].patch_proj = t; return fwd(mm); },
              m.enc[0].patch_proj);
        case 1:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.enc[1].cls_seed = t; return fwd(mm); },
              m.enc[1].cls_seed);
        case 2:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.enc[2].pool_wv = t; return fwd(mm); },
              m.enc[2].pool_wv);
        case 3:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.fuse.att_wk = t; return fwd(mm); },
              m.fuse.att_wk);
        case 4:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.fuse.ffn_w2 = t; return fwd(mm); },
              m.fuse.ffn_w2);
        case 5:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.gam_log_tau = t; return fwd(mm); },
              m.gam_log_tau);
        case 6:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.offset_nets[1].conv1_w = t; return fwd(mm); },
              m.offset_nets[1].conv1_w);
        default:
          return finite_diff_check(
              [&](const Tensor& t) { auto mm = m; mm.head = t; return fwd(mm); }, m.head);
      }
    }
  });

  return cs;
}

}  // namespace trireid::gck
