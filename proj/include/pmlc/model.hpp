#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/attention.hpp"
#include "pmlc/encoder.hpp"
#include "pmlc/fusion.hpp"
#include "pmlc/label_graph.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

enum class Variant { S, L, SL, SG, LG, SLG };

inline Variant parse_variant(const std::string& s) {
  if (s == "S") return Variant::S;
  if (s == "L") return Variant::L;
  if (s == "SL") return Variant::SL;
  if (s == "SG") return Variant::SG;
  if (s == "LG") return Variant::LG;
  if (s == "SLG") return Variant::SLG;
  throw ConfigError("variant: unknown name '" + s + "'");
}

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::S: return "S";
    case Variant::L: return "L";
    case Variant::SL: return "SL";
    case Variant::SG: return "SG";
    case Variant::LG: return "LG";
    case Variant::SLG: return "SLG";
  }
  throw ConfigError("variant: unknown value");
}

struct ModelConfig {
  std::size_t n_labels = 0;
  std::size_t d1 = 300;  // word/label embedding width
  std::size_t d2 = 300;  // recurrent hidden width (output width 2·d2)
  std::size_t d3 = 200;  // self-attention projection width
  std::size_t d4 = 450;  // graph hidden width
  std::size_t gcn_layers = 2;
  double u = 0.2;             // adjacency trade-off
  double binarize_tau = 0.0;  // co-occurrence noise threshold
  double leaky_slope = 0.01;
  Variant variant = Variant::SLG;
  FusionMode fusion = FusionMode::Gcn;

  void validate() const {
    if (n_labels == 0) throw ConfigError("config: label count not set");
    if (!d1 || !d2 || !d3 || !d4) throw ConfigError("config: dimensions must be positive");
    if (fusion != FusionMode::Gcn && variant != Variant::SLG)
      throw ConfigError(std::string("config: fusion mode ") + fusion_mode_name(fusion) +
                        " requires the full variant SLG");
  }
};

// Every variant instantiates the full parameter set (identical seeding across
// variants); ablations differ only in which tensors the forward pass touches.
struct ModelParams {
  EncoderParams encoder;
  AttentionParams attention;
  Tensor label_proj;  // d1 × 2d2, reconciles label embeddings with H's width
  GcnParams gcn;
  FusionParams fusion;
  Tensor sl_gate;  // length L, gate for graph-free two-branch blending
  Tensor w_o;      // length 2d2
  Tensor e_l;        // L×d1 label embeddings, frozen
  Tensor adjacency;  // L×L, frozen

  static ModelParams init(const ModelConfig& cfg, Tensor e_l, Tensor adjacency,
                          Rng& rng) {
    cfg.validate();
    if (e_l.shape() != Shape{cfg.n_labels, cfg.d1})
      throw ShapeError("model: label embeddings " + shape_str(e_l.shape()) +
                       " do not match config");
    if (adjacency.shape() != Shape{cfg.n_labels, cfg.n_labels})
      throw ShapeError("model: adjacency " + shape_str(adjacency.shape()) +
                       " does not match label count");
    ModelParams p;
    p.encoder = EncoderParams::init(cfg.d1, cfg.d2, rng);
    p.attention = AttentionParams::init(cfg.n_labels, cfg.d2, cfg.d3, rng);
    const double pb = 1.0 / std::sqrt(static_cast<double>(cfg.d1));
    p.label_proj = Tensor::uniform({cfg.d1, 2 * cfg.d2}, -pb, pb, rng).set_requires_grad();
    p.gcn = GcnParams::init(cfg.gcn_layers, cfg.d1, cfg.d4, cfg.d2, rng);
    p.fusion = FusionParams::init(cfg.n_labels, rng);
    p.sl_gate = Tensor::zeros({cfg.n_labels}).set_requires_grad();  // neutral 0.5 blend
    const double ob = 1.0 / std::sqrt(static_cast<double>(2 * cfg.d2));
    p.w_o = Tensor::uniform({2 * cfg.d2}, -ob, ob, rng).set_requires_grad();
    p.e_l = std::move(e_l);
    p.adjacency = std::move(adjacency);
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    encoder.collect(out);
    attention.collect(out);
    out.emplace_back("label_proj", label_proj);
    gcn.collect(out);
    fusion.collect(out);
    out.emplace_back("sl_gate", sl_gate);
    out.emplace_back("w_o", w_o);
    return out;
  }

  void zero_grad() const {
    for (auto& [name, t] : named()) t.zero_grad();
  }
};

struct SampleForward {
  Tensor a_s, q_s;  // self branch (if used)
  Tensor a_l, q_l;  // label branch (if used)
  Tensor w_l, w_s;  // coefficients (if used)
  Tensor q;         // fused representation
  Tensor y_hat;     // L probabilities
};

// Per-batch precomputation shared by every sample: projected label
// embeddings and the graph output do not depend on the text.
struct BatchContext {
  Tensor e_l_proj;  // L×2d2
  Tensor c_out;     // L×2d2
  bool has_label_branch = false;
  bool has_graph = false;
};

namespace detail {

inline bool uses_self(Variant v) { return v != Variant::L && v != Variant::LG; }
inline bool uses_label(Variant v) { return v != Variant::S && v != Variant::SG; }
inline bool uses_graph(Variant v) {
  return v == Variant::SG || v == Variant::LG || v == Variant::SLG;
}

}  // namespace detail

inline BatchContext make_batch_context(const ModelParams& p, const ModelConfig& cfg) {
  BatchContext ctx;
  ctx.has_label_branch = detail::uses_label(cfg.variant);
  ctx.has_graph = detail::uses_graph(cfg.variant);
  if (ctx.has_label_branch) ctx.e_l_proj = matmul(p.e_l, p.label_proj);
  if (ctx.has_graph) ctx.c_out = gcn_forward(p.e_l, p.adjacency, p.gcn, cfg.leaky_slope);
  return ctx;
}

// One sample through attention, fusion, and the output layer. `h` is the
// encoder output M×2d2 with zeroed pad rows; `mask` its padding mask.
inline SampleForward model_forward_sample(const ModelParams& p, const ModelConfig& cfg,
                                          const BatchContext& ctx, const Tensor& h,
                                          const std::vector<std::uint8_t>& mask) {
  SampleForward out;
  if (detail::uses_self(cfg.variant)) {
    auto s = self_attention(h, mask, p.attention);
    out.a_s = s.a;
    out.q_s = s.q;
  }
  if (ctx.has_label_branch) {
    auto l = label_attention(h, ctx.e_l_proj);
    out.a_l = l.a;
    out.q_l = l.q;
  }

  switch (cfg.variant) {
    case Variant::S:
      out.q = out.q_s;
      break;
    case Variant::L:
      out.q = out.q_l;
      break;
    case Variant::SL: {
      // graph-free blend: per-label sigmoid gate between the two branches
      out.w_l = sigmoid(p.sl_gate);
      out.w_s = affine(out.w_l, -1.0, 1.0);
      out.q = fuse(out.q_s, out.q_l, {out.w_l, out.w_s});
      break;
    }
    case Variant::SG: {
      // single branch fused with its own graph-modulated copy
      Tensor modulated = mul(ctx.c_out, out.q_s);
      auto c = compensation_coefficients(ctx.c_out, out.q_s, modulated, p.fusion);
      out.w_l = c.w_l;
      out.w_s = c.w_s;
      out.q = fuse(out.q_s, modulated, c);
      break;
    }
    case Variant::LG: {
      Tensor modulated = mul(ctx.c_out, out.q_l);
      auto c = compensation_coefficients(ctx.c_out, modulated, out.q_l, p.fusion);
      out.w_l = c.w_l;
      out.w_s = c.w_s;
      out.q = fuse(modulated, out.q_l, c);
      break;
    }
    case Variant::SLG: {
      if (cfg.fusion == FusionMode::Gcn) {
        auto c = compensation_coefficients(ctx.c_out, out.q_s, out.q_l, p.fusion);
        out.w_l = c.w_l;
        out.w_s = c.w_s;
        out.q = fuse(out.q_s, out.q_l, c);
      } else {
        out.q = dot_fusion_variant(out.q_s, out.q_l, ctx.c_out, cfg.fusion);
      }
      break;
    }
  }
  out.y_hat = predict(out.q, p.w_o);
  return out;
}

struct BatchForward {
  Tensor loss;  // scalar, mean over the batch
  std::vector<SampleForward> samples;
};

inline BatchForward model_forward_batch(const ModelParams& p, const ModelConfig& cfg,
                                        const Batch& batch, const EmbeddingTable& table) {
  Tensor embedded = embed_tokens(batch, table);
  auto enc = bilstm_forward(embedded, batch.mask, p.encoder);
  BatchContext ctx = make_batch_context(p, cfg);

  BatchForward out;
  std::vector<Tensor> losses;
  for (std::size_t i = 0; i < batch.b; ++i) {
    SampleForward f = model_forward_sample(p, cfg, ctx, enc.h[i], enc.mask[i]);
    std::vector<double> target(batch.labels.begin() + i * batch.l,
                               batch.labels.begin() + (i + 1) * batch.l);
    losses.push_back(bce_loss(f.y_hat, target));
    out.samples.push_back(std::move(f));
  }
  out.loss = mean_of(losses);
  return out;
}

}  // namespace pmlc
