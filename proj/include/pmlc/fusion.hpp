#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/tensor.hpp"

namespace pmlc {

struct FusionParams {
  Tensor w_a1, w_a2;  // length L

  static FusionParams init(std::size_t n_labels, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_labels));
    FusionParams p;
    p.w_a1 = Tensor::uniform({n_labels}, -bound, bound, rng).set_requires_grad();
    p.w_a2 = Tensor::uniform({n_labels}, -bound, bound, rng).set_requires_grad();
    return p;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& dst) const {
    dst.emplace_back("fuse.w_a1", w_a1);
    dst.emplace_back("fuse.w_a2", w_a2);
  }
};

struct Coefficients {
  Tensor w_l, w_s;  // length L, w_l + w_s = 1 coordinate-wise
};

// Two sigmoid scores per label, renormalized by their sum. The second weight
// is formed as 1 − w_l — identical in exact arithmetic to r_s/(r_l+r_s) and
// it makes the pair sum to 1 in floating point too, not just within an ulp.
inline Coefficients compensation_coefficients(const Tensor& c_out, const Tensor& q_s,
                                              const Tensor& q_l,
                                              const FusionParams& params) {
  Tensor r_l = sigmoid(matvec(matmul(c_out, transpose(q_s)), params.w_a1));
  Tensor r_s = sigmoid(matvec(matmul(c_out, transpose(q_l)), params.w_a2));
  Tensor w_l = div(r_l, add(r_l, r_s));
  Tensor w_s = affine(w_l, -1.0, 1.0);
  return {w_l, w_s};
}

// row i of the result: w_l[i]·q_l[i,·] + w_s[i]·q_s[i,·]
inline Tensor fuse(const Tensor& q_s, const Tensor& q_l, const Coefficients& c) {
  return add(scale_rows(q_l, c.w_l), scale_rows(q_s, c.w_s));
}

// ŷ_l = sigmoid(⟨row l of q, w_o⟩)
inline Tensor predict(const Tensor& q, const Tensor& w_o) {
  return sigmoid(matvec(q, w_o));
}

enum class FusionMode { Gcn, DotS, DotL, DotSl };

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "gcn") return FusionMode::Gcn;
  if (s == "dot-s") return FusionMode::DotS;
  if (s == "dot-l") return FusionMode::DotL;
  if (s == "dot-sl") return FusionMode::DotSl;
  throw ConfigError("fusion: unknown mode '" + s + "'");
}

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::Gcn: return "gcn";
    case FusionMode::DotS: return "dot-s";
    case FusionMode::DotL: return "dot-l";
    case FusionMode::DotSl: return "dot-sl";
  }
  throw ConfigError("fusion: unknown mode");
}

// comparison baselines: elementwise product of the graph output with one
// branch (or the branch average) instead of coefficient fusion
inline Tensor dot_fusion_variant(const Tensor& q_s, const Tensor& q_l,
                                 const Tensor& c_out, FusionMode mode) {
  switch (mode) {
    case FusionMode::DotS: return mul(c_out, q_s);
    case FusionMode::DotL: return mul(c_out, q_l);
    case FusionMode::DotSl: return mul(c_out, affine(add(q_s, q_l), 0.5, 0.0));
    case FusionMode::Gcn: break;
  }
  throw ConfigError("fusion: dot variant requested with mode 'gcn'");
}

// labels sorted by descending score; equal scores keep ascending label order
inline std::vector<std::size_t> rank_labels(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

}  // namespace pmlc
