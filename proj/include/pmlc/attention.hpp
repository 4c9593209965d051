#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/data.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

struct AttentionParams {
  Tensor w_s1;  // d3 × 2d2
  Tensor w_s2;  // L × d3

  static AttentionParams init(std::size_t n_labels, std::size_t d2, std::size_t d3,
                              Rng& rng) {
    const double b1 = 1.0 / std::sqrt(static_cast<double>(2 * d2));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(d3));
    AttentionParams p;
    p.w_s1 = Tensor::uniform({d3, 2 * d2}, -b1, b1, rng).set_requires_grad();
    p.w_s2 = Tensor::uniform({n_labels, d3}, -b2, b2, rng).set_requires_grad();
    return p;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& dst) const {
    dst.emplace_back("attn.w_s1", w_s1);
    dst.emplace_back("attn.w_s2", w_s2);
  }
};

struct AttentionResult {
  Tensor a;  // L×M
  Tensor q;  // L×2d2
};

// A = softmax(W_s2 · tanh(W_s1 · Hᵀ)) row-wise with padded positions excluded
// (−∞ logits → probability 0); Q = A·H.
inline AttentionResult self_attention(const Tensor& h,
                                      const std::vector<std::uint8_t>& mask,
                                      const AttentionParams& params) {
  Tensor logits = matmul(params.w_s2, tanh(matmul(params.w_s1, transpose(h))));
  Tensor a = softmax_rows_masked(logits, mask);
  return {a, matmul(a, h)};
}

// A = E_l'·Hᵀ with no row normalization; masked positions are zero because
// the encoder zeroes masked rows of H. Q = A·H.
inline AttentionResult label_attention(const Tensor& h, const Tensor& e_l_projected) {
  Tensor a = matmul(e_l_projected, transpose(h));
  return {a, matmul(a, h)};
}

// CSV: header of tokens (pad positions shown as the pad sentinel), one row per
// label, 6-decimal fixed-point values.
inline void write_attention_csv(std::ostream& out, const Tensor& a,
                                const std::vector<std::string>& label_names,
                                const std::vector<std::string>& tokens) {
  if (a.ndim() != 2 || a.extent(0) != label_names.size() || a.extent(1) != tokens.size())
    throw ShapeError("attention csv: matrix " + shape_str(a.shape()) + " does not match " +
                     std::to_string(label_names.size()) + " labels x " +
                     std::to_string(tokens.size()) + " tokens");
  auto cell = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  };
  out << "label";
  for (const auto& t : tokens) out << ',' << cell(t);
  out << '\n';
  char buf[32];
  for (std::size_t l = 0; l < label_names.size(); ++l) {
    out << cell(label_names[l]);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", a.at(l, j));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace pmlc
