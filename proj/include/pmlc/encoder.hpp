#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/data.hpp"
#include "pmlc/rng.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

// Gather of embedding rows: pad positions become zero vectors, unseen words
// the shared fallback vector. Output carries no gradient (embeddings frozen).
inline Tensor embed_tokens(const Batch& batch, const EmbeddingTable& table) {
  Tensor out = Tensor::zeros({batch.b, batch.m, table.dim()});
  for (std::size_t i = 0; i < batch.b; ++i)
    for (std::size_t j = 0; j < batch.m; ++j) {
      const std::size_t tok = batch.token_at(i, j);
      if (tok == kPadIndex) continue;
      std::span<const double> vec;
      if (tok == kOovIndex) {
        const auto& o = table.oov();
        vec = {o.data(), o.size()};
      } else if (tok < table.size()) {
        vec = table.row(tok);
      } else {
        throw InputError("embed: token index " + std::to_string(tok) + " out of range");
      }
      for (std::size_t k = 0; k < table.dim(); ++k) out.at(i, j, k) = vec[k];
    }
  return out;
}

struct LstmGate {
  Tensor w;  // d2 × d_in
  Tensor u;  // d2 × d2
  Tensor b;  // d2
};

struct LstmCellParams {
  LstmGate in, forget, cell, out;

  // Standard stable defaults: everything uniform(−1/√d2, 1/√d2), then the
  // forget-gate bias raised to 1 so early training does not wash out state.
  static LstmCellParams init(std::size_t d_in, std::size_t d2, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d2));
    auto gate = [&] {
      LstmGate g;
      g.w = Tensor::uniform({d2, d_in}, -bound, bound, rng).set_requires_grad();
      g.u = Tensor::uniform({d2, d2}, -bound, bound, rng).set_requires_grad();
      g.b = Tensor::uniform({d2}, -bound, bound, rng).set_requires_grad();
      return g;
    };
    LstmCellParams p{gate(), gate(), gate(), gate()};
    for (std::size_t i = 0; i < d2; ++i) p.forget.b.at(i) = 1.0;
    return p;
  }

  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, Tensor>>& dst) const {
    const std::pair<const char*, const LstmGate*> gates[] = {
        {"i", &in}, {"f", &forget}, {"g", &cell}, {"o", &out}};
    for (auto [name, g] : gates) {
      dst.emplace_back(prefix + "." + name + ".w", g->w);
      dst.emplace_back(prefix + "." + name + ".u", g->u);
      dst.emplace_back(prefix + "." + name + ".b", g->b);
    }
  }
};

struct EncoderParams {
  LstmCellParams fwd, bwd;

  static EncoderParams init(std::size_t d1, std::size_t d2, Rng& rng) {
    return {LstmCellParams::init(d1, d2, rng), LstmCellParams::init(d1, d2, rng)};
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& dst) const {
    fwd.collect("lstm_fwd", dst);
    bwd.collect("lstm_bwd", dst);
  }
};

struct EncoderOutput {
  std::vector<Tensor> h;                        // per sample, M×2d2; masked rows zero
  std::vector<std::vector<std::uint8_t>> mask;  // per sample, length M
};

namespace detail {

struct LstmState {
  Tensor h, c;
};

inline LstmState lstm_step(const LstmCellParams& p, const Tensor& x, const LstmState& s) {
  auto gate_pre = [&](const LstmGate& g) {
    return add(add(matvec(g.w, x), matvec(g.u, s.h)), g.b);
  };
  Tensor i = sigmoid(gate_pre(p.in));
  Tensor f = sigmoid(gate_pre(p.forget));
  Tensor g = tanh(gate_pre(p.cell));
  Tensor o = sigmoid(gate_pre(p.out));
  Tensor c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

inline std::size_t real_length(const std::vector<std::uint8_t>& mask) {
  std::size_t len = 0;
  while (len < mask.size() && mask[len]) ++len;
  for (std::size_t j = len; j < mask.size(); ++j)
    if (mask[j]) throw InputError("encoder: padding must be trailing");
  if (len == 0) throw InputError("encoder: sequence has no real tokens");
  return len;
}

}  // namespace detail

// Bidirectional pass over real tokens only; both directions' hidden states
// are concatenated per position and masked rows stay exactly zero.
inline EncoderOutput bilstm_forward(const Tensor& embedded,
                                    const std::vector<std::uint8_t>& mask,
                                    const EncoderParams& params) {
  if (embedded.ndim() != 3)
    throw ShapeError("encoder: expected B×M×d input, got " + shape_str(embedded.shape()));
  const std::size_t b = embedded.extent(0), m = embedded.extent(1);
  if (mask.size() != b * m)
    throw ShapeError("encoder: mask length " + std::to_string(mask.size()) +
                     " does not match " + std::to_string(b * m) + " positions");
  const std::size_t d2 = params.fwd.in.u.extent(0);

  EncoderOutput out;
  for (std::size_t s = 0; s < b; ++s) {
    std::vector<std::uint8_t> row_mask(mask.begin() + s * m, mask.begin() + (s + 1) * m);
    const std::size_t len = detail::real_length(row_mask);
    Tensor e = select(embedded, s);  // M×d

    std::vector<Tensor> h_fwd(len), h_bwd(len);
    detail::LstmState st{Tensor::zeros({d2}), Tensor::zeros({d2})};
    for (std::size_t t = 0; t < len; ++t) {
      st = detail::lstm_step(params.fwd, row(e, t), st);
      h_fwd[t] = st.h;
    }
    st = {Tensor::zeros({d2}), Tensor::zeros({d2})};
    for (std::size_t t = len; t-- > 0;) {
      st = detail::lstm_step(params.bwd, row(e, t), st);
      h_bwd[t] = st.h;
    }

    std::vector<Tensor> rows(m);
    for (std::size_t t = 0; t < m; ++t)
      rows[t] = t < len ? concat_last_dim(h_fwd[t], h_bwd[t]) : Tensor::zeros({2 * d2});
    out.h.push_back(stack_rows(rows));
    out.mask.push_back(std::move(row_mask));
  }
  return out;
}

}  // namespace pmlc
