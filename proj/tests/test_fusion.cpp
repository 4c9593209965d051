#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pmlc/grad_check.hpp"
#include "pmlc/model.hpp"

using namespace pmlc;

namespace {

struct TinyWorld {
  ModelConfig cfg;
  ModelParams params;
  EmbeddingTable table;
  Batch batch;
};

// L=3 labels, d1=4, d2=2 (encoder width 4), two 3-token samples
TinyWorld tiny_world(Variant variant, std::uint64_t seed,
                     FusionMode fusion = FusionMode::Gcn) {
  TinyWorld w{
      .cfg = {},
      .params = {},
      .table = EmbeddingTable::from_rows(
          {"a", "b", "c", "d"},
          {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8, 0.9, 0.1, -0.1, 0.2, 0.3, 0.5,
           -0.4, 0.2},
          4),
      .batch = {},
  };
  w.cfg.n_labels = 3;
  w.cfg.d1 = 4;
  w.cfg.d2 = 2;
  w.cfg.d3 = 3;
  w.cfg.d4 = 3;
  w.cfg.variant = variant;
  w.cfg.fusion = fusion;
  w.table.ensure_oov(seed);

  Rng graph_rng(seed + 1);
  Tensor e_l = Tensor::uniform({3, 4}, -0.5, 0.5, graph_rng);
  CoOccurrenceStats st;
  st.counts = {2, 2, 2};
  st.pair_counts.assign(9, 0);
  st.p = Tensor::matrix({{1.0, 0.5, 0.25}, {0.5, 1.0, 0.0}, {0.25, 0.0, 1.0}});
  Tensor adjacency = revise_adjacency(st, 0.2);

  Rng init_rng = Rng::substream(seed, "init");
  w.params = ModelParams::init(w.cfg, e_l, adjacency, init_rng);

  w.batch.b = 2;
  w.batch.m = 3;
  w.batch.l = 3;
  w.batch.tokens = {0, 1, 2, 3, 0, kPadIndex};
  w.batch.mask = {1, 1, 1, 1, 1, 0};
  w.batch.labels = {1, 0, 1, 0, 1, 0};
  return w;
}

}  // namespace

TEST_CASE("zero fusion parameters give an even split", "[fusion]") {
  Rng rng(2);
  Tensor c_out = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor q_s = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor q_l = Tensor::uniform({3, 4}, -1, 1, rng);
  FusionParams p;
  p.w_a1 = Tensor::zeros({3});
  p.w_a2 = Tensor::zeros({3});
  auto [w_l, w_s] = compensation_coefficients(c_out, q_s, q_l, p);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(w_l.at(i) == 0.5);
    CHECK(w_s.at(i) == 0.5);
  }

  // identical parameters and identical branch products: still an even split
  FusionParams same;
  same.w_a1 = Tensor::uniform({3}, -1, 1, rng);
  same.w_a2 = same.w_a1.clone();
  auto [wl2, ws2] = compensation_coefficients(c_out, q_s, q_s.clone(), same);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(wl2.at(i) == 0.5);
    CHECK(ws2.at(i) == 0.5);
  }
}

TEST_CASE("coefficients sum to one bit-exactly and stay interior", "[fusion]") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor c_out = Tensor::uniform({4, 6}, -2, 2, rng);
    Tensor q_s = Tensor::uniform({4, 6}, -2, 2, rng);
    Tensor q_l = Tensor::uniform({4, 6}, -2, 2, rng);
    auto p = FusionParams::init(4, rng);
    auto [w_l, w_s] = compensation_coefficients(c_out, q_s, q_l, p);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(w_l.at(i) + w_s.at(i) == 1.0);  // exact, not approximate
      CHECK(w_l.at(i) > 0.0);
      CHECK(w_l.at(i) < 1.0);
      CHECK(w_s.at(i) > 0.0);
      CHECK(w_s.at(i) < 1.0);
    }
  }
}

TEST_CASE("fusion endpoints, midpoint, and row oracle", "[fusion]") {
  Rng rng(11);
  Tensor q_s = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor q_l = Tensor::uniform({3, 4}, -1, 1, rng);

  Tensor ones = Tensor::full({3}, 1.0);
  Tensor zeros = Tensor::zeros({3});
  Tensor q_all_l = fuse(q_s, q_l, {ones, zeros});
  CHECK(q_all_l.values() == q_l.values());

  Tensor halves = Tensor::full({3}, 0.5);
  Tensor q_mid = fuse(q_s, q_l, {halves, halves});
  for (std::size_t i = 0; i < q_mid.numel(); ++i)
    CHECK(q_mid.at(i) == (q_s.at(i) + q_l.at(i)) / 2.0);

  Tensor w_l = Tensor::vector({0.3, 0.9, 0.5});
  Tensor w_s = Tensor::vector({0.7, 0.1, 0.5});
  Tensor q = fuse(q_s, q_l, {w_l, w_s});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK_THAT(q.at(i, j), Catch::Matchers::WithinAbs(
                                 w_l.at(i) * q_l.at(i, j) + w_s.at(i) * q_s.at(i, j),
                                 1e-12));

  // exact homogeneity in the states for fixed coefficients
  Tensor q_scaled = fuse(affine(q_s, 2.0, 0.0), affine(q_l, 2.0, 0.0), {w_l, w_s});
  for (std::size_t i = 0; i < q.numel(); ++i) CHECK(q_scaled.at(i) == 2.0 * q.at(i));
}

TEST_CASE("output layer is a dot-product sigmoid per label", "[fusion]") {
  Rng rng(13);
  Tensor q = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor zero = Tensor::zeros({4});
  Tensor y0 = predict(q, zero);
  for (std::size_t l = 0; l < 3; ++l) CHECK(y0.at(l) == 0.5);

  Tensor w = Tensor::vector({1, 0, 0, 0});
  Tensor q_orth = Tensor::matrix({{0, 1, 2, 3}, {5, 0, 0, 0}, {0, -1, 1, 0}});
  Tensor y = predict(q_orth, w);
  CHECK(y.at(0) == 0.5);  // orthogonal row
  CHECK(y.at(2) == 0.5);

  Tensor wr = Tensor::uniform({4}, -1, 1, rng);
  Tensor yr = predict(q, wr);
  for (std::size_t l = 0; l < 3; ++l) {
    double dot = 0;
    for (std::size_t j = 0; j < 4; ++j) dot += q.at(l, j) * wr.at(j);
    CHECK_THAT(yr.at(l), Catch::Matchers::WithinAbs(1.0 / (1.0 + std::exp(-dot)), 1e-12));
  }
}

TEST_CASE("per-term summation oracle for the loss", "[fusion]") {
  Rng rng(17);
  Tensor yhat = Tensor::uniform({4}, 0.05, 0.95, rng);
  std::vector<double> y{1, 0, 1, 1};
  double expect = 0;
  for (std::size_t l = 0; l < 4; ++l)
    expect -= y[l] * std::log(yhat.at(l)) + (1 - y[l]) * std::log(1 - yhat.at(l));
  CHECK_THAT(bce_loss(yhat, y).at(0), Catch::Matchers::WithinAbs(expect, 1e-12));
  CHECK(bce_loss(yhat, y).at(0) >= 0.0);
}

TEST_CASE("dot-product baselines", "[fusion]") {
  Rng rng(19);
  Tensor q_s = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor q_l = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor ones = Tensor::full({3, 4}, 1.0);
  CHECK(dot_fusion_variant(q_s, q_l, ones, FusionMode::DotS).values() == q_s.values());

  Tensor zeros = Tensor::zeros({3, 4});
  Tensor suppressed = dot_fusion_variant(q_s, q_l, zeros, FusionMode::DotSl);
  for (double v : suppressed.values()) CHECK(v == 0.0);

  Tensor c = Tensor::uniform({3, 4}, -1, 1, rng);
  Tensor sl = dot_fusion_variant(q_s, q_l, c, FusionMode::DotSl);
  for (std::size_t i = 0; i < sl.numel(); ++i)
    CHECK_THAT(sl.at(i),
               Catch::Matchers::WithinAbs(c.at(i) * (q_s.at(i) + q_l.at(i)) / 2.0, 1e-12));

  CHECK_THROWS_AS(dot_fusion_variant(q_s, q_l, c, FusionMode::Gcn), ConfigError);
  CHECK_THROWS_AS(parse_fusion_mode("dot"), ConfigError);
  CHECK(parse_fusion_mode("dot-sl") == FusionMode::DotSl);
}

TEST_CASE("ranking breaks ties by label index", "[fusion]") {
  std::vector<double> scores{0.3, 0.9, 0.3, 0.9};
  auto order = rank_labels(scores);
  CHECK(order == std::vector<std::size_t>{1, 3, 0, 2});

  std::vector<double> flat{0.5, 0.5, 0.5};
  CHECK(rank_labels(flat) == std::vector<std::size_t>{0, 1, 2});
  CHECK(rank_labels(flat) == rank_labels(flat));
}

TEST_CASE("variant wiring matches its definitions", "[fusion]") {
  SECTION("L uses the label branch verbatim") {
    auto w = tiny_world(Variant::L, 5);
    auto out = model_forward_batch(w.params, w.cfg, w.batch, w.table);
    for (const auto& s : out.samples) {
      REQUIRE(s.q_l.defined());
      CHECK(s.q.same_node(s.q_l));
      CHECK_FALSE(s.q_s.defined());
    }
  }

  SECTION("S sends no gradient to the label branch") {
    auto w = tiny_world(Variant::S, 5);
    w.params.zero_grad();
    {
      Tape tape;
      auto out = model_forward_batch(w.params, w.cfg, w.batch, w.table);
      tape.backward(out.loss);
    }
    CHECK_FALSE(w.params.label_proj.has_grad());
    CHECK_FALSE(w.params.fusion.w_a1.has_grad());
    CHECK_FALSE(w.params.gcn.w[0].has_grad());
    CHECK_FALSE(w.params.sl_gate.has_grad());
    // while the self branch does learn
    REQUIRE(w.params.attention.w_s1.has_grad());
    double norm = 0;
    for (std::size_t i = 0; i < w.params.attention.w_s1.numel(); ++i)
      norm += std::abs(w.params.attention.w_s1.grad_at(i));
    CHECK(norm > 0.0);
  }

  SECTION("identical seeds give identical full-model outputs") {
    auto w1 = tiny_world(Variant::SLG, 5);
    auto w2 = tiny_world(Variant::SLG, 5);
    auto o1 = model_forward_batch(w1.params, w1.cfg, w1.batch, w1.table);
    auto o2 = model_forward_batch(w2.params, w2.cfg, w2.batch, w2.table);
    CHECK(o1.loss.at(0) == o2.loss.at(0));
    for (std::size_t i = 0; i < o1.samples.size(); ++i)
      CHECK(o1.samples[i].y_hat.values() == o2.samples[i].y_hat.values());
  }

  SECTION("every gated variant keeps its coefficient pair normalized") {
    for (Variant v : {Variant::SL, Variant::SG, Variant::LG, Variant::SLG}) {
      auto w = tiny_world(v, 7);
      auto out = model_forward_batch(w.params, w.cfg, w.batch, w.table);
      for (const auto& s : out.samples) {
        REQUIRE(s.w_l.defined());
        for (std::size_t i = 0; i < 3; ++i) CHECK(s.w_l.at(i) + s.w_s.at(i) == 1.0);
      }
    }
  }

  SECTION("dot fusion modes require the full variant") {
    ModelConfig cfg;
    cfg.n_labels = 3;
    cfg.variant = Variant::S;
    cfg.fusion = FusionMode::DotS;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.variant = Variant::SLG;
    CHECK_NOTHROW(cfg.validate());

    auto w = tiny_world(Variant::SLG, 5, FusionMode::DotSl);
    auto out = model_forward_batch(w.params, w.cfg, w.batch, w.table);
    CHECK(out.samples[0].y_hat.extent(0) == 3);
    CHECK_FALSE(out.samples[0].w_l.defined());  // no coefficients in dot mode
  }

  SECTION("unknown variant names are rejected") {
    CHECK_THROWS_AS(parse_variant("SLX"), ConfigError);
    CHECK(parse_variant("SG") == Variant::SG);
  }
}

TEST_CASE("full model passes the finite-difference check", "[fusion]") {
  auto w = tiny_world(Variant::SLG, 67);
  auto named = w.params.named();
  REQUIRE(named.size() == 33);

  // The graph path damps some gradients to ~1e-9, where difference noise at a
  // small step would swamp them; a 1e-3 step keeps the noise well under
  // tolerance. That is only safe while the leaky pre-activations sit far from
  // their kink, so pin that property of the chosen seed first.
  double kink_margin = 1e9;
  Tensor c = w.params.e_l;
  for (const auto& wt : w.params.gcn.w) {
    Tensor pre = matmul(matmul(w.params.adjacency, c), wt);
    for (double v : pre.values()) kink_margin = std::min(kink_margin, std::abs(v));
    c = leaky_relu(pre, w.cfg.leaky_slope);
  }
  REQUIRE(kink_margin > 5e-3);

  auto loss_fn = [&] {
    return model_forward_batch(w.params, w.cfg, w.batch, w.table).loss;
  };
  GradChecker checker(named, loss_fn);
  auto report = checker.run(1e-3, 0);  // every coordinate
  INFO("max relative error " << report.max_rel_err);
  CHECK(report.checked == 186);
  CHECK(report.ok(1e-4));
}
