#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "pmlc/synthetic.hpp"
#include "pmlc/train.hpp"

using namespace pmlc;

namespace {

SyntheticCorpus small_corpus(std::size_t n, std::size_t labels, double noise,
                             std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = n;
  spec.n_labels = labels;
  spec.n_pairs = labels / 4;
  spec.n_fillers = 8;
  spec.dim = 8;
  spec.noise = noise;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TrainConfig small_config(std::size_t labels) {
  TrainConfig cfg;
  cfg.model.n_labels = labels;
  cfg.model.d1 = 8;
  cfg.model.d2 = 4;
  cfg.model.d3 = 4;
  cfg.model.d4 = 4;
  cfg.model.gcn_layers = 1;
  cfg.batch_size = 16;
  cfg.m_max = 16;
  return cfg;
}

}  // namespace

TEST_CASE("fresh optimizer leaves parameters unchanged without gradients", "[train]") {
  Tensor theta = Tensor::vector({1.5, -2.0});
  theta.set_requires_grad(true);
  Adam opt({{"theta", theta}});

  opt.step();  // no gradient at all
  CHECK(theta.at(0) == 1.5);
  CHECK(theta.at(1) == -2.0);

  theta.zero_grad();
  theta.accumulate_grad_at(0, 0.0);  // explicit zero gradient
  opt.step();
  CHECK(theta.at(0) == 1.5);
  CHECK(theta.at(1) == -2.0);
  CHECK(opt.steps() == 2);
}

TEST_CASE("first step moves by the learning rate in the gradient direction", "[train]") {
  Tensor theta = Tensor::vector({0.7, 0.7});
  theta.set_requires_grad(true);
  Adam opt({{"theta", theta}});
  theta.accumulate_grad_at(0, 3.0);
  theta.accumulate_grad_at(1, -0.02);
  opt.step();
  // bias correction makes step one exactly lr·g/(|g|+ε)
  CHECK_THAT(theta.at(0), Catch::Matchers::WithinAbs(0.7 - 0.001, 1e-9));
  CHECK_THAT(theta.at(1), Catch::Matchers::WithinAbs(0.7 + 0.001, 1e-9));
}

TEST_CASE("ten steps on a quadratic match a hand-stepped trace", "[train]") {
  Tensor theta = Tensor::vector({1.0});
  theta.set_requires_grad(true);
  Adam opt({{"theta", theta}});

  double x = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 10; ++t) {
    theta.zero_grad();
    {
      Tape tape;
      Tensor loss = mul(theta, theta);
      tape.backward(loss);
    }
    opt.step();

    const double g = 2.0 * x;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double m_hat = m / (1 - std::pow(b1, t));
    const double v_hat = v / (1 - std::pow(b2, t));
    x -= lr * m_hat / (std::sqrt(v_hat) + eps);
    CHECK_THAT(theta.at(0), Catch::Matchers::WithinAbs(x, 1e-12));
  }
}

TEST_CASE("a non-finite gradient aborts the step naming the parameter", "[train]") {
  Tensor theta = Tensor::vector({1e-200, 1.0});
  theta.set_requires_grad(true);
  Adam opt({{"theta", theta}});
  theta.zero_grad();
  {
    Tape tape;
    Tensor loss = sum(div(Tensor::full({2}, 1.0), theta));  // d/dθ = −1/θ² overflows
    tape.backward(loss);
  }
  CHECK_THROWS_MATCHES(opt.step(), TrainingError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("theta[0]")));
}

TEST_CASE("frozen model stops after patience runs out", "[train]") {
  auto corpus = small_corpus(18, 4, 0.0, 3);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.0;  // frozen: validation never improves after epoch one
  cfg.patience = 1;
  cfg.epochs_max = 50;
  cfg.seed = 11;

  auto run = train_single(corpus.samples, corpus.vocab, table, cfg);
  CHECK(run.outcome.history.size() == 2);
  CHECK(run.outcome.best_epoch == 1);
  CHECK(run.outcome.history[0].val_avg_prec == run.outcome.history[1].val_avg_prec);
}

TEST_CASE("identical seeds give bit-identical traces", "[train]") {
  auto corpus = small_corpus(18, 4, 0.0, 5);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.01;
  cfg.epochs_max = 3;
  cfg.patience = 10;
  cfg.seed = 21;

  auto a = train_single(corpus.samples, corpus.vocab, table, cfg);
  auto b = train_single(corpus.samples, corpus.vocab, table, cfg);
  REQUIRE(a.outcome.history.size() == b.outcome.history.size());
  for (std::size_t e = 0; e < a.outcome.history.size(); ++e) {
    CHECK(a.outcome.history[e].train_loss == b.outcome.history[e].train_loss);
    CHECK(a.outcome.history[e].val_avg_prec == b.outcome.history[e].val_avg_prec);
  }

  auto named_a = a.params.named();
  auto named_b = b.params.named();
  for (std::size_t i = 0; i < named_a.size(); ++i)
    CHECK(named_a[i].second.values() == named_b[i].second.values());
}

TEST_CASE("returned parameters are the best epoch's snapshot", "[train]") {
  auto corpus = small_corpus(18, 4, 0.3, 7);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.02;
  cfg.epochs_max = 6;
  cfg.patience = 20;
  cfg.seed = 31;

  auto full = train_single(corpus.samples, corpus.vocab, table, cfg);
  REQUIRE(full.outcome.best_epoch >= 1);

  // replaying the same run but halting at the best epoch must land on the
  // same snapshot: the best prefix of a trace is the trace's best
  TrainConfig replay = cfg;
  replay.epochs_max = full.outcome.best_epoch;
  auto head = train_single(corpus.samples, corpus.vocab, table, replay);
  CHECK(head.outcome.best_epoch == full.outcome.best_epoch);

  auto named_full = full.params.named();
  auto named_head = head.params.named();
  for (std::size_t i = 0; i < named_full.size(); ++i)
    CHECK(named_full[i].second.values() == named_head[i].second.values());
}

TEST_CASE("separable corpus is learned to near-perfect ranking", "[train]") {
  SyntheticSpec spec;
  spec.n_samples = 64;
  spec.n_labels = 8;
  spec.n_pairs = 2;
  spec.dim = 16;
  spec.seed = 9;
  auto corpus = generate_synthetic(spec);
  auto table = synthetic_table(corpus);

  TrainConfig cfg;
  cfg.model.n_labels = 8;
  cfg.model.d1 = 16;
  cfg.model.d2 = 8;
  cfg.model.d3 = 8;
  cfg.model.d4 = 8;
  cfg.model.gcn_layers = 1;
  cfg.batch_size = 16;
  cfg.m_max = 16;
  cfg.lr = 0.02;
  cfg.epochs_max = 200;
  cfg.patience = 200;  // run to the epoch budget
  cfg.seed = 41;

  SECTION("held-out validation reaches near-perfect ranking") {
    auto run = train_single(corpus.samples, corpus.vocab, table, cfg);
    CHECK(run.outcome.best_val_avg_prec >= 0.99);
  }

  SECTION("training set itself is mastered") {
    // validate on the training set so the kept snapshot is the train-best one
    std::vector<std::size_t> all(corpus.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto stats = count_cooccurrence(corpus.samples, 8);
    Tensor adjacency = revise_adjacency(stats, cfg.model.u);
    Tensor e_l = embed_labels(corpus.vocab, table);
    Rng init_rng = Rng::substream(cfg.seed, "init");
    auto params = ModelParams::init(cfg.model, e_l, adjacency, init_rng);
    Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle");

    auto out = train_fold(params, cfg, corpus.samples, all, all, table, shuffle_rng);
    auto tm = evaluate_subset(params, cfg.model, corpus.samples, all, table,
                              cfg.batch_size, cfg.m_max);
    CHECK(tm.p_at_1 == 1.0);
    CHECK(tm.avg_prec >= 0.99);
    CHECK(out.history.back().train_loss < 0.05 * out.history.front().train_loss);
  }
}

TEST_CASE("numeric blow-ups surface as training errors with context", "[train]") {
  auto table = EmbeddingTable::from_rows(
      {"boom", "ok"},
      {std::numeric_limits<double>::infinity(), 0, 0, 0, 0.1, 0.2, -0.1, 0.3}, 4);
  table.ensure_oov(3);  // label names fall back to it
  auto vocab = LabelVocabulary::from_names({"x", "y"});
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.text = "boom ok";
    s.tokens = {"boom", "ok"};
    s.labels = {1.0, 0.0};
    samples.push_back(s);
  }

  TrainConfig cfg = small_config(2);
  cfg.model.d1 = 4;
  cfg.seed = 3;
  CHECK_THROWS_MATCHES(
      train_single(samples, vocab, table, cfg), TrainingError,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("epoch 1, batch 1")));
}

TEST_CASE("scores align with indices and repeat evaluations exactly", "[train]") {
  auto corpus = small_corpus(12, 4, 0.0, 13);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.01;
  cfg.epochs_max = 1;
  cfg.seed = 17;
  auto run = train_single(corpus.samples, corpus.vocab, table, cfg);

  std::vector<std::size_t> indices{7, 2, 9, 0, 5};
  auto scores = predict_scores(run.params, cfg.model, corpus.samples, indices,
                               table, 3, cfg.m_max);
  REQUIRE(scores.size() == indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto solo = predict_scores(run.params, cfg.model, corpus.samples,
                               {indices[i]}, table, 1, cfg.m_max);
    CHECK(scores[i] == solo[0]);  // batch padding never changes a row
  }

  auto m1 = evaluate_subset(run.params, cfg.model, corpus.samples, indices,
                            table, 3, cfg.m_max);
  auto m2 = evaluate_subset(run.params, cfg.model, corpus.samples, indices,
                            table, 3, cfg.m_max);
  CHECK(metric_values(m1) == metric_values(m2));

  CHECK_THROWS_AS(predict_scores(run.params, cfg.model, corpus.samples, {},
                                 table, 3, cfg.m_max),
                  InputError);
}

TEST_CASE("cross-validation reports per fold and an exact mean", "[train]") {
  auto corpus = small_corpus(24, 4, 0.3, 19);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.01;
  cfg.epochs_max = 2;
  cfg.folds = 3;
  cfg.seed = 23;

  auto cv = cross_validate(corpus.samples, corpus.vocab, table, cfg);
  REQUIRE(cv.per_fold.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) CHECK(cv.per_fold[f].fold == f);

  double mean_ap = 0;
  for (const auto& r : cv.per_fold) mean_ap += r.test.avg_prec;
  mean_ap /= 3.0;
  CHECK_THAT(cv.mean.avg_prec, Catch::Matchers::WithinAbs(mean_ap, 1e-12));

  // graph statistics come from each fold's own training portion
  bool adjacency_differs = false;
  for (std::size_t i = 0; i < cv.per_fold[0].adjacency.numel(); ++i)
    if (cv.per_fold[0].adjacency.at(i) != cv.per_fold[1].adjacency.at(i))
      adjacency_differs = true;
  CHECK(adjacency_differs);
}

TEST_CASE("fold parallelism changes nothing but wall time", "[train]") {
  auto corpus = small_corpus(24, 4, 0.0, 29);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.lr = 0.01;
  cfg.epochs_max = 2;
  cfg.folds = 3;
  cfg.seed = 37;

  cfg.jobs = 1;
  auto serial = cross_validate(corpus.samples, corpus.vocab, table, cfg);
  cfg.jobs = 3;
  auto parallel = cross_validate(corpus.samples, corpus.vocab, table, cfg);

  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(metric_values(serial.per_fold[f].test) ==
          metric_values(parallel.per_fold[f].test));
    CHECK(serial.per_fold[f].best_epoch == parallel.per_fold[f].best_epoch);
  }
  CHECK(metric_values(serial.mean) == metric_values(parallel.mean));
}

TEST_CASE("invalid training configurations are rejected", "[train]") {
  auto corpus = small_corpus(6, 4, 0.0, 43);
  auto table = synthetic_table(corpus);

  TrainConfig cfg = small_config(4);
  cfg.folds = 10;  // more folds than samples
  CHECK_THROWS_AS(cross_validate(corpus.samples, corpus.vocab, table, cfg),
                  ConfigError);

  TrainConfig bad = small_config(4);
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(4);
  bad.lr = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(4);
  bad.epochs_max = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config(4);
  bad.jobs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
