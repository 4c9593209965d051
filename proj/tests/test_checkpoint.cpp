#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pmlc/checkpoint.hpp"
#include "pmlc/synthetic.hpp"
#include "pmlc/train.hpp"

using namespace pmlc;

namespace {

std::filesystem::path temp_file(const char* stem) {
  return std::filesystem::temp_directory_path() /
         (std::string("pmlc-test-") + stem + "-" +
          std::to_string(::getpid()) + ".bin");
}

TrainConfig nondefault_config() {
  TrainConfig t;
  t.model.n_labels = 5;
  t.model.d1 = 12;
  t.model.d2 = 7;
  t.model.d3 = 6;
  t.model.d4 = 9;
  t.model.gcn_layers = 3;
  t.model.u = 0.35;
  t.model.binarize_tau = 0.075;
  t.model.leaky_slope = 0.2;
  t.model.variant = Variant::SLG;
  t.model.fusion = FusionMode::DotSl;
  t.epochs_max = 17;
  t.patience = 3;
  t.batch_size = 11;
  t.lr = 0.0125;
  t.seed = 99;
  t.folds = 4;
  t.split_num = 7;
  t.split_den = 2;
  t.m_max = 23;
  t.jobs = 2;
  return t;
}

struct TrainedWorld {
  SyntheticCorpus corpus;
  EmbeddingTable table;
  TrainConfig cfg;
  TrainRun run;
};

TrainedWorld trained_world(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_samples = 20;
  spec.n_labels = 4;
  spec.n_pairs = 1;
  spec.n_fillers = 8;
  spec.dim = 8;
  spec.seed = seed;
  TrainedWorld w{generate_synthetic(spec), EmbeddingTable{}, {}, {}};
  w.table = synthetic_table(w.corpus);
  w.table.ensure_oov(seed);

  w.cfg.model.n_labels = 4;
  w.cfg.model.d1 = 8;
  w.cfg.model.d2 = 4;
  w.cfg.model.d3 = 4;
  w.cfg.model.d4 = 4;
  w.cfg.model.gcn_layers = 2;
  w.cfg.batch_size = 8;
  w.cfg.m_max = 16;
  w.cfg.lr = 0.01;
  w.cfg.epochs_max = 2;
  w.cfg.seed = seed;
  w.run = train_single(w.corpus.samples, w.corpus.vocab, w.table, w.cfg);
  return w;
}

}  // namespace

TEST_CASE("config text round-trips every field", "[checkpoint]") {
  TrainConfig t = nondefault_config();
  TrainConfig back = parse_train_config(serialize_config(t), "test");

  CHECK(back.model.n_labels == t.model.n_labels);
  CHECK(back.model.d1 == t.model.d1);
  CHECK(back.model.d2 == t.model.d2);
  CHECK(back.model.d3 == t.model.d3);
  CHECK(back.model.d4 == t.model.d4);
  CHECK(back.model.gcn_layers == t.model.gcn_layers);
  CHECK(back.model.u == t.model.u);
  CHECK(back.model.binarize_tau == t.model.binarize_tau);
  CHECK(back.model.leaky_slope == t.model.leaky_slope);
  CHECK(back.model.variant == t.model.variant);
  CHECK(back.model.fusion == t.model.fusion);
  CHECK(back.epochs_max == t.epochs_max);
  CHECK(back.patience == t.patience);
  CHECK(back.batch_size == t.batch_size);
  CHECK(back.lr == t.lr);
  CHECK(back.seed == t.seed);
  CHECK(back.folds == t.folds);
  CHECK(back.split_num == t.split_num);
  CHECK(back.split_den == t.split_den);
  CHECK(back.m_max == t.m_max);
  CHECK(back.jobs == t.jobs);
}

TEST_CASE("config parsing is strict about keys and numbers", "[checkpoint]") {
  RunConfig cfg;
  CHECK_THROWS_AS(parse_config_text(cfg, "bogus=1\n", "test"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(cfg, "d1=twelve\n", "test"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(cfg, "lr=0.1x\n", "test"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(cfg, "just a line\n", "test"), ConfigError);

  // comments, blank lines, padding, and later-wins overrides
  parse_config_text(cfg,
                    "# a comment\n"
                    "\n"
                    "  d1 = 32\n"
                    "d1=64\r\n"
                    "variant=SG\n"
                    "data=corpus.jsonl\n",
                    "test");
  CHECK(cfg.train.model.d1 == 64);
  CHECK(cfg.train.model.variant == Variant::SG);
  CHECK(cfg.data == "corpus.jsonl");
}

TEST_CASE("checkpoint files round-trip bit-identically", "[checkpoint]") {
  auto w = trained_world(51);
  Checkpoint cp = make_checkpoint(w.cfg, w.corpus.vocab, w.run.params,
                                  w.table.oov());
  const auto path = temp_file("roundtrip");
  save_checkpoint(path.string(), cp);
  Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);

  CHECK(back.vocab == w.corpus.vocab);
  CHECK(serialize_config(back.config) == serialize_config(cp.config));
  REQUIRE(back.tensors.size() == cp.tensors.size());
  for (std::size_t i = 0; i < cp.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == cp.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == cp.tensors[i].second.shape());
    CHECK(back.tensors[i].second.values() == cp.tensors[i].second.values());
  }
  CHECK(oov_from_checkpoint(back) == w.table.oov());
}

TEST_CASE("restored parameters evaluate bit-identically", "[checkpoint]") {
  auto w = trained_world(53);
  std::vector<std::size_t> all(w.corpus.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto before = evaluate_subset(w.run.params, w.cfg.model, w.corpus.samples, all,
                                w.table, w.cfg.batch_size, w.cfg.m_max);

  const auto path = temp_file("eval");
  save_checkpoint(path.string(),
                  make_checkpoint(w.cfg, w.corpus.vocab, w.run.params, w.table.oov()));
  Checkpoint cp = load_checkpoint(path.string());
  std::filesystem::remove(path);

  ModelParams restored = params_from_checkpoint(cp);
  auto after = evaluate_subset(restored, cp.config.model, w.corpus.samples, all,
                               w.table, cp.config.batch_size, cp.config.m_max);
  CHECK(metric_values(before) == metric_values(after));

  // frozen tensors restored too, and loaded parameters are optimizer-ready
  CHECK(restored.e_l.values() == w.run.params.e_l.values());
  CHECK(restored.adjacency.values() == w.run.params.adjacency.values());
  CHECK(restored.label_proj.requires_grad());
  CHECK_FALSE(restored.adjacency.requires_grad());
}

TEST_CASE("foreign and damaged files are rejected", "[checkpoint]") {
  const auto path = temp_file("damaged");

  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);

  auto w = trained_world(57);
  Checkpoint cp = make_checkpoint(w.cfg, w.corpus.vocab, w.run.params, w.table.oov());
  save_checkpoint(path.string(), cp);

  SECTION("version bump") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char vers[4] = {9, 0, 0, 0};
    f.write(vers, 4);
    f.close();
    CHECK_THROWS_MATCHES(load_checkpoint(path.string()), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("version 9")));
  }

  SECTION("truncation") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path.string()), ParseError);
  }

  SECTION("missing file") {
    CHECK_THROWS_AS(load_checkpoint(path.string() + ".nope"), IoError);
  }

  std::filesystem::remove(path);
}

TEST_CASE("parameter reconstruction validates names and shapes", "[checkpoint]") {
  auto w = trained_world(59);
  Checkpoint cp = make_checkpoint(w.cfg, w.corpus.vocab, w.run.params, w.table.oov());

  SECTION("missing tensor") {
    Checkpoint clipped = cp;
    clipped.tensors.erase(clipped.tensors.begin());  // drop one LSTM gate
    CHECK_THROWS_MATCHES(params_from_checkpoint(clipped), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("no tensor")));
  }

  SECTION("shape mismatch") {
    Checkpoint bent = cp;
    for (auto& [name, t] : bent.tensors)
      if (name == "w_o") t = Tensor::zeros({3});
    CHECK_THROWS_MATCHES(params_from_checkpoint(bent), ParseError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("w_o")));
  }

  SECTION("config and tensors disagree") {
    Checkpoint wrong = cp;
    wrong.config.model.d2 = 16;  // implies different LSTM shapes
    CHECK_THROWS_AS(params_from_checkpoint(wrong), Error);
  }
}
