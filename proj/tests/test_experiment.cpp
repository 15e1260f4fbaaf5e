#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "docnade/error.hpp"
#include "docnade/experiment.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace docnade;

namespace {

ExperimentConfig tiny_config(const std::filesystem::path& out, Mode mode, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.out = out;
  c.mode = mode;
  SyntheticSpec s;
  s.vocab_size = 30;
  s.source_docs = 60;
  s.source_min_len = 20;
  s.source_max_len = 30;
  s.target_docs = 15;
  s.validation_docs = 10;
  s.test_docs = 20;
  s.seed = seed;
  c.synthetic = s;
  c.train_config.hidden_size = 3;
  c.train_config.epochs = 4;
  c.train_config.learning_rate = 0.01;
  c.train_config.seed = seed;
  c.lambda_grid = {0.5};
  c.gamma_grid = {0.01};
  c.fractions = {0.1, 0.5, 1.0};
  return c;
}

bool has_line(const std::vector<std::string>& lines, const std::string& prefix) {
  return std::any_of(lines.begin(), lines.end(), [&](const auto& l) { return l.rfind(prefix, 0) == 0; });
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (Mode m : {Mode::kBaseline, Mode::kLvt, Mode::kGvt, Mode::kMvt, Mode::kZeroShot, Mode::kDataAugment}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_mode("bogus"), ConfigError);
}

TEST_CASE("config parsing") {
  Settings s = Settings::parse(
      "train = data/t.txt\ntest = data/test.txt\nout = run\nmode = mvt\nH = 7\nepochs = 3\n"
      "lambda_grid = 0.1, 1\nsource.news.corpus = news.txt\nsource.news.gamma_grid = 0.5\n"
      "source.glove.embeddings = glove.txt\n");
  ExperimentConfig c = ExperimentConfig::from_settings(s, "/base");
  CHECK(c.train == std::filesystem::path("/base/data/t.txt"));
  CHECK(c.mode == Mode::kMvt);
  CHECK(c.train_config.hidden_size == 7);
  CHECK(c.train_config.epochs == 3);
  CHECK(c.lambda_grid == std::vector<double>{0.1, 1.0});
  REQUIRE(c.sources.size() == 2);
  CHECK(c.sources[0].id == "news");
  CHECK(c.sources[0].gamma_grid == std::vector<double>{0.5});
  CHECK(c.sources[1].embeddings == std::filesystem::path("/base/glove.txt"));
  CHECK_NOTHROW(c.validate());

  CHECK_THROWS_AS(ExperimentConfig::from_settings(Settings::parse("bogus = 1\n")), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_settings(Settings::parse("source.a.nope = 1\n")), ConfigError);

  ExperimentConfig zs = c;
  zs.mode = Mode::kZeroShot;
  CHECK_THROWS_AS(zs.validate(), ConfigError);  // the embedding source is not a corpus
  ExperimentConfig empty = c;
  empty.lambda_grid.clear();
  CHECK_THROWS_AS(empty.validate(), ConfigError);
}

TEST_CASE("candidate grids") {
  std::vector<SourceConfig> two = {{"a", "x", {}, {}, {}, {}}, {"b", "y", {}, {}, {}, {}}};
  CHECK(make_candidates(Mode::kBaseline, two, {0.1}, {0.1}).size() == 1);
  auto lvt = make_candidates(Mode::kLvt, two, {0.1, 0.5, 1.0}, {0.1, 0.01});
  REQUIRE(lvt.size() == 3);
  CHECK(lvt[1][0].lambda == 0.5);
  CHECK(lvt[1][1].lambda == 0.5);
  CHECK(lvt[1][0].gamma == 0.0);
  CHECK(make_candidates(Mode::kGvt, two, {0.1, 0.5}, {0.1, 0.01}).size() == 2);
  CHECK(make_candidates(Mode::kMvt, two, {0.1, 0.5}, {0.1, 0.01, 0.001}).size() == 6);

  two[1].lambda_grid = std::vector<double>{1.0, 2.0};
  auto per = make_candidates(Mode::kLvt, two, {0.1, 0.5, 1.0}, {0.1});
  CHECK(per.size() == 6);
}

TEST_CASE("grid search") {
  SyntheticSpec spec;
  spec.vocab_size = 25;
  spec.target_docs = 20;
  spec.validation_docs = 15;
  auto gen = generate_synthetic(spec);
  Vocabulary v = build_vocabulary(gen.target_train.docs, 1, 100);
  Corpus train = encode_corpus(gen.target_train.docs, {}, v, Split::kTrain);
  Corpus valid = encode_corpus(gen.target_validation.docs, {}, v, Split::kValidation);
  TrainConfig cfg;
  cfg.hidden_size = 3;
  cfg.epochs = 10;
  cfg.learning_rate = 0.01;

  std::mt19937_64 rng(4);
  Eigen::MatrixXd Z = oracle::random_matrix(3, static_cast<int>(v.size()), rng, 0.5);
  std::vector<KnowledgeBase> kbs = {{"noise", v, Z, Z}};
  GridSearchInput in{&train, &valid, cfg, &kbs, true, true, false};

  SUBCASE("single candidate") {
    auto r = grid_search(in, {{{"noise", 0.0, 0.01}}});
    CHECK(r.best == 0);
    CHECK(r.table.size() == 1);
  }
  SUBCASE("heavy imitation of random topics loses") {
    auto r = grid_search(in, {{{"noise", 0.0, 0.0}}, {{"noise", 0.0, 10.0}}});
    REQUIRE(r.table.size() == 2);
    for (const auto& row : r.table) CHECK(std::isfinite(row.validation_ppl));
    CHECK(r.best == 0);
    CHECK(r.table[0].validation_ppl < r.table[1].validation_ppl);
    CHECK_FALSE(r.best_context.has_value());
    const auto min = std::min_element(r.table.begin(), r.table.end(),
                                      [](auto a, auto b) { return a.validation_ppl < b.validation_ppl; });
    CHECK(r.table[r.best].validation_ppl == min->validation_ppl);
  }
  SUBCASE("ties keep the first candidate") {
    auto r = grid_search(in, {{{"noise", 0.0, 0.0}}, {{"noise", 0.0, 0.0}}});
    CHECK(r.table[0].validation_ppl == r.table[1].validation_ppl);
    CHECK(r.best == 0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(grid_search(in, {}), ConfigError);
    GridSearchInput no_valid = in;
    no_valid.validation = nullptr;
    CHECK_THROWS_AS(grid_search(no_valid, {{}}), ConfigError);
  }
}

TEST_CASE("baseline with zero learning rate reports the initial model") {
  test_util::TempDir dir;
  ExperimentConfig c = tiny_config(dir.path() / "run", Mode::kBaseline);
  c.train_config.epochs = 1;
  c.train_config.learning_rate = 0.0;
  ExperimentResult r = run_experiment(c);
  ModelParams init = init_params(3, static_cast<Eigen::Index>(r.model.vocabulary.size()), 1, c.train_config.init_scale);
  CHECK(r.model.params == init);
  Corpus test = load_corpus_file(dir.path() / "run" / "data" / "target.test.txt", {}, r.model.vocabulary,
                                 std::vector<std::string>{"t0", "t1", "t2"});
  CHECK(r.report.ppl == doctest::Approx(perplexity(init, test)).epsilon(1e-12));
  for (const char* f : {"report.txt", "selection.tsv", "metrics.tsv", "topics.txt", "audit.log", "model/W.mat"}) {
    CHECK(std::filesystem::exists(dir.path() / "run" / f));
  }
  EvalReport parsed = EvalReport::parse(test_util::read_file(dir.path() / "run" / "report.txt"));
  CHECK(parsed.serialize() == r.report.serialize());
  CHECK_NOTHROW(parsed.validate());
}

TEST_CASE("mvt with zero weights reproduces baseline") {
  test_util::TempDir dir;
  ExperimentConfig base = tiny_config(dir.path() / "base", Mode::kBaseline, 3);
  ExperimentConfig mvt = tiny_config(dir.path() / "mvt", Mode::kMvt, 3);
  mvt.lambda_grid = {0.0};
  mvt.gamma_grid = {0.0};
  auto a = run_experiment(base);
  auto b = run_experiment(mvt);
  CHECK(a.report.serialize() == b.report.serialize());
  CHECK(a.model.params == b.model.params);
}

TEST_CASE("transfer experiments record their setup") {
  test_util::TempDir dir;
  ExperimentConfig c = tiny_config(dir.path() / "run", Mode::kMvt, 2);
  c.gamma_grid = {0.01, 0.1};
  auto r = run_experiment(c);
  CHECK(r.selection.size() == 2);
  CHECK(std::filesystem::exists(dir.path() / "run" / "kb" / "synthetic" / "Z.mat"));
  CHECK(has_line(r.audit, "source-input source:synthetic"));

  ModelBundle loaded = load_model(dir.path() / "run" / "model");
  CHECK(loaded.params == r.model.params);
  auto ctx = load_transfer_context(loaded, dir.path() / "run" / "model");
  REQUIRE(ctx.has_value());
  CHECK(ctx->lvt());
  CHECK(ctx->gvt());
  CHECK(ctx->spec().sources[0].gamma == r.selection[r.selected].weights[0].gamma);

  // Re-evaluating the saved bundle reproduces the reported perplexity.
  Corpus test = load_corpus_file(dir.path() / "run" / "data" / "target.test.txt", {}, loaded.vocabulary,
                                 std::vector<std::string>{"t0", "t1", "t2"});
  CHECK(perplexity(loaded.params, test, &*ctx) == r.report.ppl);
}

TEST_CASE("experiments are reproducible") {
  test_util::TempDir dir;
  auto a = run_experiment(tiny_config(dir.path() / "a", Mode::kGvt, 5));
  auto b = run_experiment(tiny_config(dir.path() / "b", Mode::kGvt, 5));
  CHECK(a.report.serialize() == b.report.serialize());
  for (const char* f : {"model/W.mat", "model/U.mat", "model/A.synthetic.mat", "model/meta.txt", "report.txt",
                        "selection.tsv", "kb/synthetic/E.mat"}) {
    CHECK(test_util::read_file(dir.path() / "a" / f) == test_util::read_file(dir.path() / "b" / f));
  }
}

TEST_CASE("zero-shot never trains on the target train split") {
  test_util::TempDir dir;
  auto r = run_experiment(tiny_config(dir.path() / "run", Mode::kZeroShot));
  CHECK_FALSE(has_line(r.audit, "train-input target:train"));
  CHECK(has_line(r.audit, "train-input source:synthetic"));
  CHECK(r.training_documents == 60);
  CHECK(test_util::read_file(dir.path() / "run" / "audit.log").find("train-input target") == std::string::npos);
}

TEST_CASE("data-augment trains on sources plus target") {
  test_util::TempDir dir;
  auto r = run_experiment(tiny_config(dir.path() / "run", Mode::kDataAugment));
  CHECK(has_line(r.audit, "train-input target:train"));
  CHECK(has_line(r.audit, "train-input source:synthetic"));
  // Synthetic documents never lose every token under the union vocabulary.
  CHECK(r.training_documents == 60 + 15);
}

TEST_CASE("vocabulary union overflow is an error") {
  test_util::TempDir dir;
  ExperimentConfig c = tiny_config(dir.path() / "run", Mode::kDataAugment);
  c.max_size = 5;
  CHECK_THROWS_AS(run_experiment(c), Error);
}

TEST_CASE("missing inputs carry stage context") {
  test_util::TempDir dir;
  ExperimentConfig c;
  c.out = dir.path() / "run";
  c.train = dir.path() / "missing.txt";
  c.test = dir.path() / "missing.txt";
  try {
    run_experiment(c);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("reading target train") != std::string::npos);
  }
}

TEST_CASE("config fingerprint is stable") {
  CHECK(config_fingerprint("abc") == config_fingerprint("abc"));
  CHECK(config_fingerprint("abc") != config_fingerprint("abd"));
  CHECK(config_fingerprint("").size() == 16);
}
