#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "docnade/eval.hpp"
#include "docnade/model.hpp"
#include "docnade/transfer.hpp"
#include "test_util.hpp"

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(const test_util::TempDir& dir, const std::string& args) {
  const auto out = dir.path() / "stdout.txt";
  const auto err = dir.path() / "stderr.txt";
  const std::string cmd = std::string("\"") + DOCNADE_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, test_util::read_file(out), test_util::read_file(err)};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli pipeline") {
  test_util::TempDir dir;
  const auto d = dir.path();
  test_util::write_file(d / "synth.conf", "synth.vocab_size = 40\nsynth.source_docs = 80\n");

  REQUIRE(cli(dir, "synth --config " + q(d / "synth.conf") + " --seed 3 --out " + q(d / "data")).status == 0);
  CHECK(std::filesystem::exists(d / "data" / "target.test.txt"));

  Run source = cli(dir, "train --train " + q(d / "data" / "source.txt") + " -H 4 --epochs 5 --lr 0.01 --out " +
                            q(d / "source_model"));
  REQUIRE_MESSAGE(source.status == 0, source.err);

  SUBCASE("topics and neighbors") {
    Run topics = cli(dir, "topics --model " + q(d / "source_model") + " --n 5");
    REQUIRE(topics.status == 0);
    CHECK(count_lines(topics.out) == 4);
    std::istringstream first(topics.out);
    std::string t, idx;
    first >> t >> idx;
    CHECK(t == "topic");
    CHECK(idx == "0:");
    std::string line;
    std::getline(std::istringstream(topics.out), line);
    std::istringstream words(line);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    CHECK(n == 2 + 5);

    auto bundle = docnade::load_model(d / "source_model");
    const std::string word = bundle.vocabulary.token(0);
    Run nn = cli(dir, "nn --model " + q(d / "source_model") + " --word " + word + " --n 5");
    REQUIRE(nn.status == 0);
    CHECK(count_lines(nn.out) == 5);
    CHECK(nn.out.find(word + "\t") == std::string::npos);

    Run missing = cli(dir, "nn --model " + q(d / "source_model") + " --word notaword --n 5");
    CHECK(missing.status != 0);
    CHECK(count_lines(missing.err) == 1);
  }

  SUBCASE("knowledge transfer and evaluation") {
    REQUIRE(cli(dir, "build-kb --model " + q(d / "source_model") + " --id news --out " + q(d / "kb")).status == 0);
    auto kb = docnade::load_kb(d / "kb");
    CHECK(kb.source_id == "news");

    Run tt = cli(dir, "transfer-train --train " + q(d / "data" / "target.train.txt") + " --validation " +
                          q(d / "data" / "target.validation.txt") + " --kb " + q(d / "kb") +
                          " --lambda 0.5 --gamma 0.01 -H 4 --epochs 3 --lr 0.01 --out " + q(d / "target_model"));
    REQUIRE_MESSAGE(tt.status == 0, tt.err);
    CHECK(std::filesystem::exists(d / "target_model" / "A.news.mat"));

    const std::string eval_args = "eval --model " + q(d / "target_model") + " --test " +
                                  q(d / "data" / "target.test.txt") + " --train " +
                                  q(d / "data" / "target.train.txt") + " --out " + q(d / "eval");
    Run ev = cli(dir, eval_args);
    REQUIRE_MESSAGE(ev.status == 0, ev.err);
    auto report = docnade::EvalReport::parse(test_util::read_file(d / "eval" / "report.txt"));
    CHECK_NOTHROW(report.validate());
    CHECK(report.ir.size() == docnade::default_retrieval_fractions().size());
    CHECK(cli(dir, eval_args).out == ev.out);
  }

  SUBCASE("embedding import") {
    test_util::write_file(d / "emb.txt", "w000 0.1 0.2 0.3 0.4\nw001 1 2 3 4\n");
    REQUIRE(cli(dir, "import-embeddings --input " + q(d / "emb.txt") + " --id glove --out " + q(d / "gkb")).status ==
            0);
    CHECK_FALSE(docnade::load_kb(d / "gkb").Z.has_value());
  }
}

TEST_CASE("cli experiment with the bundled synthetic config") {
  test_util::TempDir dir;
  Run r = cli(dir, std::string("experiment --config ") + q(std::filesystem::path(DOCNADE_CONFIG_DIR) / "synthetic.conf") +
                       " --out " + q(dir.path() / "run"));
  REQUIRE_MESSAGE(r.status == 0, r.err);
  auto report = docnade::EvalReport::parse(test_util::read_file(dir.path() / "run" / "report.txt"));
  CHECK_NOTHROW(report.validate());
  CHECK(report.serialize() == r.out);
}

TEST_CASE("cli errors") {
  test_util::TempDir dir;
  Run unknown = cli(dir, "train --bogus");
  CHECK(unknown.status != 0);
  CHECK(unknown.err.find("--train") != std::string::npos);  // usage text

  Run nosub = cli(dir, "frobnicate");
  CHECK(nosub.status != 0);

  Run missing = cli(dir, "topics --model " + q(dir.path() / "nothing"));
  CHECK(missing.status != 0);
  CHECK(count_lines(missing.err) == 1);
  CHECK(missing.err.rfind("docnade: error:", 0) == 0);

  test_util::write_file(dir.path() / "bad.txt", "onlylabel\n");
  Run bad = cli(dir, "train --train " + q(dir.path() / "bad.txt") + " --out " + q(dir.path() / "m"));
  CHECK(bad.status != 0);
  CHECK(count_lines(bad.err) == 1);
  CHECK(bad.err.find("bad.txt:1:") != std::string::npos);
}
