#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "docnade/error.hpp"
#include "docnade/transfer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace docnade;

namespace {

TransferContext single_source(const Vocabulary& v, const Eigen::MatrixXd& E, const Eigen::MatrixXd& Z, double lambda,
                              double gamma, bool mask = false) {
  KnowledgeBase kb{"s", v, E, Z};
  return make_transfer_context({kb}, v, TransferSpec::from_weights({{"s", lambda, gamma}}, true, true, mask),
                               E.rows());
}

}  // namespace

TEST_CASE("build_kb copies W into E and Z") {
  ModelParams p = oracle::random_params(2, 3, 1);
  KnowledgeBase kb = build_kb(p, oracle::numbered_vocab(3), "src");
  CHECK(kb.E == p.W);
  REQUIRE(kb.Z.has_value());
  CHECK(*kb.Z == p.W);
  CHECK(kb.E.rows() == 2);
  CHECK(kb.E.cols() == 3);
  CHECK_THROWS_AS(build_kb(p, oracle::numbered_vocab(4), "src"), ConfigError);
}

TEST_CASE("KB bundle round-trip is bit-exact") {
  ModelParams p = oracle::random_params(4, 9, 2);
  KnowledgeBase kb = build_kb(p, oracle::numbered_vocab(9), "news");
  test_util::TempDir dir;
  save_kb(dir.path() / "kb", kb);
  KnowledgeBase back = load_kb(dir.path() / "kb");
  CHECK(back.source_id == "news");
  CHECK(back.vocabulary == kb.vocabulary);
  CHECK(back.E == kb.E);
  REQUIRE(back.Z.has_value());
  CHECK(*back.Z == *kb.Z);
}

TEST_CASE("project_kb") {
  std::mt19937_64 rng(3);
  Vocabulary v({"a", "b", "c", "d"});
  Eigen::MatrixXd E = oracle::random_matrix(2, 4, rng);

  SUBCASE("identical vocabularies") {
    ProjectedKB p = project_kb(KnowledgeBase{"s", v, E, E}, v);
    CHECK(p.E == E);
    CHECK(*p.Z == E);
    CHECK(p.coverage == 1.0);
  }
  SUBCASE("disjoint vocabularies") {
    ProjectedKB p = project_kb(KnowledgeBase{"s", Vocabulary({"x", "y"}), E.leftCols(2), E.leftCols(2)}, v);
    CHECK(p.E.isZero(0));
    CHECK(p.Z->isZero(0));
    CHECK(p.coverage == 0.0);
  }
  SUBCASE("half overlap against a per-word lookup") {
    Vocabulary src({"c", "q", "a", "r"});
    Eigen::MatrixXd Z = oracle::random_matrix(3, 4, rng);
    ProjectedKB p = project_kb(KnowledgeBase{"s", src, E, Z}, v);
    CHECK(p.coverage == 0.5);
    for (WordId w = 0; w < 4; ++w) {
      int found = -1;
      for (int s = 0; s < 4; ++s) {
        if (src.token(s) == v.token(w)) found = s;
      }
      CHECK(p.covered[w] == (found >= 0));
      for (int j = 0; j < 2; ++j) CHECK(p.E(j, w) == (found >= 0 ? E(j, found) : 0.0));
      for (int j = 0; j < 3; ++j) CHECK((*p.Z)(j, w) == (found >= 0 ? Z(j, found) : 0.0));
    }
  }
}

TEST_CASE("lvt_term") {
  Vocabulary v({"a", "b"});
  Eigen::MatrixXd E(2, 2);
  E << 0.2, 0.0, -0.1, 0.0;
  TransferContext one = single_source(v, E, E, 1.0, 0.0);
  Eigen::VectorXd t = lvt_term(0, one);
  CHECK(t(0) == 0.2);
  CHECK(t(1) == -0.1);
  CHECK(lvt_term(1, one).isZero(0));

  SUBCASE("absent word") {
    KnowledgeBase kb{"s", Vocabulary({"zzz"}), Eigen::MatrixXd::Ones(2, 1), std::nullopt};
    auto ctx = make_transfer_context({kb}, v, TransferSpec::from_weights({{"s", 1.0, 0.0}}, true, true), 2);
    CHECK(lvt_term(0, ctx).isZero(0));
  }
  SUBCASE("weighted sum of two sources") {
    Eigen::MatrixXd E1(2, 2), E2(2, 2);
    E1 << 0.3, 1.0, -0.7, 2.0;
    E2 << 0.25, -1.5, 0.125, 4.0;
    std::vector<KnowledgeBase> kbs = {{"x", v, E1, std::nullopt}, {"y", v, E2, std::nullopt}};
    auto ctx = make_transfer_context(kbs, v, TransferSpec::from_weights({{"x", 0.5, 0}, {"y", 1.0, 0}}, true, true), 2);
    for (WordId w = 0; w < 2; ++w) {
      Eigen::VectorXd term = lvt_term(w, ctx);
      for (int j = 0; j < 2; ++j) CHECK(std::abs(term(j) - (0.5 * E1(j, w) + 1.0 * E2(j, w))) <= 1e-15);
    }
  }
}

TEST_CASE("lvt_term is linear in each lambda") {
  std::mt19937_64 rng(5);
  Vocabulary v = oracle::numbered_vocab(5);
  Eigen::MatrixXd E1 = oracle::random_matrix(3, 5, rng), E2 = oracle::random_matrix(3, 5, rng);
  std::vector<KnowledgeBase> kbs = {{"x", v, E1, std::nullopt}, {"y", v, E2, std::nullopt}};
  auto make = [&](double l1) {
    return make_transfer_context(kbs, v, TransferSpec::from_weights({{"x", l1, 0}, {"y", 0.7, 0}}, true, true), 3);
  };
  auto base = make(0.3), scaled = make(0.9);
  auto only_y = make_transfer_context({kbs[1]}, v, TransferSpec::from_weights({{"y", 0.7, 0}}, true, true), 3);
  for (WordId w = 0; w < 5; ++w) {
    Eigen::VectorXd x_part = base.lvt_matrix().col(w) - only_y.lvt_matrix().col(w);
    Eigen::VectorXd x_scaled = scaled.lvt_matrix().col(w) - only_y.lvt_matrix().col(w);
    CHECK((x_scaled - 3.0 * x_part).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("gvt_penalty examples") {
  Vocabulary v = oracle::numbered_vocab(3);
  Eigen::MatrixXd W(2, 3);
  W << 1, 0, 0, 0, 1, 0;
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(2, 3);
  auto ctx = single_source(v, Z, Z, 0.0, 1.0);
  auto A = ctx.initial_alignments();
  CHECK(gvt_penalty(W, A, ctx) == 2.0);

  auto same = single_source(v, W, W, 0.0, 1.0);
  CHECK(gvt_penalty(W, same.initial_alignments(), same) == 0.0);
  auto grads = gvt_gradients(W, same.initial_alignments(), same);
  CHECK(grads.W.isZero(0));
  CHECK(grads.alignments[0].isZero(0));
}

TEST_CASE("gvt_penalty with zero weights") {
  std::mt19937_64 rng(6);
  Vocabulary v = oracle::numbered_vocab(4);
  Eigen::MatrixXd Z1 = oracle::random_matrix(2, 4, rng), Z2 = oracle::random_matrix(2, 4, rng);
  std::vector<KnowledgeBase> kbs = {{"x", v, Z1, Z1}, {"y", v, Z2, Z2}};
  auto ctx = make_transfer_context(kbs, v, TransferSpec::from_weights({{"x", 0, 1.0}, {"y", 0, 0.0}}, true, true), 2);
  REQUIRE(ctx.gvt_sources().size() == 2);
  Eigen::MatrixXd W = oracle::random_matrix(2, 4, rng);
  auto A = ctx.initial_alignments();
  CHECK(gvt_penalty(W, A, ctx) == doctest::Approx(oracle::naive_penalty(W, {A[0].matrix}, {Z1}, {1.0})));
  auto g = gvt_gradients(W, A, ctx);
  CHECK(g.alignments[1].isZero(0));
}

TEST_CASE("gvt_penalty equals the Frobenius identity and the elementwise oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int H = 3, K = 5;
    Vocabulary v = oracle::numbered_vocab(K);
    Eigen::MatrixXd Z1 = oracle::random_matrix(H, K, rng), Z2 = oracle::random_matrix(H, K, rng);
    std::vector<KnowledgeBase> kbs = {{"x", v, Z1, Z1}, {"y", v, Z2, Z2}};
    auto ctx =
        make_transfer_context(kbs, v, TransferSpec::from_weights({{"x", 0, 0.3}, {"y", 0, 2.0}}, true, true), H);
    Eigen::MatrixXd W = oracle::random_matrix(H, K, rng);
    std::vector<Alignment> A = {{"x", oracle::random_matrix(H, H, rng)}, {"y", oracle::random_matrix(H, H, rng)}};
    const double got = gvt_penalty(W, A, ctx);
    const double frob = 0.3 * (A[0].matrix * W - Z1).squaredNorm() + 2.0 * (A[1].matrix * W - Z2).squaredNorm();
    CHECK(std::abs(got - frob) <= 1e-12 * std::max(1.0, frob));
    CHECK(std::abs(got - oracle::naive_penalty(W, {A[0].matrix, A[1].matrix}, {Z1, Z2}, {0.3, 2.0})) <= 1e-12 * frob);

    // Relabeling the vocabulary (same permutation on W and every Z) leaves the penalty unchanged.
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd Wp(H, K), Z1p(H, K), Z2p(H, K);
    for (int w = 0; w < K; ++w) {
      Wp.col(w) = W.col(perm[w]);
      Z1p.col(w) = Z1.col(perm[w]);
      Z2p.col(w) = Z2.col(perm[w]);
    }
    std::vector<KnowledgeBase> kbp = {{"x", v, Z1p, Z1p}, {"y", v, Z2p, Z2p}};
    auto ctxp =
        make_transfer_context(kbp, v, TransferSpec::from_weights({{"x", 0, 0.3}, {"y", 0, 2.0}}, true, true), H);
    CHECK(gvt_penalty(Wp, A, ctxp) == doctest::Approx(got).epsilon(1e-12));
  }
}

TEST_CASE("gvt gradients match finite differences") {
  std::mt19937_64 rng(8);
  const int H = 3, K = 4;
  Vocabulary v = oracle::numbered_vocab(K);
  Eigen::MatrixXd Z = oracle::random_matrix(H, K, rng);
  auto ctx = single_source(v, Z, Z, 0.0, 0.8);
  Eigen::MatrixXd W = oracle::random_matrix(H, K, rng);
  std::vector<Alignment> A = {{"s", oracle::random_matrix(H, H, rng)}};
  auto g = gvt_gradients(W, A, ctx);
  auto f = [&] { return gvt_penalty(W, A, ctx); };
  for (Eigen::Index i = 0; i < W.size(); ++i) {
    const double num = oracle::central_difference(W.data()[i], f);
    CHECK(std::abs(g.W.data()[i] - num) <= 1e-6 * std::max(1.0, std::abs(num)));
  }
  for (Eigen::Index i = 0; i < A[0].matrix.size(); ++i) {
    const double num = oracle::central_difference(A[0].matrix.data()[i], f);
    CHECK(std::abs(g.alignments[0].data()[i] - num) <= 1e-6 * std::max(1.0, std::abs(num)));
  }
}

TEST_CASE("masked penalty ignores uncovered words") {
  Vocabulary target({"a", "b", "c"});
  Eigen::MatrixXd Zs(2, 2);
  Zs << 1, 2, 3, 4;
  KnowledgeBase kb{"s", Vocabulary({"a", "zz"}), Zs, Zs};
  Eigen::MatrixXd W(2, 3);
  W << 1, 5, 6, 3, 7, 8;
  auto literal = make_transfer_context({kb}, target, TransferSpec::from_weights({{"s", 0, 1}}, false, true, false), 2);
  auto masked = make_transfer_context({kb}, target, TransferSpec::from_weights({{"s", 0, 1}}, false, true, true), 2);
  auto A = literal.initial_alignments();
  CHECK(gvt_penalty(W, A, masked) == 0.0);
  CHECK(gvt_penalty(W, A, literal) == 25.0 + 49.0 + 36.0 + 64.0);
}

TEST_CASE("coverage one with identity alignment and W = Z gives zero penalty") {
  std::mt19937_64 rng(9);
  Vocabulary v = oracle::numbered_vocab(6);
  Eigen::MatrixXd Z = oracle::random_matrix(4, 6, rng);
  auto ctx = single_source(v, Z, Z, 0.0, 10.0);
  CHECK(ctx.coverage() == std::vector<double>{1.0});
  CHECK(gvt_penalty(Z, ctx.initial_alignments(), ctx) == 0.0);
}

TEST_CASE("transfer spec validation") {
  CHECK_THROWS_AS((TransferSpec{{{"a", -1, 0}}, false, false, false}.validate()), ConfigError);
  CHECK_THROWS_AS((TransferSpec{{{"a", 0, 0}}, true, false, false}.validate()), ConfigError);
  CHECK_THROWS_AS((TransferSpec{{{"a", 0, 0}}, false, true, false}.validate()), ConfigError);
  CHECK_THROWS_AS((TransferSpec{{{"a", 1, 0}, {"a", 1, 0}}, true, false, false}.validate()), ConfigError);
  auto s = TransferSpec::from_weights({{"a", 0.0, 0.0}}, true, true);
  CHECK_FALSE(s.lvt_enabled);
  CHECK_FALSE(s.gvt_enabled);
}

TEST_CASE("make_transfer_context") {
  std::mt19937_64 rng(10);
  Vocabulary v = oracle::numbered_vocab(4);
  Eigen::MatrixXd E = oracle::random_matrix(3, 4, rng);

  SUBCASE("unknown source id is named") {
    KnowledgeBase kb{"news", v, E, E};
    try {
      make_transfer_context({kb}, v, TransferSpec::from_weights({{"wiki", 1, 0}}, true, true), 3);
      FAIL("expected an error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("wiki") != std::string::npos);
    }
  }
  SUBCASE("duplicate ids") {
    KnowledgeBase kb{"news", v, E, E};
    CHECK_THROWS_AS(make_transfer_context({kb, kb}, v, TransferSpec::from_weights({{"news", 1, 0}}, true, true), 3),
                    ConfigError);
  }
  SUBCASE("dimension mismatch") {
    KnowledgeBase kb{"news", v, E, E};
    CHECK_THROWS_AS(make_transfer_context({kb}, v, TransferSpec::from_weights({{"news", 1, 0}}, true, true), 4),
                    ConfigError);
    CHECK_THROWS_AS(make_transfer_context({kb}, v, TransferSpec::from_weights({{"news", 0, 1}}, true, true), 4),
                    ConfigError);
  }
  SUBCASE("imitation needs a topic matrix") {
    KnowledgeBase kb{"glove", v, E, std::nullopt};
    CHECK_THROWS_AS(make_transfer_context({kb}, v, TransferSpec::from_weights({{"glove", 0, 1}}, true, true), 3),
                    ConfigError);
  }
  SUBCASE("lvt only keeps identity alignments and no imitation sources") {
    KnowledgeBase kb{"news", v, E, E};
    auto ctx = make_transfer_context({kb}, v, TransferSpec::from_weights({{"news", 0.5, 0}}, true, true), 3);
    CHECK(ctx.lvt());
    CHECK_FALSE(ctx.gvt());
    CHECK(ctx.gvt_sources().empty());
    auto A = ctx.initial_alignments();
    for (const auto& al : A) CHECK(al.matrix.isIdentity(0));
  }
  SUBCASE("three sources report per-KB coverage") {
    std::vector<KnowledgeBase> kbs = {
        {"a", Vocabulary({"w0", "w1", "w2", "w3"}), oracle::random_matrix(3, 4, rng), oracle::random_matrix(3, 4, rng)},
        {"b", Vocabulary({"w1", "zz"}), oracle::random_matrix(3, 2, rng), oracle::random_matrix(3, 2, rng)},
        {"c", Vocabulary({"w3", "w2", "w0"}), oracle::random_matrix(3, 3, rng), oracle::random_matrix(3, 3, rng)}};
    auto ctx = make_transfer_context(
        kbs, v, TransferSpec::from_weights({{"a", 0.1, 0.1}, {"b", 0.5, 0.01}, {"c", 1.0, 0.001}}, true, true), 3);
    auto cov = ctx.coverage();
    REQUIRE(cov.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      ProjectedKB p = project_kb(kbs[k], v);
      CHECK(cov[k] == p.coverage);
      CHECK(ctx.sources()[k].E == p.E);
    }
    CHECK(cov == std::vector<double>{1.0, 0.25, 0.75});
  }
}

TEST_CASE("import_embeddings") {
  test_util::TempDir dir;
  test_util::write_file(dir.path() / "e.txt", "chip 0.5 -1\ncode 2 3e-1\n");
  KnowledgeBase kb = import_embeddings(dir.path() / "e.txt", "glove");
  CHECK(kb.source_id == "glove");
  CHECK(kb.vocabulary.tokens() == std::vector<std::string>{"chip", "code"});
  CHECK(kb.E(1, 1) == 0.3);
  CHECK_FALSE(kb.Z.has_value());

  test_util::write_file(dir.path() / "bad.txt", "chip 0.5 -1\ncode 2\n");
  CHECK_THROWS_AS(import_embeddings(dir.path() / "bad.txt", "g"), ParseError);

  save_kb(dir.path() / "kb", kb);
  KnowledgeBase back = load_kb(dir.path() / "kb");
  CHECK(back.E == kb.E);
  CHECK_FALSE(back.Z.has_value());
}
