#pragma once

#include <string>
#include <vector>

#include "docnade/model.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Mismatch {
  std::string parameter;
  double analytic;
  double numeric;
};

// Compares every coordinate of gradients() against central differences of loss().
inline std::vector<Mismatch> check(const std::vector<docnade::WordId>& words, docnade::ModelParams params,
                                   const docnade::TransferContext* ctx, double eps = 1e-5, double rel_tol = 1e-4,
                                   double abs_tol = 1e-7, std::size_t* checked = nullptr) {
  const docnade::Gradients g = docnade::gradients(words, params, ctx);
  auto f = [&] { return docnade::loss(words, params, ctx); };
  std::vector<Mismatch> bad;
  std::size_t count = 0;
  auto compare = [&](const std::string& name, auto& param, const auto& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double numeric = oracle::central_difference(param.data()[i], f, eps);
      ++count;
      if (!oracle::gradient_close(grad.data()[i], numeric, rel_tol, abs_tol)) {
        bad.push_back({name + "[" + std::to_string(i) + "]", grad.data()[i], numeric});
      }
    }
  };
  compare("W", params.W, g.W);
  compare("U", params.U, g.U);
  compare("b", params.b, g.b);
  compare("c", params.c, g.c);
  for (std::size_t k = 0; k < params.alignments.size(); ++k) {
    compare("A" + std::to_string(k), params.alignments[k].matrix, g.alignments[k]);
  }
  if (checked != nullptr) *checked += count;
  return bad;
}

enum class Mode { kNone, kLvt, kGvt, kMvt };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kNone:
      return "none";
    case Mode::kLvt:
      return "LVT";
    case Mode::kGvt:
      return "GVT";
    case Mode::kMvt:
      return "MVT";
  }
  return "?";
}

// A seeded instance with up to two sources whose vocabularies partially
// overlap the target's.
struct Instance {
  std::vector<docnade::WordId> words;
  docnade::ModelParams params;
  std::vector<docnade::KnowledgeBase> kbs;
  std::optional<docnade::TransferContext> ctx;
};

inline Instance make_instance(Mode mode, std::uint64_t seed, int H, int K, std::size_t D, int sources,
                              bool mask_oov = false) {
  std::mt19937_64 rng(seed);
  Instance inst;
  const auto act = seed % 2 == 0 ? docnade::Activation::kSigmoid : docnade::Activation::kTanh;
  inst.params = oracle::random_params(H, K, seed, 0.8, act);
  inst.words = oracle::random_words(D, K, rng);
  if (mode == Mode::kNone) return inst;

  const docnade::Vocabulary target = oracle::numbered_vocab(K);
  std::vector<docnade::SourceWeight> weights;
  std::uniform_real_distribution<double> weight(0.2, 1.5);
  for (int k = 0; k < sources; ++k) {
    // Source k knows target words shifted by k plus one private word.
    std::vector<std::string> tokens;
    for (int w = k; w < K; ++w) tokens.push_back("w" + std::to_string(w));
    tokens.push_back("private" + std::to_string(k));
    const int ks = static_cast<int>(tokens.size());
    docnade::KnowledgeBase kb{"s" + std::to_string(k), docnade::Vocabulary(tokens),
                              oracle::random_matrix(H, ks, rng, 0.7), oracle::random_matrix(H, ks, rng, 0.7)};
    inst.kbs.push_back(std::move(kb));
    const bool lvt = mode == Mode::kLvt || mode == Mode::kMvt;
    const bool gvt = mode == Mode::kGvt || mode == Mode::kMvt;
    weights.push_back({"s" + std::to_string(k), lvt ? weight(rng) : 0.0, gvt ? weight(rng) : 0.0});
  }
  auto spec = docnade::TransferSpec::from_weights(weights, true, true, mask_oov);
  inst.ctx = docnade::make_transfer_context(inst.kbs, target, spec, H);
  if (inst.ctx->gvt()) {
    inst.params.alignments = inst.ctx->initial_alignments();
    for (auto& al : inst.params.alignments) al.matrix += oracle::random_matrix(H, H, rng, 0.3);
  }
  return inst;
}

}  // namespace gradcheck
