#include "docnade/transfer.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "docnade/error.hpp"
#include "docnade/io.hpp"

namespace docnade {

namespace {

Eigen::MatrixXd residual(const Eigen::MatrixXd& W, const Eigen::MatrixXd& A, const ProjectedKB& kb, bool mask) {
  Eigen::MatrixXd r = A * W - *kb.Z;
  if (mask) {
    for (Eigen::Index w = 0; w < r.cols(); ++w) {
      if (!kb.covered[static_cast<std::size_t>(w)]) r.col(w).setZero();
    }
  }
  return r;
}

void check_alignments(const Eigen::MatrixXd& W, std::span<const Alignment> alignments, const TransferContext& ctx) {
  if (W.rows() != ctx.hidden_size() || W.cols() != ctx.vocab_size()) {
    throw ConfigError("topic imitation: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                      ", context expects " + std::to_string(ctx.hidden_size()) + "x" +
                      std::to_string(ctx.vocab_size()));
  }
  const auto& ids = ctx.gvt_sources();
  if (alignments.size() != ids.size()) {
    throw ConfigError("topic imitation: expected " + std::to_string(ids.size()) + " alignment matrices, got " +
                      std::to_string(alignments.size()));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& src = ctx.sources()[ids[i]];
    if (alignments[i].source_id != src.source_id) {
      throw ConfigError("alignment " + std::to_string(i) + " belongs to '" + alignments[i].source_id +
                        "', expected '" + src.source_id + "'");
    }
    if (alignments[i].matrix.rows() != W.rows() || alignments[i].matrix.cols() != src.Z->rows()) {
      throw ConfigError("alignment for '" + src.source_id + "' has wrong shape");
    }
  }
}

}  // namespace

void KnowledgeBase::validate() const {
  if (E.cols() != static_cast<Eigen::Index>(vocabulary.size())) {
    throw ConfigError("knowledge base '" + source_id + "': E has " + std::to_string(E.cols()) +
                      " columns for a vocabulary of " + std::to_string(vocabulary.size()));
  }
  if (Z && Z->cols() != E.cols()) {
    throw ConfigError("knowledge base '" + source_id + "': E and Z column counts differ");
  }
  if (!E.allFinite() || (Z && !Z->allFinite())) {
    throw NumericalError("knowledge base '" + source_id + "' has non-finite entries");
  }
}

void TransferSpec::validate() const {
  std::set<std::string> seen;
  bool any_lambda = false;
  bool any_gamma = false;
  for (const auto& s : sources) {
    if (!seen.insert(s.source_id).second) throw ConfigError("duplicate source id '" + s.source_id + "'");
    if (!(s.lambda >= 0.0) || !(s.gamma >= 0.0) || !std::isfinite(s.lambda) || !std::isfinite(s.gamma)) {
      throw ConfigError("source '" + s.source_id + "': lambda and gamma must be finite and >= 0");
    }
    any_lambda = any_lambda || s.lambda > 0.0;
    any_gamma = any_gamma || s.gamma > 0.0;
  }
  if (lvt_enabled && !any_lambda) throw ConfigError("embedding transfer enabled but every lambda is 0");
  if (gvt_enabled && !any_gamma) throw ConfigError("topic imitation enabled but every gamma is 0");
}

TransferSpec TransferSpec::from_weights(std::vector<SourceWeight> sources, bool allow_lvt, bool allow_gvt,
                                        bool gvt_mask_oov) {
  TransferSpec spec;
  spec.gvt_mask_oov = gvt_mask_oov;
  for (const auto& s : sources) {
    spec.lvt_enabled = spec.lvt_enabled || (allow_lvt && s.lambda > 0.0);
    spec.gvt_enabled = spec.gvt_enabled || (allow_gvt && s.gamma > 0.0);
  }
  spec.sources = std::move(sources);
  return spec;
}

std::vector<Alignment> TransferContext::initial_alignments() const {
  std::vector<Alignment> out;
  for (std::size_t idx : gvt_sources_) {
    const auto& src = sources_[idx];
    out.push_back({src.source_id, Eigen::MatrixXd::Identity(hidden_, src.Z->rows())});
  }
  return out;
}

std::vector<double> TransferContext::coverage() const {
  std::vector<double> out;
  for (const auto& s : sources_) out.push_back(s.coverage);
  return out;
}

KnowledgeBase build_kb(const ModelParams& params, const Vocabulary& vocabulary, const std::string& source_id) {
  if (params.vocab_size() != static_cast<Eigen::Index>(vocabulary.size())) {
    throw ConfigError("build_kb: model has K=" + std::to_string(params.vocab_size()) + " but vocabulary has " +
                      std::to_string(vocabulary.size()) + " tokens");
  }
  if (source_id.empty()) throw ConfigError("build_kb: empty source id");
  return KnowledgeBase{source_id, vocabulary, params.W, params.W};
}

ProjectedKB project_kb(const KnowledgeBase& kb, const Vocabulary& target_vocab) {
  const auto k_t = static_cast<Eigen::Index>(target_vocab.size());
  ProjectedKB out;
  out.source_id = kb.source_id;
  out.E = Eigen::MatrixXd::Zero(kb.E.rows(), k_t);
  if (kb.Z) out.Z = Eigen::MatrixXd::Zero(kb.Z->rows(), k_t);
  out.covered.assign(target_vocab.size(), false);

  std::size_t matched = 0;
  for (Eigen::Index w = 0; w < k_t; ++w) {
    auto src = kb.vocabulary.find(target_vocab.token(static_cast<WordId>(w)));
    if (!src) continue;
    out.E.col(w) = kb.E.col(*src);
    if (kb.Z) out.Z->col(w) = kb.Z->col(*src);
    out.covered[static_cast<std::size_t>(w)] = true;
    ++matched;
  }
  out.coverage = static_cast<double>(matched) / static_cast<double>(k_t);
  return out;
}

TransferContext make_transfer_context(const std::vector<KnowledgeBase>& kbs, const Vocabulary& target_vocab,
                                      const TransferSpec& spec, Eigen::Index hidden) {
  spec.validate();
  if (hidden < 1) throw ConfigError("transfer context: hidden size must be >= 1");

  std::set<std::string> ids;
  for (const auto& kb : kbs) {
    if (!ids.insert(kb.source_id).second) throw ConfigError("duplicate knowledge base id '" + kb.source_id + "'");
  }

  TransferContext ctx;
  ctx.spec_ = spec;
  ctx.hidden_ = hidden;
  ctx.vocab_ = static_cast<Eigen::Index>(target_vocab.size());
  ctx.lvt_matrix_ = Eigen::MatrixXd::Zero(hidden, ctx.vocab_);

  for (std::size_t i = 0; i < spec.sources.size(); ++i) {
    const SourceWeight& w = spec.sources[i];
    const KnowledgeBase* kb = nullptr;
    for (const auto& candidate : kbs) {
      if (candidate.source_id == w.source_id) kb = &candidate;
    }
    if (kb == nullptr) throw ConfigError("unknown source id '" + w.source_id + "'");
    kb->validate();
    ctx.sources_.push_back(project_kb(*kb, target_vocab));
    const ProjectedKB& projected = ctx.sources_.back();

    if (spec.lvt_enabled && w.lambda != 0.0) {
      if (projected.E.rows() != hidden) {
        throw ConfigError("source '" + w.source_id + "': embedding dimension " + std::to_string(projected.E.rows()) +
                          " does not match target hidden size " + std::to_string(hidden));
      }
      ctx.lvt_matrix_ += w.lambda * projected.E;
    }
    if (spec.gvt_enabled) {
      if (!projected.Z) {
        if (w.gamma != 0.0) throw ConfigError("source '" + w.source_id + "' has no topic matrix for imitation");
        continue;
      }
      if (projected.Z->rows() != hidden) {
        throw ConfigError("source '" + w.source_id + "': topic count " + std::to_string(projected.Z->rows()) +
                          " does not match target hidden size " + std::to_string(hidden));
      }
      ctx.gvt_sources_.push_back(i);
    }
  }
  return ctx;
}

Eigen::VectorXd lvt_term(WordId word, const TransferContext& ctx) {
  if (static_cast<Eigen::Index>(word) >= ctx.vocab_size()) throw ConfigError("lvt_term: word index out of range");
  return ctx.lvt_matrix().col(word);
}

double gvt_penalty(const Eigen::MatrixXd& W, std::span<const Alignment> alignments, const TransferContext& ctx) {
  if (!ctx.gvt()) return 0.0;
  check_alignments(W, alignments, ctx);
  double total = 0.0;
  const auto& ids = ctx.gvt_sources();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const ProjectedKB& src = ctx.sources()[ids[i]];
    const double gamma = ctx.spec().sources[ids[i]].gamma;
    if (gamma == 0.0) continue;
    total += gamma * residual(W, alignments[i].matrix, src, ctx.spec().gvt_mask_oov).squaredNorm();
  }
  return total;
}

GvtGradients gvt_gradients(const Eigen::MatrixXd& W, std::span<const Alignment> alignments,
                           const TransferContext& ctx) {
  GvtGradients g;
  g.W = Eigen::MatrixXd::Zero(W.rows(), W.cols());
  if (!ctx.gvt()) return g;
  check_alignments(W, alignments, ctx);
  const auto& ids = ctx.gvt_sources();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const ProjectedKB& src = ctx.sources()[ids[i]];
    const double gamma = ctx.spec().sources[ids[i]].gamma;
    const Eigen::MatrixXd& A = alignments[i].matrix;
    if (gamma == 0.0) {
      g.alignments.push_back(Eigen::MatrixXd::Zero(A.rows(), A.cols()));
      continue;
    }
    Eigen::MatrixXd r = residual(W, A, src, ctx.spec().gvt_mask_oov);
    g.W.noalias() += (2.0 * gamma) * A.transpose() * r;
    g.alignments.push_back((2.0 * gamma) * r * W.transpose());
  }
  return g;
}

std::vector<double> alignment_residuals(const Eigen::MatrixXd& W, std::span<const Alignment> alignments,
                                        const TransferContext& ctx) {
  std::vector<double> out;
  if (!ctx.gvt()) return out;
  check_alignments(W, alignments, ctx);
  const auto& ids = ctx.gvt_sources();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back(residual(W, alignments[i].matrix, ctx.sources()[ids[i]], ctx.spec().gvt_mask_oov).norm());
  }
  return out;
}

void save_kb(const std::filesystem::path& dir, const KnowledgeBase& kb) {
  kb.validate();
  std::filesystem::create_directories(dir);
  Settings meta;
  meta.set("source_id", kb.source_id);
  meta.set("H_s", std::to_string(kb.Z ? kb.Z->rows() : 0));
  meta.set("E_dim", std::to_string(kb.E.rows()));
  meta.set("has_Z", kb.Z ? "1" : "0");
  meta.save(dir / "meta.txt");
  save_vocabulary(dir / "vocab.txt", kb.vocabulary);
  save_matrix(dir / "E.mat", kb.E);
  if (kb.Z) {
    save_matrix(dir / "Z.mat", *kb.Z);
  } else {
    std::filesystem::remove(dir / "Z.mat");
  }
}

KnowledgeBase load_kb(const std::filesystem::path& dir) {
  Settings meta = Settings::load(dir / "meta.txt");
  KnowledgeBase kb{meta.get("source_id"), load_vocabulary(dir / "vocab.txt"), load_matrix(dir / "E.mat"),
                   std::nullopt};
  if (meta.get_bool("has_Z", false)) kb.Z = load_matrix(dir / "Z.mat");
  if (kb.E.rows() != static_cast<Eigen::Index>(meta.get_count("E_dim"))) {
    throw ParseError((dir / "meta.txt").string(), 0, "E_dim does not match E.mat");
  }
  if (kb.Z && kb.Z->rows() != static_cast<Eigen::Index>(meta.get_count("H_s"))) {
    throw ParseError((dir / "meta.txt").string(), 0, "H_s does not match Z.mat");
  }
  kb.validate();
  return kb;
}

KnowledgeBase import_embeddings(const std::filesystem::path& path, const std::string& source_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> columns;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        values.push_back(parse_double(field));
      } catch (const ParseError& e) {
        throw ParseError(path.string(), line_no, e.what());
      }
    }
    if (values.empty()) throw ParseError(path.string(), line_no, "no vector values for '" + token + "'");
    if (!columns.empty() && values.size() != columns.front().size()) {
      throw ParseError(path.string(), line_no,
                       "expected " + std::to_string(columns.front().size()) + " values, got " +
                           std::to_string(values.size()));
    }
    tokens.push_back(token);
    columns.push_back(std::move(values));
  }
  if (tokens.empty()) throw ParseError(path.string(), 0, "no embeddings found");

  Eigen::MatrixXd E(static_cast<Eigen::Index>(columns.front().size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t w = 0; w < columns.size(); ++w) {
    for (std::size_t d = 0; d < columns[w].size(); ++d) {
      E(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(w)) = columns[w][d];
    }
  }
  KnowledgeBase kb{source_id, Vocabulary(std::move(tokens)), std::move(E), std::nullopt};
  kb.validate();
  return kb;
}

}  // namespace docnade
