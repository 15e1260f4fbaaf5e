#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docnade/corpus.hpp"
#include "docnade/params.hpp"

namespace docnade {

// Word embeddings (columns of E) and topics (rows of Z) exported from one
// source. Imported external embeddings have no Z and can only feed the
// embedding path.
struct KnowledgeBase {
  std::string source_id;
  Vocabulary vocabulary;
  Eigen::MatrixXd E;                 // E_dim x K_s
  std::optional<Eigen::MatrixXd> Z;  // H_s x K_s

  void validate() const;
};

// A knowledge base re-indexed onto a target vocabulary.
struct ProjectedKB {
  std::string source_id;
  Eigen::MatrixXd E;                 // E_dim x K_t
  std::optional<Eigen::MatrixXd> Z;  // H_s x K_t
  std::vector<bool> covered;         // per target word
  double coverage = 0.0;
};

struct SourceWeight {
  std::string source_id;
  double lambda = 0.0;  // embedding relevance
  double gamma = 0.0;   // topic imitation strength
};

struct TransferSpec {
  std::vector<SourceWeight> sources;
  bool lvt_enabled = false;
  bool gvt_enabled = false;
  // Drop uncovered target words from the imitation penalty instead of pulling
  // them toward zero.
  bool gvt_mask_oov = false;

  void validate() const;

  // Enables each path iff some source carries a positive weight for it.
  static TransferSpec from_weights(std::vector<SourceWeight> sources, bool allow_lvt, bool allow_gvt,
                                   bool gvt_mask_oov = false);
};

class TransferContext {
 public:
  const TransferSpec& spec() const { return spec_; }
  const std::vector<ProjectedKB>& sources() const { return sources_; }
  Eigen::Index hidden_size() const { return hidden_; }
  Eigen::Index vocab_size() const { return vocab_; }

  bool lvt() const { return spec_.lvt_enabled; }
  bool gvt() const { return spec_.gvt_enabled; }

  // sum_k lambda_k E'_k, one column per target word (H x K). Zero when LVT is off.
  const Eigen::MatrixXd& lvt_matrix() const { return lvt_matrix_; }

  // Sources taking part in the imitation penalty, in spec order; parallel to
  // ModelParams::alignments.
  const std::vector<std::size_t>& gvt_sources() const { return gvt_sources_; }
  std::vector<Alignment> initial_alignments() const;

  std::vector<double> coverage() const;

 private:
  friend TransferContext make_transfer_context(const std::vector<KnowledgeBase>&, const Vocabulary&,
                                               const TransferSpec&, Eigen::Index);

  TransferSpec spec_;
  std::vector<ProjectedKB> sources_;  // parallel to spec_.sources
  std::vector<std::size_t> gvt_sources_;
  Eigen::MatrixXd lvt_matrix_;
  Eigen::Index hidden_ = 0;
  Eigen::Index vocab_ = 0;
};

// E := W and Z := W of a model trained on the source corpus.
KnowledgeBase build_kb(const ModelParams& params, const Vocabulary& vocabulary, const std::string& source_id);

ProjectedKB project_kb(const KnowledgeBase& kb, const Vocabulary& target_vocab);

TransferContext make_transfer_context(const std::vector<KnowledgeBase>& kbs, const Vocabulary& target_vocab,
                                      const TransferSpec& spec, Eigen::Index hidden);

Eigen::VectorXd lvt_term(WordId word, const TransferContext& ctx);

// sum_k gamma_k ||A_k W - Z'_k||_F^2 over the penalty sources.
double gvt_penalty(const Eigen::MatrixXd& W, std::span<const Alignment> alignments, const TransferContext& ctx);

struct GvtGradients {
  Eigen::MatrixXd W;
  std::vector<Eigen::MatrixXd> alignments;
};

GvtGradients gvt_gradients(const Eigen::MatrixXd& W, std::span<const Alignment> alignments,
                           const TransferContext& ctx);

// ||A_k W - Z'_k||_F per penalty source (masked like the penalty).
std::vector<double> alignment_residuals(const Eigen::MatrixXd& W, std::span<const Alignment> alignments,
                                        const TransferContext& ctx);

// KB bundle directory: meta.txt, vocab.txt, E.mat and optional Z.mat.
void save_kb(const std::filesystem::path& dir, const KnowledgeBase& kb);
KnowledgeBase load_kb(const std::filesystem::path& dir);

// Text embeddings, one "token v1 ... vE" line per word.
KnowledgeBase import_embeddings(const std::filesystem::path& path, const std::string& source_id);

}  // namespace docnade
