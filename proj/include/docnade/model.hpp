#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "docnade/corpus.hpp"
#include "docnade/params.hpp"
#include "docnade/transfer.hpp"

namespace docnade {

struct ForwardTrace {
  std::vector<Eigen::VectorXd> hidden;  // h_i, one per position
  std::vector<double> log_probs;        // log p(v_i | v_<i)
  Eigen::VectorXd final_preactivation;  // pre-activation after consuming every word

  double log_likelihood() const;
};

// Autoregressive pass over words in the given order. The pre-activation is
// carried from step to step, so the cost is linear in the document length.
// ctx may be null; its embedding path is applied when enabled.
ForwardTrace forward(std::span<const WordId> words, const ModelParams& params,
                     const TransferContext* ctx = nullptr);
inline ForwardTrace forward(const Document& doc, const ModelParams& params, const TransferContext* ctx = nullptr) {
  return forward(doc.words, params, ctx);
}

// Negative log-likelihood plus the topic-imitation penalty when enabled.
double loss(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx = nullptr);
inline double loss(const Document& doc, const ModelParams& params, const TransferContext* ctx = nullptr) {
  return loss(doc.words, params, ctx);
}

struct Gradients {
  Eigen::MatrixXd W;
  Eigen::MatrixXd U;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<Eigen::MatrixXd> alignments;  // parallel to ModelParams::alignments

  static Gradients zeros_like(const ModelParams& params);
  void set_zero();
};

// Exact gradient of loss() with respect to W, U, b, c and every alignment.
Gradients gradients(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx = nullptr);
inline Gradients gradients(const Document& doc, const ModelParams& params, const TransferContext* ctx = nullptr) {
  return gradients(doc.words, params, ctx);
}

// Same as gradients() but accumulates into out (which must be zeroed by the
// caller) and returns the loss.
double accumulate_gradients(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx,
                            Gradients& out);

// g(c + sum_i W[:, v_i] + embedding terms): hidden state after the whole document.
Eigen::VectorXd document_vector(std::span<const WordId> words, const ModelParams& params,
                                const TransferContext* ctx = nullptr);
inline Eigen::VectorXd document_vector(const Document& doc, const ModelParams& params,
                                       const TransferContext* ctx = nullptr) {
  return document_vector(doc.words, params, ctx);
}

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  Eigen::Index hidden_size = 200;
  Activation activation = Activation::kSigmoid;
  bool shuffle_words = true;
  bool shuffle_docs = true;
  double init_scale = 0.01;
  std::size_t validation_patience = 10;  // 0 disables early stopping
  double momentum = 0.0;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double mean_train_loss = 0.0;
  std::optional<double> validation_ppl;
  std::vector<double> alignment_residuals;  // ||A_k W - Z'_k||_F after the epoch
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;  // epoch whose parameters were returned
};

struct TrainOptions {
  const Corpus* validation = nullptr;
  const TransferContext* transfer = nullptr;
  std::function<void(const EpochMetrics&, const ModelParams&)> on_epoch;
};

// Per-document SGD. With a validation corpus the parameters of the best
// validation-perplexity epoch are returned.
TrainResult train(const Corpus& corpus, const TrainConfig& config, const TrainOptions& options = {});

// Same loop starting from given parameters.
TrainResult train_from(ModelParams initial, const Corpus& corpus, const TrainConfig& config,
                       const TrainOptions& options = {});

// Model bundle directory: meta.txt, vocab.txt, W.mat, U.mat, b.mat, c.mat and
// A.<source_id>.mat per alignment. extra_meta lines are appended to meta.txt.
struct ModelBundle {
  ModelParams params;
  Vocabulary vocabulary;
  std::uint64_t seed = 0;
  std::size_t trained_epochs = 0;
  std::vector<std::pair<std::string, std::string>> extra_meta;
};

void save_model(const std::filesystem::path& dir, const ModelBundle& bundle);
ModelBundle load_model(const std::filesystem::path& dir);

}  // namespace docnade
