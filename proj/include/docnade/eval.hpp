#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docnade/corpus.hpp"
#include "docnade/params.hpp"
#include "docnade/transfer.hpp"

namespace docnade {

// exp(-(1/N) sum_t log p(v_t) / |v_t|), words taken in stored order.
double perplexity(const ModelParams& params, const Corpus& corpus, const TransferContext* ctx = nullptr);

// Top-N words per topic (row of W), heaviest first.
using TopicList = std::vector<std::vector<std::string>>;

std::vector<WordId> top_word_ids(const ModelParams& params, Eigen::Index topic, std::size_t n);
std::vector<std::string> top_words(const ModelParams& params, const Vocabulary& vocabulary, Eigen::Index topic,
                                   std::size_t n);
TopicList extract_topics(const ModelParams& params, const Vocabulary& vocabulary, std::size_t n);

struct Neighbor {
  std::string word;
  double similarity;
};

// Cosine similarity between word columns of W. Zero-norm columns score -1.
std::vector<Neighbor> nearest_neighbors(const ModelParams& params, const Vocabulary& vocabulary,
                                        std::string_view word, std::size_t n);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Normalized PMI of every topic's top words, counted over sliding windows of
// the reference documents. Returns per-topic means.
std::vector<double> topic_coherences(const TopicList& topics, const Corpus& reference, std::size_t window,
                                     std::size_t top_n);
// Mean of topic_coherences().
double coherence(const TopicList& topics, const Corpus& reference, std::size_t window = 110,
                 std::size_t top_n = 10);

// NPMI from window probabilities; -1 when the pair never co-occurs and 1 when
// joint == 1.
double npmi(double p_joint, double p_first, double p_second);

struct RetrievalPoint {
  double fraction;
  double precision;
};

// Number of training documents retrieved for a fraction: ceil(f * n), at least 1.
std::size_t retrieval_count(double fraction, std::size_t n);

// One row per document in the vector matrices.
std::vector<RetrievalPoint> retrieval_precision(const Eigen::MatrixXd& train_vectors,
                                                std::span<const std::string> train_labels,
                                                const Eigen::MatrixXd& query_vectors,
                                                std::span<const std::string> query_labels,
                                                std::span<const double> fractions);

using VectorProvider = std::function<Eigen::VectorXd(const Document&)>;

std::vector<RetrievalPoint> retrieval_precision(const Corpus& train, const Corpus& queries,
                                                const VectorProvider& vectors, std::span<const double> fractions);

const std::vector<double>& default_retrieval_fractions();

struct EvalReport {
  std::string fingerprint;
  double ppl = 0.0;
  double coh = 0.0;
  std::vector<RetrievalPoint> ir;

  // key=value lines plus one "ir <fraction> <precision>" line per fraction.
  std::string serialize() const;
  static EvalReport parse(std::string_view text);
  void validate() const;
};

}  // namespace docnade
