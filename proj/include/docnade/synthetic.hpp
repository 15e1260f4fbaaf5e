#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

#include "docnade/corpus.hpp"

namespace docnade {

// Ground-truth topic model used to generate a large source corpus and a
// small, short-document target corpus.
struct SyntheticSpec {
  std::size_t topics = 3;
  std::size_t vocab_size = 100;
  std::size_t source_docs = 500;
  std::size_t source_min_len = 40;
  std::size_t source_max_len = 80;
  std::size_t target_docs = 40;
  std::size_t target_min_len = 8;
  std::size_t target_max_len = 15;
  std::size_t validation_docs = 40;
  std::size_t test_docs = 100;
  double doc_concentration = 0.5;    // symmetric Dirichlet over topics
  double word_concentration = 0.05;  // symmetric Dirichlet over words
  std::uint64_t seed = 1;
  double overlap = 1.0;  // fraction of target topics copied from the source

  void validate() const;
};

struct SyntheticDocs {
  std::vector<RawDocument> docs;
  std::vector<Eigen::VectorXd> mixtures;  // per-document topic proportions
};

struct SyntheticCorpora {
  Eigen::MatrixXd source_topics;  // topics x vocab, rows sum to 1
  Eigen::MatrixXd target_topics;
  SyntheticDocs source;
  SyntheticDocs target_train;
  SyntheticDocs target_validation;
  SyntheticDocs target_test;
};

// Tokens are "w000", "w001", ...; each document is labeled with its dominant
// topic "t<j>".
SyntheticCorpora generate_synthetic(const SyntheticSpec& spec);

std::string synthetic_token(std::size_t word, std::size_t vocab_size);

}  // namespace docnade
