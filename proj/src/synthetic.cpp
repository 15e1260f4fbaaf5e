#include "docnade/synthetic.hpp"

#include <cmath>
#include <random>
#include <string>

#include "docnade/error.hpp"

namespace docnade {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) { return std::mt19937_64(splitmix(seed ^ splitmix(tag))); }

Eigen::VectorXd draw_dirichlet(std::size_t dim, double concentration, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gamma(rng);
  const double total = v.sum();
  if (!(total > 0.0)) {
    // Every draw underflowed; fall back to a point mass on a random coordinate.
    v.setZero();
    v(static_cast<Eigen::Index>(std::uniform_int_distribution<std::size_t>(0, dim - 1)(rng))) = 1.0;
    return v;
  }
  return v / total;
}

std::discrete_distribution<std::size_t> categorical(const Eigen::VectorXd& p) {
  return std::discrete_distribution<std::size_t>(p.data(), p.data() + p.size());
}

SyntheticDocs generate_docs(const SyntheticSpec& spec, const Eigen::MatrixXd& topics, std::size_t count,
                            std::size_t min_len, std::size_t max_len, std::uint64_t tag) {
  std::mt19937_64 rng = stream(spec.seed, tag);
  std::vector<std::discrete_distribution<std::size_t>> word_dists;
  for (Eigen::Index t = 0; t < topics.rows(); ++t) word_dists.push_back(categorical(topics.row(t).transpose()));
  std::uniform_int_distribution<std::size_t> length(min_len, max_len);

  SyntheticDocs out;
  for (std::size_t d = 0; d < count; ++d) {
    Eigen::VectorXd theta = draw_dirichlet(spec.topics, spec.doc_concentration, rng);
    auto topic_dist = categorical(theta);
    RawDocument doc;
    const std::size_t len = length(rng);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t z = topic_dist(rng);
      doc.tokens.push_back(synthetic_token(word_dists[z](rng), spec.vocab_size));
    }
    Eigen::Index dominant = 0;
    theta.maxCoeff(&dominant);
    doc.label = "t" + std::to_string(dominant);
    out.docs.push_back(std::move(doc));
    out.mixtures.push_back(std::move(theta));
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (topics < 1 || vocab_size < 1 || source_docs < 1 || target_docs < 1 || validation_docs < 1 || test_docs < 1) {
    throw ConfigError("synthetic: all counts must be >= 1");
  }
  if (source_min_len < 1 || target_min_len < 1 || source_min_len > source_max_len ||
      target_min_len > target_max_len) {
    throw ConfigError("synthetic: document length ranges must satisfy 1 <= min <= max");
  }
  if (!(doc_concentration > 0.0) || !(word_concentration > 0.0)) {
    throw ConfigError("synthetic: concentrations must be > 0");
  }
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw ConfigError("synthetic: overlap must be in [0, 1]");
}

std::string synthetic_token(std::size_t word, std::size_t vocab_size) {
  std::size_t width = 1;
  for (std::size_t n = vocab_size > 0 ? vocab_size - 1 : 0; n >= 10; n /= 10) ++width;
  width = std::max<std::size_t>(width, 3);
  std::string digits = std::to_string(word);
  return "w" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

SyntheticCorpora generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto n_topics = static_cast<Eigen::Index>(spec.topics);
  const auto n_words = static_cast<Eigen::Index>(spec.vocab_size);

  SyntheticCorpora out;
  out.source_topics.resize(n_topics, n_words);
  std::mt19937_64 topic_rng = stream(spec.seed, 1);
  for (Eigen::Index t = 0; t < n_topics; ++t) {
    out.source_topics.row(t) = draw_dirichlet(spec.vocab_size, spec.word_concentration, topic_rng).transpose();
  }

  const auto shared = static_cast<Eigen::Index>(std::llround(spec.overlap * static_cast<double>(spec.topics)));
  out.target_topics = out.source_topics;
  std::mt19937_64 fresh_rng = stream(spec.seed, 2);
  for (Eigen::Index t = shared; t < n_topics; ++t) {
    out.target_topics.row(t) = draw_dirichlet(spec.vocab_size, spec.word_concentration, fresh_rng).transpose();
  }

  out.source = generate_docs(spec, out.source_topics, spec.source_docs, spec.source_min_len, spec.source_max_len, 3);
  out.target_train =
      generate_docs(spec, out.target_topics, spec.target_docs, spec.target_min_len, spec.target_max_len, 4);
  out.target_validation =
      generate_docs(spec, out.target_topics, spec.validation_docs, spec.target_min_len, spec.target_max_len, 5);
  out.target_test =
      generate_docs(spec, out.target_topics, spec.test_docs, spec.target_min_len, spec.target_max_len, 6);
  return out;
}

}  // namespace docnade
