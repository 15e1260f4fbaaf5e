#include "docnade/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "docnade/error.hpp"
#include "docnade/io.hpp"
#include "docnade/model.hpp"

namespace docnade {

double perplexity(const ModelParams& params, const Corpus& corpus, const TransferContext* ctx) {
  if (corpus.documents.empty()) throw ConfigError("perplexity: corpus is empty");
  // Log-probabilities are re-derived from the hidden states in extended
  // precision so that a uniform model comes out at exactly K.
  long double sum = 0.0L;
  for (const auto& doc : corpus.documents) {
    if (doc.words.empty()) throw ConfigError("perplexity: zero-length document");
    const ForwardTrace trace = forward(doc, params, ctx);
    long double doc_sum = 0.0L;
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const Eigen::VectorXd logits = params.b + params.U * trace.hidden[i];
      const long double top = logits.maxCoeff();
      long double z = 0.0L;
      for (Eigen::Index w = 0; w < logits.size(); ++w) z += std::exp(static_cast<long double>(logits(w)) - top);
      doc_sum += static_cast<long double>(logits(doc.words[i])) - top - std::log(z);
    }
    sum += doc_sum / static_cast<long double>(doc.size());
  }
  return static_cast<double>(std::exp(-sum / static_cast<long double>(corpus.documents.size())));
}

std::vector<WordId> top_word_ids(const ModelParams& params, Eigen::Index topic, std::size_t n) {
  if (topic < 0 || topic >= params.hidden_size()) throw ConfigError("topic index out of range");
  const auto k = static_cast<std::size_t>(params.vocab_size());
  if (n < 1 || n > k) throw ConfigError("top_words: N must be in [1, K]");
  std::vector<WordId> ids(k);
  std::iota(ids.begin(), ids.end(), 0);
  auto row = params.W.row(topic);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](WordId a, WordId b) {
    if (row(a) != row(b)) return row(a) > row(b);
    return a < b;
  });
  ids.resize(n);
  return ids;
}

std::vector<std::string> top_words(const ModelParams& params, const Vocabulary& vocabulary, Eigen::Index topic,
                                   std::size_t n) {
  std::vector<std::string> out;
  for (WordId w : top_word_ids(params, topic, n)) out.push_back(vocabulary.token(w));
  return out;
}

TopicList extract_topics(const ModelParams& params, const Vocabulary& vocabulary, std::size_t n) {
  TopicList topics;
  for (Eigen::Index j = 0; j < params.hidden_size(); ++j) topics.push_back(top_words(params, vocabulary, j, n));
  return topics;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return -1.0;
  return a.dot(b) / (na * nb);
}

std::vector<Neighbor> nearest_neighbors(const ModelParams& params, const Vocabulary& vocabulary,
                                        std::string_view word, std::size_t n) {
  auto query = vocabulary.find(word);
  if (!query) throw ConfigError("word '" + std::string(word) + "' is not in the vocabulary");
  const auto k = static_cast<std::size_t>(params.vocab_size());
  if (n < 1 || n > k - 1) throw ConfigError("nearest_neighbors: N must be in [1, K-1]");

  const Eigen::VectorXd q = params.W.col(*query);
  std::vector<std::pair<double, WordId>> scored;
  scored.reserve(k - 1);
  for (WordId w = 0; w < k; ++w) {
    if (w == *query) continue;
    scored.emplace_back(cosine_similarity(q, params.W.col(w)), w);
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({vocabulary.token(scored[i].second), scored[i].first});
  return out;
}

double npmi(double p_joint, double p_first, double p_second) {
  if (p_joint <= 0.0) return -1.0;
  if (p_joint >= 1.0) return 1.0;
  return std::log(p_joint / (p_first * p_second)) / -std::log(p_joint);
}

std::vector<double> topic_coherences(const TopicList& topics, const Corpus& reference, std::size_t window,
                                     std::size_t top_n) {
  if (top_n < 2) throw ConfigError("coherence: top_n must be >= 2");
  if (window < 2) throw ConfigError("coherence: window must be >= 2");
  if (reference.documents.empty()) throw ConfigError("coherence: reference corpus is empty");

  std::size_t total_windows = 0;
  for (const auto& doc : reference.documents) {
    total_windows += doc.size() <= window ? 1 : doc.size() - window + 1;
  }
  const auto n_windows = static_cast<double>(total_windows);

  std::vector<int> slot_of(reference.vocabulary.size(), -1);
  std::vector<double> result;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    const std::size_t m = std::min(top_n, topics[t].size());
    if (m < 2) throw ConfigError("coherence: topic " + std::to_string(t) + " has fewer than 2 words");

    std::vector<std::optional<WordId>> ids(m);
    for (std::size_t s = 0; s < m; ++s) {
      ids[s] = reference.vocabulary.find(topics[t][s]);
      if (ids[s]) {
        slot_of[*ids[s]] = static_cast<int>(s);
      } else {
        std::clog << "warning: coherence: topic word '" << topics[t][s]
                  << "' is absent from the reference vocabulary\n";
      }
    }

    // single[s]: windows containing word s; joint[s][r]: windows containing both.
    std::vector<std::size_t> single(m, 0);
    std::vector<std::size_t> joint(m * m, 0);
    std::vector<std::size_t> in_window(m, 0);
    std::vector<std::size_t> present;
    auto count_window = [&]() {
      present.clear();
      for (std::size_t s = 0; s < m; ++s) {
        if (in_window[s] > 0) present.push_back(s);
      }
      for (std::size_t x = 0; x < present.size(); ++x) {
        ++single[present[x]];
        for (std::size_t y = x + 1; y < present.size(); ++y) ++joint[present[x] * m + present[y]];
      }
    };
    for (const auto& doc : reference.documents) {
      std::fill(in_window.begin(), in_window.end(), 0);
      const std::size_t width = std::min(window, doc.size());
      for (std::size_t i = 0; i < width; ++i) {
        if (int s = slot_of[doc.words[i]]; s >= 0) ++in_window[static_cast<std::size_t>(s)];
      }
      count_window();
      for (std::size_t start = 1; start + window <= doc.size(); ++start) {
        if (int s = slot_of[doc.words[start - 1]]; s >= 0) --in_window[static_cast<std::size_t>(s)];
        if (int s = slot_of[doc.words[start + window - 1]]; s >= 0) ++in_window[static_cast<std::size_t>(s)];
        count_window();
      }
    }

    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t x = 0; x < m; ++x) {
      for (std::size_t y = x + 1; y < m; ++y) {
        ++pairs;
        if (!ids[x] || !ids[y]) {
          sum += -1.0;
          continue;
        }
        sum += npmi(static_cast<double>(joint[x * m + y]) / n_windows, static_cast<double>(single[x]) / n_windows,
                    static_cast<double>(single[y]) / n_windows);
      }
    }
    result.push_back(sum / static_cast<double>(pairs));

    for (const auto& id : ids) {
      if (id) slot_of[*id] = -1;
    }
  }
  return result;
}

double coherence(const TopicList& topics, const Corpus& reference, std::size_t window, std::size_t top_n) {
  if (topics.empty()) throw ConfigError("coherence: no topics");
  auto per_topic = topic_coherences(topics, reference, window, top_n);
  return std::accumulate(per_topic.begin(), per_topic.end(), 0.0) / static_cast<double>(per_topic.size());
}

std::size_t retrieval_count(double fraction, std::size_t n) {
  const double x = fraction * static_cast<double>(n);
  const double nearest = std::round(x);
  // 0.02 * 50 must retrieve 1 document, not 2.
  double count = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::clamp<std::size_t>(static_cast<std::size_t>(count), 1, n);
}

std::vector<RetrievalPoint> retrieval_precision(const Eigen::MatrixXd& train_vectors,
                                                std::span<const std::string> train_labels,
                                                const Eigen::MatrixXd& query_vectors,
                                                std::span<const std::string> query_labels,
                                                std::span<const double> fractions) {
  const auto n_train = static_cast<std::size_t>(train_vectors.rows());
  const auto n_query = static_cast<std::size_t>(query_vectors.rows());
  if (n_train == 0 || n_query == 0) throw ConfigError("retrieval: empty training or query set");
  if (train_labels.size() != n_train || query_labels.size() != n_query) {
    throw ConfigError("retrieval: label count does not match vector count");
  }
  if (train_vectors.cols() != query_vectors.cols()) throw ConfigError("retrieval: vector dimensions differ");
  if (fractions.empty()) throw ConfigError("retrieval: no fractions");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw ConfigError("retrieval: fractions must be in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1])) throw ConfigError("retrieval: fractions must increase");
  }

  std::vector<double> train_norms(n_train);
  for (std::size_t d = 0; d < n_train; ++d) train_norms[d] = train_vectors.row(static_cast<Eigen::Index>(d)).norm();

  std::vector<double> totals(fractions.size(), 0.0);
  std::vector<std::pair<double, std::size_t>> ranked(n_train);
  for (std::size_t q = 0; q < n_query; ++q) {
    const Eigen::RowVectorXd query = query_vectors.row(static_cast<Eigen::Index>(q));
    const double qn = query.norm();
    for (std::size_t d = 0; d < n_train; ++d) {
      double sim = -1.0;
      if (qn > 0.0 && train_norms[d] > 0.0) {
        sim = query.dot(train_vectors.row(static_cast<Eigen::Index>(d))) / (qn * train_norms[d]);
      }
      ranked[d] = {sim, d};
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    std::size_t hits = 0;
    std::size_t taken = 0;
    for (std::size_t f = 0; f < fractions.size(); ++f) {
      const std::size_t want = retrieval_count(fractions[f], n_train);
      for (; taken < want; ++taken) hits += train_labels[ranked[taken].second] == query_labels[q] ? 1 : 0;
      totals[f] += static_cast<double>(hits) / static_cast<double>(want);
    }
  }

  std::vector<RetrievalPoint> out;
  for (std::size_t f = 0; f < fractions.size(); ++f) {
    out.push_back({fractions[f], totals[f] / static_cast<double>(n_query)});
  }
  return out;
}

std::vector<RetrievalPoint> retrieval_precision(const Corpus& train, const Corpus& queries,
                                                const VectorProvider& vectors, std::span<const double> fractions) {
  if (!train.labeled() || !queries.labeled()) throw ConfigError("retrieval: both corpora must be labeled");
  if (train.documents.empty() || queries.documents.empty()) throw ConfigError("retrieval: empty corpus");

  auto embed = [&](const Corpus& corpus, Eigen::MatrixXd& mat, std::vector<std::string>& labels) {
    for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
      const Document& doc = corpus.documents[d];
      Eigen::VectorXd v = vectors(doc);
      if (d == 0) mat.resize(static_cast<Eigen::Index>(corpus.documents.size()), v.size());
      mat.row(static_cast<Eigen::Index>(d)) = v.transpose();
      labels.push_back(corpus.labels.at(doc.label.value()));
    }
  };
  Eigen::MatrixXd train_vectors;
  Eigen::MatrixXd query_vectors;
  std::vector<std::string> train_labels;
  std::vector<std::string> query_labels;
  embed(train, train_vectors, train_labels);
  embed(queries, query_vectors, query_labels);
  return retrieval_precision(train_vectors, train_labels, query_vectors, query_labels, fractions);
}

const std::vector<double>& default_retrieval_fractions() {
  static const std::vector<double> kFractions = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2};
  return kFractions;
}

std::string EvalReport::serialize() const {
  std::string out;
  out += "fingerprint=" + fingerprint + "\n";
  out += "ppl=" + format_double(ppl) + "\n";
  out += "coh=" + format_double(coh) + "\n";
  for (const auto& p : ir) out += "ir " + format_double(p.fraction) + " " + format_double(p.precision) + "\n";
  return out;
}

EvalReport EvalReport::parse(std::string_view text) {
  EvalReport report;
  bool has_ppl = false;
  bool has_coh = false;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("ir ", 0) == 0) {
      std::istringstream fields(line.substr(3));
      std::string f;
      std::string p;
      if (!(fields >> f >> p)) throw ParseError("report", line_no, "expected 'ir <fraction> <precision>'");
      report.ir.push_back({parse_double(f, "report"), parse_double(p, "report")});
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("report", line_no, "expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "fingerprint") {
      report.fingerprint = value;
    } else if (key == "ppl") {
      report.ppl = parse_double(value, "report");
      has_ppl = true;
    } else if (key == "coh") {
      report.coh = parse_double(value, "report");
      has_coh = true;
    } else {
      throw ParseError("report", line_no, "unknown key '" + key + "'");
    }
  }
  if (!has_ppl || !has_coh) throw ParseError("report", 0, "missing ppl or coh");
  report.validate();
  return report;
}

void EvalReport::validate() const {
  if (!(ppl >= 1.0 - 1e-9)) throw ConfigError("report: perplexity must be >= 1");
  if (!(coh >= -1.0 && coh <= 1.0)) throw ConfigError("report: coherence must lie in [-1, 1]");
  for (std::size_t i = 0; i < ir.size(); ++i) {
    if (!(ir[i].precision >= 0.0 && ir[i].precision <= 1.0)) throw ConfigError("report: precision outside [0, 1]");
    if (i > 0 && !(ir[i].fraction > ir[i - 1].fraction)) throw ConfigError("report: fractions must increase");
  }
}

}  // namespace docnade
