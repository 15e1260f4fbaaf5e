#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace docnade {

using WordId = std::uint32_t;
using LabelId = std::uint32_t;

// Ordered set of distinct tokens; a token's index is its position.
class Vocabulary {
 public:
  // Throws ConfigError if tokens is empty or contains duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(WordId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<WordId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, WordId> index_;
};

struct Document {
  std::vector<WordId> words;
  std::optional<LabelId> label;

  std::size_t size() const { return words.size(); }
};

enum class Split { kTrain, kValidation, kTest };

std::string_view split_name(Split split);

// One document before vocabulary encoding.
struct RawDocument {
  std::vector<std::string> tokens;
  std::optional<std::string> label;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  std::vector<std::string> labels;  // empty for unlabeled corpora
  Split split = Split::kTrain;

  // Ingestion statistics.
  std::size_t dropped_documents = 0;
  std::size_t dropped_tokens = 0;

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return documents.size(); }
  std::size_t token_count() const;
  std::vector<std::string> decode(const Document& doc) const;
};

// Lowercases, splits on whitespace and strips non-alphanumeric characters from
// both ends of each piece. Bytes >= 0x80 count as alphanumeric so UTF-8
// sequences are never split.
std::vector<std::string> tokenize(std::string_view text);

// Tokens with frequency >= min_freq, ordered by descending frequency then
// lexicographically, truncated to max_size.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, std::size_t min_freq,
                            std::size_t max_size);
Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, std::size_t min_freq,
                            std::size_t max_size);

// Sorted distinct label strings found in raw.
std::vector<std::string> collect_labels(const std::vector<RawDocument>& raw);

// Maps tokens through vocabulary, dropping OOV tokens and documents left
// empty. When labels is non-empty every raw document must carry a label from
// that list.
Corpus encode_corpus(const std::vector<RawDocument>& raw, const std::vector<std::string>& labels,
                     const Vocabulary& vocabulary, Split split);

struct CorpusFileOptions {
  bool labeled = true;
  std::size_t min_freq = 1;
  std::size_t max_size = 50000;
  Split split = Split::kTrain;
};

std::vector<RawDocument> read_raw_corpus(const std::filesystem::path& path, bool labeled);
std::vector<RawDocument> parse_raw_corpus(std::string_view text, bool labeled,
                                          const std::string& source_name = "<memory>");

// Loads a corpus file. Without a vocabulary one is built from the file with
// options.min_freq / options.max_size. Without a label list one is collected
// from the file.
Corpus load_corpus_file(const std::filesystem::path& path, const CorpusFileOptions& options,
                        const std::optional<Vocabulary>& vocabulary = std::nullopt,
                        const std::optional<std::vector<std::string>>& labels = std::nullopt);

void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus);
void write_raw_corpus(const std::filesystem::path& path, const std::vector<RawDocument>& docs);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocabulary);

}  // namespace docnade
