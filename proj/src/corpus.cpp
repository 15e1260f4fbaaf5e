#include "docnade/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "docnade/error.hpp"

namespace docnade {

namespace {

bool is_word_byte(unsigned char ch) {
  return ch >= 0x80 || (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z');
}

bool is_space(unsigned char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ConfigError("empty vocabulary");
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<WordId>(i));
    if (!inserted) throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& doc : documents) n += doc.size();
  return n;
}

std::vector<std::string> Corpus::decode(const Document& doc) const {
  std::vector<std::string> out;
  out.reserve(doc.size());
  for (WordId w : doc.words) out.push_back(vocabulary.token(w));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (start < end && !is_word_byte(static_cast<unsigned char>(text[start]))) ++start;
    while (end > start && !is_word_byte(static_cast<unsigned char>(text[end - 1]))) --end;
    if (start == end) continue;
    std::string piece(text.substr(start, end - start));
    for (char& ch : piece) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
    out.push_back(std::move(piece));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, std::size_t min_freq,
                            std::size_t max_size) {
  if (docs.empty()) throw ConfigError("build_vocabulary: no documents");
  if (min_freq < 1 || max_size < 1) throw ConfigError("build_vocabulary: min_freq and max_size must be >= 1");

  std::map<std::string, std::size_t> counts;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) kept.emplace_back(tok, n);
  }
  // counts is already lexicographic, so a stable sort on frequency is enough.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > max_size) kept.resize(max_size);
  if (kept.empty()) throw ConfigError("empty vocabulary: no token reaches min_freq=" + std::to_string(min_freq));

  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocabulary(const std::vector<RawDocument>& docs, std::size_t min_freq, std::size_t max_size) {
  std::vector<std::vector<std::string>> token_docs;
  token_docs.reserve(docs.size());
  for (const auto& d : docs) token_docs.push_back(d.tokens);
  return build_vocabulary(token_docs, min_freq, max_size);
}

std::vector<std::string> collect_labels(const std::vector<RawDocument>& raw) {
  std::vector<std::string> labels;
  for (const auto& d : raw) {
    if (d.label) labels.push_back(*d.label);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

Corpus encode_corpus(const std::vector<RawDocument>& raw, const std::vector<std::string>& labels,
                     const Vocabulary& vocabulary, Split split) {
  Corpus corpus{vocabulary, {}, labels, split};
  std::unordered_map<std::string, LabelId> label_index;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!label_index.emplace(labels[i], static_cast<LabelId>(i)).second) {
      throw ConfigError("duplicate label '" + labels[i] + "'");
    }
  }

  for (std::size_t d = 0; d < raw.size(); ++d) {
    const RawDocument& in = raw[d];
    Document doc;
    if (!labels.empty()) {
      if (!in.label) throw ParseError("document " + std::to_string(d + 1), 0, "missing label");
      auto it = label_index.find(*in.label);
      if (it == label_index.end()) {
        throw ParseError("document " + std::to_string(d + 1), 0, "unknown label '" + *in.label + "'");
      }
      doc.label = it->second;
    }
    doc.words.reserve(in.tokens.size());
    for (const auto& tok : in.tokens) {
      if (auto id = vocabulary.find(tok)) {
        doc.words.push_back(*id);
      } else {
        ++corpus.dropped_tokens;
      }
    }
    if (doc.words.empty()) {
      ++corpus.dropped_documents;
      continue;
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::vector<RawDocument> parse_raw_corpus(std::string_view text, bool labeled, const std::string& source_name) {
  std::vector<RawDocument> docs;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    RawDocument doc;
    if (trim(line).empty()) {
      // Blank lines are empty documents; encode_corpus drops and counts them.
      docs.push_back(std::move(doc));
      continue;
    }
    if (labeled) {
      std::size_t tab = line.find('\t');
      if (tab == std::string_view::npos) throw ParseError(source_name, line_no, "missing tab after label");
      std::string_view label = trim(line.substr(0, tab));
      if (label.empty()) throw ParseError(source_name, line_no, "empty label");
      doc.label = std::string(label);
      doc.tokens = tokenize(line.substr(tab + 1));
    } else {
      doc.tokens = tokenize(line);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RawDocument> read_raw_corpus(const std::filesystem::path& path, bool labeled) {
  return parse_raw_corpus(read_file(path), labeled, path.string());
}

Corpus load_corpus_file(const std::filesystem::path& path, const CorpusFileOptions& options,
                        const std::optional<Vocabulary>& vocabulary,
                        const std::optional<std::vector<std::string>>& labels) {
  std::vector<RawDocument> raw = read_raw_corpus(path, options.labeled);
  if (raw.empty()) throw ParseError(path.string(), 0, "corpus file has no documents");
  Vocabulary vocab = vocabulary ? *vocabulary : build_vocabulary(raw, options.min_freq, options.max_size);
  std::vector<std::string> label_list;
  if (options.labeled) label_list = labels ? *labels : collect_labels(raw);
  try {
    return encode_corpus(raw, label_list, vocab, options.split);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

void write_corpus_file(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& doc : corpus.documents) {
    if (corpus.labeled()) out << corpus.labels.at(doc.label.value()) << '\t';
    for (std::size_t i = 0; i < doc.words.size(); ++i) {
      if (i > 0) out << ' ';
      out << corpus.vocabulary.token(doc.words[i]);
    }
    out << '\n';
  }
}

void write_raw_corpus(const std::filesystem::path& path, const std::vector<RawDocument>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& doc : docs) {
    if (doc.label) out << *doc.label << '\t';
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (i > 0) out << ' ';
      out << doc.tokens[i];
    }
    out << '\n';
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::string text = read_file(path);
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(path.string(), line_no, "empty vocabulary entry");
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocabulary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& tok : vocabulary.tokens()) out << tok << '\n';
}

}  // namespace docnade
