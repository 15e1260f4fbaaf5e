#include "docnade/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "docnade/error.hpp"

namespace docnade {

namespace fs = std::filesystem;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "train", "validation", "test", "coherence_reference", "labeled", "min_freq", "max_size", "mode",
      "source_epochs", "lambda_grid", "gamma_grid", "gvt_mask_oov", "fractions", "coh_window", "coh_top_n", "out",
      "synthetic", "H", "epochs", "learning_rate", "seed", "activation", "shuffle_words", "shuffle_docs",
      "init_scale", "validation_patience", "momentum"};
  return keys;
}

const std::set<std::string>& known_source_keys() {
  static const std::set<std::string> keys = {"corpus", "kb", "embeddings", "lambda_grid", "gamma_grid"};
  return keys;
}

const std::set<std::string>& known_synth_keys() {
  static const std::set<std::string> keys = {
      "topics", "vocab_size", "source_docs", "source_min_len", "source_max_len", "target_docs", "target_min_len",
      "target_max_len", "validation_docs", "test_docs", "doc_concentration", "word_concentration", "seed",
      "overlap"};
  return keys;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

class Audit {
 public:
  void add(std::string_view purpose, const std::string& name, std::size_t documents) {
    lines_.push_back(std::string(purpose) + " " + name + " documents=" + std::to_string(documents));
  }
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  std::vector<std::string> lines_;
};

std::string weights_string(const std::vector<SourceWeight>& weights) {
  std::string out;
  for (const auto& w : weights) {
    if (!out.empty()) out += ",";
    out += w.source_id + ":" + format_double(w.lambda) + ":" + format_double(w.gamma);
  }
  return out.empty() ? "-" : out;
}

// Weights that actually influence training under spec.
std::vector<SourceWeight> effective_weights(const TransferSpec& spec) {
  std::vector<SourceWeight> out;
  for (const auto& w : spec.sources) {
    SourceWeight e{w.source_id, spec.lvt_enabled ? w.lambda : 0.0, spec.gvt_enabled ? w.gamma : 0.0};
    if (e.lambda != 0.0 || e.gamma != 0.0) out.push_back(e);
  }
  return out;
}

std::vector<std::string> label_union(std::initializer_list<const std::vector<RawDocument>*> parts) {
  std::vector<RawDocument> all;
  for (const auto* p : parts) {
    if (p != nullptr) all.insert(all.end(), p->begin(), p->end());
  }
  return collect_labels(all);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string metrics_table(const std::vector<EpochMetrics>& log) {
  std::string out = "epoch\tmean_train_loss\tvalidation_ppl\talignment_residuals\n";
  for (const auto& m : log) {
    out += std::to_string(m.epoch) + "\t" + format_double(m.mean_train_loss) + "\t" +
           (m.validation_ppl ? format_double(*m.validation_ppl) : "-") + "\t";
    std::string res;
    for (double r : m.alignment_residuals) res += (res.empty() ? "" : ",") + format_double(r);
    out += (res.empty() ? "-" : res) + "\n";
  }
  return out;
}

void materialize_synthetic(ExperimentConfig& cfg) {
  const fs::path data = cfg.out / "data";
  fs::create_directories(data);
  SyntheticCorpora gen = generate_synthetic(*cfg.synthetic);
  write_raw_corpus(data / "source.txt", gen.source.docs);
  write_raw_corpus(data / "target.train.txt", gen.target_train.docs);
  write_raw_corpus(data / "target.validation.txt", gen.target_validation.docs);
  write_raw_corpus(data / "target.test.txt", gen.target_test.docs);
  cfg.train = data / "target.train.txt";
  cfg.validation = data / "target.validation.txt";
  cfg.test = data / "target.test.txt";
  cfg.labeled = true;
  bool present = std::any_of(cfg.sources.begin(), cfg.sources.end(), [](const auto& s) { return s.id == "synthetic"; });
  if (!present) cfg.sources.insert(cfg.sources.begin(), SourceConfig{"synthetic", data / "source.txt", {}, {}, {}, {}});
}

bool uses_transfer(Mode m) { return m == Mode::kLvt || m == Mode::kGvt || m == Mode::kMvt; }

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kBaseline:
      return "baseline";
    case Mode::kLvt:
      return "lvt";
    case Mode::kGvt:
      return "gvt";
    case Mode::kMvt:
      return "mvt";
    case Mode::kZeroShot:
      return "zero-shot";
    case Mode::kDataAugment:
      return "data-augment";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::kBaseline, Mode::kLvt, Mode::kGvt, Mode::kMvt, Mode::kZeroShot, Mode::kDataAugment}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected baseline, lvt, gvt, mvt, zero-shot or data-augment)");
}

TrainConfig train_config_from_settings(const Settings& s, TrainConfig d) {
  d.hidden_size = static_cast<Eigen::Index>(s.get_count("H", static_cast<std::size_t>(d.hidden_size)));
  d.epochs = s.get_count("epochs", d.epochs);
  d.learning_rate = s.get_double("learning_rate", d.learning_rate);
  d.seed = s.get_count("seed", d.seed);
  if (auto a = s.find("activation")) d.activation = parse_activation(*a);
  d.shuffle_words = s.get_bool("shuffle_words", d.shuffle_words);
  d.shuffle_docs = s.get_bool("shuffle_docs", d.shuffle_docs);
  d.init_scale = s.get_double("init_scale", d.init_scale);
  d.validation_patience = s.get_count("validation_patience", d.validation_patience);
  d.momentum = s.get_double("momentum", d.momentum);
  return d;
}

SyntheticSpec synthetic_spec_from_settings(const Settings& s, const std::string& p, SyntheticSpec d) {
  d.topics = s.get_count(p + "topics", d.topics);
  d.vocab_size = s.get_count(p + "vocab_size", d.vocab_size);
  d.source_docs = s.get_count(p + "source_docs", d.source_docs);
  d.source_min_len = s.get_count(p + "source_min_len", d.source_min_len);
  d.source_max_len = s.get_count(p + "source_max_len", d.source_max_len);
  d.target_docs = s.get_count(p + "target_docs", d.target_docs);
  d.target_min_len = s.get_count(p + "target_min_len", d.target_min_len);
  d.target_max_len = s.get_count(p + "target_max_len", d.target_max_len);
  d.validation_docs = s.get_count(p + "validation_docs", d.validation_docs);
  d.test_docs = s.get_count(p + "test_docs", d.test_docs);
  d.doc_concentration = s.get_double(p + "doc_concentration", d.doc_concentration);
  d.word_concentration = s.get_double(p + "word_concentration", d.word_concentration);
  d.seed = s.get_count(p + "seed", d.seed);
  d.overlap = s.get_double(p + "overlap", d.overlap);
  return d;
}

ExperimentConfig ExperimentConfig::from_settings(const Settings& s, const fs::path& base) {
  for (const auto& [key, value] : s.entries()) {
    if (known_keys().count(key) > 0) continue;
    if (key.rfind("source.", 0) == 0) {
      std::size_t dot = key.find('.', 7);
      if (dot != std::string::npos && known_source_keys().count(key.substr(dot + 1)) > 0) continue;
    }
    if (key.rfind("synth.", 0) == 0 && known_synth_keys().count(key.substr(6)) > 0) continue;
    throw ConfigError("unknown configuration key '" + key + "'");
  }

  ExperimentConfig c;
  c.train = resolve(base, s.get("train", ""));
  c.validation = resolve(base, s.get("validation", ""));
  c.test = resolve(base, s.get("test", ""));
  if (auto ref = s.find("coherence_reference")) c.coherence_reference = resolve(base, *ref);
  c.labeled = s.get_bool("labeled", c.labeled);
  c.min_freq = s.get_count("min_freq", c.min_freq);
  c.max_size = s.get_count("max_size", c.max_size);
  c.mode = parse_mode(s.get("mode", "baseline"));
  c.train_config = train_config_from_settings(s, c.train_config);
  c.source_epochs = s.get_count("source_epochs", c.source_epochs);
  c.lambda_grid = s.get_doubles("lambda_grid", c.lambda_grid);
  c.gamma_grid = s.get_doubles("gamma_grid", c.gamma_grid);
  c.gvt_mask_oov = s.get_bool("gvt_mask_oov", c.gvt_mask_oov);
  c.fractions = s.get_doubles("fractions", c.fractions);
  c.coh_window = s.get_count("coh_window", c.coh_window);
  c.coh_top_n = s.get_count("coh_top_n", c.coh_top_n);
  c.out = resolve(base, s.get("out", ""));
  if (s.get_bool("synthetic", false)) {
    SyntheticSpec defaults;
    defaults.seed = c.train_config.seed;
    c.synthetic = synthetic_spec_from_settings(s, "synth.", defaults);
  }
  for (const auto& id : s.namespaces("source.")) {
    const std::string p = "source." + id + ".";
    SourceConfig src{id, resolve(base, s.get(p + "corpus", "")), resolve(base, s.get(p + "kb", "")),
                     resolve(base, s.get(p + "embeddings", "")), std::nullopt, std::nullopt};
    if (s.has(p + "lambda_grid")) src.lambda_grid = s.get_doubles(p + "lambda_grid", {});
    if (s.has(p + "gamma_grid")) src.gamma_grid = s.get_doubles(p + "gamma_grid", {});
    c.sources.push_back(std::move(src));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_settings(Settings::load(path), path.parent_path());
}

void ExperimentConfig::validate() const {
  train_config.validate();
  if (out.empty()) throw ConfigError("experiment: 'out' is required");
  if (!synthetic && (train.empty() || test.empty())) throw ConfigError("experiment: 'train' and 'test' are required");
  if (min_freq < 1 || max_size < 1) throw ConfigError("experiment: min_freq and max_size must be >= 1");
  if (coh_top_n < 2 || coh_window < 2) throw ConfigError("experiment: coh_top_n and coh_window must be >= 2");
  if (lambda_grid.empty() || gamma_grid.empty()) throw ConfigError("experiment: grids must be non-empty");
  std::set<std::string> ids;
  for (const auto& s : sources) {
    if (!ids.insert(s.id).second) throw ConfigError("experiment: duplicate source '" + s.id + "'");
    const int given = !s.corpus.empty() + !s.kb.empty() + !s.embeddings.empty();
    if (given != 1) {
      throw ConfigError("experiment: source '" + s.id + "' needs exactly one of corpus, kb, embeddings");
    }
  }
  if (uses_transfer(mode) && sources.empty()) {
    throw ConfigError("experiment: mode " + std::string(mode_name(mode)) + " needs at least one source");
  }
  if (mode == Mode::kZeroShot || mode == Mode::kDataAugment) {
    if (sources.empty()) throw ConfigError("experiment: mode " + std::string(mode_name(mode)) + " needs sources");
    for (const auto& s : sources) {
      if (s.corpus.empty()) throw ConfigError("experiment: source '" + s.id + "' must be a corpus for this mode");
    }
  }
}

std::vector<std::vector<SourceWeight>> make_candidates(Mode mode, const std::vector<SourceConfig>& sources,
                                                       const std::vector<double>& lambda_grid,
                                                       const std::vector<double>& gamma_grid) {
  if (!uses_transfer(mode)) return {{}};
  const bool lvt = mode == Mode::kLvt || mode == Mode::kMvt;
  const bool gvt = mode == Mode::kGvt || mode == Mode::kMvt;
  const std::vector<double> off = {0.0};

  auto pairs_for = [&](const std::vector<double>& lambdas, const std::vector<double>& gammas) {
    std::vector<std::pair<double, double>> out;
    for (double l : lvt ? lambdas : off) {
      for (double g : gvt ? gammas : off) out.emplace_back(l, g);
    }
    return out;
  };

  const bool overridden = std::any_of(sources.begin(), sources.end(),
                                      [](const auto& s) { return s.lambda_grid || s.gamma_grid; });
  std::vector<std::vector<SourceWeight>> out;
  if (!overridden) {
    for (auto [l, g] : pairs_for(lambda_grid, gamma_grid)) {
      std::vector<SourceWeight> c;
      for (const auto& s : sources) c.push_back({s.id, l, g});
      out.push_back(std::move(c));
    }
    return out;
  }
  out.push_back({});
  for (const auto& s : sources) {
    auto options = pairs_for(s.lambda_grid.value_or(lambda_grid), s.gamma_grid.value_or(gamma_grid));
    std::vector<std::vector<SourceWeight>> next;
    for (const auto& prefix : out) {
      for (auto [l, g] : options) {
        auto c = prefix;
        c.push_back({s.id, l, g});
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridSearchResult grid_search(const GridSearchInput& in, const std::vector<std::vector<SourceWeight>>& candidates) {
  if (candidates.empty()) throw ConfigError("grid search: empty candidate list");
  if (in.train == nullptr || in.validation == nullptr) throw ConfigError("grid search: needs train and validation");
  static const std::vector<KnowledgeBase> kNoKbs;
  const auto& kbs = in.kbs != nullptr ? *in.kbs : kNoKbs;

  GridSearchResult result;
  double best_ppl = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    TransferSpec spec = TransferSpec::from_weights(candidates[i], in.allow_lvt, in.allow_gvt, in.gvt_mask_oov);
    std::optional<TransferContext> ctx;
    if (spec.lvt_enabled || spec.gvt_enabled) {
      ctx = make_transfer_context(kbs, in.train->vocabulary, spec, in.config.hidden_size);
    }
    TrainOptions options;
    options.validation = in.validation;
    options.transfer = ctx ? &*ctx : nullptr;
    TrainResult trained = train(*in.train, in.config, options);
    const double ppl = perplexity(trained.params, *in.validation, options.transfer);
    result.table.push_back({candidates[i], ppl});
    if (i == 0 || ppl < best_ppl) {
      best_ppl = ppl;
      result.best = i;
      result.best_model = std::move(trained);
      result.best_context = std::move(ctx);
    }
  }
  return result;
}

std::vector<std::pair<std::string, std::string>> transfer_metadata(
    const TransferSpec& spec, const std::vector<std::pair<std::string, std::string>>& kb_paths) {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("transfer.lvt", spec.lvt_enabled ? "1" : "0");
  meta.emplace_back("transfer.gvt", spec.gvt_enabled ? "1" : "0");
  meta.emplace_back("transfer.gvt_mask_oov", spec.gvt_mask_oov ? "1" : "0");
  std::string ids;
  for (const auto& w : spec.sources) ids += (ids.empty() ? "" : ",") + w.source_id;
  meta.emplace_back("transfer.sources", ids);
  for (const auto& w : spec.sources) {
    const std::string p = "transfer.source." + w.source_id + ".";
    meta.emplace_back(p + "lambda", format_double(w.lambda));
    meta.emplace_back(p + "gamma", format_double(w.gamma));
    for (const auto& [id, path] : kb_paths) {
      if (id == w.source_id) meta.emplace_back(p + "kb", path);
    }
  }
  return meta;
}

std::optional<TransferContext> load_transfer_context(const ModelBundle& bundle, const fs::path& model_dir) {
  Settings meta;
  for (const auto& [k, v] : bundle.extra_meta) meta.set(k, v);
  if (!meta.has("transfer.sources")) return std::nullopt;
  TransferSpec spec;
  spec.lvt_enabled = meta.get_bool("transfer.lvt", false);
  spec.gvt_enabled = meta.get_bool("transfer.gvt", false);
  spec.gvt_mask_oov = meta.get_bool("transfer.gvt_mask_oov", false);
  std::vector<KnowledgeBase> kbs;
  const std::string ids = meta.get("transfer.sources");
  std::size_t pos = 0;
  while (pos < ids.size()) {
    std::size_t comma = ids.find(',', pos);
    if (comma == std::string::npos) comma = ids.size();
    const std::string id = ids.substr(pos, comma - pos);
    pos = comma + 1;
    const std::string p = "transfer.source." + id + ".";
    spec.sources.push_back({id, meta.get_double(p + "lambda"), meta.get_double(p + "gamma")});
    KnowledgeBase kb = load_kb(resolve(model_dir, meta.get(p + "kb")));
    kb.source_id = id;
    kbs.push_back(std::move(kb));
  }
  return make_transfer_context(kbs, bundle.vocabulary, spec, bundle.params.hidden_size());
}

std::string config_fingerprint(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentResult run_experiment(const ExperimentConfig& input) {
  ExperimentConfig cfg = input;
  if (cfg.out.empty()) throw ConfigError("experiment: 'out' is required");
  fs::create_directories(cfg.out);
  if (cfg.synthetic) materialize_synthetic(cfg);
  cfg.validate();

  Audit audit;
  auto stage = [](const std::string& what, auto&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(what + ": " + e.what());
    }
  };

  // Target splits, kept raw so zero-shot / data-augment can re-encode them.
  auto train_raw = stage("reading target train", [&] { return read_raw_corpus(cfg.train, cfg.labeled); });
  auto test_raw = stage("reading target test", [&] { return read_raw_corpus(cfg.test, cfg.labeled); });
  std::optional<std::vector<RawDocument>> validation_raw;
  if (!cfg.validation.empty()) {
    validation_raw = stage("reading target validation", [&] { return read_raw_corpus(cfg.validation, cfg.labeled); });
  }
  const std::vector<std::string> labels =
      cfg.labeled ? label_union({&train_raw, &test_raw, validation_raw ? &*validation_raw : nullptr})
                  : std::vector<std::string>{};

  struct RawSource {
    const SourceConfig* config;
    std::vector<RawDocument> docs;
  };
  std::vector<RawSource> raw_sources;
  for (const auto& s : cfg.sources) {
    if (!s.corpus.empty() && cfg.mode != Mode::kBaseline) {
      raw_sources.push_back({&s, stage("reading source '" + s.id + "'", [&] { return read_raw_corpus(s.corpus, cfg.labeled); })});
    }
  }

  // Vocabulary and training corpus.
  std::optional<Vocabulary> vocab;
  std::vector<Document> training_docs;
  std::string data_tag = "target";
  if (cfg.mode == Mode::kZeroShot || cfg.mode == Mode::kDataAugment) {
    std::vector<RawDocument> pool;
    for (const auto& rs : raw_sources) pool.insert(pool.end(), rs.docs.begin(), rs.docs.end());
    if (cfg.mode == Mode::kDataAugment) pool.insert(pool.end(), train_raw.begin(), train_raw.end());
    vocab = build_vocabulary(pool, cfg.min_freq, std::numeric_limits<std::size_t>::max());
    if (vocab->size() > cfg.max_size) {
      throw ConfigError("vocabulary union has " + std::to_string(vocab->size()) + " tokens, exceeding max_size " +
                        std::to_string(cfg.max_size));
    }
    std::size_t expected = 0;
    for (const auto& rs : raw_sources) {
      Corpus part = encode_corpus(rs.docs, {}, *vocab, Split::kTrain);
      audit.add("train-input", "source:" + rs.config->id, part.size());
      expected += part.size();
      training_docs.insert(training_docs.end(), part.documents.begin(), part.documents.end());
    }
    data_tag = "sources";
    if (cfg.mode == Mode::kDataAugment) {
      Corpus part = encode_corpus(train_raw, {}, *vocab, Split::kTrain);
      audit.add("train-input", "target:train", part.size());
      expected += part.size();
      training_docs.insert(training_docs.end(), part.documents.begin(), part.documents.end());
      data_tag = "sources+target";
    }
    if (training_docs.size() != expected) throw Error("training set size does not match its parts");
  } else {
    vocab = stage("building target vocabulary", [&] { return build_vocabulary(train_raw, cfg.min_freq, cfg.max_size); });
  }

  Corpus target_train = encode_corpus(train_raw, labels, *vocab, Split::kTrain);
  Corpus test = encode_corpus(test_raw, labels, *vocab, Split::kTest);
  if (test.documents.empty()) throw ConfigError("target test split is empty after encoding");
  std::optional<Corpus> validation;
  if (validation_raw) validation = encode_corpus(*validation_raw, labels, *vocab, Split::kValidation);
  if (validation && validation->documents.empty()) validation.reset();

  Corpus training{*vocab, {}, {}, Split::kTrain};
  if (data_tag == "target") {
    training = target_train;
    audit.add("train-input", "target:train", training.size());
  } else {
    training.documents = std::move(training_docs);
  }
  if (training.documents.empty()) throw ConfigError("training corpus is empty after encoding");
  if (validation) audit.add("select-input", "target:validation", validation->size());

  // Knowledge bases.
  std::vector<KnowledgeBase> kbs;
  std::vector<std::pair<std::string, std::string>> kb_paths;
  if (uses_transfer(cfg.mode)) {
    TrainConfig source_config = cfg.train_config;
    if (cfg.source_epochs > 0) source_config.epochs = cfg.source_epochs;
    for (const auto& s : cfg.sources) {
      KnowledgeBase kb = stage("preparing source '" + s.id + "'", [&]() -> KnowledgeBase {
        if (!s.kb.empty()) return load_kb(s.kb);
        if (!s.embeddings.empty()) return import_embeddings(s.embeddings, s.id);
        const auto& docs =
            std::find_if(raw_sources.begin(), raw_sources.end(), [&](const auto& rs) { return rs.config == &s; })->docs;
        Vocabulary source_vocab = build_vocabulary(docs, cfg.min_freq, cfg.max_size);
        Corpus source_corpus = encode_corpus(docs, {}, source_vocab, Split::kTrain);
        audit.add("source-input", "source:" + s.id, source_corpus.size());
        TrainResult trained = train(source_corpus, source_config);
        return build_kb(trained.params, source_vocab, s.id);
      });
      kb.source_id = s.id;
      save_kb(cfg.out / "kb" / s.id, kb);
      kb_paths.emplace_back(s.id, "../kb/" + s.id);
      kbs.push_back(std::move(kb));
    }
  }

  // Candidate selection.
  auto candidates = make_candidates(cfg.mode, cfg.sources, cfg.lambda_grid, cfg.gamma_grid);
  GridSearchResult selection;
  if (validation) {
    GridSearchInput in{&training, &*validation, cfg.train_config, &kbs, true, true, cfg.gvt_mask_oov};
    selection = stage("grid search", [&] { return grid_search(in, candidates); });
  } else {
    if (candidates.size() > 1) throw ConfigError("grid search needs a validation split");
    TransferSpec spec = TransferSpec::from_weights(candidates.front(), true, true, cfg.gvt_mask_oov);
    if (spec.lvt_enabled || spec.gvt_enabled) {
      selection.best_context = make_transfer_context(kbs, *vocab, spec, cfg.train_config.hidden_size);
    }
    TrainOptions options;
    options.transfer = selection.best_context ? &*selection.best_context : nullptr;
    selection.best_model = train(training, cfg.train_config, options);
    selection.table.push_back({candidates.front(), perplexity(selection.best_model.params, training, options.transfer)});
  }
  const TransferContext* ctx = selection.best_context ? &*selection.best_context : nullptr;
  const ModelParams& params = selection.best_model.params;

  // Evaluation.
  Corpus reference = target_train;
  if (cfg.coherence_reference) {
    reference = encode_corpus(read_raw_corpus(*cfg.coherence_reference, false), {}, *vocab, Split::kTrain);
    audit.add("eval-input", "coherence-reference", reference.size());
  } else {
    audit.add("eval-input", "target:train", target_train.size());
  }
  audit.add("eval-input", "target:test", test.size());

  EvalReport report;
  report.ppl = perplexity(params, test, ctx);
  const std::size_t top_n = std::min<std::size_t>(cfg.coh_top_n, vocab->size());
  report.coh = top_n >= 2 ? coherence(extract_topics(params, *vocab, top_n), reference, cfg.coh_window, top_n) : 0.0;
  if (cfg.labeled && !target_train.documents.empty()) {
    report.ir = retrieval_precision(
        target_train, test, [&](const Document& d) { return document_vector(d, params, ctx); }, cfg.fractions);
  }

  const TransferSpec effective_spec = ctx != nullptr ? ctx->spec() : TransferSpec{};
  const auto used = effective_weights(effective_spec);
  const TrainConfig& tc = cfg.train_config;
  std::string canonical = "H=" + std::to_string(tc.hidden_size) + ";epochs=" + std::to_string(tc.epochs) +
                          ";lr=" + format_double(tc.learning_rate) + ";seed=" + std::to_string(tc.seed) +
                          ";activation=" + std::string(activation_name(tc.activation)) +
                          ";shuffle_words=" + std::to_string(tc.shuffle_words) +
                          ";shuffle_docs=" + std::to_string(tc.shuffle_docs) +
                          ";init_scale=" + format_double(tc.init_scale) +
                          ";patience=" + std::to_string(tc.validation_patience) +
                          ";momentum=" + format_double(tc.momentum) + ";min_freq=" + std::to_string(cfg.min_freq) +
                          ";max_size=" + std::to_string(cfg.max_size) + ";data=" + data_tag +
                          ";train_docs=" + std::to_string(training.size()) + ";K=" + std::to_string(vocab->size()) +
                          ";transfer=" + weights_string(used) +
                          ";mask=" + std::to_string(effective_spec.gvt_enabled && effective_spec.gvt_mask_oov) +
                          ";coh=" + std::to_string(cfg.coh_window) + "/" + std::to_string(cfg.coh_top_n) + ";ir=";
  for (double f : cfg.fractions) canonical += format_double(f) + ",";
  report.fingerprint = config_fingerprint(canonical);

  // Artifacts.
  ModelBundle bundle{params, *vocab, tc.seed, selection.best_model.best_epoch, {}};
  if (ctx != nullptr) bundle.extra_meta = transfer_metadata(effective_spec, kb_paths);
  save_model(cfg.out / "model", bundle);

  std::string table = "candidate\tweights\tvalidation_ppl\tselected\n";
  for (std::size_t i = 0; i < selection.table.size(); ++i) {
    table += std::to_string(i) + "\t" + weights_string(selection.table[i].weights) + "\t" +
             format_double(selection.table[i].validation_ppl) + "\t" + (i == selection.best ? "1" : "0") + "\n";
  }
  write_text(cfg.out / "selection.tsv", table);
  write_text(cfg.out / "metrics.tsv", metrics_table(selection.best_model.log));
  std::string topics_text;
  const auto topics = extract_topics(params, *vocab, top_n);
  for (std::size_t j = 0; j < topics.size(); ++j) {
    topics_text += "topic " + std::to_string(j) + ":";
    for (const auto& w : topics[j]) topics_text += " " + w;
    topics_text += "\n";
  }
  write_text(cfg.out / "topics.txt", topics_text);
  std::string audit_text;
  for (const auto& line : audit.lines()) audit_text += line + "\n";
  write_text(cfg.out / "audit.log", audit_text);
  write_text(cfg.out / "report.txt", report.serialize());

  return ExperimentResult{std::move(report), std::move(selection.table), selection.best, std::move(bundle),
                          training.size(), audit.lines()};
}

}  // namespace docnade
