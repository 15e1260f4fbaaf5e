#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "docnade/corpus.hpp"
#include "docnade/error.hpp"
#include "docnade/eval.hpp"
#include "docnade/experiment.hpp"
#include "docnade/io.hpp"
#include "docnade/model.hpp"
#include "docnade/synthetic.hpp"
#include "docnade/transfer.hpp"

namespace fs = std::filesystem;
using namespace docnade;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--seed", common.seed, "Random seed");
  cmd->add_option("--out", common.out, "Output location");
  cmd->add_option("--config", common.config, "key = value settings file")->check(CLI::ExistingFile);
}

Settings load_settings(const Common& common) {
  return common.config.empty() ? Settings{} : Settings::load(common.config);
}

const std::string& require_out(const Common& common) {
  if (common.out.empty()) throw ConfigError("--out is required");
  return common.out;
}

struct TrainFlags {
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::string> activation;
  std::optional<std::size_t> patience;
  std::optional<double> init_scale;
  std::optional<double> momentum;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--hidden,-H", f.hidden, "Topic count H");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--lr", f.lr, "Learning rate");
  cmd->add_option("--activation", f.activation, "sigmoid or tanh");
  cmd->add_option("--patience", f.patience, "Early-stopping patience (0 disables)");
  cmd->add_option("--init-scale", f.init_scale, "Uniform initialization scale");
  cmd->add_option("--momentum", f.momentum, "SGD momentum");
}

TrainConfig resolve_train_config(const Common& common, const TrainFlags& f) {
  TrainConfig c = train_config_from_settings(load_settings(common));
  if (common.seed) c.seed = *common.seed;
  if (f.hidden) c.hidden_size = static_cast<Eigen::Index>(*f.hidden);
  if (f.epochs) c.epochs = *f.epochs;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.activation) c.activation = parse_activation(*f.activation);
  if (f.patience) c.validation_patience = *f.patience;
  if (f.init_scale) c.init_scale = *f.init_scale;
  if (f.momentum) c.momentum = *f.momentum;
  c.validate();
  return c;
}

struct CorpusFlags {
  std::string train;
  std::string validation;
  bool unlabeled = false;
  std::size_t min_freq = 1;
  std::size_t max_size = 50000;
};

void add_corpus_flags(CLI::App* cmd, CorpusFlags& f) {
  cmd->add_option("--train", f.train, "Training corpus file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--validation", f.validation, "Validation corpus file")->check(CLI::ExistingFile);
  cmd->add_flag("--unlabeled", f.unlabeled, "Corpus lines carry no label");
  cmd->add_option("--min-freq", f.min_freq, "Minimum token frequency");
  cmd->add_option("--max-size", f.max_size, "Maximum vocabulary size");
}

struct LoadedData {
  Corpus train;
  std::optional<Corpus> validation;
};

LoadedData load_training_data(const CorpusFlags& f) {
  CorpusFileOptions opt;
  opt.labeled = !f.unlabeled;
  opt.min_freq = f.min_freq;
  opt.max_size = f.max_size;
  LoadedData data{load_corpus_file(f.train, opt), std::nullopt};
  if (!f.validation.empty()) {
    // Validation labels need not match the training label set; only words matter here.
    auto raw = read_raw_corpus(f.validation, !f.unlabeled);
    data.validation = encode_corpus(raw, {}, data.train.vocabulary, Split::kValidation);
  }
  return data;
}

void report_log(const TrainResult& r) {
  for (const auto& m : r.log) {
    std::cerr << "epoch " << m.epoch << " loss " << format_double(m.mean_train_loss);
    if (m.validation_ppl) std::cerr << " valid_ppl " << format_double(*m.validation_ppl);
    std::cerr << '\n';
  }
}

int run_train(const Common& common, const CorpusFlags& cf, const TrainFlags& tf) {
  TrainConfig config = resolve_train_config(common, tf);
  const fs::path out = require_out(common);
  LoadedData data = load_training_data(cf);
  TrainOptions opt;
  opt.validation = data.validation ? &*data.validation : nullptr;
  TrainResult r = train(data.train, config, opt);
  report_log(r);
  save_model(out, ModelBundle{r.params, data.train.vocabulary, config.seed, r.best_epoch, {}});
  std::cout << "saved model to " << out.string() << '\n';
  return 0;
}

int run_build_kb(const Common& common, const std::string& model, const std::string& id) {
  ModelBundle b = load_model(model);
  KnowledgeBase kb = build_kb(b.params, b.vocabulary, id);
  save_kb(require_out(common), kb);
  std::cout << "saved knowledge base '" << id << "' to " << common.out << '\n';
  return 0;
}

int run_import(const Common& common, const std::string& input, const std::string& id) {
  KnowledgeBase kb = import_embeddings(input, id);
  save_kb(require_out(common), kb);
  std::cout << "imported " << kb.vocabulary.size() << " embeddings of dimension " << kb.E.rows() << '\n';
  return 0;
}

struct TransferFlags {
  std::vector<std::string> kbs;
  std::vector<double> lambdas;
  std::vector<double> gammas;
  bool mask_oov = false;
};

int run_transfer_train(const Common& common, const CorpusFlags& cf, const TrainFlags& tf, const TransferFlags& xf) {
  TrainConfig config = resolve_train_config(common, tf);
  const fs::path out = require_out(common);
  if (xf.kbs.empty()) throw ConfigError("transfer-train needs at least one --kb");
  auto expand = [&](const std::vector<double>& v, const char* name) {
    if (v.empty()) return std::vector<double>(xf.kbs.size(), 0.0);
    if (v.size() == 1) return std::vector<double>(xf.kbs.size(), v[0]);
    if (v.size() != xf.kbs.size()) throw ConfigError(std::string("--") + name + " needs one value or one per --kb");
    return v;
  };
  const auto lambdas = expand(xf.lambdas, "lambda");
  const auto gammas = expand(xf.gammas, "gamma");

  LoadedData data = load_training_data(cf);
  std::vector<KnowledgeBase> kbs;
  std::vector<SourceWeight> weights;
  std::vector<std::pair<std::string, std::string>> kb_paths;
  for (std::size_t i = 0; i < xf.kbs.size(); ++i) {
    kbs.push_back(load_kb(xf.kbs[i]));
    weights.push_back({kbs.back().source_id, lambdas[i], gammas[i]});
    kb_paths.emplace_back(kbs.back().source_id, fs::relative(fs::absolute(xf.kbs[i]), fs::absolute(out)).string());
  }
  TransferSpec spec = TransferSpec::from_weights(weights, true, true, xf.mask_oov);
  if (!spec.lvt_enabled && !spec.gvt_enabled) throw ConfigError("every --lambda and --gamma is zero");
  fs::create_directories(out);
  TransferContext ctx = make_transfer_context(kbs, data.train.vocabulary, spec, config.hidden_size);
  const auto cov = ctx.coverage();
  for (std::size_t k = 0; k < cov.size(); ++k) {
    std::cerr << "source " << spec.sources[k].source_id << " coverage " << format_double(cov[k]) << '\n';
  }

  ModelParams init = init_params(config.hidden_size, static_cast<Eigen::Index>(data.train.vocabulary.size()),
                                 config.seed, config.init_scale, config.activation);
  if (ctx.gvt()) init.alignments = ctx.initial_alignments();
  TrainOptions opt;
  opt.validation = data.validation ? &*data.validation : nullptr;
  opt.transfer = &ctx;
  TrainResult r = train_from(std::move(init), data.train, config, opt);
  report_log(r);
  save_model(out, ModelBundle{r.params, data.train.vocabulary, config.seed, r.best_epoch,
                              transfer_metadata(spec, kb_paths)});
  std::cout << "saved model to " << out.string() << '\n';
  return 0;
}

struct EvalFlags {
  std::string model;
  std::string test;
  std::string train;
  std::string reference;
  bool unlabeled = false;
  std::size_t window = 110;
  std::size_t top_n = 10;
};

int run_eval(const Common& common, const EvalFlags& f) {
  const fs::path model_dir = f.model;
  ModelBundle b = load_model(model_dir);
  auto ctx = load_transfer_context(b, model_dir);
  const TransferContext* ctx_ptr = ctx ? &*ctx : nullptr;
  const bool labeled = !f.unlabeled;

  auto test_raw = read_raw_corpus(f.test, labeled);
  std::optional<std::vector<RawDocument>> train_raw;
  if (!f.train.empty()) train_raw = read_raw_corpus(f.train, labeled);
  std::vector<std::string> labels;
  if (labeled) {
    std::vector<RawDocument> all = test_raw;
    if (train_raw) all.insert(all.end(), train_raw->begin(), train_raw->end());
    labels = collect_labels(all);
  }
  Corpus test = encode_corpus(test_raw, labels, b.vocabulary, Split::kTest);

  EvalReport report;
  report.ppl = perplexity(b.params, test, ctx_ptr);
  std::optional<Corpus> reference;
  if (!f.reference.empty()) {
    reference = encode_corpus(read_raw_corpus(f.reference, false), {}, b.vocabulary, Split::kTrain);
  } else if (train_raw) {
    reference = encode_corpus(*train_raw, labels, b.vocabulary, Split::kTrain);
  } else {
    reference = test;
  }
  const std::size_t top_n = std::min(f.top_n, b.vocabulary.size());
  report.coh = coherence(extract_topics(b.params, b.vocabulary, top_n), *reference, f.window, top_n);
  if (train_raw && labeled) {
    Corpus train = encode_corpus(*train_raw, labels, b.vocabulary, Split::kTrain);
    report.ir = retrieval_precision(
        train, test, [&](const Document& d) { return document_vector(d, b.params, ctx_ptr); },
        default_retrieval_fractions());
  }
  std::string meta;
  for (const auto& [k, v] : b.extra_meta) meta += k + "=" + v + ";";
  report.fingerprint = config_fingerprint("H=" + std::to_string(b.params.hidden_size()) +
                                          ";K=" + std::to_string(b.params.vocab_size()) + ";seed=" + std::to_string(b.seed) +
                                          ";epochs=" + std::to_string(b.trained_epochs) + ";" + meta);
  report.validate();
  const std::string text = report.serialize();
  if (!common.out.empty()) {
    fs::create_directories(common.out);
    std::ofstream(fs::path(common.out) / "report.txt") << text;
  }
  std::cout << text;
  return 0;
}

int run_topics(const std::string& model, std::size_t n) {
  ModelBundle b = load_model(model);
  const auto topics = extract_topics(b.params, b.vocabulary, n);
  for (std::size_t j = 0; j < topics.size(); ++j) {
    std::cout << "topic " << j << ":";
    for (const auto& w : topics[j]) std::cout << ' ' << w;
    std::cout << '\n';
  }
  return 0;
}

int run_nn(const std::string& model, const std::string& word, std::size_t n) {
  ModelBundle b = load_model(model);
  for (const auto& nb : nearest_neighbors(b.params, b.vocabulary, word, n)) {
    std::cout << nb.word << '\t' << format_double(nb.similarity) << '\n';
  }
  return 0;
}

int run_synth(const Common& common) {
  SyntheticSpec spec = synthetic_spec_from_settings(load_settings(common), "synth.");
  if (common.seed) spec.seed = *common.seed;
  const fs::path out = require_out(common);
  auto gen = generate_synthetic(spec);
  fs::create_directories(out);
  write_raw_corpus(out / "source.txt", gen.source.docs);
  write_raw_corpus(out / "target.train.txt", gen.target_train.docs);
  write_raw_corpus(out / "target.validation.txt", gen.target_validation.docs);
  write_raw_corpus(out / "target.test.txt", gen.target_test.docs);
  save_matrix(out / "source_topics.mat", gen.source_topics);
  save_matrix(out / "target_topics.mat", gen.target_topics);
  std::cout << "wrote synthetic corpora to " << out.string() << '\n';
  return 0;
}

int run_experiment_cmd(const Common& common) {
  if (common.config.empty()) throw ConfigError("experiment needs --config");
  ExperimentConfig cfg = ExperimentConfig::load(common.config);
  if (!common.out.empty()) cfg.out = common.out;
  if (common.seed) {
    cfg.train_config.seed = *common.seed;
    if (cfg.synthetic) cfg.synthetic->seed = *common.seed;
  }
  ExperimentResult r = run_experiment(cfg);
  std::cerr << "selected candidate " << r.selected << " of " << r.selection.size() << '\n';
  std::cout << r.report.serialize();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DocNADE topic models with multi-view, multi-source transfer"};
  app.require_subcommand(1);

  Common common;
  CorpusFlags corpus_flags;
  TrainFlags train_flags;
  TransferFlags transfer_flags;
  EvalFlags eval_flags;
  std::string model, id, input, word;
  std::size_t n = 10;

  auto* train_cmd = app.add_subcommand("train", "Train a DocNADE model");
  add_common(train_cmd, common);
  add_corpus_flags(train_cmd, corpus_flags);
  add_train_flags(train_cmd, train_flags);

  auto* kb_cmd = app.add_subcommand("build-kb", "Export a knowledge base from a trained model");
  add_common(kb_cmd, common);
  kb_cmd->add_option("--model", model, "Model bundle directory")->required();
  kb_cmd->add_option("--id", id, "Source id")->required();

  auto* import_cmd = app.add_subcommand("import-embeddings", "Import text word embeddings as a knowledge base");
  add_common(import_cmd, common);
  import_cmd->add_option("--input", input, "Embedding file")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--id", id, "Source id")->required();

  auto* transfer_cmd = app.add_subcommand("transfer-train", "Train with knowledge transfer from source KBs");
  add_common(transfer_cmd, common);
  add_corpus_flags(transfer_cmd, corpus_flags);
  add_train_flags(transfer_cmd, train_flags);
  transfer_cmd->add_option("--kb", transfer_flags.kbs, "Knowledge base directory (repeatable)")->required();
  transfer_cmd->add_option("--lambda", transfer_flags.lambdas, "Embedding weight, one or one per --kb");
  transfer_cmd->add_option("--gamma", transfer_flags.gammas, "Imitation weight, one or one per --kb");
  transfer_cmd->add_flag("--mask-oov", transfer_flags.mask_oov, "Exclude uncovered words from the penalty");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model: perplexity, coherence, retrieval");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--model", eval_flags.model, "Model bundle directory")->required();
  eval_cmd->add_option("--test", eval_flags.test, "Test corpus")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--train", eval_flags.train, "Training corpus (retrieval database)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--reference", eval_flags.reference, "Coherence reference corpus")->check(CLI::ExistingFile);
  eval_cmd->add_flag("--unlabeled", eval_flags.unlabeled, "Corpus lines carry no label");
  eval_cmd->add_option("--window", eval_flags.window, "Coherence window");
  eval_cmd->add_option("--top-n", eval_flags.top_n, "Coherence words per topic");

  auto* topics_cmd = app.add_subcommand("topics", "Print the top words of every topic");
  add_common(topics_cmd, common);
  topics_cmd->add_option("--model", model, "Model bundle directory")->required();
  topics_cmd->add_option("--n", n, "Words per topic");

  auto* nn_cmd = app.add_subcommand("nn", "Print the nearest neighbors of a word");
  add_common(nn_cmd, common);
  nn_cmd->add_option("--model", model, "Model bundle directory")->required();
  nn_cmd->add_option("--word", word, "Query word")->required();
  nn_cmd->add_option("--n", n, "Neighbor count");

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic source and target corpora");
  add_common(synth_cmd, common);

  auto* exp_cmd = app.add_subcommand("experiment", "Run a configured experiment end to end");
  add_common(exp_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "docnade: " << e.what() << '\n';
    auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  try {
    if (*train_cmd) return run_train(common, corpus_flags, train_flags);
    if (*kb_cmd) return run_build_kb(common, model, id);
    if (*import_cmd) return run_import(common, input, id);
    if (*transfer_cmd) return run_transfer_train(common, corpus_flags, train_flags, transfer_flags);
    if (*eval_cmd) return run_eval(common, eval_flags);
    if (*topics_cmd) return run_topics(model, n);
    if (*nn_cmd) return run_nn(model, word, n);
    if (*synth_cmd) return run_synth(common);
    if (*exp_cmd) return run_experiment_cmd(common);
  } catch (const std::exception& e) {
    std::cerr << "docnade: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
