#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docnade/corpus.hpp"
#include "docnade/eval.hpp"
#include "docnade/io.hpp"
#include "docnade/model.hpp"
#include "docnade/synthetic.hpp"
#include "docnade/transfer.hpp"

namespace docnade {

enum class Mode { kBaseline, kLvt, kGvt, kMvt, kZeroShot, kDataAugment };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

// A source is given either as a raw corpus (a source model is trained and
// exported), a saved KB bundle, or an external embedding file.
struct SourceConfig {
  std::string id;
  std::filesystem::path corpus;
  std::filesystem::path kb;
  std::filesystem::path embeddings;
  std::optional<std::vector<double>> lambda_grid;  // per-source override
  std::optional<std::vector<double>> gamma_grid;
};

struct ExperimentConfig {
  std::filesystem::path train;
  std::filesystem::path validation;  // optional
  std::filesystem::path test;
  std::optional<std::filesystem::path> coherence_reference;
  bool labeled = true;
  std::size_t min_freq = 1;
  std::size_t max_size = 50000;

  Mode mode = Mode::kBaseline;
  std::vector<SourceConfig> sources;
  TrainConfig train_config;
  std::size_t source_epochs = 0;  // 0: same as train_config.epochs
  std::vector<double> lambda_grid = {0.1, 0.5, 1.0};
  std::vector<double> gamma_grid = {0.1, 0.01, 0.001};
  bool gvt_mask_oov = false;

  std::vector<double> fractions = default_retrieval_fractions();
  std::size_t coh_window = 110;
  std::size_t coh_top_n = 10;

  std::filesystem::path out;
  // When set, corpora are generated into <out>/data and the paths above are
  // filled in with a single source named "synthetic".
  std::optional<SyntheticSpec> synthetic;

  // Relative paths are resolved against base_dir.
  static ExperimentConfig from_settings(const Settings& settings, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);

  void validate() const;
};

// Reads the TrainConfig keys (H, epochs, learning_rate, seed, activation,
// shuffle_words, shuffle_docs, init_scale, validation_patience, momentum).
TrainConfig train_config_from_settings(const Settings& settings, TrainConfig defaults = {});
// Reads "<prefix>topics", "<prefix>vocab_size", ... for the generator.
SyntheticSpec synthetic_spec_from_settings(const Settings& settings, const std::string& prefix,
                                           SyntheticSpec defaults = {});

struct CandidateResult {
  std::vector<SourceWeight> weights;
  double validation_ppl = 0.0;
};

struct GridSearchResult {
  std::size_t best = 0;
  std::vector<CandidateResult> table;
  TrainResult best_model;
  std::optional<TransferContext> best_context;  // empty when the winner uses no transfer
};

struct GridSearchInput {
  const Corpus* train = nullptr;
  const Corpus* validation = nullptr;
  TrainConfig config;
  const std::vector<KnowledgeBase>* kbs = nullptr;
  bool allow_lvt = true;
  bool allow_gvt = true;
  bool gvt_mask_oov = false;
};

// Trains one model per candidate with the same seed and keeps the one with
// the lowest validation perplexity (first listed wins ties).
GridSearchResult grid_search(const GridSearchInput& input, const std::vector<std::vector<SourceWeight>>& candidates);

// Shared-value grids when no source overrides its grid, otherwise the
// cartesian product of per-source grids.
std::vector<std::vector<SourceWeight>> make_candidates(Mode mode, const std::vector<SourceConfig>& sources,
                                                       const std::vector<double>& lambda_grid,
                                                       const std::vector<double>& gamma_grid);

struct ExperimentResult {
  EvalReport report;
  std::vector<CandidateResult> selection;
  std::size_t selected = 0;
  ModelBundle model;
  std::size_t training_documents = 0;
  std::vector<std::string> audit;  // "<purpose> <name> documents=<n>" lines
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// meta.txt lines recording the transfer setup of a model bundle. kb_paths maps
// source id to its KB bundle directory, relative to the model directory.
std::vector<std::pair<std::string, std::string>> transfer_metadata(
    const TransferSpec& spec, const std::vector<std::pair<std::string, std::string>>& kb_paths);

// Rebuilds the transfer context recorded by transfer_metadata(); empty when the
// bundle was trained without transfer.
std::optional<TransferContext> load_transfer_context(const ModelBundle& bundle,
                                                     const std::filesystem::path& model_dir);

// Stable hex digest of the settings that determine a trained model.
std::string config_fingerprint(const std::string& canonical);

}  // namespace docnade
