#include "docnade/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "docnade/error.hpp"
#include "docnade/eval.hpp"
#include "docnade/io.hpp"

namespace docnade {

namespace {

void apply_activation(Activation act, const Eigen::VectorXd& a, Eigen::VectorXd& h) {
  if (act == Activation::kSigmoid) {
    h = (1.0 + (-a.array()).exp()).inverse().matrix();
  } else {
    h = a.array().tanh().matrix();
  }
}

// g'(a) written in terms of h = g(a).
Eigen::ArrayXd activation_slope(Activation act, const Eigen::VectorXd& h) {
  if (act == Activation::kSigmoid) return h.array() * (1.0 - h.array());
  return 1.0 - h.array().square();
}

void check_words(std::span<const WordId> words, const ModelParams& params) {
  if (words.empty()) throw ConfigError("document is empty");
  for (WordId w : words) {
    if (static_cast<Eigen::Index>(w) >= params.vocab_size()) {
      throw ConfigError("word index " + std::to_string(w) + " outside vocabulary of size " +
                        std::to_string(params.vocab_size()));
    }
  }
}

void check_context(const ModelParams& params, const TransferContext* ctx) {
  if (ctx == nullptr) return;
  if (ctx->hidden_size() != params.hidden_size() || ctx->vocab_size() != params.vocab_size()) {
    throw ConfigError("transfer context shape does not match the model");
  }
}

// Shared by forward() and the gradient pass. probs receives the full
// conditional distribution at each step when non-null.
ForwardTrace run_forward(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx,
                         std::vector<Eigen::VectorXd>* probs) {
  check_words(words, params);
  check_context(params, ctx);
  const bool lvt = ctx != nullptr && ctx->lvt();

  ForwardTrace trace;
  trace.hidden.resize(words.size());
  trace.log_probs.resize(words.size());
  if (probs != nullptr) probs->resize(words.size());

  Eigen::VectorXd a = params.c;
  Eigen::VectorXd logits(params.vocab_size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    Eigen::VectorXd& h = trace.hidden[i];
    apply_activation(params.activation, a, h);
    logits.noalias() = params.U * h;
    logits += params.b;
    const double max_logit = logits.maxCoeff();
    const double log_norm = max_logit + std::log((logits.array() - max_logit).exp().sum());
    const double lp = logits(words[i]) - log_norm;
    if (!std::isfinite(lp)) {
      throw NumericalError("non-finite log-probability at position " + std::to_string(i), i);
    }
    trace.log_probs[i] = lp;
    if (probs != nullptr) (*probs)[i] = (logits.array() - log_norm).exp().matrix();

    a += params.W.col(words[i]);
    if (lvt) a += ctx->lvt_matrix().col(words[i]);
    if (!a.allFinite()) throw NumericalError("non-finite pre-activation after position " + std::to_string(i), i);
  }
  trace.final_preactivation = std::move(a);
  return trace;
}

}  // namespace

std::string_view activation_name(Activation a) { return a == Activation::kSigmoid ? "sigmoid" : "tanh"; }

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected sigmoid or tanh)");
}

void ModelParams::validate() const {
  const Eigen::Index h = W.rows();
  const Eigen::Index k = W.cols();
  if (h < 1 || k < 1) throw ConfigError("model must have H >= 1 and K >= 1");
  if (U.rows() != k || U.cols() != h || b.size() != k || c.size() != h) {
    throw ConfigError("model parameter shapes are inconsistent with H=" + std::to_string(h) +
                      ", K=" + std::to_string(k));
  }
  for (const auto& al : alignments) {
    if (al.matrix.rows() != h) throw ConfigError("alignment '" + al.source_id + "' has wrong row count");
    if (!al.matrix.allFinite()) throw NumericalError("alignment '" + al.source_id + "' has non-finite entries");
  }
  if (!W.allFinite() || !U.allFinite() || !b.allFinite() || !c.allFinite()) {
    throw NumericalError("model parameters contain non-finite entries");
  }
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (a.activation != b.activation || a.alignments.size() != b.alignments.size()) return false;
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  if (!same(a.W, b.W) || !same(a.U, b.U) || !same(a.b, b.b) || !same(a.c, b.c)) return false;
  for (std::size_t i = 0; i < a.alignments.size(); ++i) {
    if (a.alignments[i].source_id != b.alignments[i].source_id) return false;
    if (!same(a.alignments[i].matrix, b.alignments[i].matrix)) return false;
  }
  return true;
}

ModelParams init_params(Eigen::Index hidden, Eigen::Index vocab, std::uint64_t seed, double init_scale,
                        Activation activation) {
  if (hidden < 1 || vocab < 1) throw ConfigError("init_params: H and K must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_params: init_scale must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-init_scale, init_scale);
  auto draw = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = init_scale == 0.0 ? 0.0 : dist(rng);
    }
  };
  ModelParams p;
  p.W.resize(hidden, vocab);
  p.U.resize(vocab, hidden);
  draw(p.W);
  draw(p.U);
  p.b = Eigen::VectorXd::Zero(vocab);
  p.c = Eigen::VectorXd::Zero(hidden);
  p.activation = activation;
  return p;
}

double ForwardTrace::log_likelihood() const { return std::accumulate(log_probs.begin(), log_probs.end(), 0.0); }

ForwardTrace forward(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx) {
  return run_forward(words, params, ctx, nullptr);
}

double loss(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx) {
  double value = -forward(words, params, ctx).log_likelihood();
  if (ctx != nullptr && ctx->gvt()) value += gvt_penalty(params.W, params.alignments, *ctx);
  return value;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  g.W = Eigen::MatrixXd::Zero(params.W.rows(), params.W.cols());
  g.U = Eigen::MatrixXd::Zero(params.U.rows(), params.U.cols());
  g.b = Eigen::VectorXd::Zero(params.b.size());
  g.c = Eigen::VectorXd::Zero(params.c.size());
  for (const auto& al : params.alignments) {
    g.alignments.push_back(Eigen::MatrixXd::Zero(al.matrix.rows(), al.matrix.cols()));
  }
  return g;
}

void Gradients::set_zero() {
  W.setZero();
  U.setZero();
  b.setZero();
  c.setZero();
  for (auto& a : alignments) a.setZero();
}

double accumulate_gradients(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx,
                            Gradients& out) {
  std::vector<Eigen::VectorXd> probs;
  ForwardTrace trace = run_forward(words, params, ctx, &probs);
  const std::size_t n = words.size();

  // Output layer, then hidden pre-activation gradients per step.
  std::vector<Eigen::VectorXd> d_pre(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd& d_logits = probs[i];
    d_logits(words[i]) -= 1.0;
    out.b += d_logits;
    out.U.noalias() += d_logits * trace.hidden[i].transpose();
    d_pre[i] = (params.U.transpose() * d_logits).array() * activation_slope(params.activation, trace.hidden[i]);
  }

  // W[:, v_q] feeds every later step, so it collects the suffix sum of d_pre.
  Eigen::VectorXd suffix = Eigen::VectorXd::Zero(params.hidden_size());
  for (std::size_t i = n; i-- > 0;) {
    out.W.col(words[i]) += suffix;
    suffix += d_pre[i];
  }
  out.c += suffix;

  double value = -trace.log_likelihood();
  if (ctx != nullptr && ctx->gvt()) {
    value += gvt_penalty(params.W, params.alignments, *ctx);
    GvtGradients g = gvt_gradients(params.W, params.alignments, *ctx);
    out.W += g.W;
    if (out.alignments.size() != g.alignments.size()) {
      throw ConfigError("gradient buffer has the wrong number of alignments");
    }
    for (std::size_t k = 0; k < g.alignments.size(); ++k) out.alignments[k] += g.alignments[k];
  }
  return value;
}

Gradients gradients(std::span<const WordId> words, const ModelParams& params, const TransferContext* ctx) {
  Gradients g = Gradients::zeros_like(params);
  accumulate_gradients(words, params, ctx, g);
  return g;
}

Eigen::VectorXd document_vector(std::span<const WordId> words, const ModelParams& params,
                                const TransferContext* ctx) {
  check_words(words, params);
  check_context(params, ctx);
  Eigen::VectorXd a = params.c;
  for (WordId w : words) {
    a += params.W.col(w);
    if (ctx != nullptr && ctx->lvt()) a += ctx->lvt_matrix().col(w);
  }
  Eigen::VectorXd h;
  apply_activation(params.activation, a, h);
  return h;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (hidden_size < 1) throw ConfigError("hidden size H must be >= 1");
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

TrainResult train(const Corpus& corpus, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  ModelParams initial = init_params(config.hidden_size, static_cast<Eigen::Index>(corpus.vocabulary.size()),
                                    config.seed, config.init_scale, config.activation);
  if (options.transfer != nullptr && options.transfer->gvt()) {
    initial.alignments = options.transfer->initial_alignments();
  }
  return train_from(std::move(initial), corpus, config, options);
}

TrainResult train_from(ModelParams initial, const Corpus& corpus, const TrainConfig& config,
                       const TrainOptions& options) {
  config.validate();
  if (corpus.documents.empty()) throw ConfigError("training corpus is empty");
  initial.validate();
  if (initial.vocab_size() != static_cast<Eigen::Index>(corpus.vocabulary.size())) {
    throw ConfigError("model vocabulary size does not match the training corpus");
  }
  const TransferContext* ctx = options.transfer;
  check_context(initial, ctx);

  TrainResult result;
  result.params = std::move(initial);
  ModelParams& params = result.params;
  std::optional<ModelParams> best;
  double best_ppl = 0.0;
  std::size_t stale_epochs = 0;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(corpus.documents.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<WordId> words;
  Gradients grad = Gradients::zeros_like(params);
  std::optional<Gradients> velocity;
  if (config.momentum > 0.0) velocity = Gradients::zeros_like(params);
  const double lr = config.learning_rate;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle_docs) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const Document& doc = corpus.documents[idx];
      words = doc.words;
      if (config.shuffle_words) std::shuffle(words.begin(), words.end(), rng);

      grad.set_zero();
      double value = 0.0;
      try {
        value = accumulate_gradients(words, params, ctx, grad);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", document " +
                                 std::to_string(idx) + ": " + e.what(),
                             e.position());
      }
      if (!std::isfinite(value)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", document " +
                             std::to_string(idx) + ": non-finite loss");
      }
      loss_sum += value;

      const Gradients* step = &grad;
      if (velocity) {
        Gradients& v = *velocity;
        const double m = config.momentum;
        v.W = m * v.W + grad.W;
        v.U = m * v.U + grad.U;
        v.b = m * v.b + grad.b;
        v.c = m * v.c + grad.c;
        for (std::size_t k = 0; k < v.alignments.size(); ++k) v.alignments[k] = m * v.alignments[k] + grad.alignments[k];
        step = &v;
      }
      params.W -= lr * step->W;
      params.U -= lr * step->U;
      params.b -= lr * step->b;
      params.c -= lr * step->c;
      for (std::size_t k = 0; k < params.alignments.size(); ++k) {
        params.alignments[k].matrix -= lr * step->alignments[k];
      }
      if (!params.W.allFinite() || !params.U.allFinite() || !params.b.allFinite() || !params.c.allFinite() ||
          std::any_of(params.alignments.begin(), params.alignments.end(),
                      [](const Alignment& al) { return !al.matrix.allFinite(); })) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", document " +
                             std::to_string(idx) + ": non-finite parameters after update");
      }
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.mean_train_loss = loss_sum / static_cast<double>(corpus.documents.size());
    if (ctx != nullptr && ctx->gvt()) metrics.alignment_residuals = alignment_residuals(params.W, params.alignments, *ctx);
    if (options.validation != nullptr) metrics.validation_ppl = perplexity(params, *options.validation, ctx);
    result.log.push_back(metrics);
    if (options.on_epoch) options.on_epoch(metrics, params);

    if (options.validation == nullptr) {
      result.best_epoch = epoch;
      continue;
    }
    if (!best || *metrics.validation_ppl < best_ppl) {
      best = params;
      best_ppl = *metrics.validation_ppl;
      result.best_epoch = epoch;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.validation_patience && config.validation_patience > 0) {
      break;
    }
  }
  if (best) params = std::move(*best);
  return result;
}

void save_model(const std::filesystem::path& dir, const ModelBundle& bundle) {
  const ModelParams& p = bundle.params;
  p.validate();
  if (p.vocab_size() != static_cast<Eigen::Index>(bundle.vocabulary.size())) {
    throw ConfigError("save_model: vocabulary does not match K");
  }
  std::filesystem::create_directories(dir);
  Settings meta;
  meta.set("H", std::to_string(p.hidden_size()));
  meta.set("K", std::to_string(p.vocab_size()));
  meta.set("activation", std::string(activation_name(p.activation)));
  meta.set("seed", std::to_string(bundle.seed));
  meta.set("trained_epochs", std::to_string(bundle.trained_epochs));
  std::string ids;
  for (const auto& al : p.alignments) ids += (ids.empty() ? "" : ",") + al.source_id;
  meta.set("alignments", ids);
  for (const auto& [k, v] : bundle.extra_meta) meta.set(k, v);
  meta.save(dir / "meta.txt");
  save_vocabulary(dir / "vocab.txt", bundle.vocabulary);
  save_matrix(dir / "W.mat", p.W);
  save_matrix(dir / "U.mat", p.U);
  save_matrix(dir / "b.mat", p.b);
  save_matrix(dir / "c.mat", p.c);
  for (const auto& al : p.alignments) save_matrix(dir / ("A." + al.source_id + ".mat"), al.matrix);
}

ModelBundle load_model(const std::filesystem::path& dir) {
  Settings meta = Settings::load(dir / "meta.txt");
  ModelParams p;
  p.W = load_matrix(dir / "W.mat");
  p.U = load_matrix(dir / "U.mat");
  Eigen::MatrixXd b = load_matrix(dir / "b.mat");
  Eigen::MatrixXd c = load_matrix(dir / "c.mat");
  if (b.cols() != 1 || c.cols() != 1) throw ParseError(dir.string(), 0, "b.mat and c.mat must be column vectors");
  p.b = b.col(0);
  p.c = c.col(0);
  p.activation = parse_activation(meta.get("activation", "sigmoid"));

  std::string ids = meta.get("alignments", "");
  std::size_t pos = 0;
  while (pos < ids.size()) {
    std::size_t comma = ids.find(',', pos);
    if (comma == std::string::npos) comma = ids.size();
    std::string id = ids.substr(pos, comma - pos);
    if (!id.empty()) p.alignments.push_back({id, load_matrix(dir / ("A." + id + ".mat"))});
    pos = comma + 1;
  }

  if (p.hidden_size() != static_cast<Eigen::Index>(meta.get_count("H")) ||
      p.vocab_size() != static_cast<Eigen::Index>(meta.get_count("K"))) {
    throw ParseError((dir / "meta.txt").string(), 0, "H/K do not match W.mat");
  }
  p.validate();

  ModelBundle bundle{std::move(p), load_vocabulary(dir / "vocab.txt"), meta.get_count("seed", 0),
                     meta.get_count("trained_epochs", 0), {}};
  if (bundle.params.vocab_size() != static_cast<Eigen::Index>(bundle.vocabulary.size())) {
    throw ParseError((dir / "vocab.txt").string(), 0, "vocabulary size does not match K");
  }
  static const char* kCore[] = {"H", "K", "activation", "seed", "trained_epochs", "alignments"};
  for (const auto& [k, v] : meta.entries()) {
    if (std::find(std::begin(kCore), std::end(kCore), k) == std::end(kCore)) bundle.extra_meta.emplace_back(k, v);
  }
  return bundle;
}

}  // namespace docnade
