#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace docnade {

enum class Activation { kSigmoid, kTanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

// Learned map from target topics onto one source's topics (H x H).
struct Alignment {
  std::string source_id;
  Eigen::MatrixXd matrix;
};

// DocNADE parameters plus the per-source alignment matrices used by the
// topic-imitation penalty.
struct ModelParams {
  Eigen::MatrixXd W;  // H x K, column w embeds word w, row j is topic j
  Eigen::MatrixXd U;  // K x H
  Eigen::VectorXd b;  // K
  Eigen::VectorXd c;  // H
  Activation activation = Activation::kSigmoid;
  std::vector<Alignment> alignments;

  Eigen::Index hidden_size() const { return W.rows(); }
  Eigen::Index vocab_size() const { return W.cols(); }

  // Throws ConfigError on inconsistent shapes, NumericalError on non-finite entries.
  void validate() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

// W and U uniform in [-init_scale, init_scale] from a seeded generator; b and c zero.
ModelParams init_params(Eigen::Index hidden, Eigen::Index vocab, std::uint64_t seed, double init_scale,
                        Activation activation = Activation::kSigmoid);

}  // namespace docnade
