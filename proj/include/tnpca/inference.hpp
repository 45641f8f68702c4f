#pragma once

#include "tnpca/decomposer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace tnpca {

/// Subject PC scores (rows of U) together with the network factors they multiply.
/// Row i reconstructs subject i as Σ_k d_k scores(i,k) v_k v_kᵀ.
struct EmbeddingMatrix {
  Eigen::MatrixXd scores;  // N x K
  Eigen::VectorXd d;       // K
  Eigen::MatrixXd V;       // P x K

  static EmbeddingMatrix from(const TnDecomposition& dec);
  Index subjects() const { return scores.rows(); }
  Index components() const { return scores.cols(); }
  /// Same embedding restricted to the first k components.
  EmbeddingMatrix truncated(Index k) const;
};

enum class TraitKind { kContinuous, kOrdinal, kCategorical };
std::string to_string(TraitKind kind);
TraitKind trait_kind_from_string(const std::string& name);

/// Per-subject trait values; NaN marks a missing entry.
struct TraitVector {
  Eigen::VectorXd values;
  TraitKind kind = TraitKind::kContinuous;
  std::string name;

  bool missing(Index i) const;
  std::vector<Index> observed() const;
};

struct GroupEmbedding {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased sample covariance
  Index count = 0;

  static GroupEmbedding of(const Eigen::MatrixXd& scores, const std::vector<Index>& rows);
};

enum class DirectionMethod { kCca, kLda };
std::string to_string(DirectionMethod m);

struct Direction {
  Eigen::VectorXd w;          // unit K-vector
  double s = 0.0;             // ‖ū_low - ū_high‖
  Eigen::MatrixXd delta_net;  // s Σ_k d_k w_k v_k v_kᵀ
  std::string trait;
  DirectionMethod method = DirectionMethod::kCca;
  // LDA only: midpoint of the projected group means.
  std::optional<double> threshold;
  // LDA only: ridge actually added to Σ0 + Σ1.
  double ridge = 0.0;
};

struct TestResult {
  double statistic = 0.0;  // biased MMD²
  double p_value = 1.0;
  int permutations = 0;
  double bandwidth = 0.0;
};

struct GroupSplit {
  std::vector<Index> low;
  std::vector<Index> high;
};

/// Bottom-n and top-n subjects by trait value among observed entries. Ties at either boundary are
/// resolved by uniform random choice; the two groups are always disjoint.
GroupSplit extreme_groups(const TraitVector& trait, Index n_per_group, std::mt19937_64& rng);

struct MmdOptions {
  int permutations = 1000;
  unsigned threads = 1;
};

/// Two-sample MMD test with a Gaussian kernel (median-heuristic bandwidth on the pooled sample)
/// and add-one permutation p-value. Symmetric in (a, b).
TestResult mmd_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::mt19937_64& rng,
                    const MmdOptions& opts = {});

/// Biased MMD² with a fixed bandwidth; exposed for oracles and diagnostics.
double mmd_statistic(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth);

struct FdrResult {
  std::vector<bool> rejected;
  double threshold = 0.0;  // α·i*/m for the largest passing rank i*, 0 when nothing is rejected
  std::size_t rejections = 0;
};

/// Benjamini-Hochberg step-up at level alpha.
FdrResult fdr_bh(const std::vector<double>& p_values, double alpha);

/// Ordinary least-squares residuals of y on [1, covariates].
Eigen::VectorXd residualize(const Eigen::VectorXd& y, const Eigen::MatrixXd& covariates);

/// w = U_cᵀ y_c / ‖·‖ on rows with an observed trait (and covariates), after residualizing y on the
/// covariates when given. `groups` supplies the low/high subjects that define s; without it the
/// observed subjects are split at the median. Throws NumericalError when the trait is constant
/// (or fully explained by the covariates).
Direction cca_direction(const EmbeddingMatrix& emb, const TraitVector& trait,
                        const std::optional<Eigen::MatrixXd>& covariates = std::nullopt,
                        const std::optional<GroupSplit>& groups = std::nullopt);

struct LdaOptions {
  // Ridge added to Σ0 + Σ1; nullopt selects 1e-6 · trace(Σ0 + Σ1) / K.
  std::optional<double> ridge;
};

/// (Σ0 + Σ1 + ridge·I)⁻¹ (μ1 - μ0), normalized. With ridge == 0 a singular pooled covariance throws
/// NumericalError; if the pooled covariance is exactly zero the mean difference itself is used.
Eigen::VectorXd lda_weights(const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma0,
                            const Eigen::MatrixXd& sigma1, double ridge);

/// w = normalize((Σ0 + Σ1 + λI)⁻¹ (μ1 - μ0)), pointing from group0 toward group1.
Direction lda_direction(const EmbeddingMatrix& emb, const std::vector<Index>& group0, const std::vector<Index>& group1,
                        const LdaOptions& opts = {}, const std::string& trait = "");

/// ‖ū0 - ū1‖ over the score rows of the two groups.
double direction_scale(const EmbeddingMatrix& emb, const std::vector<Index>& group0, const std::vector<Index>& group1);

/// s Σ_k d_k w_k v_k v_kᵀ.
Eigen::MatrixXd delta_net(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, const Eigen::VectorXd& w, double s);

struct Edge {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
  bool operator==(const Edge&) const = default;
};

/// Strict upper-triangle entries ranked by |value| (ties by (i, j)); exact zeros are skipped.
std::vector<Edge> top_edges(const Eigen::MatrixXd& net, Index n_edges);

/// Σ_{k<K} d_k v_k v_kᵀ.
Eigen::MatrixXd principal_network(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, Index k);

/// ⟨a, b⟩.
double project_onto(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace tnpca
