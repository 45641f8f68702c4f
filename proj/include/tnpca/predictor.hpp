#pragma once

#include "tnpca/inference.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tnpca {

struct SplitFractions {
  double train = 0.66;
  double validation = 0.17;
  double test = 0.17;
};

struct SplitPlan {
  std::vector<Index> train;  // each part sorted ascending
  std::vector<Index> validation;
  std::vector<Index> test;
  SplitFractions fractions;
  std::uint64_t seed = 0;
};

/// Seeded uniform partition of 0..n-1 with part sizes from largest-remainder rounding.
/// Throws InvalidInput on non-positive fractions, a sum away from 1, or any empty part.
SplitPlan make_split(Index n, const SplitFractions& fractions = {}, std::uint64_t seed = 0);

struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  bool rank_deficient = false;  // minimum-norm solution was used
  bool ridge = false;           // fewer rows than parameters; ridge fallback used
  double lambda = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Least squares with an intercept. Rank-deficient designs get the minimum-norm solution; with
/// fewer rows than columns + 1 a ridge of 1e-6 · trace(XcᵀXc) / p is applied to the slopes.
LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct LogisticOptions {
  double penalty = 1e-6;  // L2 on slopes; the intercept is unpenalized
  int max_iter = 200;
  double tol = 1e-8;  // gradient infinity norm
};

struct LogisticModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;

  Eigen::VectorXd probability(const Eigen::MatrixXd& x) const;
  /// 1 where probability >= 0.5.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

/// Penalized maximum likelihood by damped Newton. y must be 0/1 with both classes present.
LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticOptions& opts = {});

enum class Metric { kRmse, kOneMinusAccuracy };
std::string to_string(Metric m);

struct EvaluateOptions {
  std::vector<Index> k_grid = {5, 10, 20, 30, 40, 60};
  LogisticOptions logistic;
};

struct PredictionReport {
  std::string trait;
  Metric metric = Metric::kRmse;
  double psi_baseline = 0.0;
  double psi_full = 0.0;
  double rho = 0.0;
  Index best_k = 0;
  // Baseline error was at rounding level (≤ 1e-10 · RMS of the test trait); rho is reported as 0.
  bool degenerate = false;
  std::vector<std::pair<Index, double>> validation_errors;  // per K tried
  std::vector<Index> test_indices;                          // rows actually scored
  Eigen::VectorXd test_truth;
  Eigen::VectorXd test_predictions;  // full model at best_k
};

/// Baseline (covariates only, or intercept only) versus covariates plus the first K PC scores.
/// K is chosen on the validation rows (smaller K wins ties); test rows reach only the final scorer.
/// Rows with a missing trait or non-finite covariates are dropped from every part.
PredictionReport evaluate_trait(const EmbeddingMatrix& emb, const TraitVector& trait,
                                const std::optional<Eigen::MatrixXd>& covariates, const SplitPlan& split,
                                const EvaluateOptions& opts = {});

struct RepeatedPrediction {
  std::vector<PredictionReport> runs;
  double rho_mean = 0.0;
  double rho_std = 0.0;
};

/// evaluate_trait over `repeats` splits seeded seed, seed+1, ...
RepeatedPrediction evaluate_trait_repeated(const EmbeddingMatrix& emb, const TraitVector& trait,
                                           const std::optional<Eigen::MatrixXd>& covariates,
                                           const SplitFractions& fractions, std::uint64_t seed, int repeats = 10,
                                           const EvaluateOptions& opts = {});

struct IdentificationReport {
  double accuracy = 0.0;
  Index k = 0;
  std::vector<Index> nearest;          // gallery row matched to each probe
  std::vector<Index> predicted_label;  // label of that gallery row
};

/// 1-nearest-neighbor (Euclidean) on the first k score columns.
IdentificationReport identify_subjects(const Eigen::MatrixXd& gallery, const std::vector<Index>& gallery_labels,
                                       const Eigen::MatrixXd& probes, const std::vector<Index>& probe_labels,
                                       Index k);

/// Mean full-model test prediction per observed trait level, levels ascending.
std::vector<std::pair<double, double>> predicted_group_means(const PredictionReport& report);

}  // namespace tnpca
