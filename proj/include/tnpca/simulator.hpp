#pragma once

#include "tnpca/decomposer.hpp"
#include "tnpca/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace tnpca {

enum class SubjectFactorMode { kOrthogonalStiefel, kGaussianUnitNorm };

std::string to_string(SubjectFactorMode mode);
SubjectFactorMode subject_factor_mode_from_string(const std::string& name);

struct SimulationConfig {
  Index nodes = 30;      // P
  Index subjects = 100;  // N
  Index rank = 5;        // true K
  double snr = 1.0;
  SubjectFactorMode u_mode = SubjectFactorMode::kGaussianUnitNorm;
  std::uint64_t seed = 0;
  int replicates = 10;

  /// Throws InvalidInput on K > min(P, N), snr <= 0 (or non-finite), replicates < 1.
  void validate() const;
};

struct SimulationDraw {
  SemiSymmetricTensor x;
  Eigen::VectorXd d_true;
  Eigen::MatrixXd v_true;  // P x K
  Eigen::MatrixXd u_true;  // N x K
  double noise_scale = 0.0;
  double signal_norm = 0.0;
  double noise_norm = 0.0;  // norm of the scaled noise c·E
};

/// P x K matrix with orthonormal columns: QR of a Gaussian matrix with R's diagonal made positive.
Eigen::MatrixXd sample_stiefel(Index p, Index k, std::mt19937_64& rng);
/// N x K matrix of independent Gaussian columns scaled to unit norm.
Eigen::MatrixXd sample_unit_columns(Index n, Index k, std::mt19937_64& rng);
/// N slices, each G Gᵀ with G a P x P standard Gaussian matrix (Wishart(I, P)).
SemiSymmetricTensor sample_wishart_noise(Index p, Index n, std::mt19937_64& rng);

/// Diagonal core values (2 - 0.1 k) sqrt(P N), k = 1..K.
Eigen::VectorXd planted_core(Index p, Index n, Index k);

/// Σ_k d_k v_k∘v_k∘u_k.
SemiSymmetricTensor planted_signal(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u);

/// Signal plus Wishart noise scaled so that ‖S‖ / ‖cE‖ equals cfg.snr.
SimulationDraw generate(const SimulationConfig& cfg, std::mt19937_64& rng);

/// Greedy assignment of estimated to true components by largest |cosine| between node factors.
/// Returns, for each true component, the matched estimate column (or nullopt when unmatched).
std::vector<std::optional<Index>> match_components(const Eigen::MatrixXd& v_true, const Eigen::MatrixXd& v_est);

/// ‖D - D̂‖ / ‖D‖ with estimated components aligned to the truth by match_components.
/// Unmatched true components count as estimated zero.
double relative_core_error(const Eigen::VectorXd& d_true, const Eigen::MatrixXd& v_true, const TnDecomposition& dec);
/// Tucker version: the full estimated core is permuted into the truth's order (node and subject
/// factors matched separately) with subject-factor signs aligned, then compared to the diagonal truth.
double relative_core_error(const Eigen::VectorXd& d_true, const Eigen::MatrixXd& v_true,
                           const Eigen::MatrixXd& u_true, const TuckerDecomposition& dec);

struct VarianceExplained {
  double value = 0.0;
  bool pseudo_inverse = false;  // a Gram matrix was (numerically) singular
};

/// ‖X ×1 P_V ×2 P_V ×3 P_U‖² / ‖X‖² with P_A = A_k (A_kᵀ A_k)⁻¹ A_kᵀ over the first k columns.
VarianceExplained variance_explained(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u,
                                     Index k);
/// Values for k = 1..min(cols).
std::vector<double> cumulative_variance_explained(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v,
                                                  const Eigen::MatrixXd& u);

enum class Method { kTnPca, kHosvd, kHooi };
std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct StudyGrid {
  std::vector<double> snrs = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<Index> ranks = {5};
  std::vector<Method> methods = {Method::kTnPca, Method::kHosvd, Method::kHooi};
};

struct StudyOptions {
  TnPcaOptions tnpca;
  HooiOptions hooi;
  unsigned threads = 1;
};

struct StudyCell {
  Method method = Method::kTnPca;
  double snr = 0.0;
  Index rank = 0;
  std::vector<double> core_errors;                  // per replicate
  std::vector<std::vector<double>> variance_curves;  // per replicate, k = 1..rank
  double core_error_mean = 0.0;
  double core_error_std = 0.0;
  std::vector<double> variance_mean;
  std::vector<double> variance_std;
  std::vector<std::string> failures;
};

struct SimulationReport {
  SimulationConfig base;
  std::vector<StudyCell> cells;  // ordered by (snr, rank, method)

  const StudyCell* find(Method m, double snr, Index rank) const;
};

/// Draw for replicate `replicate` at grid position `snr_index`; independent of method and rank so
/// every method is scored on identical data.
SimulationDraw study_draw(const SimulationConfig& base, double snr, std::size_t snr_index, int replicate);

SimulationReport run_study(const StudyGrid& grid, const SimulationConfig& base, const StudyOptions& opts = {});

// Test-retest populations for subject identification.

struct TestRetestConfig {
  Index nodes = 30;
  Index subjects = 20;
  Index scans = 2;
  Index latent_rank = 16;
  double signal_to_noise = 5.0;  // ‖subject deviations‖ / ‖scan noise‖
  double population_level = 3.0;
};

struct TestRetestDraw {
  SemiSymmetricTensor x;          // slices ordered scan-major: slice = scan * subjects + subject
  std::vector<Index> subject_of;  // per slice
  std::vector<Index> scan_of;     // per slice
};

TestRetestDraw generate_test_retest(const TestRetestConfig& cfg, std::mt19937_64& rng);

// Populations with a trait-linked component, for end-to-end association checks.

struct PlantedTraitConfig {
  SimulationConfig base;
  Index component = 0;             // which planted component carries the trait effect
  std::pair<Index, Index> edge{0, 1};  // node pair the trait component concentrates on
  double effect = 2.0;             // shift of the component's subject loadings per unit trait
  Index null_traits = 4;
};

struct PlantedTraitDraw {
  SimulationDraw draw;
  Eigen::VectorXd trait;                   // N(0,1) per subject, drives the planted component
  std::vector<Eigen::VectorXd> null_traits;  // independent of the tensor
};

PlantedTraitDraw generate_planted_trait(const PlantedTraitConfig& cfg, std::mt19937_64& rng);

}  // namespace tnpca
