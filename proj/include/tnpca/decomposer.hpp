#pragma once

#include "tnpca/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tnpca {

struct TnPcaOptions {
  double tol = 1e-9;     // relative objective change that ends a component's alternation
  int max_iter = 500;    // alternations per component
  // Initializations tried per component: the Σ X_n² eigenvector, the mean-slice eigenvector, then random.
  int restarts = 5;
  std::uint64_t seed = 0;
};

/// Greedy semi-symmetric CP model X ≈ Σ_k d_k v_k∘v_k∘u_k with orthonormal V and unit-norm U columns.
struct TnDecomposition {
  Eigen::VectorXd d;
  Eigen::MatrixXd V;  // P x K
  Eigen::MatrixXd U;  // N x K
  std::vector<std::vector<double>> objective_trace;  // per component, per alternation
  std::vector<bool> converged;
  std::vector<bool> degenerate;
  // Frobenius norm of the working tensor before the first component and after each deflation.
  std::vector<double> residual_norms;
  std::vector<std::string> warnings;

  Index components() const { return d.size(); }
};

struct RankOneResult {
  double d = 0.0;
  Eigen::VectorXd v;
  Eigen::VectorXd u;
  std::vector<double> trace;
  bool converged = false;
  bool degenerate = false;
  // Every initialization hit a zero fiber; d is 0 and the factors are meaningless.
  bool failed = false;
};

/// Orthonormal basis of the complement of span(v_prev) (P x (P - k)); identity when v_prev is empty.
Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& v_prev, Index p);

/// One rank-one fit on the working tensor, constrained orthogonal to the columns of `v_prev`.
/// Alternates u = X̂ ×1 v ×2 v / ‖·‖ and v = E_max(P (X̂ ×3 u) P). A zero fiber triggers a
/// fresh random start drawn from `rng`, at most `opts.restarts` times.
RankOneResult rank_one_step(const SemiSymmetricTensor& residual, const Eigen::MatrixXd& v_prev,
                            const Eigen::VectorXd& init, const TnPcaOptions& opts, std::mt19937_64& rng);

/// TN-PCA: K greedy rank-one fits with subtraction deflation. Throws RankError unless 1 <= k <= P.
/// Stops early, with a warning, once the residual has nothing left to fit.
TnDecomposition tn_pca(const SemiSymmetricTensor& x, Index k, const TnPcaOptions& opts = {});

/// Σ_k d_k U(subject,k) v_k v_kᵀ.
Eigen::MatrixXd reconstruct_subject(const TnDecomposition& dec, Index subject);
SemiSymmetricTensor reconstruct(const TnDecomposition& dec);

/// Four-mode extension: X ≈ Σ_k d_k v_k∘v_k∘w_k∘u_k, orthogonality on V only.
struct Tn4Decomposition {
  Eigen::VectorXd d;
  Eigen::MatrixXd V;  // P x K
  Eigen::MatrixXd W;  // M x K, unit columns
  Eigen::MatrixXd U;  // N x K, unit columns
  std::vector<std::vector<double>> objective_trace;
  std::vector<bool> converged;
  std::vector<bool> degenerate;
  std::vector<double> residual_norms;
  std::vector<std::string> warnings;

  Index components() const { return d.size(); }
};

Tn4Decomposition tn_pca_4mode(const SemiSymmetricTensor4& x, Index k, const TnPcaOptions& opts = {});
SemiSymmetricTensor4 reconstruct(const Tn4Decomposition& dec);

// Tucker baselines with tied node factors: X ≈ D ×1 V ×2 V ×3 U.

struct TuckerDecomposition {
  Tensor core;        // K_V x K_V x K_U
  Eigen::MatrixXd V;  // P x K_V, orthonormal
  Eigen::MatrixXd U;  // N x K_U, orthonormal
  std::vector<double> fit_trace;  // ‖core‖² per sweep (HOSVD: one entry)
  bool converged = true;
  int iterations = 0;
};

struct HooiOptions {
  double tol = 1e-9;
  int max_iter = 200;
};

/// Leading `k` eigenvectors of a symmetric matrix, descending, each under the sign convention.
Eigen::MatrixXd top_eigenvectors(const Eigen::MatrixXd& sym, Index k);

TuckerDecomposition hosvd_semisym(const SemiSymmetricTensor& x, Index kv, Index ku);
/// HOOI started from HOSVD. Returns the sweep with the largest core energy, so it never fits worse
/// than its initialization.
TuckerDecomposition hooi_semisym(const SemiSymmetricTensor& x, Index kv, Index ku, const HooiOptions& opts = {});

/// X ×1 Vᵀ ×2 Vᵀ ×3 Uᵀ.
Tensor tucker_core(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u);
SemiSymmetricTensor reconstruct(const TuckerDecomposition& dec);
/// 1 - ‖X - X̂‖_F / ‖X‖_F.
double tucker_fit(const SemiSymmetricTensor& x, const TuckerDecomposition& dec);

}  // namespace tnpca
