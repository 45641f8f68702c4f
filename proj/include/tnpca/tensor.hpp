#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace tnpca {

using Index = Eigen::Index;

/// Dense real tensor of arbitrary order stored with the first mode varying
/// fastest. For a P x P x N stack this is slice-major with each frontal slice
/// laid out column-major, so slices can be mapped directly as Eigen matrices.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> dims);
  Tensor(std::vector<Index> dims, std::vector<double> values);

  const std::vector<Index>& dims() const { return dims_; }
  std::size_t order() const { return dims_.size(); }
  Index dim(std::size_t mode) const;
  Index size() const { return static_cast<Index>(data_.size()); }

  double& operator()(Index i, Index j, Index k) { return data_[offset3(i, j, k)]; }
  double operator()(Index i, Index j, Index k) const { return data_[offset3(i, j, k)]; }
  double& operator()(Index i, Index j, Index m, Index n) { return data_[offset4(i, j, m, n)]; }
  double operator()(Index i, Index j, Index m, Index n) const { return data_[offset4(i, j, m, n)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Eigen::Map<Eigen::VectorXd> flat() { return {data_.data(), size()}; }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {data_.data(), size()}; }

  /// Number of frontal slices: product of all extents past the first two.
  Index slice_count() const;
  /// Frontal slice `s` (linear index over modes 3..order) as a dims[0] x dims[1] matrix.
  Eigen::Map<Eigen::MatrixXd> slice(Index s);
  Eigen::Map<const Eigen::MatrixXd> slice(Index s) const;

  /// Order-2 tensor viewed as a matrix.
  Eigen::MatrixXd to_matrix() const;
  static Tensor from_matrix(const Eigen::MatrixXd& m);

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t offset3(Index i, Index j, Index k) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
  }
  std::size_t offset4(Index i, Index j, Index m, Index n) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * (m + dims_[2] * n)));
  }

  std::vector<Index> dims_;
  std::vector<double> data_;
};

/// Largest asymmetry |X(i,j,s) - X(j,i,s)| over all frontal slices, with its location.
struct AsymmetryReport {
  double max_violation = 0.0;
  Index row = 0;
  Index col = 0;
  Index slice = 0;
};
AsymmetryReport measure_asymmetry(const Tensor& x);

// Entries up to this far from symmetric are averaged away; beyond it the input is rejected.
inline constexpr double kSymmetryRejectTolerance = 1e-6;

/// P x P x N stack of symmetric matrices (one network per subject).
class SemiSymmetricTensor {
 public:
  SemiSymmetricTensor() = default;
  /// Validates shape, finiteness and slice symmetry, then symmetrizes exactly.
  /// Throws AsymmetryError when any slice is off by more than kSymmetryRejectTolerance.
  explicit SemiSymmetricTensor(Tensor t);
  static SemiSymmetricTensor from_slices(const std::vector<Eigen::MatrixXd>& slices);
  static SemiSymmetricTensor zeros(Index nodes, Index subjects);

  Index nodes() const { return t_.dim(0); }
  Index subjects() const { return t_.dim(2); }
  Eigen::Map<const Eigen::MatrixXd> slice(Index n) const { return t_.slice(n); }
  const Tensor& tensor() const { return t_; }

  /// Subtract d * v∘v∘u in place; keeps the semi-symmetric invariant.
  void subtract_rank_one(double d, const Eigen::VectorXd& v, const Eigen::VectorXd& u);

 private:
  Tensor t_;
};

/// P x P x M x N tensor: symmetric in the first two modes for every (m, n).
class SemiSymmetricTensor4 {
 public:
  SemiSymmetricTensor4() = default;
  explicit SemiSymmetricTensor4(Tensor t);

  Index nodes() const { return t_.dim(0); }
  Index features() const { return t_.dim(2); }
  Index subjects() const { return t_.dim(3); }
  Eigen::Map<const Eigen::MatrixXd> slice(Index m, Index n) const { return t_.slice(m + features() * n); }
  const Tensor& tensor() const { return t_; }

  void subtract_rank_one(double d, const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                         const Eigen::VectorXd& u);

 private:
  Tensor t_;
};

// Multilinear primitives. Modes are zero-based: mode 0 is the first ("mode-1") index.

/// X ×_mode A. A must have dim(mode) columns; the result has A.rows() along `mode`.
Tensor mode_n_multiply(const Tensor& x, const Eigen::MatrixXd& a, std::size_t mode);
/// X ×_mode a for a vector; the contracted mode is removed from the result.
Tensor mode_n_multiply_vector(const Tensor& x, const Eigen::VectorXd& a, std::size_t mode);

double inner_product(const Tensor& a, const Tensor& b);
double frobenius_norm(const Tensor& x);

/// Mode-n matricization; remaining modes index columns with lower modes varying fastest.
Eigen::MatrixXd unfold(const Tensor& x, std::size_t mode);
Tensor fold(const Eigen::MatrixXd& m, std::size_t mode, const std::vector<Index>& dims);

struct TopEigenpair {
  double value = 0.0;
  Eigen::VectorXd vector;
  // Leading eigenvalue is (numerically) repeated; `vector` is one member of its eigenspace.
  bool degenerate = false;
};

// Matrices larger than this use shifted power iteration instead of a dense eigensolve.
inline constexpr Index kDirectEigenLimit = 512;

/// Algebraically largest eigenpair of a symmetric matrix (input is symmetrized first).
/// The eigenvector's largest-magnitude entry is made positive.
TopEigenpair symmetric_top_eigenvector(const Eigen::MatrixXd& a);

/// Flip `v` so its largest-magnitude entry (first one on ties) is positive. Returns true if flipped.
bool apply_sign_convention(Eigen::Ref<Eigen::VectorXd> v);

// Semi-symmetric contractions used throughout the decomposers.

/// Vector with entries v' X_n v over the slices of x.
Eigen::VectorXd contract_nodes(const SemiSymmetricTensor& x, const Eigen::VectorXd& v);
/// Σ_n u_n X_n.
Eigen::MatrixXd contract_subjects(const SemiSymmetricTensor& x, const Eigen::VectorXd& u);

}  // namespace tnpca
