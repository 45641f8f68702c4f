#include "tnpca/tensor.hpp"

#include "tnpca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace tnpca {

namespace {

Index product(const std::vector<Index>& dims, std::size_t begin, std::size_t end) {
  Index p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= dims[i];
  return p;
}

void check_dims(const std::vector<Index>& dims) {
  if (dims.empty()) throw DimensionError("tensor must have at least one mode");
  for (Index d : dims) {
    if (d < 1) throw DimensionError("tensor extents must be positive");
  }
}

void check_mode(const Tensor& x, std::size_t mode) {
  if (mode >= x.order()) {
    std::ostringstream os;
    os << "mode " << mode << " out of range for order-" << x.order() << " tensor";
    throw DimensionError(os.str());
  }
}

void check_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw InvalidInput("tensor contains non-finite values");
  }
}

// Rejects large asymmetry, then averages each slice with its transpose.
void symmetrize_slices(Tensor& t) {
  const AsymmetryReport rep = measure_asymmetry(t);
  if (rep.max_violation > kSymmetryRejectTolerance) {
    std::ostringstream os;
    os << "slice " << rep.slice << " is not symmetric: |X(" << rep.row << "," << rep.col
       << ") - X(" << rep.col << "," << rep.row << ")| = " << rep.max_violation;
    throw AsymmetryError(os.str(), static_cast<long>(rep.row), static_cast<long>(rep.col),
                         static_cast<long>(rep.slice), rep.max_violation);
  }
  for (Index s = 0; s < t.slice_count(); ++s) {
    auto m = t.slice(s);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = j + 1; i < m.rows(); ++i) {
        const double avg = 0.5 * (m(i, j) + m(j, i));
        m(i, j) = avg;
        m(j, i) = avg;
      }
    }
  }
}

}  // namespace

Tensor::Tensor(std::vector<Index> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(static_cast<std::size_t>(product(dims_, 0, dims_.size())), 0.0);
}

Tensor::Tensor(std::vector<Index> dims, std::vector<double> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  check_dims(dims_);
  if (static_cast<Index>(data_.size()) != product(dims_, 0, dims_.size())) {
    throw DimensionError("value count does not match tensor extents");
  }
}

Index Tensor::dim(std::size_t mode) const {
  check_mode(*this, mode);
  return dims_[mode];
}

Index Tensor::slice_count() const {
  if (order() < 2) throw DimensionError("frontal slices need a tensor of order >= 2");
  return product(dims_, 2, dims_.size());
}

Eigen::Map<Eigen::MatrixXd> Tensor::slice(Index s) {
  const Index stride = dims_[0] * dims_[1];
  return {data_.data() + s * stride, dims_[0], dims_[1]};
}

Eigen::Map<const Eigen::MatrixXd> Tensor::slice(Index s) const {
  const Index stride = dims_[0] * dims_[1];
  return {data_.data() + s * stride, dims_[0], dims_[1]};
}

Eigen::MatrixXd Tensor::to_matrix() const {
  if (order() != 2) throw DimensionError("to_matrix requires an order-2 tensor");
  return Eigen::Map<const Eigen::MatrixXd>(data_.data(), dims_[0], dims_[1]);
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t({m.rows(), m.cols()});
  Eigen::Map<Eigen::MatrixXd>(t.data_.data(), m.rows(), m.cols()) = m;
  return t;
}

AsymmetryReport measure_asymmetry(const Tensor& x) {
  if (x.order() < 2 || x.dims()[0] != x.dims()[1]) {
    throw DimensionError("symmetry check needs equal first two extents");
  }
  AsymmetryReport rep;
  for (Index s = 0; s < x.slice_count(); ++s) {
    const auto m = x.slice(s);
    for (Index j = 0; j < m.cols(); ++j) {
      for (Index i = j + 1; i < m.rows(); ++i) {
        const double v = std::abs(m(i, j) - m(j, i));
        if (v > rep.max_violation) rep = {v, i, j, s};
      }
    }
  }
  return rep;
}

SemiSymmetricTensor::SemiSymmetricTensor(Tensor t) : t_(std::move(t)) {
  if (t_.order() != 3) throw DimensionError("semi-symmetric tensor must have order 3");
  if (t_.dims()[0] != t_.dims()[1]) throw DimensionError("semi-symmetric tensor needs P x P x N extents");
  check_finite(t_);
  symmetrize_slices(t_);
}

SemiSymmetricTensor SemiSymmetricTensor::from_slices(const std::vector<Eigen::MatrixXd>& slices) {
  if (slices.empty()) throw DimensionError("need at least one slice");
  const Index p = slices.front().rows();
  Tensor t({p, p, static_cast<Index>(slices.size())});
  for (std::size_t n = 0; n < slices.size(); ++n) {
    if (slices[n].rows() != p || slices[n].cols() != p) {
      std::ostringstream os;
      os << "slice " << n << " is " << slices[n].rows() << "x" << slices[n].cols() << ", expected " << p
         << "x" << p;
      throw DimensionError(os.str());
    }
    t.slice(static_cast<Index>(n)) = slices[n];
  }
  return SemiSymmetricTensor(std::move(t));
}

SemiSymmetricTensor SemiSymmetricTensor::zeros(Index nodes, Index subjects) {
  return SemiSymmetricTensor(Tensor({nodes, nodes, subjects}));
}

void SemiSymmetricTensor::subtract_rank_one(double d, const Eigen::VectorXd& v, const Eigen::VectorXd& u) {
  if (v.size() != nodes() || u.size() != subjects()) throw DimensionError("rank-one factor size mismatch");
  const Eigen::MatrixXd vv = v * v.transpose();
  for (Index n = 0; n < subjects(); ++n) t_.slice(n) -= (d * u(n)) * vv;
}

SemiSymmetricTensor4::SemiSymmetricTensor4(Tensor t) : t_(std::move(t)) {
  if (t_.order() != 4) throw DimensionError("joint-feature tensor must have order 4");
  if (t_.dims()[0] != t_.dims()[1]) throw DimensionError("joint-feature tensor needs P x P x M x N extents");
  check_finite(t_);
  symmetrize_slices(t_);
}

void SemiSymmetricTensor4::subtract_rank_one(double d, const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                             const Eigen::VectorXd& u) {
  if (v.size() != nodes() || w.size() != features() || u.size() != subjects()) {
    throw DimensionError("rank-one factor size mismatch");
  }
  const Eigen::MatrixXd vv = v * v.transpose();
  for (Index n = 0; n < subjects(); ++n) {
    for (Index m = 0; m < features(); ++m) t_.slice(m + features() * n) -= (d * w(m) * u(n)) * vv;
  }
}

Tensor mode_n_multiply(const Tensor& x, const Eigen::MatrixXd& a, std::size_t mode) {
  check_mode(x, mode);
  const auto& dims = x.dims();
  if (a.cols() != dims[mode]) {
    std::ostringstream os;
    os << "mode " << mode << " product: tensor extent " << dims[mode] << " != matrix columns " << a.cols();
    throw DimensionError(os.str());
  }
  const Index left = product(dims, 0, mode);
  const Index right = product(dims, mode + 1, dims.size());
  const Index in = dims[mode];
  const Index out = a.rows();

  std::vector<Index> out_dims = dims;
  out_dims[mode] = out;
  Tensor result(out_dims);
  const double* src = x.values().data();
  double* dst = result.values().data();
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const Eigen::MatrixXd> block(src + r * left * in, left, in);
    Eigen::Map<Eigen::MatrixXd> target(dst + r * left * out, left, out);
    target.noalias() = block * a.transpose();
  }
  return result;
}

Tensor mode_n_multiply_vector(const Tensor& x, const Eigen::VectorXd& a, std::size_t mode) {
  check_mode(x, mode);
  const auto& dims = x.dims();
  if (a.size() != dims[mode]) {
    std::ostringstream os;
    os << "mode " << mode << " product: tensor extent " << dims[mode] << " != vector length " << a.size();
    throw DimensionError(os.str());
  }
  if (x.order() == 1) throw DimensionError("cannot contract the only mode of an order-1 tensor");
  const Index left = product(dims, 0, mode);
  const Index right = product(dims, mode + 1, dims.size());
  const Index in = dims[mode];

  std::vector<Index> out_dims;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i != mode) out_dims.push_back(dims[i]);
  }
  Tensor result(out_dims);
  const double* src = x.values().data();
  double* dst = result.values().data();
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const Eigen::MatrixXd> block(src + r * left * in, left, in);
    Eigen::Map<Eigen::VectorXd> target(dst + r * left, left);
    target.noalias() = block * a;
  }
  return result;
}

double inner_product(const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims()) throw DimensionError("inner product of tensors with different shapes");
  return a.flat().dot(b.flat());
}

double frobenius_norm(const Tensor& x) { return x.flat().norm(); }

Eigen::MatrixXd unfold(const Tensor& x, std::size_t mode) {
  check_mode(x, mode);
  const auto& dims = x.dims();
  const Index left = product(dims, 0, mode);
  const Index right = product(dims, mode + 1, dims.size());
  const Index in = dims[mode];
  Eigen::MatrixXd m(in, left * right);
  const double* src = x.values().data();
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const Eigen::MatrixXd> block(src + r * left * in, left, in);
    m.middleCols(r * left, left) = block.transpose();
  }
  return m;
}

Tensor fold(const Eigen::MatrixXd& m, std::size_t mode, const std::vector<Index>& dims) {
  Tensor result(dims);
  check_mode(result, mode);
  const Index left = product(dims, 0, mode);
  const Index right = product(dims, mode + 1, dims.size());
  const Index in = dims[mode];
  if (m.rows() != in || m.cols() != left * right) throw DimensionError("fold: matrix shape does not match extents");
  double* dst = result.values().data();
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<Eigen::MatrixXd> block(dst + r * left * in, left, in);
    block = m.middleCols(r * left, left).transpose();
  }
  return result;
}

bool apply_sign_convention(Eigen::Ref<Eigen::VectorXd> v) {
  if (v.size() == 0) return false;
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v(best) < 0.0) {
    v = -v;
    return true;
  }
  return false;
}

namespace {

TopEigenpair power_top_eigenpair(const Eigen::MatrixXd& a) {
  // Shift by a Gershgorin bound so the dominant eigenvalue is the algebraically largest one.
  const double shift = a.cwiseAbs().rowwise().sum().maxCoeff();
  const Eigen::MatrixXd b = a + shift * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows()).normalized();
  constexpr int kMaxIter = 10000;
  constexpr double kTol = 1e-12;
  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    Eigen::VectorXd next = b * v;
    const double norm = next.norm();
    if (norm == 0.0) break;
    next /= norm;
    const double change = std::min((next - v).norm(), (next + v).norm());
    v = next;
    if (change <= kTol) {
      converged = true;
      break;
    }
  }
  TopEigenpair out;
  out.value = v.dot(a * v);
  out.vector = v;
  // Slow convergence means a vanishing spectral gap.
  out.degenerate = !converged;
  apply_sign_convention(out.vector);
  return out;
}

}  // namespace

TopEigenpair symmetric_top_eigenvector(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols() || a.rows() == 0) throw DimensionError("eigenvector needs a non-empty square matrix");
  if (!a.allFinite()) throw NumericalError("eigenvector input has non-finite entries");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  if (sym.rows() > kDirectEigenLimit) return power_top_eigenpair(sym);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  const Index n = sym.rows();
  TopEigenpair out;
  out.value = es.eigenvalues()(n - 1);
  out.vector = es.eigenvectors().col(n - 1);
  if (n > 1) {
    const double gap = out.value - es.eigenvalues()(n - 2);
    out.degenerate = gap < 1e-12 * std::max(1.0, std::abs(out.value));
  }
  apply_sign_convention(out.vector);
  return out;
}

Eigen::VectorXd contract_nodes(const SemiSymmetricTensor& x, const Eigen::VectorXd& v) {
  if (v.size() != x.nodes()) throw DimensionError("node vector length mismatch");
  Eigen::VectorXd out(x.subjects());
  for (Index n = 0; n < x.subjects(); ++n) out(n) = v.dot(x.slice(n) * v);
  return out;
}

Eigen::MatrixXd contract_subjects(const SemiSymmetricTensor& x, const Eigen::VectorXd& u) {
  if (u.size() != x.subjects()) throw DimensionError("subject vector length mismatch");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.nodes(), x.nodes());
  for (Index n = 0; n < x.subjects(); ++n) out += u(n) * x.slice(n);
  return out;
}

}  // namespace tnpca
