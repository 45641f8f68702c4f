#include "tnpca/decomposer.hpp"
#include "tnpca/errors.hpp"

#include <cmath>
#include <sstream>

namespace tnpca {

namespace {

void check_tucker_ranks(const SemiSymmetricTensor& x, Index kv, Index ku) {
  if (kv < 1 || kv > x.nodes() || ku < 1 || ku > x.subjects()) {
    std::ostringstream os;
    os << "Tucker ranks (" << kv << ", " << ku << ") must lie in [1, " << x.nodes() << "] x [1, " << x.subjects()
       << "]";
    throw RankError(os.str());
  }
}

// Top-k left singular vectors of a mode unfolding via its Gram matrix.
Eigen::MatrixXd leading_left_singular(const Eigen::MatrixXd& unfolded, Index k) {
  const Eigen::MatrixXd gram = unfolded * unfolded.transpose();
  return top_eigenvectors(gram, k);
}

double core_energy(const Tensor& core) {
  const double n = frobenius_norm(core);
  return n * n;
}

}  // namespace

Eigen::MatrixXd top_eigenvectors(const Eigen::MatrixXd& sym, Index k) {
  if (sym.rows() != sym.cols()) throw DimensionError("top_eigenvectors needs a square matrix");
  if (k < 0 || k > sym.rows()) throw RankError("requested more eigenvectors than the matrix order");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sym + sym.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  const Index n = sym.rows();
  Eigen::MatrixXd out(n, k);
  for (Index c = 0; c < k; ++c) {
    out.col(c) = es.eigenvectors().col(n - 1 - c);
    apply_sign_convention(out.col(c));
  }
  return out;
}

Tensor tucker_core(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u) {
  Tensor t = mode_n_multiply(x.tensor(), v.transpose(), 0);
  t = mode_n_multiply(t, v.transpose(), 1);
  return mode_n_multiply(t, u.transpose(), 2);
}

TuckerDecomposition hosvd_semisym(const SemiSymmetricTensor& x, Index kv, Index ku) {
  check_tucker_ranks(x, kv, ku);
  TuckerDecomposition dec;
  dec.V = leading_left_singular(unfold(x.tensor(), 0), kv);
  dec.U = leading_left_singular(unfold(x.tensor(), 2), ku);
  dec.core = tucker_core(x, dec.V, dec.U);
  dec.fit_trace.push_back(core_energy(dec.core));
  return dec;
}

TuckerDecomposition hooi_semisym(const SemiSymmetricTensor& x, Index kv, Index ku, const HooiOptions& opts) {
  TuckerDecomposition current = hosvd_semisym(x, kv, ku);
  TuckerDecomposition best = current;
  std::vector<double> trace = current.fit_trace;
  bool converged = false;
  int sweeps = 0;

  double energy = trace.back();
  for (int it = 0; it < opts.max_iter; ++it) {
    ++sweeps;
    // Tied node factor: leading eigenvectors of the mode-1 Gram of X ×2 Vᵀ ×3 Uᵀ.
    Tensor partial = mode_n_multiply(x.tensor(), current.V.transpose(), 1);
    partial = mode_n_multiply(partial, current.U.transpose(), 2);
    current.V = leading_left_singular(unfold(partial, 0), kv);

    Tensor projected = mode_n_multiply(x.tensor(), current.V.transpose(), 0);
    projected = mode_n_multiply(projected, current.V.transpose(), 1);
    current.U = leading_left_singular(unfold(projected, 2), ku);

    current.core = mode_n_multiply(projected, current.U.transpose(), 2);
    const double next = core_energy(current.core);
    trace.push_back(next);
    if (next > core_energy(best.core)) best = current;
    const bool done = std::abs(next - energy) <= opts.tol * std::abs(next);
    energy = next;
    if (done) {
      converged = true;
      break;
    }
  }
  best.fit_trace = std::move(trace);
  best.converged = converged;
  best.iterations = sweeps;
  return best;
}

SemiSymmetricTensor reconstruct(const TuckerDecomposition& dec) {
  Tensor t = mode_n_multiply(dec.core, dec.V, 0);
  t = mode_n_multiply(t, dec.V, 1);
  return SemiSymmetricTensor(mode_n_multiply(t, dec.U, 2));
}

double tucker_fit(const SemiSymmetricTensor& x, const TuckerDecomposition& dec) {
  const SemiSymmetricTensor approx = reconstruct(dec);
  const double total = frobenius_norm(x.tensor());
  if (total == 0.0) return 1.0;
  Eigen::VectorXd diff = x.tensor().flat() - approx.tensor().flat();
  return 1.0 - diff.norm() / total;
}

}  // namespace tnpca
