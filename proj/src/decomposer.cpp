#include "tnpca/decomposer.hpp"

#include "tnpca/errors.hpp"

#include <cmath>
#include <sstream>

namespace tnpca {

namespace {

Eigen::VectorXd random_unit_in(const Eigen::MatrixXd& basis, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd g(basis.cols());
  for (Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
  Eigen::VectorXd v = basis * g;
  const double n = v.norm();
  if (n == 0.0) return basis.col(0);
  return v / n;
}

// Projects `v` onto span(basis) and normalizes; returns an empty vector if nothing survives.
Eigen::VectorXd project_unit(const Eigen::MatrixXd& basis, const Eigen::VectorXd& v) {
  Eigen::VectorXd p = basis * (basis.transpose() * v);
  const double n = p.norm();
  if (n <= 1e-14 * std::max(1.0, v.norm())) return {};
  return p / n;
}

struct EigenStep {
  Eigen::VectorXd v;
  bool degenerate = false;
};

// v = E_max(P M P) restricted to range(P), computed in the reduced basis so v ⟂ v_prev exactly.
EigenStep constrained_top_eigenvector(const Eigen::MatrixXd& m, const Eigen::MatrixXd& basis) {
  const Eigen::MatrixXd reduced = basis.transpose() * m * basis;
  TopEigenpair top = symmetric_top_eigenvector(reduced);
  EigenStep out;
  out.v = basis * top.vector;
  out.v.normalize();
  apply_sign_convention(out.v);
  out.degenerate = top.degenerate;
  return out;
}

bool relative_change_small(double prev, double next, double tol) {
  return std::abs(next - prev) <= tol * std::abs(next);
}

}  // namespace

Eigen::MatrixXd orthogonal_complement(const Eigen::MatrixXd& v_prev, Index p) {
  if (v_prev.cols() == 0) return Eigen::MatrixXd::Identity(p, p);
  if (v_prev.rows() != p) throw DimensionError("previous factors have the wrong row count");
  if (v_prev.cols() >= p) return Eigen::MatrixXd(p, 0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(v_prev);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
  return q.rightCols(p - v_prev.cols());
}

RankOneResult rank_one_step(const SemiSymmetricTensor& residual, const Eigen::MatrixXd& v_prev,
                            const Eigen::VectorXd& init, const TnPcaOptions& opts, std::mt19937_64& rng) {
  const Index p = residual.nodes();
  if (init.size() != p) throw DimensionError("initial vector length must equal the node count");
  if (v_prev.cols() > 0) {
    const Eigen::MatrixXd gram = v_prev.transpose() * v_prev;
    if (!gram.isIdentity(1e-8)) throw InvalidInput("previous factors must have orthonormal columns");
  }
  const Eigen::MatrixXd basis = orthogonal_complement(v_prev, p);
  if (basis.cols() == 0) throw RankError("no directions left orthogonal to the previous factors");

  RankOneResult out;
  Eigen::VectorXd v = project_unit(basis, init);
  if (v.size() == 0) v = random_unit_in(basis, rng);
  apply_sign_convention(v);

  // Zero fibers (X̂ ×1 v ×2 v = 0) get a fresh random start, up to `restarts` times.
  Eigen::VectorXd a = contract_nodes(residual, v);
  int failures = 0;
  while (a.norm() == 0.0) {
    if (++failures > opts.restarts) {
      out.failed = true;
      out.v = v;
      out.u = Eigen::VectorXd::Zero(residual.subjects());
      return out;
    }
    v = random_unit_in(basis, rng);
    apply_sign_convention(v);
    a = contract_nodes(residual, v);
  }

  Eigen::VectorXd u = a / a.norm();
  double objective = a.dot(u);
  out.trace.push_back(objective);

  for (int it = 0; it < opts.max_iter; ++it) {
    EigenStep step = constrained_top_eigenvector(contract_subjects(residual, u), basis);
    a = contract_nodes(residual, step.v);
    const double norm = a.norm();
    if (norm == 0.0) break;  // cannot happen for an ascent step from a positive objective
    v = step.v;
    u = a / norm;
    out.degenerate = step.degenerate;
    const double next = a.dot(u);
    out.trace.push_back(next);
    const bool done = relative_change_small(objective, next, opts.tol);
    objective = next;
    if (done) {
      out.converged = true;
      break;
    }
  }

  out.d = contract_nodes(residual, v).dot(u);
  if (out.d < 0.0) {
    u = -u;
    out.d = -out.d;
  }
  out.v = v;
  out.u = u;
  return out;
}

TnDecomposition tn_pca(const SemiSymmetricTensor& x, Index k, const TnPcaOptions& opts) {
  const Index p = x.nodes();
  if (k < 1 || k > p) {
    std::ostringstream os;
    os << "rank " << k << " must lie in [1, " << p << "]";
    throw RankError(os.str());
  }
  if (opts.restarts < 1) throw InvalidInput("restarts must be at least 1");

  std::mt19937_64 rng(opts.seed);
  SemiSymmetricTensor work = x;
  const double total_norm = frobenius_norm(x.tensor());
  const double exhausted = 1e-12 * total_norm;

  TnDecomposition dec;
  dec.residual_norms.push_back(total_norm);
  std::vector<RankOneResult> comps;
  Eigen::MatrixXd v_prev(p, 0);

  for (Index comp = 0; comp < k; ++comp) {
    const Eigen::MatrixXd basis = orthogonal_complement(v_prev, p);
    RankOneResult best;
    bool have_best = false;
    for (int r = 0; r < opts.restarts; ++r) {
      Eigen::VectorXd init;
      if (r == 0) {
        // Σ_n X_n²: the mode-1 Gram, insensitive to sign changes across subjects.
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
        for (Index n = 0; n < x.subjects(); ++n) gram.noalias() += work.slice(n) * work.slice(n);
        init = constrained_top_eigenvector(gram, basis).v;
      } else if (r == 1) {
        const Eigen::MatrixXd mean_slice = contract_subjects(work, Eigen::VectorXd::Ones(x.subjects())) /
                                           static_cast<double>(x.subjects());
        init = constrained_top_eigenvector(mean_slice, basis).v;
      } else {
        init = random_unit_in(basis, rng);
      }
      RankOneResult res = rank_one_step(work, v_prev, init, opts, rng);
      if (!have_best || (!res.failed && (best.failed || res.d > best.d))) {
        best = std::move(res);
        have_best = true;
      }
    }

    if (best.failed || best.d <= exhausted) {
      std::ostringstream os;
      os << "residual exhausted after " << comp << " of " << k << " components; stopping early";
      dec.warnings.push_back(os.str());
      break;
    }

    work.subtract_rank_one(best.d, best.v, best.u);
    dec.residual_norms.push_back(frobenius_norm(work.tensor()));
    v_prev.conservativeResize(Eigen::NoChange, v_prev.cols() + 1);
    v_prev.col(v_prev.cols() - 1) = best.v;
    if (!best.converged) {
      std::ostringstream os;
      os << "component " << comp + 1 << " did not converge within " << opts.max_iter << " alternations";
      dec.warnings.push_back(os.str());
    }
    comps.push_back(std::move(best));
  }

  const Index found = static_cast<Index>(comps.size());
  dec.d.resize(found);
  dec.V.resize(p, found);
  dec.U.resize(x.subjects(), found);
  for (Index c = 0; c < found; ++c) {
    dec.d(c) = comps[c].d;
    dec.V.col(c) = comps[c].v;
    dec.U.col(c) = comps[c].u;
    dec.objective_trace.push_back(std::move(comps[c].trace));
    dec.converged.push_back(comps[c].converged);
    dec.degenerate.push_back(comps[c].degenerate);
  }
  return dec;
}

Eigen::MatrixXd reconstruct_subject(const TnDecomposition& dec, Index subject) {
  if (subject < 0 || subject >= dec.U.rows()) throw InvalidInput("subject index out of range");
  const Index p = dec.V.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (Index c = 0; c < dec.components(); ++c) {
    out += (dec.d(c) * dec.U(subject, c)) * dec.V.col(c) * dec.V.col(c).transpose();
  }
  return out;
}

SemiSymmetricTensor reconstruct(const TnDecomposition& dec) {
  const Index p = dec.V.rows();
  const Index n = dec.U.rows();
  Tensor t({p, p, n});
  for (Index s = 0; s < n; ++s) t.slice(s) = reconstruct_subject(dec, s);
  return SemiSymmetricTensor(std::move(t));
}

namespace {

// A(m, n) = vᵀ X_{m,n} v.
Eigen::MatrixXd contract_nodes4(const SemiSymmetricTensor4& x, const Eigen::VectorXd& v) {
  Eigen::MatrixXd a(x.features(), x.subjects());
  for (Index n = 0; n < x.subjects(); ++n) {
    for (Index m = 0; m < x.features(); ++m) a(m, n) = v.dot(x.slice(m, n) * v);
  }
  return a;
}

// Σ_{m,n} w_m u_n X_{m,n}.
Eigen::MatrixXd contract_modes34(const SemiSymmetricTensor4& x, const Eigen::VectorXd& w, const Eigen::VectorXd& u) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.nodes(), x.nodes());
  for (Index n = 0; n < x.subjects(); ++n) {
    for (Index m = 0; m < x.features(); ++m) out += (w(m) * u(n)) * x.slice(m, n);
  }
  return out;
}

struct RankOne4 {
  double d = 0.0;
  Eigen::VectorXd v, w, u;
  std::vector<double> trace;
  bool converged = false;
  bool degenerate = false;
  bool failed = false;
};

RankOne4 rank_one_step4(const SemiSymmetricTensor4& x, const Eigen::MatrixXd& basis, Eigen::VectorXd v,
                        const TnPcaOptions& opts, std::mt19937_64& rng) {
  RankOne4 out;
  const Index m_count = x.features();
  Eigen::MatrixXd a;
  Eigen::VectorXd w, u;
  int failures = 0;
  for (;;) {
    a = contract_nodes4(x, v);
    if (a.norm() > 0.0) {
      w = Eigen::VectorXd::Constant(m_count, 1.0 / std::sqrt(static_cast<double>(m_count)));
      if ((a.transpose() * w).norm() == 0.0) {
        Index row = 0;
        a.rowwise().norm().maxCoeff(&row);
        w = Eigen::VectorXd::Unit(m_count, row);
      }
      break;
    }
    if (++failures > opts.restarts) {
      out.failed = true;
      return out;
    }
    v = random_unit_in(basis, rng);
  }

  u = (a.transpose() * w).normalized();
  double objective = w.dot(a * u);
  out.trace.push_back(objective);
  for (int it = 0; it < opts.max_iter; ++it) {
    EigenStep step = constrained_top_eigenvector(contract_modes34(x, w, u), basis);
    Eigen::MatrixXd a_next = contract_nodes4(x, step.v);
    Eigen::VectorXd w_next = a_next * u;
    if (w_next.norm() == 0.0) break;
    w_next.normalize();
    Eigen::VectorXd u_next = a_next.transpose() * w_next;
    if (u_next.norm() == 0.0) break;
    u_next.normalize();
    v = step.v;
    w = w_next;
    u = u_next;
    a = a_next;
    out.degenerate = step.degenerate;
    const double next = w.dot(a * u);
    out.trace.push_back(next);
    const bool done = relative_change_small(objective, next, opts.tol);
    objective = next;
    if (done) {
      out.converged = true;
      break;
    }
  }
  if (apply_sign_convention(w)) u = -u;
  out.d = w.dot(contract_nodes4(x, v) * u);
  if (out.d < 0.0) {
    u = -u;
    out.d = -out.d;
  }
  out.v = v;
  out.w = w;
  out.u = u;
  return out;
}

}  // namespace

Tn4Decomposition tn_pca_4mode(const SemiSymmetricTensor4& x, Index k, const TnPcaOptions& opts) {
  const Index p = x.nodes();
  if (k < 1 || k > p) {
    std::ostringstream os;
    os << "rank " << k << " must lie in [1, " << p << "]";
    throw RankError(os.str());
  }
  if (opts.restarts < 1) throw InvalidInput("restarts must be at least 1");

  std::mt19937_64 rng(opts.seed);
  SemiSymmetricTensor4 work = x;
  const double total_norm = frobenius_norm(x.tensor());
  Tn4Decomposition dec;
  dec.residual_norms.push_back(total_norm);
  Eigen::MatrixXd v_prev(p, 0);
  std::vector<RankOne4> comps;

  for (Index comp = 0; comp < k; ++comp) {
    const Eigen::MatrixXd basis = orthogonal_complement(v_prev, p);
    RankOne4 best;
    bool have_best = false;
    for (int r = 0; r < opts.restarts; ++r) {
      Eigen::VectorXd init;
      if (r == 0) {
        Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(p, p);
        for (Index s = 0; s < work.tensor().slice_count(); ++s) mean += work.tensor().slice(s);
        init = constrained_top_eigenvector(mean, basis).v;
      } else {
        init = random_unit_in(basis, rng);
      }
      RankOne4 res = rank_one_step4(work, basis, init, opts, rng);
      if (!have_best || (!res.failed && (best.failed || res.d > best.d))) {
        best = std::move(res);
        have_best = true;
      }
    }
    if (best.failed || best.d <= 1e-12 * total_norm) {
      std::ostringstream os;
      os << "residual exhausted after " << comp << " of " << k << " components; stopping early";
      dec.warnings.push_back(os.str());
      break;
    }
    work.subtract_rank_one(best.d, best.v, best.w, best.u);
    dec.residual_norms.push_back(frobenius_norm(work.tensor()));
    v_prev.conservativeResize(Eigen::NoChange, v_prev.cols() + 1);
    v_prev.col(v_prev.cols() - 1) = best.v;
    comps.push_back(std::move(best));
  }

  const Index found = static_cast<Index>(comps.size());
  dec.d.resize(found);
  dec.V.resize(p, found);
  dec.W.resize(x.features(), found);
  dec.U.resize(x.subjects(), found);
  for (Index c = 0; c < found; ++c) {
    dec.d(c) = comps[c].d;
    dec.V.col(c) = comps[c].v;
    dec.W.col(c) = comps[c].w;
    dec.U.col(c) = comps[c].u;
    dec.objective_trace.push_back(std::move(comps[c].trace));
    dec.converged.push_back(comps[c].converged);
    dec.degenerate.push_back(comps[c].degenerate);
  }
  return dec;
}

SemiSymmetricTensor4 reconstruct(const Tn4Decomposition& dec) {
  const Index p = dec.V.rows();
  const Index m_count = dec.W.rows();
  const Index n_count = dec.U.rows();
  Tensor t({p, p, m_count, n_count});
  for (Index c = 0; c < dec.components(); ++c) {
    const Eigen::MatrixXd vv = dec.V.col(c) * dec.V.col(c).transpose();
    for (Index n = 0; n < n_count; ++n) {
      for (Index m = 0; m < m_count; ++m) t.slice(m + m_count * n) += (dec.d(c) * dec.W(m, c) * dec.U(n, c)) * vv;
    }
  }
  return SemiSymmetricTensor4(std::move(t));
}

}  // namespace tnpca
