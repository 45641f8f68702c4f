#include "tnpca/simulator.hpp"

#include "tnpca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace tnpca {

std::string to_string(SubjectFactorMode mode) {
  return mode == SubjectFactorMode::kOrthogonalStiefel ? "stiefel" : "gaussian";
}

SubjectFactorMode subject_factor_mode_from_string(const std::string& name) {
  if (name == "stiefel" || name == "orthogonal") return SubjectFactorMode::kOrthogonalStiefel;
  if (name == "gaussian" || name == "gaussian-unit-norm") return SubjectFactorMode::kGaussianUnitNorm;
  throw InvalidInput("unknown subject factor mode '" + name + "' (expected stiefel or gaussian)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kTnPca: return "tnpca";
    case Method::kHosvd: return "hosvd";
    case Method::kHooi: return "hooi";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "tnpca") return Method::kTnPca;
  if (name == "hosvd") return Method::kHosvd;
  if (name == "hooi") return Method::kHooi;
  throw InvalidInput("unknown method '" + name + "' (expected tnpca, hosvd or hooi)");
}

void SimulationConfig::validate() const {
  if (nodes < 1 || subjects < 1) throw InvalidInput("node and subject counts must be positive");
  if (rank < 1 || rank > std::min(nodes, subjects)) {
    std::ostringstream os;
    os << "rank " << rank << " must lie in [1, min(P, N) = " << std::min(nodes, subjects) << "]";
    throw InvalidInput(os.str());
  }
  if (!(snr > 0.0) || !std::isfinite(snr)) throw InvalidInput("snr must be positive and finite");
  if (replicates < 1) throw InvalidInput("replicates must be at least 1");
}

namespace {

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) g(i, j) = normal(rng);
  }
  return g;
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Orthogonal projector onto the column span of `a`, pseudo-inverting a singular Gram matrix.
Eigen::MatrixXd column_space_projector(const Eigen::MatrixXd& a, bool& pseudo) {
  const Eigen::MatrixXd gram = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const Eigen::VectorXd& evals = es.eigenvalues();
  const double top = evals.size() > 0 ? evals.maxCoeff() : 0.0;
  Eigen::VectorXd inv(evals.size());
  for (Index i = 0; i < evals.size(); ++i) {
    if (evals(i) > 1e-10 * std::max(top, 1e-300)) {
      inv(i) = 1.0 / evals(i);
    } else {
      inv(i) = 0.0;
      pseudo = true;
    }
  }
  const Eigen::MatrixXd gram_inv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  return a * gram_inv * a.transpose();
}

}  // namespace

Eigen::MatrixXd sample_stiefel(Index p, Index k, std::mt19937_64& rng) {
  if (k < 0 || k > p) throw RankError("Stiefel sample needs K <= P");
  const Eigen::MatrixXd g = gaussian_matrix(p, k, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, k);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Index i = 0; i < k; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  return q;
}

Eigen::MatrixXd sample_unit_columns(Index n, Index k, std::mt19937_64& rng) {
  Eigen::MatrixXd g = gaussian_matrix(n, k, rng);
  for (Index j = 0; j < k; ++j) g.col(j).normalize();
  return g;
}

SemiSymmetricTensor sample_wishart_noise(Index p, Index n, std::mt19937_64& rng) {
  Tensor t({p, p, n});
  for (Index s = 0; s < n; ++s) {
    const Eigen::MatrixXd g = gaussian_matrix(p, p, rng);
    Eigen::MatrixXd w = g * g.transpose();
    t.slice(s) = 0.5 * (w + w.transpose());
  }
  return SemiSymmetricTensor(std::move(t));
}

Eigen::VectorXd planted_core(Index p, Index n, Index k) {
  Eigen::VectorXd d(k);
  const double scale = std::sqrt(static_cast<double>(p) * static_cast<double>(n));
  for (Index i = 0; i < k; ++i) d(i) = (2.0 - 0.1 * static_cast<double>(i + 1)) * scale;
  return d;
}

SemiSymmetricTensor planted_signal(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u) {
  if (v.cols() != d.size() || u.cols() != d.size()) throw DimensionError("factor column counts must match d");
  Tensor t({v.rows(), v.rows(), u.rows()});
  for (Index c = 0; c < d.size(); ++c) {
    const Eigen::MatrixXd vv = v.col(c) * v.col(c).transpose();
    for (Index s = 0; s < u.rows(); ++s) t.slice(s) += (d(c) * u(s, c)) * vv;
  }
  return SemiSymmetricTensor(std::move(t));
}

namespace {

SimulationDraw assemble_draw(const Eigen::VectorXd& d, Eigen::MatrixXd v, Eigen::MatrixXd u, double snr,
                             std::mt19937_64& rng) {
  SimulationDraw draw{SemiSymmetricTensor{}, d, std::move(v), std::move(u), 0.0, 0.0, 0.0};
  const SemiSymmetricTensor signal = planted_signal(d, draw.v_true, draw.u_true);
  const SemiSymmetricTensor noise = sample_wishart_noise(draw.v_true.rows(), draw.u_true.rows(), rng);
  draw.signal_norm = frobenius_norm(signal.tensor());
  const double raw_noise = frobenius_norm(noise.tensor());
  draw.noise_scale = draw.signal_norm / (snr * raw_noise);
  Tensor x = signal.tensor();
  x.flat() += draw.noise_scale * noise.tensor().flat();
  draw.noise_norm = draw.noise_scale * raw_noise;
  draw.x = SemiSymmetricTensor(std::move(x));
  return draw;
}

}  // namespace

SimulationDraw generate(const SimulationConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Eigen::MatrixXd v = sample_stiefel(cfg.nodes, cfg.rank, rng);
  Eigen::MatrixXd u = cfg.u_mode == SubjectFactorMode::kOrthogonalStiefel ? sample_stiefel(cfg.subjects, cfg.rank, rng)
                                                                          : sample_unit_columns(cfg.subjects, cfg.rank, rng);
  return assemble_draw(planted_core(cfg.nodes, cfg.subjects, cfg.rank), std::move(v), std::move(u), cfg.snr, rng);
}

std::vector<std::optional<Index>> match_components(const Eigen::MatrixXd& v_true, const Eigen::MatrixXd& v_est) {
  if (v_true.rows() != v_est.rows()) throw DimensionError("factor row counts differ");
  const Index kt = v_true.cols();
  const Index ke = v_est.cols();
  Eigen::MatrixXd cos = (v_true.transpose() * v_est).cwiseAbs();
  for (Index j = 0; j < kt; ++j) {
    const double nt = v_true.col(j).norm();
    for (Index c = 0; c < ke; ++c) {
      const double ne = v_est.col(c).norm();
      cos(j, c) = (nt > 0.0 && ne > 0.0) ? cos(j, c) / (nt * ne) : 0.0;
    }
  }
  std::vector<std::optional<Index>> assignment(static_cast<std::size_t>(kt));
  std::vector<bool> true_used(static_cast<std::size_t>(kt), false);
  std::vector<bool> est_used(static_cast<std::size_t>(ke), false);
  for (Index round = 0; round < std::min(kt, ke); ++round) {
    double best = -1.0;
    Index bj = -1, bc = -1;
    for (Index j = 0; j < kt; ++j) {
      if (true_used[j]) continue;
      for (Index c = 0; c < ke; ++c) {
        if (est_used[c]) continue;
        if (cos(j, c) > best) {
          best = cos(j, c);
          bj = j;
          bc = c;
        }
      }
    }
    true_used[bj] = true;
    est_used[bc] = true;
    assignment[bj] = bc;
  }
  return assignment;
}

double relative_core_error(const Eigen::VectorXd& d_true, const Eigen::MatrixXd& v_true, const TnDecomposition& dec) {
  if (v_true.cols() != d_true.size()) throw DimensionError("d_true and v_true disagree on rank");
  const auto match = match_components(v_true, dec.V);
  Eigen::VectorXd matched = Eigen::VectorXd::Zero(d_true.size());
  for (Index j = 0; j < d_true.size(); ++j) {
    if (match[j]) matched(j) = dec.d(*match[j]);
  }
  const double denom = d_true.norm();
  if (denom == 0.0) throw InvalidInput("true core is zero");
  return (d_true - matched).norm() / denom;
}

double relative_core_error(const Eigen::VectorXd& d_true, const Eigen::MatrixXd& v_true, const Eigen::MatrixXd& u_true,
                           const TuckerDecomposition& dec) {
  const Index k = d_true.size();
  if (v_true.cols() != k || u_true.cols() != k) throw DimensionError("true factors disagree on rank");
  const auto vm = match_components(v_true, dec.V);
  const auto um = match_components(u_true, dec.U);
  double err2 = 0.0;
  for (Index l = 0; l < k; ++l) {
    double sign = 1.0;
    if (um[l]) sign = dec.U.col(*um[l]).dot(u_true.col(l)) < 0.0 ? -1.0 : 1.0;
    for (Index j = 0; j < k; ++j) {
      for (Index i = 0; i < k; ++i) {
        double est = 0.0;
        if (vm[i] && vm[j] && um[l]) est = sign * dec.core(*vm[i], *vm[j], *um[l]);
        const double truth = (i == j && j == l) ? d_true(i) : 0.0;
        err2 += (truth - est) * (truth - est);
      }
    }
  }
  const double denom = d_true.norm();
  if (denom == 0.0) throw InvalidInput("true core is zero");
  return std::sqrt(err2) / denom;
}

VarianceExplained variance_explained(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u,
                                     Index k) {
  if (v.rows() != x.nodes() || u.rows() != x.subjects()) throw DimensionError("factor rows do not match the tensor");
  if (k < 0 || k > v.cols() || k > u.cols()) throw RankError("prefix rank exceeds available factors");
  VarianceExplained out;
  const double total = frobenius_norm(x.tensor());
  if (k == 0 || total == 0.0) return out;
  const Eigen::MatrixXd pv = column_space_projector(v.leftCols(k), out.pseudo_inverse);
  const Eigen::MatrixXd pu = column_space_projector(u.leftCols(k), out.pseudo_inverse);
  Tensor t = mode_n_multiply(x.tensor(), pv, 0);
  t = mode_n_multiply(t, pv, 1);
  t = mode_n_multiply(t, pu, 2);
  const double kept = frobenius_norm(t);
  out.value = (kept * kept) / (total * total);
  return out;
}

std::vector<double> cumulative_variance_explained(const SemiSymmetricTensor& x, const Eigen::MatrixXd& v,
                                                  const Eigen::MatrixXd& u) {
  const Index k = std::min(v.cols(), u.cols());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 1; i <= k; ++i) out.push_back(variance_explained(x, v, u, i).value);
  return out;
}

const StudyCell* SimulationReport::find(Method m, double snr, Index rank) const {
  for (const auto& c : cells) {
    if (c.method == m && c.snr == snr && c.rank == rank) return &c;
  }
  return nullptr;
}

SimulationDraw study_draw(const SimulationConfig& base, double snr, std::size_t snr_index, int replicate) {
  SimulationConfig cfg = base;
  cfg.snr = snr;
  std::seed_seq seq{static_cast<std::uint32_t>(base.seed & 0xffffffffu), static_cast<std::uint32_t>(base.seed >> 32),
                    static_cast<std::uint32_t>(snr_index), static_cast<std::uint32_t>(replicate)};
  std::mt19937_64 rng(seq);
  return generate(cfg, rng);
}

SimulationReport run_study(const StudyGrid& grid, const SimulationConfig& base, const StudyOptions& opts) {
  base.validate();
  if (grid.snrs.empty() || grid.ranks.empty() || grid.methods.empty()) throw InvalidInput("study grid is empty");
  for (double s : grid.snrs) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidInput("grid SNR values must be positive");
  }

  SimulationReport report;
  report.base = base;
  const std::size_t n_rank = grid.ranks.size();
  const std::size_t n_method = grid.methods.size();
  const auto reps = static_cast<std::size_t>(base.replicates);
  for (double snr : grid.snrs) {
    for (Index rank : grid.ranks) {
      for (Method m : grid.methods) {
        StudyCell cell;
        cell.method = m;
        cell.snr = snr;
        cell.rank = rank;
        cell.core_errors.assign(reps, std::nan(""));
        cell.variance_curves.assign(reps, {});
        report.cells.push_back(std::move(cell));
      }
    }
  }
  auto cell_index = [&](std::size_t si, std::size_t ri, std::size_t mi) { return (si * n_rank + ri) * n_method + mi; };

  std::mutex failure_mutex;
  auto run_task = [&](std::size_t task) {
    const std::size_t si = task / reps;
    const int rep = static_cast<int>(task % reps);
    SimulationDraw draw;
    try {
      draw = study_draw(base, grid.snrs[si], si, rep);
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mutex);
      for (std::size_t ri = 0; ri < n_rank; ++ri) {
        for (std::size_t mi = 0; mi < n_method; ++mi) {
          report.cells[cell_index(si, ri, mi)].failures.push_back("replicate " + std::to_string(rep) + ": " + e.what());
        }
      }
      return;
    }
    for (std::size_t ri = 0; ri < n_rank; ++ri) {
      for (std::size_t mi = 0; mi < n_method; ++mi) {
        StudyCell& cell = report.cells[cell_index(si, ri, mi)];
        const Index rank = grid.ranks[ri];
        try {
          if (grid.methods[mi] == Method::kTnPca) {
            const TnDecomposition dec = tn_pca(draw.x, rank, opts.tnpca);
            cell.core_errors[rep] = relative_core_error(draw.d_true, draw.v_true, dec);
            cell.variance_curves[rep] = cumulative_variance_explained(draw.x, dec.V, dec.U);
          } else {
            const TuckerDecomposition dec = grid.methods[mi] == Method::kHosvd
                                                ? hosvd_semisym(draw.x, rank, rank)
                                                : hooi_semisym(draw.x, rank, rank, opts.hooi);
            cell.core_errors[rep] = relative_core_error(draw.d_true, draw.v_true, draw.u_true, dec);
            cell.variance_curves[rep] = cumulative_variance_explained(draw.x, dec.V, dec.U);
          }
        } catch (const std::exception& e) {
          std::lock_guard lock(failure_mutex);
          cell.failures.push_back("replicate " + std::to_string(rep) + ": " + e.what());
        }
      }
    }
  };

  const std::size_t tasks = grid.snrs.size() * reps;
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(tasks)));
  if (threads == 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < tasks; t += threads) run_task(t);
      });
    }
  }

  for (StudyCell& cell : report.cells) {
    std::vector<double> ok;
    for (double e : cell.core_errors) {
      if (!std::isnan(e)) ok.push_back(e);
    }
    cell.core_error_mean = mean(ok);
    cell.core_error_std = sample_std(ok);
    std::sort(cell.failures.begin(), cell.failures.end());
    for (Index k = 0; k < cell.rank; ++k) {
      std::vector<double> at_k;
      for (const auto& curve : cell.variance_curves) {
        if (static_cast<Index>(curve.size()) > k) at_k.push_back(curve[k]);
      }
      if (at_k.empty()) break;
      cell.variance_mean.push_back(mean(at_k));
      cell.variance_std.push_back(sample_std(at_k));
    }
  }
  return report;
}

TestRetestDraw generate_test_retest(const TestRetestConfig& cfg, std::mt19937_64& rng) {
  if (cfg.nodes < 1 || cfg.subjects < 1 || cfg.scans < 1) throw InvalidInput("test-retest sizes must be positive");
  if (cfg.latent_rank < 1 || cfg.latent_rank > cfg.nodes) throw InvalidInput("latent rank must lie in [1, P]");
  if (!(cfg.signal_to_noise > 0.0)) throw InvalidInput("signal-to-noise ratio must be positive");

  const Index p = cfg.nodes;
  const Eigen::MatrixXd v = sample_stiefel(p, cfg.latent_rank, rng);
  const Eigen::MatrixXd coeffs = gaussian_matrix(cfg.subjects, cfg.latent_rank, rng);

  std::vector<Eigen::MatrixXd> deviation(static_cast<std::size_t>(cfg.subjects));
  const Eigen::MatrixXd population = cfg.population_level * v * v.transpose();
  double signal2 = 0.0;
  for (Index s = 0; s < cfg.subjects; ++s) {
    deviation[s] = v * coeffs.row(s).asDiagonal() * v.transpose();
    signal2 += static_cast<double>(cfg.scans) * deviation[s].squaredNorm();
  }

  const Index slices = cfg.subjects * cfg.scans;
  std::vector<Eigen::MatrixXd> noise(static_cast<std::size_t>(slices));
  double noise2 = 0.0;
  for (Index i = 0; i < slices; ++i) {
    const Eigen::MatrixXd g = gaussian_matrix(p, p, rng);
    noise[i] = (g + g.transpose()) / std::sqrt(2.0);
    noise2 += noise[i].squaredNorm();
  }
  const double alpha = std::sqrt(signal2) / (cfg.signal_to_noise * std::sqrt(noise2));

  TestRetestDraw out;
  Tensor t({p, p, slices});
  for (Index scan = 0; scan < cfg.scans; ++scan) {
    for (Index s = 0; s < cfg.subjects; ++s) {
      const Index i = scan * cfg.subjects + s;
      t.slice(i) = population + deviation[s] + alpha * noise[i];
      out.subject_of.push_back(s);
      out.scan_of.push_back(scan);
    }
  }
  out.x = SemiSymmetricTensor(std::move(t));
  return out;
}

PlantedTraitDraw generate_planted_trait(const PlantedTraitConfig& cfg, std::mt19937_64& rng) {
  const SimulationConfig& base = cfg.base;
  base.validate();
  const Index p = base.nodes;
  const Index n = base.subjects;
  const Index k = base.rank;
  const auto [a, b] = cfg.edge;
  if (cfg.component < 0 || cfg.component >= k) throw InvalidInput("trait component index out of range");
  if (a < 0 || b < 0 || a >= p || b >= p || a == b) throw InvalidInput("planted edge must join two distinct nodes");
  if (cfg.null_traits < 0) throw InvalidInput("null trait count must be non-negative");

  // Trait component concentrated on the planted edge; the rest orthonormal to it.
  Eigen::VectorXd focus = Eigen::VectorXd::Zero(p);
  focus(a) = focus(b) = 1.0 / std::sqrt(2.0);
  Eigen::MatrixXd v(p, k);
  const Eigen::MatrixXd comp_basis = orthogonal_complement(focus, p);
  const Eigen::MatrixXd others = comp_basis * sample_stiefel(p - 1, k - 1, rng);
  for (Index c = 0, o = 0; c < k; ++c) v.col(c) = c == cfg.component ? focus : Eigen::VectorXd(others.col(o++));

  PlantedTraitDraw out;
  std::normal_distribution<double> normal;
  out.trait.resize(n);
  for (Index i = 0; i < n; ++i) out.trait(i) = normal(rng);
  Eigen::MatrixXd u = sample_unit_columns(n, k, rng);
  Eigen::VectorXd loading(n);
  for (Index i = 0; i < n; ++i) loading(i) = normal(rng) + cfg.effect * out.trait(i);
  u.col(cfg.component) = loading.normalized();

  out.draw = assemble_draw(planted_core(p, n, k), std::move(v), std::move(u), base.snr, rng);
  for (Index t = 0; t < cfg.null_traits; ++t) {
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = normal(rng);
    out.null_traits.push_back(std::move(y));
  }
  return out;
}

}  // namespace tnpca
