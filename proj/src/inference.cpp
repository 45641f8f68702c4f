#include "tnpca/inference.hpp"

#include "tnpca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

namespace tnpca {

EmbeddingMatrix EmbeddingMatrix::from(const TnDecomposition& dec) { return {dec.U, dec.d, dec.V}; }

EmbeddingMatrix EmbeddingMatrix::truncated(Index k) const {
  if (k < 0 || k > components()) throw RankError("cannot truncate embedding beyond its component count");
  return {scores.leftCols(k), d.head(k), V.leftCols(k)};
}

std::string to_string(TraitKind kind) {
  switch (kind) {
    case TraitKind::kContinuous: return "continuous";
    case TraitKind::kOrdinal: return "ordinal";
    case TraitKind::kCategorical: return "categorical";
  }
  return "unknown";
}

TraitKind trait_kind_from_string(const std::string& name) {
  if (name == "continuous") return TraitKind::kContinuous;
  if (name == "ordinal") return TraitKind::kOrdinal;
  if (name == "categorical") return TraitKind::kCategorical;
  throw InvalidInput("unknown trait kind '" + name + "'");
}

std::string to_string(DirectionMethod m) { return m == DirectionMethod::kCca ? "cca" : "lda"; }

bool TraitVector::missing(Index i) const { return std::isnan(values(i)); }

std::vector<Index> TraitVector::observed() const {
  std::vector<Index> out;
  for (Index i = 0; i < values.size(); ++i) {
    if (!missing(i)) out.push_back(i);
  }
  return out;
}

GroupEmbedding GroupEmbedding::of(const Eigen::MatrixXd& scores, const std::vector<Index>& rows) {
  if (rows.empty()) throw InvalidInput("group is empty");
  GroupEmbedding g;
  g.count = static_cast<Index>(rows.size());
  const Eigen::MatrixXd sub = scores(rows, Eigen::all);
  g.mean = sub.colwise().mean().transpose();
  const Eigen::MatrixXd centered = sub.rowwise() - g.mean.transpose();
  g.covariance = g.count > 1 ? Eigen::MatrixXd(centered.transpose() * centered / static_cast<double>(g.count - 1))
                             : Eigen::MatrixXd::Zero(scores.cols(), scores.cols());
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  return g;
}

namespace {

void check_rows(const std::vector<Index>& rows, Index n, const char* what) {
  for (Index r : rows) {
    if (r < 0 || r >= n) {
      std::ostringstream os;
      os << what << " index " << r << " out of range [0, " << n << ")";
      throw InvalidInput(os.str());
    }
  }
}

// Chooses `take` members of `candidates` uniformly at random.
std::vector<Index> random_subset(std::vector<Index> candidates, std::size_t take, std::mt19937_64& rng) {
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(take);
  return candidates;
}

std::vector<Index> extreme_side(const Eigen::VectorXd& values, std::vector<Index> pool, std::size_t n, bool lowest,
                                std::mt19937_64& rng) {
  auto before = [&](Index a, Index b) { return lowest ? values(a) < values(b) : values(a) > values(b); };
  std::stable_sort(pool.begin(), pool.end(), before);
  const double boundary = values(pool[n - 1]);
  std::vector<Index> chosen;
  std::vector<Index> tied;
  for (Index i : pool) {
    if (values(i) == boundary) {
      tied.push_back(i);
    } else if (before(i, pool[n - 1])) {
      chosen.push_back(i);
    }
  }
  const auto extra = random_subset(std::move(tied), n - chosen.size(), rng);
  chosen.insert(chosen.end(), extra.begin(), extra.end());
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

GroupSplit extreme_groups(const TraitVector& trait, Index n_per_group, std::mt19937_64& rng) {
  if (n_per_group < 1) throw InvalidInput("group size must be positive");
  const std::vector<Index> obs = trait.observed();
  const auto n = static_cast<std::size_t>(n_per_group);
  if (obs.size() < 2 * n) {
    std::ostringstream os;
    os << "need " << 2 * n << " observed trait values, have " << obs.size();
    throw InvalidInput(os.str());
  }
  GroupSplit split;
  split.low = extreme_side(trait.values, obs, n, true, rng);
  std::vector<Index> rest;
  std::set_difference(obs.begin(), obs.end(), split.low.begin(), split.low.end(), std::back_inserter(rest));
  split.high = extreme_side(trait.values, rest, n, false, rng);
  return split;
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& z) {
  const Index n = z.rows();
  Eigen::MatrixXd d2(n, n);
  for (Index j = 0; j < n; ++j) {
    d2(j, j) = 0.0;
    for (Index i = j + 1; i < n; ++i) {
      const double v = (z.row(i) - z.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

double median_distance(const Eigen::MatrixXd& d2) {
  const Index n = d2.rows();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 1; i < n; ++i) dist.push_back(std::sqrt(d2(i, j)));
  }
  const std::size_t m = dist.size();
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m / 2), dist.end());
  const double upper = dist[m / 2];
  if (m % 2 == 1) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m / 2));
  return 0.5 * (lower + upper);
}

// MMD² from a kernel matrix and a membership mask, using row sums r = K·1 and total T = 1ᵀK1.
double mmd_from_kernel(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& row_sums, double total,
                       const std::vector<Index>& members_a, Index na, Index nb) {
  double saa = 0.0;
  double ra = 0.0;
  for (Index i : members_a) {
    ra += row_sums(i);
    for (Index j : members_a) saa += kernel(i, j);
  }
  const double sab = ra - saa;
  const double sbb = total - 2.0 * ra + saa;
  const double fa = static_cast<double>(na);
  const double fb = static_cast<double>(nb);
  return saa / (fa * fa) + sbb / (fb * fb) - 2.0 * sab / (fa * fb);
}

// Lexicographic order on the sorted rows of a sample: a canonical order for two groups.
bool sample_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  auto sorted_rows = [](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) rows[i].push_back(m(i, j));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  return sorted_rows(a) < sorted_rows(b);
}

}  // namespace

double mmd_statistic(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth) {
  if (a.cols() != b.cols()) throw DimensionError("samples have different dimensions");
  if (!(bandwidth > 0.0)) throw InvalidInput("bandwidth must be positive");
  auto mean_kernel = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    double s = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < y.rows(); ++j) {
        s += std::exp(-(x.row(i) - y.row(j)).squaredNorm() / (2.0 * bandwidth * bandwidth));
      }
    }
    return s / static_cast<double>(x.rows() * y.rows());
  };
  return mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
}

TestResult mmd_test(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::mt19937_64& rng,
                    const MmdOptions& opts) {
  if (a.rows() < 2 || b.rows() < 2) throw InvalidInput("each MMD sample needs at least two rows");
  if (a.cols() != b.cols()) throw DimensionError("samples have different dimensions");
  if (opts.permutations < 1) throw InvalidInput("permutation count must be positive");

  // Base seed drawn before any early return so the caller's stream advances identically.
  const std::uint64_t base = rng();
  TestResult result;
  result.permutations = opts.permutations;

  const bool swap = sample_less(b, a);
  const Eigen::MatrixXd& first = swap ? b : a;
  const Eigen::MatrixXd& second = swap ? a : b;
  const Index na = first.rows();
  const Index nb = second.rows();
  const Index n = na + nb;
  Eigen::MatrixXd pooled(n, a.cols());
  pooled << first, second;

  const Eigen::MatrixXd d2 = squared_distances(pooled);
  const double sigma = median_distance(d2);
  result.bandwidth = sigma;
  if (sigma == 0.0) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  const Eigen::MatrixXd kernel = (-d2 / (2.0 * sigma * sigma)).array().exp().matrix();
  const Eigen::VectorXd row_sums = kernel.rowwise().sum();
  const double total = row_sums.sum();

  std::vector<Index> members(static_cast<std::size_t>(na));
  std::iota(members.begin(), members.end(), Index{0});
  result.statistic = mmd_from_kernel(kernel, row_sums, total, members, na, nb);
  const double cutoff = result.statistic - 1e-12;

  // Permutation i uses its own generator seeded from (base, i), so the count is schedule-independent.
  auto count_range = [&](int begin, int end) {
    long hits = 0;
    std::vector<Index> labels(static_cast<std::size_t>(n));
    for (int perm = begin; perm < end; ++perm) {
      std::seed_seq seq{static_cast<std::uint32_t>(base & 0xffffffffu), static_cast<std::uint32_t>(base >> 32),
                        static_cast<std::uint32_t>(perm)};
      std::mt19937_64 prng(seq);
      std::iota(labels.begin(), labels.end(), Index{0});
      std::shuffle(labels.begin(), labels.end(), prng);
      const std::vector<Index> perm_a(labels.begin(), labels.begin() + na);
      if (mmd_from_kernel(kernel, row_sums, total, perm_a, na, nb) >= cutoff) ++hits;
    }
    return hits;
  };

  long hits = 0;
  const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(opts.permutations)));
  if (threads == 1) {
    hits = count_range(0, opts.permutations);
  } else {
    std::vector<long> partial(threads, 0);
    {
      std::vector<std::jthread> pool;
      const int chunk = (opts.permutations + static_cast<int>(threads) - 1) / static_cast<int>(threads);
      for (unsigned t = 0; t < threads; ++t) {
        const int begin = static_cast<int>(t) * chunk;
        const int end = std::min(opts.permutations, begin + chunk);
        pool.emplace_back([&, t, begin, end] { partial[t] = begin < end ? count_range(begin, end) : 0; });
      }
    }
    hits = std::accumulate(partial.begin(), partial.end(), 0L);
  }
  result.p_value = static_cast<double>(1 + hits) / static_cast<double>(1 + opts.permutations);
  return result;
}

FdrResult fdr_bh(const std::vector<double>& p_values, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in (0, 1]");
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("p-values must lie in [0, 1]");
  }
  FdrResult out;
  const std::size_t m = p_values.size();
  out.rejected.assign(m, false);
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p_values[x] < p_values[y]; });
  std::size_t cut = 0;  // number of rejected ranks
  for (std::size_t rank = m; rank >= 1; --rank) {
    if (p_values[order[rank - 1]] <= alpha * static_cast<double>(rank) / static_cast<double>(m)) {
      cut = rank;
      break;
    }
  }
  for (std::size_t r = 0; r < cut; ++r) out.rejected[order[r]] = true;
  out.rejections = cut;
  out.threshold = cut > 0 ? alpha * static_cast<double>(cut) / static_cast<double>(m) : 0.0;
  return out;
}

Eigen::VectorXd residualize(const Eigen::VectorXd& y, const Eigen::MatrixXd& covariates) {
  if (covariates.rows() != y.size()) throw DimensionError("covariate rows must match the response length");
  Eigen::MatrixXd design(y.size(), covariates.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(covariates.cols()) = covariates;
  const Eigen::VectorXd beta = design.completeOrthogonalDecomposition().solve(y);
  return y - design * beta;
}

double direction_scale(const EmbeddingMatrix& emb, const std::vector<Index>& group0, const std::vector<Index>& group1) {
  if (group0.empty() || group1.empty()) throw InvalidInput("groups must be non-empty");
  check_rows(group0, emb.subjects(), "group0");
  check_rows(group1, emb.subjects(), "group1");
  const Eigen::VectorXd m0 = emb.scores(group0, Eigen::all).colwise().mean();
  const Eigen::VectorXd m1 = emb.scores(group1, Eigen::all).colwise().mean();
  return (m0 - m1).norm();
}

Eigen::MatrixXd delta_net(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, const Eigen::VectorXd& w, double s) {
  if (w.size() != d.size() || v.cols() != d.size()) {
    std::ostringstream os;
    os << "direction length " << w.size() << " does not match " << d.size() << " components";
    throw DimensionError(os.str());
  }
  const Index p = v.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (Index k = 0; k < d.size(); ++k) {
    const double coef = s * d(k) * w(k);
    for (Index j = 0; j < p; ++j) {
      for (Index i = 0; i < p; ++i) out(i, j) += coef * (v(i, k) * v(j, k));
    }
  }
  return out;
}

Direction cca_direction(const EmbeddingMatrix& emb, const TraitVector& trait,
                        const std::optional<Eigen::MatrixXd>& covariates, const std::optional<GroupSplit>& groups) {
  if (trait.values.size() != emb.subjects()) throw DimensionError("trait length must equal the subject count");
  if (trait.kind == TraitKind::kCategorical) throw InvalidInput("CCA direction needs a continuous or ordinal trait");
  if (covariates && covariates->rows() != emb.subjects()) throw DimensionError("covariate rows must equal subjects");

  std::vector<Index> rows;
  for (Index i : trait.observed()) {
    if (!covariates || covariates->row(i).allFinite()) rows.push_back(i);
  }
  const Index k = emb.components();
  if (static_cast<Index>(rows.size()) < k + 2) {
    std::ostringstream os;
    os << "CCA needs at least K + 2 = " << k + 2 << " complete rows, have " << rows.size();
    throw InvalidInput(os.str());
  }

  const Eigen::VectorXd y_raw = trait.values(rows);
  const Eigen::VectorXd y_centered = y_raw.array() - y_raw.mean();
  const Eigen::VectorXd y = covariates ? residualize(y_raw, (*covariates)(rows, Eigen::all)) : y_centered;
  const double scale = y_centered.norm();
  if (scale == 0.0 || y.norm() <= 1e-10 * scale) {
    throw NumericalError("trait '" + trait.name + "' has no variation left; direction is undefined");
  }
  const Eigen::MatrixXd u_rows = emb.scores(rows, Eigen::all);
  const Eigen::MatrixXd u_centered = u_rows.rowwise() - u_rows.colwise().mean();
  const Eigen::VectorXd g = u_centered.transpose() * y;
  const double gnorm = g.norm();
  if (gnorm == 0.0) throw NumericalError("trait is uncorrelated with every component; direction is undefined");

  Direction dir;
  dir.method = DirectionMethod::kCca;
  dir.trait = trait.name;
  dir.w = g / gnorm;
  if (groups) {
    dir.s = direction_scale(emb, groups->low, groups->high);
  } else {
    std::vector<Index> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [&](Index a, Index b) { return trait.values(a) < trait.values(b); });
    const std::size_t half = sorted.size() / 2;
    const std::vector<Index> low(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(half));
    const std::vector<Index> high(sorted.end() - static_cast<std::ptrdiff_t>(half), sorted.end());
    dir.s = direction_scale(emb, low, high);
  }
  dir.delta_net = delta_net(emb.d, emb.V, dir.w, dir.s);
  return dir;
}

Eigen::VectorXd lda_weights(const Eigen::VectorXd& mu0, const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma0,
                            const Eigen::MatrixXd& sigma1, double ridge) {
  const Index k = mu0.size();
  if (mu1.size() != k || sigma0.rows() != k || sigma0.cols() != k || sigma1.rows() != k || sigma1.cols() != k) {
    throw DimensionError("LDA inputs have inconsistent dimensions");
  }
  if (ridge < 0.0) throw InvalidInput("ridge must be non-negative");
  const Eigen::VectorXd diff = mu1 - mu0;
  if (diff.norm() == 0.0) throw NumericalError("group means coincide; LDA direction is undefined");

  Eigen::MatrixXd pooled = sigma0 + sigma1;
  pooled = 0.5 * (pooled + pooled.transpose());
  if (pooled.isZero(0.0)) {
    // Both groups are point masses: any positive-definite metric gives the mean difference.
    return diff.normalized();
  }
  pooled.diagonal().array() += ridge;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pooled);
  const double top = es.eigenvalues().maxCoeff();
  const double bottom = es.eigenvalues().minCoeff();
  if (bottom <= 1e-12 * top) throw NumericalError("pooled covariance is singular; supply a positive ridge");
  const Eigen::VectorXd w = pooled.ldlt().solve(diff);
  return w.normalized();
}

Direction lda_direction(const EmbeddingMatrix& emb, const std::vector<Index>& group0, const std::vector<Index>& group1,
                        const LdaOptions& opts, const std::string& trait) {
  if (group0.size() < 2 || group1.size() < 2) throw InvalidInput("each LDA group needs at least two subjects");
  check_rows(group0, emb.subjects(), "group0");
  check_rows(group1, emb.subjects(), "group1");
  const GroupEmbedding g0 = GroupEmbedding::of(emb.scores, group0);
  const GroupEmbedding g1 = GroupEmbedding::of(emb.scores, group1);
  const double ridge = opts.ridge.value_or(1e-6 * (g0.covariance + g1.covariance).trace() /
                                           static_cast<double>(emb.components()));

  Direction dir;
  dir.method = DirectionMethod::kLda;
  dir.trait = trait;
  dir.ridge = ridge;
  dir.w = lda_weights(g0.mean, g1.mean, g0.covariance, g1.covariance, ridge);
  dir.threshold = 0.5 * (dir.w.dot(g0.mean) + dir.w.dot(g1.mean));
  dir.s = (g0.mean - g1.mean).norm();
  dir.delta_net = delta_net(emb.d, emb.V, dir.w, dir.s);
  return dir;
}

std::vector<Edge> top_edges(const Eigen::MatrixXd& net, Index n_edges) {
  if (net.rows() != net.cols()) throw DimensionError("network must be square");
  const Index p = net.rows();
  if (n_edges < 0 || n_edges > p * (p - 1) / 2) {
    std::ostringstream os;
    os << "edge count " << n_edges << " outside [0, " << p * (p - 1) / 2 << "]";
    throw InvalidInput(os.str());
  }
  std::vector<Edge> edges;
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) {
      if (net(i, j) != 0.0) edges.push_back({i, j, net(i, j)});
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    const double ma = std::abs(a.value);
    const double mb = std::abs(b.value);
    if (ma != mb) return ma > mb;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  if (static_cast<Index>(edges.size()) > n_edges) edges.resize(static_cast<std::size_t>(n_edges));
  return edges;
}

Eigen::MatrixXd principal_network(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, Index k) {
  if (v.cols() != d.size()) throw DimensionError("factor count does not match d");
  if (k < 0 || k > d.size()) throw RankError("principal network rank exceeds available components");
  const Index p = v.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
  for (Index c = 0; c < k; ++c) out += d(c) * v.col(c) * v.col(c).transpose();
  return out;
}

double project_onto(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("projection operands differ in length");
  return a.dot(b);
}

}  // namespace tnpca
