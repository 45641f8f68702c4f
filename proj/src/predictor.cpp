#include "tnpca/predictor.hpp"

#include "tnpca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace tnpca {

SplitPlan make_split(Index n, const SplitFractions& fractions, std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.validation, fractions.test};
  for (double v : f) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("split fractions must be positive");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");
  if (n < 3) throw InvalidInput("need at least 3 subjects to split into three parts");

  // Largest remainder: floor every quota, hand leftover units to the largest fractional parts.
  Index sizes[3];
  double rem[3];
  Index assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = f[i] * static_cast<double>(n);
    sizes[i] = static_cast<Index>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return rem[a] > rem[b]; });
  for (int i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  for (Index s : sizes) {
    if (s == 0) {
      std::ostringstream os;
      os << n << " subjects leave a split part empty";
      throw InvalidInput(os.str());
    }
  }

  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitPlan plan;
  plan.fractions = fractions;
  plan.seed = seed;
  auto take = [&](std::size_t from, Index count) {
    std::vector<Index> part(perm.begin() + static_cast<std::ptrdiff_t>(from),
                            perm.begin() + static_cast<std::ptrdiff_t>(from + static_cast<std::size_t>(count)));
    std::sort(part.begin(), part.end());
    return part;
  };
  plan.train = take(0, sizes[0]);
  plan.validation = take(static_cast<std::size_t>(sizes[0]), sizes[1]);
  plan.test = take(static_cast<std::size_t>(sizes[0] + sizes[1]), sizes[2]);
  return plan;
}

Eigen::VectorXd LinearModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coef.size()) throw DimensionError("feature count does not match the fitted model");
  return (x * coef).array() + intercept;
}

LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError("design rows must match the response length");
  if (y.size() == 0) throw InvalidInput("cannot fit a model to zero rows");
  const Index p = x.cols();
  LinearModel model;

  if (x.rows() < p + 1) {
    model.ridge = true;
    const Eigen::RowVectorXd xm = x.colwise().mean();
    const double ym = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - xm;
    const Eigen::MatrixXd gram = xc.transpose() * xc;
    const double tr = gram.trace();
    model.lambda = tr > 0.0 ? 1e-6 * tr / static_cast<double>(p) : 1e-6;
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += model.lambda;
    model.coef = a.ldlt().solve(xc.transpose() * (y.array() - ym).matrix());
    model.intercept = ym - xm.dot(model.coef);
    return model;
  }

  Eigen::MatrixXd design(x.rows(), p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
  const Eigen::VectorXd beta = cod.solve(y);
  model.rank_deficient = cod.rank() < p + 1;
  model.intercept = beta(0);
  model.coef = beta.tail(p);
  return model;
}

namespace {

double log1p_exp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd LogisticModel::probability(const Eigen::MatrixXd& x) const {
  if (x.cols() != coef.size()) throw DimensionError("feature count does not match the fitted model");
  const Eigen::VectorXd eta = (x * coef).array() + intercept;
  return eta.unaryExpr([](double t) { return sigmoid(t); });
}

Eigen::VectorXd LogisticModel::predict(const Eigen::MatrixXd& x) const {
  return probability(x).unaryExpr([](double p) { return p >= 0.5 ? 1.0 : 0.0; });
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const LogisticOptions& opts) {
  if (x.rows() != y.size()) throw DimensionError("design rows must match the label length");
  bool has0 = false;
  bool has1 = false;
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) == 0.0) {
      has0 = true;
    } else if (y(i) == 1.0) {
      has1 = true;
    } else {
      throw InvalidInput("logistic labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) throw InvalidInput("logistic regression needs both classes present");

  const Index p = x.cols();
  Eigen::MatrixXd design(x.rows(), p + 1);
  design.col(0).setOnes();
  design.rightCols(p) = x;
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(p + 1, opts.penalty);
  pen(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd eta = design * theta;
    double f = 0.0;
    for (Index i = 0; i < eta.size(); ++i) f += log1p_exp(eta(i)) - y(i) * eta(i);
    return f + 0.5 * (pen.array() * theta.array().square()).sum();
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  const double prior = y.mean();
  theta(0) = std::log(prior / (1.0 - prior));
  double f = objective(theta);

  LogisticModel model;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Eigen::VectorXd eta = design * theta;
    const Eigen::VectorXd prob = eta.unaryExpr([](double t) { return sigmoid(t); });
    const Eigen::VectorXd grad = design.transpose() * (prob - y) + (pen.array() * theta.array()).matrix();
    model.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (model.gradient_norm <= opts.tol) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd weight = (prob.array() * (1.0 - prob.array())).matrix();
    Eigen::MatrixXd hess = design.transpose() * weight.asDiagonal() * design;
    hess.diagonal() += pen;
    hess.diagonal().array() += 1e-12 * std::max(1.0, hess.diagonal().maxCoeff());
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    double t = 1.0;
    const double slope = grad.dot(step);
    Eigen::VectorXd next = theta - step;
    // Once the predicted decrease is below the objective's rounding, take the full Newton step.
    if (slope <= 1e-12 * std::max(1.0, std::abs(f))) {
      theta = next;
      f = objective(theta);
      ++model.iterations;
      continue;
    }
    double fn = objective(next);
    for (int k = 0; k < 60 && !(fn <= f - 1e-4 * t * slope); ++k) {
      t *= 0.5;
      next = theta - t * step;
      fn = objective(next);
    }
    ++model.iterations;
    if (!(fn <= f)) break;  // no descent left at machine precision
    theta = next;
    f = fn;
  }
  if (!model.converged) {
    const Eigen::VectorXd prob = (design * theta).unaryExpr([](double t) { return sigmoid(t); });
    const Eigen::VectorXd grad = design.transpose() * (prob - y) + (pen.array() * theta.array()).matrix();
    model.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    model.converged = model.gradient_norm <= opts.tol;
  }
  model.intercept = theta(0);
  model.coef = theta.tail(p);
  return model;
}

std::string to_string(Metric m) { return m == Metric::kRmse ? "rmse" : "one-minus-accuracy"; }

namespace {

struct PartData {
  std::vector<Index> rows;
  Eigen::MatrixXd covariates;  // rows x C
  Eigen::MatrixXd scores;      // rows x K_max
  Eigen::VectorXd y;
};

PartData gather(const std::vector<Index>& part, const EmbeddingMatrix& emb, const TraitVector& trait,
                const std::optional<Eigen::MatrixXd>& covariates, const char* name) {
  PartData out;
  for (Index i : part) {
    if (i < 0 || i >= emb.subjects()) throw InvalidInput("split index out of range");
    if (trait.missing(i)) continue;
    if (covariates && !covariates->row(i).allFinite()) continue;
    out.rows.push_back(i);
  }
  if (out.rows.empty()) throw InvalidInput(std::string("split part '") + name + "' has no usable rows");
  out.covariates = covariates ? Eigen::MatrixXd((*covariates)(out.rows, Eigen::all))
                              : Eigen::MatrixXd(static_cast<Index>(out.rows.size()), 0);
  out.scores = emb.scores(out.rows, Eigen::all);
  out.y = trait.values(out.rows);
  return out;
}

Eigen::MatrixXd features(const PartData& part, Index k) {
  Eigen::MatrixXd x(part.covariates.rows(), part.covariates.cols() + k);
  x << part.covariates, part.scores.leftCols(k);
  return x;
}

// Fits on the training part only and returns predictions for `eval`.
class Scorer {
 public:
  Scorer(TraitKind kind, const Eigen::VectorXd& train_y, const LogisticOptions& opts) : kind_(kind), opts_(opts) {
    if (kind_ != TraitKind::kCategorical) return;
    std::vector<double> levels(train_y.data(), train_y.data() + train_y.size());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (levels.size() < 2) throw InvalidInput("categorical trait has a single class in the training rows");
    classes_ = std::move(levels);
  }

  Metric metric() const { return kind_ == TraitKind::kCategorical ? Metric::kOneMinusAccuracy : Metric::kRmse; }

  Eigen::VectorXd fit_predict(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                              const Eigen::MatrixXd& eval_x) const {
    if (kind_ != TraitKind::kCategorical) return fit_linear(train_x, train_y).predict(eval_x);
    if (classes_.size() == 2) {
      const Eigen::VectorXd labels = (train_y.array() == classes_[1]).cast<double>();
      const Eigen::VectorXd hit = fit_logistic(train_x, labels, opts_).predict(eval_x);
      return hit.unaryExpr([&](double h) { return h == 1.0 ? classes_[1] : classes_[0]; });
    }
    // One-vs-rest: highest class probability wins, first class on ties.
    Eigen::MatrixXd prob(eval_x.rows(), static_cast<Index>(classes_.size()));
    for (std::size_t c = 0; c < classes_.size(); ++c) {
      const Eigen::VectorXd labels = (train_y.array() == classes_[c]).cast<double>();
      prob.col(static_cast<Index>(c)) = fit_logistic(train_x, labels, opts_).probability(eval_x);
    }
    Eigen::VectorXd out(eval_x.rows());
    for (Index i = 0; i < eval_x.rows(); ++i) {
      Index best = 0;
      prob.row(i).maxCoeff(&best);
      out(i) = classes_[static_cast<std::size_t>(best)];
    }
    return out;
  }

  double error(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) const {
    if (kind_ == TraitKind::kCategorical) {
      const double correct = (pred.array() == truth.array()).cast<double>().sum();
      return 1.0 - correct / static_cast<double>(truth.size());
    }
    return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(truth.size()));
  }

 private:
  TraitKind kind_;
  LogisticOptions opts_;
  std::vector<double> classes_;
};

struct Selection {
  Index best_k = 0;
  std::vector<std::pair<Index, double>> errors;
};

// Sees only training and validation data.
Selection select_k(const Scorer& scorer, const PartData& train, const PartData& validation,
                   const std::vector<Index>& grid) {
  Selection sel;
  double best = std::numeric_limits<double>::infinity();
  for (Index k : grid) {
    const Eigen::VectorXd pred = scorer.fit_predict(features(train, k), train.y, features(validation, k));
    const double err = scorer.error(pred, validation.y);
    sel.errors.emplace_back(k, err);
    if (err < best) {
      best = err;
      sel.best_k = k;
    }
  }
  return sel;
}

}  // namespace

PredictionReport evaluate_trait(const EmbeddingMatrix& emb, const TraitVector& trait,
                                const std::optional<Eigen::MatrixXd>& covariates, const SplitPlan& split,
                                const EvaluateOptions& opts) {
  if (trait.values.size() != emb.subjects()) throw DimensionError("trait length must equal the subject count");
  if (covariates && covariates->rows() != emb.subjects()) throw DimensionError("covariate rows must equal subjects");

  std::vector<Index> grid;
  for (Index k : opts.k_grid) {
    if (k >= 1 && k <= emb.components()) grid.push_back(k);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty()) {
    std::ostringstream os;
    os << "no K in the grid lies in [1, " << emb.components() << "]";
    throw RankError(os.str());
  }

  const PartData train = gather(split.train, emb, trait, covariates, "train");
  const PartData validation = gather(split.validation, emb, trait, covariates, "validation");
  const Scorer scorer(trait.kind, train.y, opts.logistic);
  const Selection sel = select_k(scorer, train, validation, grid);

  // Final scoring: the only place test rows are read.
  const PartData test = gather(split.test, emb, trait, covariates, "test");
  PredictionReport report;
  report.trait = trait.name;
  report.metric = scorer.metric();
  report.best_k = sel.best_k;
  report.validation_errors = sel.errors;
  const Eigen::VectorXd base_pred = scorer.fit_predict(train.covariates, train.y, test.covariates);
  report.test_predictions = scorer.fit_predict(features(train, sel.best_k), train.y, features(test, sel.best_k));
  report.psi_baseline = scorer.error(base_pred, test.y);
  report.psi_full = scorer.error(report.test_predictions, test.y);
  // A baseline error at rounding level (relative to the trait's magnitude) means nothing is left to explain.
  const double trait_rms = std::sqrt(test.y.squaredNorm() / static_cast<double>(test.y.size()));
  if (report.psi_baseline <= 1e-10 * trait_rms) {
    report.degenerate = true;
    report.rho = 0.0;
  } else {
    report.rho = (report.psi_baseline - report.psi_full) / report.psi_baseline;
  }
  report.test_indices = test.rows;
  report.test_truth = test.y;
  return report;
}

RepeatedPrediction evaluate_trait_repeated(const EmbeddingMatrix& emb, const TraitVector& trait,
                                           const std::optional<Eigen::MatrixXd>& covariates,
                                           const SplitFractions& fractions, std::uint64_t seed, int repeats,
                                           const EvaluateOptions& opts) {
  if (repeats < 1) throw InvalidInput("repeat count must be positive");
  RepeatedPrediction out;
  double sum = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const SplitPlan plan = make_split(emb.subjects(), fractions, seed + static_cast<std::uint64_t>(r));
    out.runs.push_back(evaluate_trait(emb, trait, covariates, plan, opts));
    sum += out.runs.back().rho;
  }
  out.rho_mean = sum / repeats;
  double ss = 0.0;
  for (const auto& run : out.runs) ss += (run.rho - out.rho_mean) * (run.rho - out.rho_mean);
  out.rho_std = repeats > 1 ? std::sqrt(ss / (repeats - 1)) : 0.0;
  return out;
}

IdentificationReport identify_subjects(const Eigen::MatrixXd& gallery, const std::vector<Index>& gallery_labels,
                                       const Eigen::MatrixXd& probes, const std::vector<Index>& probe_labels,
                                       Index k) {
  if (gallery.rows() == 0) throw InvalidInput("gallery is empty");
  if (static_cast<Index>(gallery_labels.size()) != gallery.rows() ||
      static_cast<Index>(probe_labels.size()) != probes.rows()) {
    throw DimensionError("label count must match row count");
  }
  if (gallery.cols() != probes.cols()) throw DimensionError("gallery and probes have different widths");
  if (k < 1 || k > gallery.cols()) throw RankError("identification K outside the available components");
  if (probes.rows() == 0) throw InvalidInput("no probes to identify");

  IdentificationReport report;
  report.k = k;
  Index correct = 0;
  for (Index i = 0; i < probes.rows(); ++i) {
    Index best = 0;
    (gallery.leftCols(k).rowwise() - probes.row(i).head(k)).rowwise().squaredNorm().minCoeff(&best);
    report.nearest.push_back(best);
    report.predicted_label.push_back(gallery_labels[static_cast<std::size_t>(best)]);
    if (report.predicted_label.back() == probe_labels[static_cast<std::size_t>(i)]) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(probes.rows());
  return report;
}

std::vector<std::pair<double, double>> predicted_group_means(const PredictionReport& report) {
  if (report.test_truth.size() == 0) throw InvalidInput("report has no test predictions");
  if (report.test_truth.size() != report.test_predictions.size()) {
    throw DimensionError("test truth and predictions differ in length");
  }
  std::map<double, std::pair<double, Index>> acc;
  for (Index i = 0; i < report.test_truth.size(); ++i) {
    auto& slot = acc[report.test_truth(i)];
    slot.first += report.test_predictions(i);
    ++slot.second;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [level, sum_count] : acc) {
    out.emplace_back(level, sum_count.first / static_cast<double>(sum_count.second));
  }
  return out;
}

}  // namespace tnpca
