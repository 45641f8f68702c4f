#include "test_util.hpp"

#include "tnpca/decomposer.hpp"
#include "tnpca/errors.hpp"
#include "tnpca/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tnpca;
using namespace tnpca::testing;

namespace {

SemiSymmetricTensor planted(const Eigen::VectorXd& d, const Eigen::MatrixXd& v, const Eigen::MatrixXd& u) {
  return planted_signal(d, v, u);
}

double relative_residual(const SemiSymmetricTensor& x, const TnDecomposition& dec) {
  const SemiSymmetricTensor r = reconstruct(dec);
  return (x.tensor().flat() - r.tensor().flat()).norm() / frobenius_norm(x.tensor());
}

}  // namespace

TEST(TnPca, RankOneOnThreeNodes) {
  const Eigen::VectorXd u = Eigen::Vector2d(1.0, 1.0) / std::sqrt(2.0);
  const SemiSymmetricTensor x = planted(Eigen::VectorXd::Constant(1, 5.0), Eigen::Vector3d::UnitX(), u);
  const TnDecomposition dec = tn_pca(x, 1);
  ASSERT_EQ(dec.components(), 1);
  EXPECT_NEAR(dec.d(0), 5.0, 1e-12);
  EXPECT_NEAR(std::abs(dec.V(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(dec.U.col(0).dot(u)), 1.0, 1e-12);
  EXPECT_LE(relative_residual(x, dec) * frobenius_norm(x.tensor()), 1e-8);
}

TEST(TnPca, FactorsAreUnitVectors) {
  std::mt19937_64 rng(1);
  const SemiSymmetricTensor x = random_semisym(7, 5, rng);
  const TnDecomposition dec = tn_pca(x, 1);
  EXPECT_NEAR(dec.V.col(0).norm(), 1.0, 1e-12);
  EXPECT_NEAR(dec.U.col(0).norm(), 1.0, 1e-12);
  EXPECT_GT(dec.d(0), 0.0);
}

TEST(TnPca, RankBounds) {
  std::mt19937_64 rng(2);
  const SemiSymmetricTensor x = random_semisym(4, 3, rng);
  EXPECT_THROW(tn_pca(x, 0), RankError);
  EXPECT_THROW(tn_pca(x, 5), RankError);
  EXPECT_NO_THROW(tn_pca(x, 4));
}

TEST(TnPca, NoiselessRecovery) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd v = sample_stiefel(20, 4, rng);
  const Eigen::MatrixXd u = sample_unit_columns(30, 4, rng);
  const Eigen::VectorXd d = planted_core(20, 30, 4);
  const SemiSymmetricTensor x = planted(d, v, u);
  const TnDecomposition dec = tn_pca(x, 4);
  EXPECT_LE(relative_residual(x, dec), 1e-8);
  EXPECT_LE(relative_core_error(d, v, dec), 1e-8);
}

TEST(TnPca, StopsEarlyWhenExhausted) {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd v = sample_stiefel(6, 2, rng);
  const Eigen::MatrixXd u = sample_unit_columns(5, 2, rng);
  const SemiSymmetricTensor x = planted(Eigen::Vector2d(3.0, 2.0), v, u);
  const TnDecomposition dec = tn_pca(x, 4);
  EXPECT_EQ(dec.components(), 2);
  ASSERT_FALSE(dec.warnings.empty());
  EXPECT_NE(dec.warnings.back().find("exhausted"), std::string::npos);
}

TEST(TnPca, BeatsHosvdAtModerateSnr) {
  SimulationConfig cfg;
  cfg.snr = 4.0;
  cfg.u_mode = SubjectFactorMode::kGaussianUnitNorm;
  std::mt19937_64 rng(5);
  const SimulationDraw draw = generate(cfg, rng);
  const double tn = relative_core_error(draw.d_true, draw.v_true, tn_pca(draw.x, cfg.rank));
  const double ho = relative_core_error(draw.d_true, draw.v_true, draw.u_true, hosvd_semisym(draw.x, 5, 5));
  EXPECT_LT(tn, ho);
}

TEST(TnPca, DeterministicPerSeed) {
  std::mt19937_64 rng(6);
  const SemiSymmetricTensor x = random_semisym(8, 6, rng);
  TnPcaOptions opts;
  opts.seed = 42;
  const TnDecomposition a = tn_pca(x, 3, opts);
  const TnDecomposition b = tn_pca(x, 3, opts);
  EXPECT_EQ(a.d, b.d);
  EXPECT_EQ(a.V, b.V);
  EXPECT_EQ(a.U, b.U);
}

TEST(TnPcaProperty, OrthonormalityAscentAndDeflation) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<Index> pick_p(2, 10);
    std::uniform_int_distribution<Index> pick_n(1, 8);
    const Index p = pick_p(rng);
    const Index n = pick_n(rng);
    std::uniform_int_distribution<Index> pick_k(1, p);
    const Index k = pick_k(rng);
    const SemiSymmetricTensor x = random_semisym(p, n, rng);
    TnPcaOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    const TnDecomposition dec = tn_pca(x, k, opts);
    const Index found = dec.components();

    const Eigen::MatrixXd gram = dec.V.transpose() * dec.V;
    EXPECT_LE((gram - Eigen::MatrixXd::Identity(found, found)).cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial;
    for (Index c = 0; c < found; ++c) {
      EXPECT_NEAR(dec.U.col(c).norm(), 1.0, 1e-10);
      EXPECT_GT(dec.d(c), 0.0);
      const auto& trace = dec.objective_trace[static_cast<std::size_t>(c)];
      for (std::size_t i = 1; i < trace.size(); ++i) {
        EXPECT_GE(trace[i], trace[i - 1] - 1e-12) << "trial " << trial << " component " << c;
      }
      EXPECT_LT(dec.residual_norms[c + 1], dec.residual_norms[c]);
      // Basis networks v_k v_kᵀ are mutually orthogonal: ⟨v_k∘v_k, v_j∘v_j⟩ = (v_kᵀv_j)².
      for (Index j = 0; j < c; ++j) EXPECT_LE(std::pow(dec.V.col(c).dot(dec.V.col(j)), 2), 1e-10);
    }
  }
}

TEST(TnPcaProperty, DeflatedResidualStaysSemiSymmetric) {
  std::mt19937_64 rng(8);
  SemiSymmetricTensor x = random_semisym(6, 4, rng);
  const TnDecomposition dec = tn_pca(x, 3);
  for (Index c = 0; c < dec.components(); ++c) {
    x.subtract_rank_one(dec.d(c), dec.V.col(c), dec.U.col(c));
    EXPECT_LE(measure_asymmetry(x.tensor()).max_violation, 1e-10);
  }
}

TEST(RankOneStep, PlantedRankOneConvergesQuickly) {
  std::mt19937_64 rng(9);
  const Eigen::VectorXd v = unit_vector(8, rng);
  const Eigen::VectorXd u = unit_vector(6, rng);
  const SemiSymmetricTensor x = planted(Eigen::VectorXd::Constant(1, 4.0), v, u);
  const RankOneResult r = rank_one_step(x, Eigen::MatrixXd(8, 0), unit_vector(8, rng), {}, rng);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.trace.size(), 4u);  // initial value plus at most three alternations
  EXPECT_NEAR(r.d, 4.0, 1e-10);
  EXPECT_NEAR(std::abs(r.v.dot(v)), 1.0, 1e-10);
}

TEST(RankOneStep, OrthogonalInitRecoversViaRestart) {
  // Every slice is a multiple of e1 e1ᵀ, so an init orthogonal to e1 hits a zero fiber.
  const SemiSymmetricTensor x =
      planted(Eigen::VectorXd::Constant(1, 2.0), Eigen::Vector3d::UnitX(), Eigen::Vector2d(0.6, 0.8));
  std::mt19937_64 rng(10);
  const RankOneResult r = rank_one_step(x, Eigen::MatrixXd(3, 0), Eigen::Vector3d::UnitY(), {}, rng);
  EXPECT_FALSE(r.failed);
  EXPECT_NEAR(r.d, 2.0, 1e-10);
  EXPECT_NEAR(std::abs(r.v(0)), 1.0, 1e-10);
}

TEST(RankOneStep, ZeroTensorFails) {
  std::mt19937_64 rng(11);
  const RankOneResult r = rank_one_step(SemiSymmetricTensor::zeros(3, 2), Eigen::MatrixXd(3, 0),
                                        Eigen::Vector3d::UnitX(), {}, rng);
  EXPECT_TRUE(r.failed);
  EXPECT_EQ(r.d, 0.0);
}

TEST(RankOneStep, RejectsNonOrthonormalPrevious) {
  std::mt19937_64 rng(12);
  const SemiSymmetricTensor x = random_semisym(4, 2, rng);
  const Eigen::MatrixXd bad = Eigen::MatrixXd::Ones(4, 1);
  EXPECT_THROW(rank_one_step(x, bad, Eigen::Vector4d::UnitX(), {}, rng), InvalidInput);
}

TEST(Reconstruct, ZeroComponentsGiveZero) {
  TnDecomposition dec;
  dec.V.resize(4, 0);
  dec.U.resize(3, 0);
  EXPECT_EQ(reconstruct_subject(dec, 1), Eigen::MatrixXd::Zero(4, 4));
  EXPECT_THROW(reconstruct_subject(dec, 3), InvalidInput);
}

TEST(Reconstruct, MatchesDirectSum) {
  std::mt19937_64 rng(13);
  const SemiSymmetricTensor x = random_semisym(5, 4, rng);
  const TnDecomposition dec = tn_pca(x, 3);
  const Eigen::MatrixXd s2 = reconstruct_subject(dec, 2);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(5, 5);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      for (Index c = 0; c < 3; ++c) expected(i, j) += dec.d(c) * dec.U(2, c) * dec.V(i, c) * dec.V(j, c);
    }
  }
  EXPECT_LE((s2 - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TnPca4, SingleFeatureMatchesThreeMode) {
  std::mt19937_64 rng(14);
  const SemiSymmetricTensor x3 = random_semisym(6, 5, rng);
  Tensor t4({6, 6, 1, 5}, std::vector<double>(x3.tensor().values().begin(), x3.tensor().values().end()));
  const Tn4Decomposition d4 = tn_pca_4mode(SemiSymmetricTensor4(t4), 2);
  const TnDecomposition d3 = tn_pca(x3, 2);
  for (Index c = 0; c < 2; ++c) {
    EXPECT_NEAR(d4.d(c), d3.d(c), 1e-8);
    EXPECT_NEAR(std::abs(d4.V.col(c).dot(d3.V.col(c))), 1.0, 1e-8);
    EXPECT_NEAR(std::abs(d4.U.col(c).dot(d3.U.col(c))), 1.0, 1e-8);
    EXPECT_NEAR(std::abs(d4.W(0, c)), 1.0, 1e-12);
  }
}

TEST(TnPca4, PlantedRankOneRecovered) {
  std::mt19937_64 rng(15);
  const Eigen::VectorXd v = unit_vector(5, rng);
  const Eigen::VectorXd w = unit_vector(3, rng);
  const Eigen::VectorXd u = unit_vector(4, rng);
  Tensor t({5, 5, 3, 4});
  for (Index n = 0; n < 4; ++n) {
    for (Index m = 0; m < 3; ++m) t.slice(m + 3 * n) = 7.0 * w(m) * u(n) * v * v.transpose();
  }
  const SemiSymmetricTensor4 x(t);
  const Tn4Decomposition dec = tn_pca_4mode(x, 1);
  EXPECT_NEAR(dec.d(0), 7.0, 1e-10);
  EXPECT_NEAR(std::abs(dec.V.col(0).dot(v)), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(dec.W.col(0).dot(w)), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(dec.U.col(0).dot(u)), 1.0, 1e-10);
  const SemiSymmetricTensor4 r = reconstruct(dec);
  EXPECT_LE((r.tensor().flat() - t.flat()).norm(), 1e-8);
}

TEST(TnPca4, NodeFactorsOrthonormal) {
  std::mt19937_64 rng(16);
  Tensor t({6, 6, 2, 3});
  for (Index s = 0; s < t.slice_count(); ++s) {
    const Eigen::MatrixXd g = gaussian_matrix(6, 6, rng);
    t.slice(s) = g + g.transpose();
  }
  const Tn4Decomposition dec = tn_pca_4mode(SemiSymmetricTensor4(t), 4);
  const Eigen::MatrixXd gram = dec.V.transpose() * dec.V;
  EXPECT_LE((gram - Eigen::MatrixXd::Identity(dec.components(), dec.components())).cwiseAbs().maxCoeff(), 1e-10);
}
