#include <gtest/gtest.h>

#include <filesystem>

#include "dcvdn/dccae.hpp"
#include "support.hpp"

using namespace dcvdn;
using namespace dcvdn::dccae;

namespace {

using testsupport::column_corr;
using testsupport::covariance;
using testsupport::noise;
using testsupport::planted_pairs;

DccaeConfig tiny_cfg() {
  DccaeConfig c;
  c.hidden = 4;
  c.L = 2;
  c.lambda = 0.7;
  c.ridge = 1e-3;
  return c;
}

// Relative error of every parameter block's analytic gradient.
double worst_param_grad_error(DccaeModel model, const Matrix& x, const Matrix& y) {
  const auto analytic = dccae_loss(model, x, y).grads;
  auto params = model.params();
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    Matrix* p = params[b];
    auto f = [&](const Matrix& v) {
      const Matrix saved = *p;
      *p = v;
      const double loss = dccae_loss(model, x, y, false).loss;
      *p = saved;
      return std::make_pair(loss, analytic[b]);
    };
    worst = std::max(worst, grad_check(f, *p));
  }
  return worst;
}

}  // namespace

TEST(CcaCorr, IdenticalViewsGiveFullCorrelation) {
  SeededRng rng(1);
  const Matrix h = noise(200, 5, rng);
  EXPECT_NEAR(cca_corr(h, h, 5, 1e-4).corr, 5.0, 1e-3);
}

TEST(CcaCorr, IndependentNoiseIsSmall) {
  SeededRng rng(2);
  EXPECT_LT(cca_corr(noise(500, 4, rng), noise(500, 4, rng), 4, 1e-4).corr, 0.6);
}

TEST(CcaCorr, RecoversPlantedCorrelations) {
  SeededRng rng(3);
  const auto [x, y] = planted_pairs(2000, {0.9, 0.5}, 6, 5, rng);
  const auto r = cca_corr(x, y, 2, 1e-6, false);
  EXPECT_NEAR(r.singular_values(0), 0.9, 0.05);
  EXPECT_NEAR(r.singular_values(1), 0.5, 0.05);
}

TEST(CcaCorr, GradientMatchesFiniteDifferences) {
  SeededRng rng(4);
  const auto [x, y] = planted_pairs(12, {0.8}, 4, 3, rng);
  const auto r = cca_corr(x, y, 2, 1e-3);
  auto f1 = [&](const Matrix& h) { return std::make_pair(cca_corr(h, y, 2, 1e-3, false).corr, r.d_h1); };
  auto f2 = [&](const Matrix& h) { return std::make_pair(cca_corr(x, h, 2, 1e-3, false).corr, r.d_h2); };
  EXPECT_LT(grad_check(f1, x), 1e-4);
  EXPECT_LT(grad_check(f2, y), 1e-4);
}

TEST(CcaCorr, SymmetricInTheViews) {
  SeededRng rng(5);
  const auto [x, y] = planted_pairs(40, {0.7}, 4, 4, rng);
  const auto a = cca_corr(x, y, 3, 1e-4), b = cca_corr(y, x, 3, 1e-4);
  EXPECT_NEAR(a.corr, b.corr, 1e-10);
  EXPECT_LT((a.d_h1 - b.d_h2).norm(), 1e-9);
  EXPECT_LT((a.d_h2 - b.d_h1).norm(), 1e-9);
}

TEST(CcaCorr, InvariantToOrthogonalTransforms) {
  SeededRng rng(6);
  const auto [x, y] = planted_pairs(300, {0.8, 0.3}, 5, 4, rng);
  const Matrix q = random_orthogonal(5, rng);
  EXPECT_NEAR(cca_corr(x, y, 3, 1e-8).corr, cca_corr(x * q, y, 3, 1e-8).corr, 1e-6);
}

TEST(CcaCorr, BoundedByL) {
  SeededRng rng(7);
  for (int t = 0; t < 20; ++t) {
    const auto [x, y] = planted_pairs(30, {0.95, 0.6}, 3, 4, rng);
    const std::size_t L = 1 + rng.below(3);
    const double c = cca_corr(x, y, L, 1e-4, false).corr;
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, static_cast<double>(L) + 1e-9);
  }
}

TEST(CcaCorr, Errors) {
  SeededRng rng(8);
  const Matrix a = noise(3, 4, rng);
  try {
    cca_corr(a, a, 3, 1e-4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BatchTooSmall);
  }
  const Matrix b = noise(20, 2, rng);
  EXPECT_THROW(cca_corr(b, b, 3, 1e-4), Error);
  try {
    const Matrix z = Matrix::Zero(20, 2);
    cca_corr(z, b, 1, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularCovariance);
  }
}

TEST(DccaeLoss, LambdaZeroIsNegativeCorrelation) {
  SeededRng rng(9);
  auto cfg = tiny_cfg();
  cfg.lambda = 0.0;
  const auto model = DccaeModel::init(6, 5, cfg, rng);
  const Matrix x = noise(12, 6, rng), y = noise(12, 5, rng);
  const auto r = dccae_loss(model, x, y, false);
  EXPECT_DOUBLE_EQ(r.loss, -r.corr);
}

TEST(DccaeLoss, IdentityAutoencodersReconstructExactly) {
  SeededRng rng(10);
  auto cfg = tiny_cfg();
  cfg.hidden = 4;
  cfg.linear_encoders = true;
  cfg.lambda = 1e6;
  auto model = DccaeModel::init(4, 4, cfg, rng);
  for (auto* net : {&model.enc_text, &model.dec_text, &model.enc_visual, &model.dec_visual})
    net->layers[0].weight = Matrix::Identity(4, 4);
  const Matrix x = noise(12, 4, rng), y = noise(12, 4, rng);
  const auto r = dccae_loss(model, x, y, false);
  EXPECT_NEAR(r.recon, 0.0, 1e-20);
  EXPECT_NEAR(r.loss, -r.corr, 1e-9);
}

TEST(DccaeLoss, GradientsMatchFiniteDifferencesAtThreeSeeds) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SeededRng rng(seed);
    const auto model = DccaeModel::init(6, 5, tiny_cfg(), rng);
    const Matrix x = noise(12, 6, rng), y = noise(12, 5, rng);
    EXPECT_LT(worst_param_grad_error(model, x, y), 1e-4) << "seed " << seed;
  }
}

TEST(DccaeLoss, AbsoluteReconstructionGradients) {
  SeededRng rng(14);
  auto cfg = tiny_cfg();
  cfg.abs_recon = true;
  const auto model = DccaeModel::init(6, 5, cfg, rng);
  const Matrix x = noise(12, 6, rng), y = noise(12, 5, rng);
  EXPECT_LT(worst_param_grad_error(model, x, y), 1e-4);
}

TEST(DccaeTrain, LossDropsAndIsDeterministic) {
  SeededRng data(15);
  const auto [x, y] = planted_pairs(400, {0.9, 0.6}, 10, 8, data);
  const PairPool pool{x, y, {}};
  DccaeConfig cfg;
  cfg.hidden = 8;
  cfg.L = 3;
  cfg.batch = 100;
  cfg.epochs = 20;
  SeededRng r1(16), r2(16);
  auto m1 = DccaeModel::init(10, 8, cfg, r1);
  auto m2 = DccaeModel::init(10, 8, cfg, r2);
  const auto a = train(m1, pool, r1);
  const auto b = train(m2, pool, r2);
  ASSERT_EQ(a.epoch_loss.size(), 20u);
  EXPECT_LE(a.epoch_loss.back(), 0.9 * a.epoch_loss.front());
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_EQ(m1.U, m2.U);
}

TEST(DccaeTrain, LinearEncodersMatchClosedFormCca) {
  SeededRng data(17);
  auto [x, y] = planted_pairs(1500, {0.9}, 6, 6, data);
  const Matrix xtr = x.topRows(1000), ytr = y.topRows(1000), xte = x.bottomRows(500), yte = y.bottomRows(500);
  DccaeConfig cfg;
  cfg.hidden = 6;
  cfg.L = 1;
  cfg.lambda = 0.0;
  cfg.linear_encoders = true;
  cfg.batch = 250;
  cfg.epochs = 30;
  SeededRng rng(18);
  auto model = DccaeModel::init(6, 6, cfg, rng);
  train(model, {xtr, ytr, {}}, rng);
  const auto [pt, pv] = project(model, xte, yte);
  const double learned = std::abs(column_corr(pt, pv, 0));

  // Closed-form linear CCA fitted on the training rows, scored on held-out rows.
  const Matrix a1 = sym_inv_sqrt(covariance(xtr), 1e-8), a2 = sym_inv_sqrt(covariance(ytr), 1e-8);
  const Svd dec = svd(a1 * cross_covariance(xtr, ytr) * a2);
  const Vector u = a1 * dec.U.col(0), v = a2 * dec.Vt.row(0).transpose();
  const double oracle = std::abs(column_corr(xte * u, yte * v, 0));
  EXPECT_GE(learned, 0.8);
  EXPECT_NEAR(learned, oracle, 0.1);
}

TEST(DccaeTrain, ZeroVarianceColumnStaysFinite) {
  SeededRng data(19);
  auto [x, y] = planted_pairs(120, {0.8}, 5, 5, data);
  x.col(2).setConstant(3.0);
  DccaeConfig cfg;
  cfg.hidden = 4;
  cfg.L = 2;
  cfg.batch = 60;
  cfg.epochs = 5;
  SeededRng rng(20);
  auto model = DccaeModel::init(5, 5, cfg, rng);
  const auto report = train(model, {x, y, {}}, rng);
  for (double l : report.epoch_loss) EXPECT_TRUE(std::isfinite(l));
  EXPECT_TRUE(model.U.allFinite());
}

TEST(DccaeTrain, BatchShrinksToPool) {
  SeededRng data(21);
  auto [x, y] = planted_pairs(50, {0.8}, 4, 4, data);
  DccaeConfig cfg;
  cfg.hidden = 4;
  cfg.L = 2;
  cfg.epochs = 2;
  SeededRng rng(22);
  auto model = DccaeModel::init(4, 4, cfg, rng);
  const auto report = train(model, {x, y, {}}, rng);
  EXPECT_TRUE(report.batch_shrunk);
  EXPECT_EQ(report.batch_used, 50u);
  cfg.L = 4;
  auto small = DccaeModel::init(4, 4, cfg, rng);
  EXPECT_THROW(train(small, {x.topRows(4), y.topRows(4), {}}, rng), Error);
}

TEST(FitProjections, WhiteningAndIdenticalViews) {
  SeededRng rng(23);
  const Matrix x = noise(300, 5, rng);
  DccaeConfig cfg;
  cfg.hidden = 5;
  cfg.L = 3;
  cfg.linear_encoders = true;
  auto model = DccaeModel::init(5, 5, cfg, rng);
  model.enc_visual = model.enc_text;
  model.std_text = Standardizer::fit(x);
  model.std_visual = model.std_text;
  fit_projections(model, x, x);
  const Matrix f = model.enc_text.forward(model.std_text.apply(x));
  EXPECT_LT((model.U.transpose() * covariance(f) * model.U - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((model.V.transpose() * covariance(f) * model.V - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
  const auto [pt, pv] = project(model, x, x);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_NEAR(std::abs(column_corr(pt, pv, c)), 1.0, 1e-6);
}

TEST(FitProjections, WhiteningHoldsWithLargeRidge) {
  SeededRng rng(24);
  const auto [x, y] = planted_pairs(400, {0.9, 0.4}, 6, 6, rng);
  DccaeConfig cfg;
  cfg.hidden = 6;
  cfg.L = 2;
  cfg.ridge = 1.0;
  auto model = DccaeModel::init(6, 6, cfg, rng);
  fit_projections(model, x, y);
  const Matrix f = model.enc_text.forward(model.std_text.apply(x));
  const Matrix g = model.enc_visual.forward(model.std_visual.apply(y));
  EXPECT_LT((model.U.transpose() * covariance(f) * model.U - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((model.V.transpose() * covariance(g) * model.V - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitProjections, SingleDirectionRecoversPlantedCorrelation) {
  SeededRng rng(25);
  const auto [x, y] = planted_pairs(2000, {0.7}, 4, 4, rng);
  DccaeConfig cfg;
  cfg.hidden = 4;
  cfg.L = 1;
  cfg.linear_encoders = true;
  auto model = DccaeModel::init(4, 4, cfg, rng);
  fit_projections(model, x, y);
  const auto [pt, pv] = project(model, x, y);
  EXPECT_NEAR(std::abs(column_corr(pt, pv, 0)), 0.7, 0.05);
}

TEST(Transform, ShapesRecomputationAndZeroRows) {
  SeededRng rng(26);
  const auto [x, y] = planted_pairs(60, {0.8}, 5, 7, rng);
  DccaeConfig cfg;
  cfg.hidden = 4;
  cfg.L = 2;
  auto model = DccaeModel::init(5, 7, cfg, rng);
  model.std_text = Standardizer::fit(x);
  model.std_visual = Standardizer::fit(y);
  fit_projections(model, x, y);

  visual::ViewSequence seq{"v", x.topRows(10), y.topRows(10), Emotion::love, std::vector<bool>(10, false),
                           std::vector<bool>(10, false)};
  seq.textual.row(3).setZero();
  const auto fused = transform(model, seq);
  EXPECT_EQ(fused.textual_out.rows(), 10);
  EXPECT_EQ(fused.visual_out.cols(), 2);
  EXPECT_EQ(fused.label, Emotion::love);

  Matrix f = model.enc_text.forward(model.std_text.apply(x.topRows(10)));
  f.rowwise() -= model.code_mean_text.row(0);
  EXPECT_LT((fused.textual_out.row(0) - f.row(0) * model.U).norm(), 1e-10);

  const Matrix zero_row = Matrix::Zero(1, 5);
  const auto again = project(model, zero_row, Matrix::Zero(1, 7)).first;
  EXPECT_EQ(again.row(0), fused.textual_out.row(3));
}

TEST(Transform, RequiresFittedProjections) {
  SeededRng rng(27);
  const auto model = DccaeModel::init(3, 3, tiny_cfg(), rng);
  EXPECT_THROW(project(model, Matrix::Zero(1, 3), Matrix::Zero(1, 3)), Error);
}

TEST(BuildPool, SkipsMissingAndZeroRows) {
  visual::ViewSequence s{"v", Matrix::Ones(4, 2), Matrix::Ones(4, 3), std::nullopt, {false, true, false, false},
                         {false, false, false, true}};
  s.textual.row(2).setZero();
  const auto pool = build_pool({s});
  ASSERT_EQ(pool.text.rows(), 1);
  EXPECT_EQ(pool.origin[0], (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(DccaeModel, SaveLoadRoundTrip) {
  SeededRng rng(28);
  const auto [x, y] = planted_pairs(40, {0.8}, 5, 4, rng);
  DccaeConfig cfg;
  cfg.hidden = 4;
  cfg.L = 2;
  auto model = DccaeModel::init(5, 4, cfg, rng);
  model.std_text = Standardizer::fit(x);
  model.std_visual = Standardizer::fit(y);
  fit_projections(model, x, y);
  const auto path = (std::filesystem::temp_directory_path() / "dcvdn_test_dccae.bin").string();
  save(model, path);
  const auto back = load(path);
  EXPECT_EQ(back.U, model.U);
  EXPECT_EQ(back.V, model.V);
  EXPECT_EQ(back.cfg.L, 2u);
  const auto a = project(model, x, y), b = project(back, x, y);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  std::filesystem::remove(path);
}

TEST(FusedFile, RoundTrip) {
  FusedRepresentation f{"v", (Matrix(2, 2) << 1, 2, 3, 4).finished(), (Matrix(2, 2) << 5, 6, 7, 8).finished(),
                        std::nullopt};
  std::ostringstream out;
  write_fused(out, {f});
  std::istringstream in(out.str());
  const auto back = parse_fused(in, {{"v", Emotion::sad}});
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].textual_out, f.textual_out);
  EXPECT_EQ(back[0].visual_out, f.visual_out);
  EXPECT_EQ(back[0].label, Emotion::sad);
}
