#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "dcvdn/elda.hpp"
#include "support.hpp"

using namespace dcvdn;
using namespace dcvdn::elda;

namespace {

DanmuDocument doc(const std::string& id, std::size_t ci, const std::string& text) {
  DanmuDocument d;
  d.video_id = id;
  d.cluster_index = ci;
  d.tokens = tokenize(text);
  return d;
}

EldaConfig quick(std::size_t E, std::size_t iters = 200) {
  EldaConfig c;
  c.num_emotions = E;
  c.gibbs_iters = iters;
  c.burn_in = iters / 2;
  c.sample_lag = 5;
  return c;
}

void expect_distribution_rows(const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    EXPECT_NEAR(m.row(r).sum(), 1.0, 1e-9);
    EXPECT_GE(m.row(r).minCoeff(), 0.0);
  }
}

EmotionPosterior posterior_from_rows(const Matrix& rows) {
  EmotionPosterior p;
  p.num_emotions = static_cast<std::size_t>(rows.cols());
  p.token_theta = rows;
  p.type_theta = rows;
  EncodedDoc d;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) d.words.push_back(static_cast<std::uint32_t>(i));
  p.docs.push_back(d);
  return p;
}

}  // namespace

TEST(Elda, ConfigDefaults) {
  EldaConfig c;
  EXPECT_EQ(c.num_emotions, 7u);
  EXPECT_DOUBLE_EQ(c.alpha_value(), 50.0 / 7.0);
  EXPECT_DOUBLE_EQ(c.beta, 0.01);
  EXPECT_EQ(c.gibbs_iters, 500u);
  EXPECT_EQ(c.burn_in, 300u);
  EXPECT_EQ(c.sample_lag, 10u);
  EXPECT_EQ(c.ke, 20u);
  c.burn_in = 500;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Elda, ClampedTokenIsOneHot) {
  EmotionLexicon lex;
  lex.insert("x", Emotion::anger);
  SeededRng rng(1);
  const auto post = gibbs_train({doc("v", 0, "x x x")}, lex, quick(7, 50), rng);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index e = 0; e < 7; ++e) EXPECT_EQ(post.token_theta(r, e), e == 2 ? 1.0 : 0.0);
  }
  const Vector inferred = infer_document_emotion({"x"}, post);
  EXPECT_DOUBLE_EQ(inferred(2), 1.0);
}

TEST(Elda, SymmetricCorpusNearUniform) {
  std::vector<DanmuDocument> docs;
  for (int d = 0; d < 6; ++d) docs.push_back(doc("v", static_cast<std::size_t>(d), "a b c d a b c d"));
  SeededRng rng(2);
  const auto post = gibbs_train(docs, {}, quick(2, 300), rng);
  for (Eigen::Index d = 0; d < post.doc_theta.rows(); ++d)
    for (Eigen::Index e = 0; e < 2; ++e) EXPECT_NEAR(post.doc_theta(d, e), 0.5, 0.1);
}

TEST(Elda, RecoversPlantedDistributions) {
  SeededRng gen(2024);
  const auto c = testsupport::make_lda_corpus(3, 30, 50, 10, 0.9, 0.2, 1, gen);
  EXPECT_GT(c.lexicon_fraction, 0.05);
  EXPECT_LT(c.lexicon_fraction, 0.15);
  EldaConfig cfg;
  cfg.num_emotions = 3;
  cfg.alpha = 0.2;
  SeededRng rng(7);
  const auto post = gibbs_train(c.docs, c.lexicon, cfg, rng);
  ASSERT_EQ(post.vocab.words, c.words);
  EXPECT_GE(testsupport::best_permutation_min_cosine(c.pi, post.pi), 0.9);
}

TEST(Elda, DistributionsAreValidAndClampsNeverMove) {
  SeededRng gen(5);
  const auto c = testsupport::make_lda_corpus(3, 12, 30, 6, 0.85, 0.3, 2, gen);
  SeededRng rng(3);
  std::vector<std::uint32_t> first;
  std::vector<bool> clamped_occ;
  for (const auto& d : c.docs)
    for (const auto& t : d.tokens) clamped_occ.push_back(c.lexicon.lookup(t).has_value());
  bool moved = false;
  GibbsObserver obs;
  obs.on_sweep = [&](std::size_t, const std::vector<std::uint32_t>& z) {
    if (first.empty()) first = z;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (clamped_occ[i] && z[i] != first[i]) moved = true;
  };
  const auto post = gibbs_train(c.docs, c.lexicon, quick(3, 100), rng, &obs);
  EXPECT_FALSE(moved);
  for (std::size_t i = 0; i < clamped_occ.size(); ++i) EXPECT_EQ(post.clamped[i], clamped_occ[i]);
  expect_distribution_rows(post.token_theta);
  expect_distribution_rows(post.doc_theta);
  expect_distribution_rows(post.pi);
  expect_distribution_rows(post.type_theta);
}

TEST(Elda, LogJointTrendsUpward) {
  // Large enough that the chain is still climbing after the first 50 sweeps;
  // a chain already at stationarity has symmetric successive differences.
  SeededRng gen(11);
  const auto c = testsupport::make_lda_corpus(7, 300, 50, 30, 0.6, 0.5, 1, gen);
  EldaConfig cfg;
  cfg.num_emotions = 7;
  cfg.alpha = 0.5;
  SeededRng rng(12);
  const auto post = gibbs_train(c.docs, c.lexicon, cfg, rng);
  const auto& tr = post.log_joint_trace;
  ASSERT_EQ(tr.size(), 11u);  // iterations 0, 50, ..., 500
  std::vector<double> diffs;
  for (std::size_t i = 1; i < tr.size(); ++i) diffs.push_back(tr[i] - tr[i - 1]);
  std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
  EXPECT_GE(diffs[diffs.size() / 2], 0.0);
  EXPECT_GT(tr.back(), tr[1]);
}

TEST(Elda, EmptyDocumentsGetUniformPosterior) {
  SeededRng rng(4);
  const auto post = gibbs_train({doc("v", 0, "a b"), doc("v", 1, "")}, {}, quick(4, 20), rng);
  for (Eigen::Index e = 0; e < 4; ++e) EXPECT_DOUBLE_EQ(post.doc_theta(1, e), 0.25);
}

TEST(Elda, EmptyVocabulary) {
  SeededRng rng(1);
  try {
    gibbs_train({doc("v", 0, "")}, {}, quick(2, 10), rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

TEST(Elda, DeterministicGivenSeed) {
  SeededRng gen(8);
  const auto c = testsupport::make_lda_corpus(3, 8, 20, 5, 0.8, 0.5, 1, gen);
  SeededRng r1(99), r2(99);
  const auto a = gibbs_train(c.docs, c.lexicon, quick(3, 60), r1);
  const auto b = gibbs_train(c.docs, c.lexicon, quick(3, 60), r2);
  EXPECT_EQ(a.token_theta, b.token_theta);
  EXPECT_EQ(a.pi, b.pi);
}

TEST(Recluster, IdenticalPosteriorsSingleCluster) {
  const Matrix rows = Matrix::Constant(5, 3, 1.0 / 3.0);
  SeededRng rng(1);
  const auto a = recluster_emotion_distributions(posterior_from_rows(rows), 1, rng);
  EXPECT_DOUBLE_EQ(a.objective, 0.0);
  for (auto l : a.labels) EXPECT_EQ(l, 0u);
}

TEST(Recluster, SimplexCornersSeparate) {
  Matrix rows = Matrix::Zero(6, 3);
  for (Eigen::Index i = 0; i < 6; ++i) rows(i, i % 2) = 1.0;
  SeededRng rng(2);
  const auto a = recluster_emotion_distributions(posterior_from_rows(rows), 2, rng);
  EXPECT_DOUBLE_EQ(a.objective, 0.0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a.labels[i] == a.labels[0], i % 2 == 0);
}

TEST(Recluster, BestOfRestartsMatchesExhaustiveOptimum) {
  SeededRng gen(42);
  for (int trial = 0; trial < 3; ++trial) {
    Matrix rows(12, 3);
    for (Eigen::Index i = 0; i < 12; ++i) rows.row(i) = testsupport::dirichlet(3, 1.0, gen).transpose();
    SeededRng rng(static_cast<std::uint64_t>(trial));
    const auto a = recluster_emotion_distributions(posterior_from_rows(rows), 3, rng);
    EXPECT_NEAR(a.objective, testsupport::brute_force_kmeans(rows, 3), 1e-9);
  }
}

TEST(Recluster, ObjectiveNonIncreasingAcrossLloydIterations) {
  SeededRng gen(3);
  Matrix rows(200, 4);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) = testsupport::dirichlet(4, 0.5, gen).transpose();
  SeededRng rng(4);
  const auto a = recluster_emotion_distributions(posterior_from_rows(rows), 6, rng);
  ASSERT_FALSE(a.objective_trace.empty());
  for (std::size_t i = 1; i < a.objective_trace.size(); ++i)
    EXPECT_LE(a.objective_trace[i], a.objective_trace[i - 1] + 1e-12);
}

TEST(Recluster, KeReducedToDistinctCount) {
  Matrix rows = Matrix::Zero(4, 2);
  rows(0, 0) = rows(1, 0) = 1.0;
  rows(2, 1) = rows(3, 1) = 1.0;
  SeededRng rng(5);
  const auto a = recluster_emotion_distributions(posterior_from_rows(rows), 5, rng);
  EXPECT_TRUE(a.ke_reduced);
  EXPECT_EQ(a.centroids.rows(), 2);
  EXPECT_EQ(a.requested_ke, 5u);
}

TEST(InferDocument, FallbackAndMean) {
  SeededRng gen(6);
  const auto c = testsupport::make_lda_corpus(3, 10, 20, 4, 0.8, 0.5, 1, gen);
  SeededRng rng(7);
  const auto post = gibbs_train(c.docs, c.lexicon, quick(3, 40), rng);
  const Vector unk = infer_document_emotion({"zzz", "yyy"}, post);
  for (Eigen::Index e = 0; e < 3; ++e) EXPECT_DOUBLE_EQ(unk(e), 1.0 / 3.0);
  const std::vector<std::string> mixed{"w000", "w005", "zzz", "w005"};
  Vector oracle = Vector::Zero(3);
  int n = 0;
  for (const auto& t : mixed)
    if (auto w = post.vocab.find(t)) oracle += post.type_theta.row(*w).transpose(), ++n;
  oracle /= n;
  EXPECT_LT((infer_document_emotion(mixed, post) - oracle).norm(), 1e-12);
}

TEST(EldaModel, SaveLoadRoundTrip) {
  SeededRng gen(9);
  const auto c = testsupport::make_lda_corpus(3, 6, 15, 4, 0.8, 0.5, 1, gen);
  SeededRng rng(10);
  const auto post = gibbs_train(c.docs, c.lexicon, quick(3, 30), rng);
  SeededRng krng(11);
  const auto model = make_model(post, recluster_emotion_distributions(post, 4, krng));
  const auto path = (std::filesystem::temp_directory_path() / "dcvdn_test_elda.bin").string();
  save(model, path);
  const auto back = load(path);
  EXPECT_EQ(back.vocab.words, model.vocab.words);
  EXPECT_EQ(back.pi, model.pi);
  EXPECT_EQ(back.centroids, model.centroids);
  EXPECT_EQ(back.type_labels, model.type_labels);
  EXPECT_EQ(back.doc_labels, model.doc_labels);
  for (const auto& d : c.docs) EXPECT_EQ(back.label_tokens(d), model.label_tokens(d));
  std::filesystem::remove(path);
}
