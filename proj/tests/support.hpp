#pragma once

// Oracles and data generators shared by the unit tests and the acceptance run.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dcvdn/burst.hpp"
#include "dcvdn/corpus.hpp"
#include "dcvdn/elda.hpp"
#include "dcvdn/numkit.hpp"

namespace testsupport {

using dcvdn::Matrix;
using dcvdn::SeededRng;
using dcvdn::Vector;

inline Matrix noise(Eigen::Index rows, Eigen::Index cols, SeededRng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Pairs whose population canonical correlations are exactly `rho` followed by zeros.
inline std::pair<Matrix, Matrix> planted_pairs(Eigen::Index M, const std::vector<double>& rho, Eigen::Index dx,
                                               Eigen::Index dy, SeededRng& rng) {
  Matrix x = noise(M, dx, rng), y = noise(M, dy, rng);
  for (std::size_t j = 0; j < rho.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    y.col(c) = rho[j] * x.col(c) + std::sqrt(1.0 - rho[j] * rho[j]) * y.col(c);
  }
  return {x, y};
}

inline Matrix covariance(const Matrix& a) { return dcvdn::cross_covariance(a, a); }

inline double column_corr(const Matrix& a, const Matrix& b, Eigen::Index c) {
  const Vector x = a.col(c).array() - a.col(c).mean();
  const Vector y = b.col(c).array() - b.col(c).mean();
  return x.dot(y) / (x.norm() * y.norm());
}

/// Symmetric Dirichlet draw through normalized Gamma variates (Marsaglia-Tsang).
inline Vector dirichlet(std::size_t n, double a, SeededRng& rng) {
  auto gamma = [&](double shape) {
    const double boost = shape < 1.0 ? std::pow(rng.uniform() + 1e-300, 1.0 / shape) : 1.0;
    const double k = shape < 1.0 ? shape + 1.0 : shape;
    const double d = k - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = rng.normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = rng.uniform();
      if (std::log(u + 1e-300) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v * boost;
    }
  };
  Vector out(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = gamma(a);
  return out / out.sum();
}

/// Corpus drawn from the LDA generative process with known emotion-word
/// distributions. Emotion e owns the word block [e*B, (e+1)*B) with mass
/// `own_mass`, the rest spread evenly; the first `lexicon_per_emotion`
/// words of each block form the lexicon.
struct LdaCorpus {
  std::vector<dcvdn::DanmuDocument> docs;
  dcvdn::EmotionLexicon lexicon;
  Matrix pi;  // E x W ground truth, columns in vocabulary (sorted word) order
  std::vector<std::string> words;
  double lexicon_fraction = 0.0;  // share of token occurrences that are clamped
};

inline std::string lda_word(std::size_t i) {
  std::string s = std::to_string(i);
  return "w" + std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

inline LdaCorpus make_lda_corpus(std::size_t E, std::size_t num_docs, std::size_t doc_len, std::size_t block,
                                 double own_mass, double doc_alpha, std::size_t lexicon_per_emotion,
                                 SeededRng& rng) {
  LdaCorpus c;
  const std::size_t W = E * block;
  for (std::size_t w = 0; w < W; ++w) c.words.push_back(lda_word(w));
  c.pi = Matrix::Constant(static_cast<Eigen::Index>(E), static_cast<Eigen::Index>(W),
                          (1.0 - own_mass) / static_cast<double>(W - block));
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t j = 0; j < block; ++j)
      c.pi(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(e * block + j)) = own_mass / static_cast<double>(block);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t j = 0; j < lexicon_per_emotion; ++j) c.lexicon.insert(lda_word(e * block + j), static_cast<dcvdn::Emotion>(e));

  std::size_t clamped = 0, total = 0;
  for (std::size_t d = 0; d < num_docs; ++d) {
    const Vector theta = dirichlet(E, doc_alpha, rng);
    dcvdn::DanmuDocument doc;
    doc.video_id = "d" + std::to_string(d);
    for (std::size_t t = 0; t < doc_len; ++t) {
      const auto e = rng.categorical(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
      const auto row = c.pi.row(static_cast<Eigen::Index>(e));
      const std::vector<double> probs(row.data(), row.data() + W);
      const auto w = rng.categorical(probs);
      doc.tokens.push_back(lda_word(w));
      clamped += c.lexicon.lookup(lda_word(w)).has_value();
      ++total;
    }
    c.docs.push_back(std::move(doc));
  }
  c.lexicon_fraction = static_cast<double>(clamped) / static_cast<double>(total);
  return c;
}

/// Per-row cosine of recovered vs true distributions under the best row
/// permutation; returns the minimum row cosine of that permutation.
inline double best_permutation_min_cosine(const Matrix& truth, const Matrix& est) {
  std::vector<std::size_t> perm(static_cast<std::size_t>(truth.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1.0;
  do {
    double worst = 1.0;
    for (std::size_t r = 0; r < perm.size(); ++r)
      worst = std::min(worst, dcvdn::cosine(truth.row(static_cast<Eigen::Index>(r)).transpose(),
                                            est.row(static_cast<Eigen::Index>(perm[r])).transpose()));
    best = std::max(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Exhaustive k-means optimum: every assignment of n points to k clusters
/// (k^n labelings cover all Stirling partitions), centroid = member mean.
inline double brute_force_kmeans(const Matrix& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::size_t> a(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<std::size_t> cnt(k, 0);
    for (auto c : a) ++cnt[c];
    if (std::all_of(cnt.begin(), cnt.end(), [](std::size_t x) { return x > 0; })) {
      Matrix mu = Matrix::Zero(static_cast<Eigen::Index>(k), points.cols());
      for (std::size_t i = 0; i < n; ++i) mu.row(static_cast<Eigen::Index>(a[i])) += points.row(static_cast<Eigen::Index>(i));
      for (std::size_t c = 0; c < k; ++c) mu.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(cnt[c]);
      double obj = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        obj += (points.row(static_cast<Eigen::Index>(i)) - mu.row(static_cast<Eigen::Index>(a[i]))).squaredNorm();
      best = std::min(best, obj);
    }
    std::size_t i = 0;
    while (i < n && ++a[i] == k) a[i++] = 0;
    if (i == n) break;
  }
  return best;
}

/// Exhaustive 1-D optimum over contiguous partitions of sorted offsets.
inline double brute_force_contiguous(const std::vector<double>& x, std::size_t k) {
  const std::size_t n = x.size();
  k = std::min(k, n);
  double best = std::numeric_limits<double>::infinity();
  // Enumerate cut masks over the n-1 gaps with exactly k-1 cuts.
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k - 1) continue;
    std::vector<std::size_t> a(n, 0);
    std::size_t c = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (mask & (1u << (i - 1))) ++c;
      a[i] = c;
    }
    best = std::min(best, dcvdn::partition_objective(x, a, k));
  }
  return best;
}

}  // namespace testsupport
