#pragma once

// Emotion-LDA: collapsed Gibbs sampling over danmu documents where tokens
// found in the emotion lexicon are clamped to their lexicon class, followed by
// k-means re-clustering of per-token emotion distributions into KE labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcvdn/binio.hpp"
#include "dcvdn/burst.hpp"
#include "dcvdn/corpus.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::elda {

struct EldaConfig {
  std::size_t num_emotions = kNumEmotions;
  std::optional<double> alpha;  // defaults to 50 / num_emotions
  double beta = 0.01;
  std::size_t gibbs_iters = 500;
  std::size_t burn_in = 300;
  std::size_t sample_lag = 10;
  std::size_t ke = 20;
  bool per_type = false;  // label word types instead of occurrences
  std::size_t log_joint_every = 50;

  double alpha_value() const { return alpha.value_or(50.0 / static_cast<double>(num_emotions)); }

  void validate() const {
    if (num_emotions == 0) throw Error(ErrorKind::InvalidInput, "elda: num_emotions must be >= 1");
    if (!(alpha_value() > 0.0) || !(beta > 0.0)) throw Error(ErrorKind::InvalidInput, "elda: alpha, beta must be > 0");
    if (burn_in >= gibbs_iters) throw Error(ErrorKind::InvalidInput, "elda: burn_in must be < gibbs_iters");
    if (sample_lag == 0) throw Error(ErrorKind::InvalidInput, "elda: sample_lag must be >= 1");
    if (ke == 0) throw Error(ErrorKind::InvalidInput, "elda: ke must be >= 1");
  }
};

struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, std::uint32_t> index;

  std::optional<std::uint32_t> find(const std::string& w) const {
    auto it = index.find(w);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return words.size(); }

  static Vocabulary from_words(std::vector<std::string> words) {
    Vocabulary v;
    v.words = std::move(words);
    for (std::uint32_t i = 0; i < v.words.size(); ++i) v.index.emplace(v.words[i], i);
    return v;
  }
};

/// One training document as vocabulary ids; empty for degenerate clusters.
struct EncodedDoc {
  std::string video_id;
  std::size_t cluster_index = 0;
  std::vector<std::uint32_t> words;
  std::size_t first_occurrence = 0;  // row of this doc's first token in token_theta
};

struct EmotionPosterior {
  std::size_t num_emotions = 0;
  double alpha = 0.0;
  double beta = 0.0;
  Vocabulary vocab;
  std::vector<EncodedDoc> docs;
  std::vector<bool> clamped;   // per occurrence
  Matrix token_theta;          // occurrences x E, averaged sample indicators
  Matrix doc_theta;            // docs x E
  Matrix pi;                   // E x W
  Matrix type_theta;           // W x E, mean of occurrence rows per word type
  std::vector<double> log_joint_trace;
  std::vector<std::int32_t> clamp_class;  // per word type, -1 when free

  std::size_t num_occurrences() const noexcept { return static_cast<std::size_t>(token_theta.rows()); }
};

struct GibbsObserver {
  /// Called after every sweep with the current per-occurrence assignments.
  std::function<void(std::size_t iter, const std::vector<std::uint32_t>& z)> on_sweep;
};

namespace detail {

inline double log_joint(const std::vector<std::vector<std::uint32_t>>& n_de, const std::vector<std::uint32_t>& n_d,
                        const std::vector<std::vector<std::uint32_t>>& n_ew, const std::vector<std::uint32_t>& n_e,
                        double alpha, double beta, std::size_t num_words) {
  const auto E = static_cast<double>(n_e.size());
  const auto W = static_cast<double>(num_words);
  double lp = 0.0;
  for (std::size_t d = 0; d < n_de.size(); ++d) {
    if (n_d[d] == 0) continue;
    lp += std::lgamma(E * alpha) - E * std::lgamma(alpha) - std::lgamma(n_d[d] + E * alpha);
    for (auto c : n_de[d]) lp += std::lgamma(c + alpha);
  }
  for (std::size_t e = 0; e < n_e.size(); ++e) {
    lp += std::lgamma(W * beta) - W * std::lgamma(beta) - std::lgamma(n_e[e] + W * beta);
    for (auto c : n_ew[e]) lp += std::lgamma(c + beta);
  }
  return lp;
}

}  // namespace detail

inline Vocabulary build_vocabulary(const std::vector<DanmuDocument>& docs) {
  std::vector<std::string> words;
  for (const auto& d : docs) words.insert(words.end(), d.tokens.begin(), d.tokens.end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return Vocabulary::from_words(std::move(words));
}

/// Collapsed Gibbs sampler. Lexicon tokens keep their lexicon class for the
/// whole run; the remaining tokens are resampled every sweep.
inline EmotionPosterior gibbs_train(const std::vector<DanmuDocument>& docs, const EmotionLexicon& lexicon,
                                    const EldaConfig& cfg, SeededRng& rng, const GibbsObserver* observer = nullptr) {
  cfg.validate();
  EmotionPosterior post;
  post.num_emotions = cfg.num_emotions;
  post.alpha = cfg.alpha_value();
  post.beta = cfg.beta;
  post.vocab = build_vocabulary(docs);
  if (post.vocab.size() == 0) throw Error(ErrorKind::EmptyInput, "elda: empty vocabulary");

  const std::size_t E = cfg.num_emotions;
  const std::size_t W = post.vocab.size();
  const double alpha = post.alpha, beta = post.beta;

  post.clamp_class.assign(W, -1);
  for (std::size_t w = 0; w < W; ++w) {
    if (auto emo = lexicon.lookup(post.vocab.words[w])) {
      const auto cls = static_cast<std::size_t>(*emo);
      if (cls >= E)
        throw Error(ErrorKind::InvalidInput, "elda: lexicon class " + std::to_string(cls) + " exceeds num_emotions");
      post.clamp_class[w] = static_cast<std::int32_t>(cls);
    }
  }

  std::size_t total = 0;
  post.docs.reserve(docs.size());
  for (const auto& d : docs) {
    EncodedDoc enc{d.video_id, d.cluster_index, {}, total};
    enc.words.reserve(d.tokens.size());
    for (const auto& t : d.tokens) enc.words.push_back(*post.vocab.find(t));
    total += enc.words.size();
    post.docs.push_back(std::move(enc));
  }

  std::vector<std::uint32_t> z(total);
  post.clamped.assign(total, false);
  std::vector<std::vector<std::uint32_t>> n_de(docs.size(), std::vector<std::uint32_t>(E, 0));
  std::vector<std::uint32_t> n_d(docs.size(), 0);
  std::vector<std::vector<std::uint32_t>> n_ew(E, std::vector<std::uint32_t>(W, 0));
  std::vector<std::uint32_t> n_e(E, 0);

  // Free tokens start at an emotion drawn from their document's lexicon hits
  // (uniform when there are none). A uniform start can settle in a mode where
  // whole word blocks sit under the wrong anchor.
  std::vector<std::uint32_t> anchors;
  for (std::size_t d = 0; d < post.docs.size(); ++d) {
    const auto& doc = post.docs[d];
    anchors.clear();
    for (const auto w : doc.words)
      if (post.clamp_class[w] >= 0) anchors.push_back(static_cast<std::uint32_t>(post.clamp_class[w]));
    for (std::size_t t = 0; t < doc.words.size(); ++t) {
      const std::size_t occ = doc.first_occurrence + t;
      const auto w = doc.words[t];
      std::uint32_t e;
      if (post.clamp_class[w] >= 0) {
        e = static_cast<std::uint32_t>(post.clamp_class[w]);
        post.clamped[occ] = true;
      } else if (!anchors.empty()) {
        e = anchors[rng.below(anchors.size())];
      } else {
        e = static_cast<std::uint32_t>(rng.below(E));
      }
      z[occ] = e;
      ++n_de[d][e];
      ++n_d[d];
      ++n_ew[e][w];
      ++n_e[e];
    }
  }

  Matrix acc_token = Matrix::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(E));
  Matrix acc_doc = Matrix::Zero(static_cast<Eigen::Index>(docs.size()), static_cast<Eigen::Index>(E));
  Matrix acc_pi = Matrix::Zero(static_cast<Eigen::Index>(E), static_cast<Eigen::Index>(W));
  std::size_t samples = 0;
  std::vector<double> weights(E);

  auto accumulate_sample = [&] {
    ++samples;
    for (std::size_t occ = 0; occ < total; ++occ) acc_token(static_cast<Eigen::Index>(occ), z[occ]) += 1.0;
    for (std::size_t d = 0; d < docs.size(); ++d)
      for (std::size_t e = 0; e < E; ++e)
        acc_doc(d, e) += (n_de[d][e] + alpha) / (n_d[d] + static_cast<double>(E) * alpha);
    for (std::size_t e = 0; e < E; ++e)
      for (std::size_t w = 0; w < W; ++w)
        acc_pi(e, w) += (n_ew[e][w] + beta) / (n_e[e] + static_cast<double>(W) * beta);
  };

  auto record_log_joint = [&] {
    post.log_joint_trace.push_back(detail::log_joint(n_de, n_d, n_ew, n_e, alpha, beta, W));
  };
  record_log_joint();

  for (std::size_t iter = 1; iter <= cfg.gibbs_iters; ++iter) {
    for (std::size_t d = 0; d < post.docs.size(); ++d) {
      const auto& doc = post.docs[d];
      for (std::size_t t = 0; t < doc.words.size(); ++t) {
        const std::size_t occ = doc.first_occurrence + t;
        if (post.clamped[occ]) continue;
        const auto w = doc.words[t];
        const auto old = z[occ];
        --n_de[d][old];
        --n_ew[old][w];
        --n_e[old];
        for (std::size_t e = 0; e < E; ++e)
          weights[e] = (n_de[d][e] + alpha) * (n_ew[e][w] + beta) / (n_e[e] + static_cast<double>(W) * beta);
        const auto e_new = static_cast<std::uint32_t>(rng.categorical(weights));
        z[occ] = e_new;
        ++n_de[d][e_new];
        ++n_ew[e_new][w];
        ++n_e[e_new];
      }
    }
    if (observer && observer->on_sweep) observer->on_sweep(iter, z);
    if (cfg.log_joint_every && iter % cfg.log_joint_every == 0) record_log_joint();

    if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.sample_lag == 0) accumulate_sample();
  }
  // burn_in + lag can overshoot gibbs_iters; fall back to the final state.
  if (samples == 0) accumulate_sample();

  post.token_theta = acc_token / static_cast<double>(samples);
  post.doc_theta = acc_doc / static_cast<double>(samples);
  for (std::size_t d = 0; d < docs.size(); ++d)
    if (n_d[d] == 0) post.doc_theta.row(d).setConstant(1.0 / static_cast<double>(E));
  post.pi = acc_pi / static_cast<double>(samples);
  // Renormalize against rounding drift from averaging.
  for (Eigen::Index r = 0; r < post.doc_theta.rows(); ++r) post.doc_theta.row(r) /= post.doc_theta.row(r).sum();
  for (Eigen::Index r = 0; r < post.pi.rows(); ++r) post.pi.row(r) /= post.pi.row(r).sum();

  post.type_theta = Matrix::Zero(static_cast<Eigen::Index>(W), static_cast<Eigen::Index>(E));
  std::vector<double> type_count(W, 0.0);
  for (const auto& doc : post.docs)
    for (std::size_t t = 0; t < doc.words.size(); ++t) {
      post.type_theta.row(doc.words[t]) += post.token_theta.row(static_cast<Eigen::Index>(doc.first_occurrence + t));
      type_count[doc.words[t]] += 1.0;
    }
  for (std::size_t w = 0; w < W; ++w) post.type_theta.row(static_cast<Eigen::Index>(w)) /= type_count[w];
  return post;
}

// ---------------------------------------------------------------------------
// KE re-clustering

struct EmotionAssignment {
  std::vector<std::uint32_t> labels;  // per occurrence (or per type in per-type mode)
  Matrix centroids;                   // ke x E
  double objective = 0.0;
  std::size_t requested_ke = 0;
  bool ke_reduced = false;
  std::vector<double> objective_trace;  // Lloyd trace of the winning restart
};

struct KMeansResult {
  std::vector<std::uint32_t> labels;
  Matrix centroids;
  double objective = 0.0;
  bool reduced = false;
  std::vector<double> trace;
};

/// Weighted Lloyd's k-means with k-means++ seeding and restarts. Points that
/// are exact duplicates are merged first; k is capped at the distinct count.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, SeededRng& rng, std::size_t restarts = 50,
                           std::size_t max_iters = 100) {
  if (k == 0) throw Error(ErrorKind::InvalidInput, "kmeans: k must be >= 1");
  if (points.rows() == 0) throw Error(ErrorKind::EmptyInput, "kmeans: no points");
  const Eigen::Index dim = points.cols();

  std::map<std::vector<double>, std::size_t> uniq_index;
  std::vector<std::size_t> point_to_uniq(static_cast<std::size_t>(points.rows()));
  std::vector<std::vector<double>> uniq;
  std::vector<double> weight;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    std::vector<double> row(points.row(i).data(), points.row(i).data() + dim);
    auto [it, inserted] = uniq_index.emplace(row, uniq.size());
    if (inserted) {
      uniq.push_back(row);
      weight.push_back(0.0);
    }
    weight[it->second] += 1.0;
    point_to_uniq[static_cast<std::size_t>(i)] = it->second;
  }
  const std::size_t n = uniq.size();
  Matrix X(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) X(static_cast<Eigen::Index>(i), j) = uniq[i][static_cast<std::size_t>(j)];

  KMeansResult best;
  best.reduced = k > n;
  const std::size_t kk = std::min(k, n);
  best.objective = std::numeric_limits<double>::infinity();

  auto sqdist = [&](Eigen::Index i, const Matrix& c, Eigen::Index j) { return (X.row(i) - c.row(j)).squaredNorm(); };

  for (std::size_t r = 0; r < restarts; ++r) {
    Matrix C(static_cast<Eigen::Index>(kk), dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = rng.categorical(weight);
    C.row(0) = X.row(static_cast<Eigen::Index>(first));
    for (std::size_t c = 1; c < kk; ++c) {
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], sqdist(static_cast<Eigen::Index>(i), C, static_cast<Eigen::Index>(c - 1)));
        w[i] = weight[i] * d2[i];
      }
      C.row(static_cast<Eigen::Index>(c)) = X.row(static_cast<Eigen::Index>(rng.categorical(w)));
    }

    std::vector<std::uint32_t> assign(n, 0);
    std::vector<double> trace;
    double obj = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
      bool changed = it == 0;
      obj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t arg = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < kk; ++c) {
          const double dd = sqdist(static_cast<Eigen::Index>(i), C, static_cast<Eigen::Index>(c));
          if (dd < bd) {
            bd = dd;
            arg = static_cast<std::uint32_t>(c);
          }
        }
        if (arg != assign[i]) changed = true;
        assign[i] = arg;
        obj += weight[i] * bd;
      }
      trace.push_back(obj);
      if (!changed) break;
      Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(kk), dim);
      std::vector<double> cnt(kk, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        sum.row(assign[i]) += weight[i] * X.row(static_cast<Eigen::Index>(i));
        cnt[assign[i]] += weight[i];
      }
      for (std::size_t c = 0; c < kk; ++c)
        if (cnt[c] > 0) C.row(static_cast<Eigen::Index>(c)) = sum.row(static_cast<Eigen::Index>(c)) / cnt[c];
      // Objective after the centroid update, before reassignment.
      double upd = 0.0;
      for (std::size_t i = 0; i < n; ++i) upd += weight[i] * sqdist(static_cast<Eigen::Index>(i), C, assign[i]);
      trace.push_back(upd);
    }
    if (obj < best.objective) {
      best.objective = obj;
      best.centroids = C;
      best.labels.assign(static_cast<std::size_t>(points.rows()), 0);
      for (std::size_t p = 0; p < point_to_uniq.size(); ++p) best.labels[p] = assign[point_to_uniq[p]];
      best.trace = std::move(trace);
    }
  }
  return best;
}

inline EmotionAssignment recluster_emotion_distributions(const EmotionPosterior& post, std::size_t ke, SeededRng& rng,
                                                         bool per_type = false, std::size_t restarts = 50) {
  if (ke == 0) throw Error(ErrorKind::InvalidInput, "recluster: ke must be >= 1");
  if (post.num_occurrences() == 0) throw Error(ErrorKind::EmptyInput, "recluster: no token occurrences");
  const Matrix& points = per_type ? post.type_theta : post.token_theta;
  auto km = kmeans(points, ke, rng, restarts);
  EmotionAssignment out;
  out.centroids = std::move(km.centroids);
  out.objective = km.objective;
  out.requested_ke = ke;
  out.ke_reduced = km.reduced;
  out.objective_trace = std::move(km.trace);
  if (per_type) {
    out.labels.resize(post.num_occurrences());
    for (const auto& doc : post.docs)
      for (std::size_t t = 0; t < doc.words.size(); ++t) out.labels[doc.first_occurrence + t] = km.labels[doc.words[t]];
  } else {
    out.labels = std::move(km.labels);
  }
  return out;
}

/// Nearest centroid (ties to the lowest index).
inline std::uint32_t nearest_centroid(const Matrix& centroids, const Vector& dist) {
  std::uint32_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c).transpose() - dist).squaredNorm();
    if (d < best) {
      best = d;
      arg = static_cast<std::uint32_t>(c);
    }
  }
  return arg;
}

/// Fold-in estimate: mean of the per-type posteriors of known tokens, uniform otherwise.
inline Vector infer_document_emotion(const std::vector<std::string>& tokens, const EmotionPosterior& post) {
  const auto E = static_cast<Eigen::Index>(post.num_emotions);
  Vector acc = Vector::Zero(E);
  std::size_t known = 0;
  for (const auto& t : tokens) {
    if (auto w = post.vocab.find(t)) {
      acc += post.type_theta.row(*w).transpose();
      ++known;
    }
  }
  if (known == 0) return Vector::Constant(E, 1.0 / static_cast<double>(E));
  return acc / static_cast<double>(known);
}

// ---------------------------------------------------------------------------
// model bundle used by downstream stages

/// Trained eLDA state needed downstream: vocabulary, per-type posteriors,
/// emotion-word distributions, KE centroids and per-occurrence labels of
/// the training documents.
struct EldaModel {
  std::size_t num_emotions = 0;
  double alpha = 0.0;
  double beta = 0.0;
  Vocabulary vocab;
  Matrix pi;          // E x W
  Matrix type_theta;  // W x E
  Matrix centroids;   // KE x E
  std::vector<std::int32_t> clamp_class;
  std::vector<std::uint32_t> type_labels;  // nearest centroid per word type
  std::map<std::pair<std::string, std::size_t>, std::vector<std::uint32_t>> doc_labels;

  std::size_t ke() const noexcept { return static_cast<std::size_t>(centroids.rows()); }

  /// Labels for a document: training labels when the key is known, otherwise
  /// per-type labels. Unknown tokens get no label (nullopt).
  std::vector<std::optional<std::uint32_t>> label_tokens(const DanmuDocument& doc) const {
    std::vector<std::optional<std::uint32_t>> out(doc.tokens.size());
    auto it = doc_labels.find({doc.video_id, doc.cluster_index});
    if (it != doc_labels.end() && it->second.size() == doc.tokens.size()) {
      for (std::size_t t = 0; t < out.size(); ++t) out[t] = it->second[t];
      return out;
    }
    for (std::size_t t = 0; t < out.size(); ++t)
      if (auto w = vocab.find(doc.tokens[t])) out[t] = type_labels[*w];
    return out;
  }
};

inline EldaModel make_model(const EmotionPosterior& post, const EmotionAssignment& assign) {
  EldaModel m;
  m.num_emotions = post.num_emotions;
  m.alpha = post.alpha;
  m.beta = post.beta;
  m.vocab = post.vocab;
  m.pi = post.pi;
  m.type_theta = post.type_theta;
  m.centroids = assign.centroids;
  m.clamp_class = post.clamp_class;
  m.type_labels.resize(post.vocab.size());
  for (std::size_t w = 0; w < post.vocab.size(); ++w)
    m.type_labels[w] = nearest_centroid(assign.centroids, post.type_theta.row(static_cast<Eigen::Index>(w)).transpose());
  for (const auto& doc : post.docs) {
    std::vector<std::uint32_t> labels(doc.words.size());
    for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = assign.labels[doc.first_occurrence + t];
    m.doc_labels[{doc.video_id, doc.cluster_index}] = std::move(labels);
  }
  return m;
}

inline constexpr std::string_view kEldaMagic = "DCVDN-ELDA1";

inline void save(const EldaModel& m, const std::string& path) {
  binio::Writer w;
  w.magic(kEldaMagic);
  w.u64(m.num_emotions);
  w.f64(m.alpha);
  w.f64(m.beta);
  w.u64(m.vocab.size());
  for (std::size_t i = 0; i < m.vocab.size(); ++i) {
    w.str(m.vocab.words[i]);
    w.u32(static_cast<std::uint32_t>(m.clamp_class[i]));
    w.u32(m.type_labels[i]);
  }
  w.matrix(m.pi);
  w.matrix(m.type_theta);
  w.matrix(m.centroids);
  w.u64(m.doc_labels.size());
  for (const auto& [key, labels] : m.doc_labels) {
    w.str(key.first);
    w.u64(key.second);
    w.u64(labels.size());
    for (auto l : labels) w.u32(l);
  }
  w.save(path);
}

inline EldaModel load(const std::string& path) {
  auto r = binio::Reader::from_file(path);
  r.expect_magic(kEldaMagic);
  EldaModel m;
  m.num_emotions = r.u64();
  m.alpha = r.f64();
  m.beta = r.f64();
  const auto W = r.u64();
  std::vector<std::string> words;
  words.reserve(W);
  for (std::uint64_t i = 0; i < W; ++i) {
    words.push_back(r.str());
    m.clamp_class.push_back(static_cast<std::int32_t>(r.u32()));
    m.type_labels.push_back(r.u32());
  }
  m.vocab = Vocabulary::from_words(std::move(words));
  m.pi = r.matrix();
  m.type_theta = r.matrix();
  m.centroids = r.matrix();
  const auto D = r.u64();
  for (std::uint64_t d = 0; d < D; ++d) {
    std::string vid = r.str();
    const auto ci = r.u64();
    const auto n = r.u64();
    std::vector<std::uint32_t> labels(n);
    for (auto& l : labels) l = r.u32();
    m.doc_labels[{vid, ci}] = std::move(labels);
  }
  return m;
}

}  // namespace dcvdn::elda
