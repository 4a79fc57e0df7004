#pragma once

// Emotional word embeddings: Skip-Gram where every token's emotion label acts
// as a pseudo-word that also predicts the context. Trained with negative
// sampling; the exact-softmax objective is kept for small-vocabulary checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dcvdn/binio.hpp"
#include "dcvdn/burst.hpp"
#include "dcvdn/elda.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::ewe {

struct EweConfig {
  std::size_t dim = 128;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double lr = 0.025;
  double min_lr = 1e-4;
  std::size_t min_count = 2;
  bool emotion_term = true;  // false trains plain Skip-Gram
  bool shuffle_docs = true;

  void validate() const {
    if (dim == 0 || window == 0 || negatives == 0)
      throw Error(ErrorKind::InvalidInput, "ewe: dim, window and negatives must be >= 1");
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidInput, "ewe: lr must be > 0");
  }
};

/// A token sequence with an optional emotion label per token.
struct LabeledDoc {
  std::string video_id;
  std::size_t cluster_index = 0;
  std::vector<std::string> tokens;
  std::vector<std::optional<std::uint32_t>> labels;
};

struct EmbeddingTable {
  elda::Vocabulary vocab;
  std::vector<std::uint64_t> counts;
  std::vector<double> idf;  // smoothed idf over the training documents
  std::size_t num_docs = 0;
  Matrix word;     // |W| x m input vectors
  Matrix emotion;  // N_l x m
  Matrix output;   // |W| x m context vectors

  std::size_t dim() const noexcept { return static_cast<std::size_t>(word.cols()); }
  std::size_t num_labels() const noexcept { return static_cast<std::size_t>(emotion.rows()); }
};

/// Vocabulary-encoded sequence; tokens below min_count are dropped.
struct EncodedSeq {
  std::vector<std::uint32_t> words;
  std::vector<std::int64_t> labels;  // -1 = no label
};

struct TrainingPair {
  std::uint32_t target = 0;
  std::int64_t emotion = -1;
  std::uint32_t context = 0;

  bool operator==(const TrainingPair&) const = default;
};

/// One pair per in-window neighbour; windows are clipped at the sequence ends.
inline std::vector<TrainingPair> build_training_pairs(const std::vector<EncodedSeq>& seqs, std::size_t window) {
  std::vector<TrainingPair> out;
  for (const auto& s : seqs) {
    const std::size_t n = s.words.size();
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t >= window ? t - window : 0;
      const std::size_t hi = std::min(n - 1, t + window);
      for (std::size_t c = lo; c <= hi; ++c)
        if (c != t) out.push_back({s.words[t], s.labels[t], s.words[c]});
    }
  }
  return out;
}

inline std::vector<EncodedSeq> encode(const std::vector<LabeledDoc>& docs, const elda::Vocabulary& vocab) {
  std::vector<EncodedSeq> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    EncodedSeq s;
    for (std::size_t t = 0; t < d.tokens.size(); ++t) {
      auto w = vocab.find(d.tokens[t]);
      if (!w) continue;
      s.words.push_back(*w);
      const auto& l = t < d.labels.size() ? d.labels[t] : std::nullopt;
      s.labels.push_back(l ? static_cast<std::int64_t>(*l) : -1);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Average exact-softmax log-likelihood per pair. With the emotion term each
/// pair contributes log p(c|w) + log p(c|l); pairs without a label contribute
/// only the word term.
inline double sg_loss_exact(const EmbeddingTable& table, const std::vector<TrainingPair>& pairs,
                            bool emotion_term = true) {
  if (pairs.empty()) return 0.0;
  auto log_prob = [&](const Vector& h, std::uint32_t ctx) {
    const Vector scores = table.output * h;
    const double mx = scores.maxCoeff();
    const double lse = mx + std::log((scores.array() - mx).exp().sum());
    return scores(ctx) - lse;
  };
  double total = 0.0;
  for (const auto& p : pairs) {
    total += log_prob(table.word.row(p.target).transpose(), p.context);
    if (emotion_term && p.emotion >= 0) total += log_prob(table.emotion.row(p.emotion).transpose(), p.context);
  }
  return total / static_cast<double>(pairs.size());
}

/// Negative-sampling loss of one (input vector, positive context, negatives)
/// triple: -log s(u_c.h) - sum log s(-u_n.h), with gradients.
struct NsGradient {
  double loss = 0.0;
  Vector d_input;
  std::vector<std::pair<std::uint32_t, Vector>> d_output;  // per touched output row (may repeat)
};

inline NsGradient ns_gradient(const Vector& h, const Matrix& output, std::uint32_t context,
                              const std::vector<std::uint32_t>& negatives) {
  NsGradient g;
  g.d_input = Vector::Zero(h.size());
  auto term = [&](std::uint32_t row, double label) {
    const Vector u = output.row(row).transpose();
    const double s = sigmoid(u.dot(h));
    g.loss -= label > 0.5 ? std::log(std::max(s, 1e-300)) : std::log(std::max(1.0 - s, 1e-300));
    const double coef = s - label;  // d loss / d score
    g.d_input += coef * u;
    g.d_output.emplace_back(row, coef * h);
  };
  term(context, 1.0);
  for (auto n : negatives) term(n, 0.0);
  return g;
}

/// Unigram^0.75 noise distribution as a cumulative table.
class NoiseSampler {
 public:
  explicit NoiseSampler(const std::vector<std::uint64_t>& counts) {
    cumulative_.reserve(counts.size());
    double acc = 0.0;
    for (auto c : counts) {
      acc += std::pow(static_cast<double>(c), 0.75);
      cumulative_.push_back(acc);
    }
  }

  std::uint32_t draw(SeededRng& rng) const {
    const double u = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<std::uint32_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

/// Vocabulary of tokens occurring at least min_count times, sorted by token.
inline EmbeddingTable init_table(const std::vector<LabeledDoc>& docs, std::size_t num_labels, const EweConfig& cfg,
                                 SeededRng& rng) {
  std::map<std::string, std::uint64_t> freq;
  std::map<std::string, std::uint64_t> doc_freq;
  for (const auto& d : docs) {
    for (const auto& t : d.tokens) ++freq[t];
    std::vector<std::string> uniq(d.tokens);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& t : uniq) ++doc_freq[t];
  }
  EmbeddingTable table;
  std::vector<std::string> words;
  for (const auto& [w, c] : freq)
    if (c >= cfg.min_count) {
      words.push_back(w);
      table.counts.push_back(c);
    }
  if (words.empty()) throw Error(ErrorKind::EmptyInput, "ewe: empty vocabulary after min_count");
  table.num_docs = docs.size();
  for (const auto& w : words)
    table.idf.push_back(std::log((1.0 + static_cast<double>(table.num_docs)) / (1.0 + static_cast<double>(doc_freq[w]))) +
                        1.0);
  table.vocab = elda::Vocabulary::from_words(std::move(words));
  const auto m = static_cast<Eigen::Index>(cfg.dim);
  const double r = 0.5 / static_cast<double>(cfg.dim);
  table.word = random_uniform(static_cast<Eigen::Index>(table.vocab.size()), m, rng, -r, r);
  table.emotion = random_uniform(static_cast<Eigen::Index>(num_labels), m, rng, -r, r);
  table.output = Matrix::Zero(static_cast<Eigen::Index>(table.vocab.size()), m);
  return table;
}

struct TrainTrace {
  std::vector<double> epoch_ns_loss;  // mean negative-sampling loss per epoch
};

/// SGD over every (target, emotion, context) pair with linear learning-rate
/// decay. Both the word term and the emotion term draw their own negatives.
inline void train_table(EmbeddingTable& table, const std::vector<EncodedSeq>& seqs, const EweConfig& cfg,
                        SeededRng& rng, TrainTrace* trace = nullptr) {
  cfg.validate();
  const NoiseSampler noise(table.counts);
  std::size_t pairs_per_epoch = 0;
  for (const auto& s : seqs) {
    const std::size_t n = s.words.size();
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t lo = t >= cfg.window ? t - cfg.window : 0;
      const std::size_t hi = std::min(n - 1, t + cfg.window);
      pairs_per_epoch += hi - lo;
    }
  }
  const double total_steps = static_cast<double>(std::max<std::size_t>(1, pairs_per_epoch * cfg.epochs));
  std::size_t step = 0;
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::uint32_t> negs(cfg.negatives);

  auto apply = [&](Eigen::Ref<Eigen::RowVectorXd> in_row, const NsGradient& g, double lr) {
    for (const auto& [row, d] : g.d_output) table.output.row(row) -= lr * d.transpose();
    in_row -= lr * g.d_input.transpose();
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle_docs) rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_terms = 0;
    for (auto si : order) {
      const auto& s = seqs[si];
      const std::size_t n = s.words.size();
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= cfg.window ? t - cfg.window : 0;
        const std::size_t hi = std::min(n - 1, t + cfg.window);
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == t) continue;
          const double lr =
              std::max(cfg.min_lr, cfg.lr - (cfg.lr - cfg.min_lr) * static_cast<double>(step) / total_steps);
          ++step;
          const auto target = s.words[t];
          const auto ctx = s.words[c];
          for (auto& nw : negs) {
            do nw = noise.draw(rng);
            while (nw == ctx && table.vocab.size() > 1);
          }
          const auto gw = ns_gradient(table.word.row(target).transpose(), table.output, ctx, negs);
          epoch_loss += gw.loss;
          ++epoch_terms;
          if (cfg.emotion_term && s.labels[t] >= 0) {
            for (auto& nw : negs) {
              do nw = noise.draw(rng);
              while (nw == ctx && table.vocab.size() > 1);
            }
            const auto ge = ns_gradient(table.emotion.row(s.labels[t]).transpose(), table.output, ctx, negs);
            epoch_loss += ge.loss;
            ++epoch_terms;
            // Both terms see the same parameters, then step together.
            apply(table.word.row(target), gw, lr);
            apply(table.emotion.row(s.labels[t]), ge, lr);
          } else {
            apply(table.word.row(target), gw, lr);
          }
        }
      }
    }
    if (trace) trace->epoch_ns_loss.push_back(epoch_terms ? epoch_loss / static_cast<double>(epoch_terms) : 0.0);
  }
}

inline EmbeddingTable train(const std::vector<LabeledDoc>& docs, std::size_t num_labels, const EweConfig& cfg,
                            SeededRng& rng, TrainTrace* trace = nullptr) {
  cfg.validate();
  auto table = init_table(docs, num_labels, cfg, rng);
  // Canonical document order makes training independent of input order.
  std::vector<const LabeledDoc*> sorted;
  for (const auto& d : docs) sorted.push_back(&d);
  std::stable_sort(sorted.begin(), sorted.end(), [](const LabeledDoc* a, const LabeledDoc* b) {
    return std::tie(a->video_id, a->cluster_index, a->tokens) < std::tie(b->video_id, b->cluster_index, b->tokens);
  });
  std::vector<LabeledDoc> ordered;
  ordered.reserve(docs.size());
  for (const auto* d : sorted) ordered.push_back(*d);
  const auto seqs = encode(ordered, table.vocab);
  for (const auto& s : seqs)
    for (auto l : s.labels)
      if (l >= static_cast<std::int64_t>(num_labels))
        throw Error(ErrorKind::InvalidInput, "ewe: label " + std::to_string(l) + " >= num_labels");
  train_table(table, seqs, cfg, rng, trace);
  return table;
}

/// w ⊕ l for one token under one emotion label.
inline Vector emotional_word_embedding(const EmbeddingTable& table, const std::string& token, std::uint32_t label) {
  auto w = table.vocab.find(token);
  if (!w) throw Error(ErrorKind::OovError, "token '" + token + "' not in vocabulary");
  if (label >= table.num_labels())
    throw Error(ErrorKind::InvalidInput, "label " + std::to_string(label) + " >= " + std::to_string(table.num_labels()));
  const auto m = static_cast<Eigen::Index>(table.dim());
  Vector out(2 * m);
  out.head(m) = table.word.row(*w).transpose();
  out.tail(m) = table.emotion.row(label).transpose();
  return out;
}

/// tf-idf weighted sum of emotional word embeddings. Each occurrence weighs
/// idf(w) / sum of idf over known occurrences, so a word type's total weight is
/// its L1-normalized tf-idf. Unlabeled tokens and `include_emotion == false`
/// leave the emotion half at zero.
inline Vector document_embedding(const EmbeddingTable& table, const std::vector<std::string>& tokens,
                                 const std::vector<std::optional<std::uint32_t>>& labels,
                                 bool include_emotion = true) {
  const auto m = static_cast<Eigen::Index>(table.dim());
  Vector out = Vector::Zero(2 * m);
  double z = 0.0;
  for (const auto& t : tokens)
    if (auto w = table.vocab.find(t)) z += table.idf[*w];
  if (z == 0.0) return out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto w = table.vocab.find(tokens[i]);
    if (!w) continue;
    const double weight = table.idf[*w] / z;
    out.head(m) += weight * table.word.row(*w).transpose();
    const auto& l = i < labels.size() ? labels[i] : std::nullopt;
    if (include_emotion && l && *l < table.num_labels()) out.tail(m) += weight * table.emotion.row(*l).transpose();
  }
  return out;
}

/// Labels every document's tokens from the eLDA model (training labels when
/// the document was part of eLDA training).
inline std::vector<LabeledDoc> label_documents(const std::vector<DanmuDocument>& docs, const elda::EldaModel& model) {
  std::vector<LabeledDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back({d.video_id, d.cluster_index, d.tokens, model.label_tokens(d)});
  return out;
}

struct DocEmbedding {
  std::string video_id;
  std::size_t cluster_index = 0;
  Vector vector;
};

inline void write_doc_embeddings(std::ostream& out, const std::vector<DocEmbedding>& rows) {
  for (const auto& r : rows) {
    nlohmann::json j;
    j["video_id"] = r.video_id;
    j["cluster_index"] = r.cluster_index;
    j["vector"] = std::vector<double>(r.vector.data(), r.vector.data() + r.vector.size());
    out << j.dump() << '\n';
  }
}

inline std::vector<DocEmbedding> parse_doc_embeddings(std::istream& in) {
  std::vector<DocEmbedding> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto where = "doc_embeddings line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j["video_id"].is_string() || !j.contains("cluster_index") ||
        !j["cluster_index"].is_number_unsigned() || !j.contains("vector") || !j["vector"].is_array())
      throw Error(ErrorKind::SchemaError, where + ": expected {video_id, cluster_index, vector}");
    auto v = j["vector"].get<std::vector<double>>();
    if (dim == 0) dim = v.size();
    if (v.size() != dim || dim == 0) throw Error(ErrorKind::SchemaError, where + ": inconsistent vector dimension");
    out.push_back({j["video_id"].get<std::string>(), j["cluster_index"].get<std::size_t>(),
                   Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()))});
  }
  return out;
}

inline constexpr std::string_view kEweMagic = "DCVDN-EWE1";

inline void save(const EmbeddingTable& t, const std::string& path) {
  binio::Writer w;
  w.magic(kEweMagic);
  w.u64(t.vocab.size());
  w.u64(t.num_docs);
  for (std::size_t i = 0; i < t.vocab.size(); ++i) {
    w.str(t.vocab.words[i]);
    w.u64(t.counts[i]);
    w.f64(t.idf[i]);
  }
  w.u64(t.dim());
  w.u64(t.num_labels());
  w.matrix(t.word);
  w.matrix(t.emotion);
  w.matrix(t.output);
  w.save(path);
}

inline EmbeddingTable load(const std::string& path) {
  auto r = binio::Reader::from_file(path);
  r.expect_magic(kEweMagic);
  EmbeddingTable t;
  const auto W = r.u64();
  t.num_docs = r.u64();
  std::vector<std::string> words;
  for (std::uint64_t i = 0; i < W; ++i) {
    words.push_back(r.str());
    t.counts.push_back(r.u64());
    t.idf.push_back(r.f64());
  }
  t.vocab = elda::Vocabulary::from_words(std::move(words));
  const auto m = r.u64();
  const auto nl = r.u64();
  t.word = r.matrix();
  t.emotion = r.matrix();
  t.output = r.matrix();
  if (static_cast<std::uint64_t>(t.word.cols()) != m || static_cast<std::uint64_t>(t.emotion.rows()) != nl)
    throw Error(ErrorKind::FormatError, path + ": header does not match matrix shapes");
  return t;
}

}  // namespace dcvdn::ewe
