#pragma once

// Dual-stream emotion classifier: one LSTM per view over the K burst-ordered
// rows, final hidden states concatenated, two fully connected layers and a
// softmax over the seven emotion classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcvdn/binio.hpp"
#include "dcvdn/corpus.hpp"
#include "dcvdn/dccae.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/nn.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::classifier {

// ---------------------------------------------------------------------------
// LSTM

/// Gate blocks are laid out [input, forget, output, candidate] along the 4h axis.
struct LstmParams {
  Matrix W;  // d x 4h
  Matrix R;  // h x 4h
  Matrix b;  // 1 x 4h
  double forget_bias = 0.1;

  Eigen::Index input_dim() const noexcept { return W.rows(); }
  Eigen::Index hidden() const noexcept { return R.rows(); }

  static LstmParams init(Eigen::Index d, Eigen::Index h, double forget_bias, SeededRng& rng) {
    const double rw = std::sqrt(6.0 / static_cast<double>(d + h));
    const double rr = std::sqrt(6.0 / static_cast<double>(2 * h));
    return {random_uniform(d, 4 * h, rng, -rw, rw), random_uniform(h, 4 * h, rng, -rr, rr), Matrix::Zero(1, 4 * h),
            forget_bias};
  }

  static LstmParams zeros(Eigen::Index d, Eigen::Index h, double forget_bias) {
    return {Matrix::Zero(d, 4 * h), Matrix::Zero(h, 4 * h), Matrix::Zero(1, 4 * h), forget_bias};
  }
};

struct LstmCache {
  std::vector<Matrix> x, h, c, i, f, o, g;  // h[0], c[0] are the zero initial state
};

/// Runs a batch of sequences; `steps[t]` is the N x d input at time t.
/// Returns the final hidden state (N x h).
inline Matrix lstm_forward(const LstmParams& p, const std::vector<Matrix>& steps, LstmCache* cache = nullptr) {
  if (steps.empty()) throw Error(ErrorKind::InvalidInput, "lstm_forward: empty sequence");
  const Eigen::Index N = steps.front().rows();
  const Eigen::Index H = p.hidden();
  Matrix h = Matrix::Zero(N, H);
  Matrix c = Matrix::Zero(N, H);
  if (cache) {
    *cache = LstmCache{};
    cache->h.push_back(h);
    cache->c.push_back(c);
  }
  for (const auto& x : steps) {
    Matrix z = x * p.W + h * p.R;
    z.rowwise() += p.b.row(0);
    Matrix ig = z.leftCols(H).unaryExpr([](double v) { return sigmoid(v); });
    Matrix fg = z.middleCols(H, H).unaryExpr([&](double v) { return sigmoid(v + p.forget_bias); });
    Matrix og = z.middleCols(2 * H, H).unaryExpr([](double v) { return sigmoid(v); });
    Matrix gg = z.rightCols(H).array().tanh().matrix();
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    h = og.cwiseProduct(c.array().tanh().matrix());
    if (cache) {
      cache->x.push_back(x);
      cache->i.push_back(std::move(ig));
      cache->f.push_back(std::move(fg));
      cache->o.push_back(std::move(og));
      cache->g.push_back(std::move(gg));
      cache->h.push_back(h);
      cache->c.push_back(c);
    }
  }
  return h;
}

/// Single-sequence convenience: K x d rows in, h_K out.
inline Vector lstm_forward(const LstmParams& p, const Matrix& sequence) {
  std::vector<Matrix> steps;
  for (Eigen::Index t = 0; t < sequence.rows(); ++t) steps.push_back(sequence.row(t));
  return lstm_forward(p, steps).row(0).transpose();
}

struct LstmGrads {
  Matrix W, R, b;
};

/// Backpropagation through time from the gradient of the final hidden state.
inline LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache, const Matrix& d_h_final) {
  const Eigen::Index H = p.hidden();
  LstmGrads g{Matrix::Zero(p.W.rows(), p.W.cols()), Matrix::Zero(p.R.rows(), p.R.cols()),
              Matrix::Zero(1, p.b.cols())};
  Matrix dh = d_h_final;
  Matrix dc = Matrix::Zero(dh.rows(), H);
  const std::size_t K = cache.x.size();
  Matrix dz(dh.rows(), 4 * H);
  for (std::size_t t = K; t-- > 0;) {
    const Matrix& ig = cache.i[t];
    const Matrix& fg = cache.f[t];
    const Matrix& og = cache.o[t];
    const Matrix& gg = cache.g[t];
    const Matrix tc = cache.c[t + 1].array().tanh().matrix();
    const Matrix d_o = dh.cwiseProduct(tc);
    dc += dh.cwiseProduct(og).cwiseProduct((1.0 - tc.array().square()).matrix());
    dz.leftCols(H) = dc.cwiseProduct(gg).cwiseProduct(ig.cwiseProduct((1.0 - ig.array()).matrix()));
    dz.middleCols(H, H) = dc.cwiseProduct(cache.c[t]).cwiseProduct(fg.cwiseProduct((1.0 - fg.array()).matrix()));
    dz.middleCols(2 * H, H) = d_o.cwiseProduct(og.cwiseProduct((1.0 - og.array()).matrix()));
    dz.rightCols(H) = dc.cwiseProduct(ig).cwiseProduct((1.0 - gg.array().square()).matrix());
    g.W += cache.x[t].transpose() * dz;
    g.R += cache.h[t].transpose() * dz;
    g.b += dz.colwise().sum();
    dh = dz * p.R.transpose();
    dc = dc.cwiseProduct(fg);
  }
  return g;
}

// ---------------------------------------------------------------------------
// model

enum class ViewMode : std::uint32_t { both = 0, textual = 1, visual = 2 };

struct ClassifierConfig {
  std::size_t hidden = 64;
  std::optional<std::size_t> fc_hidden;  // default: 4096 at hidden 2048, else 4 * hidden
  double forget_bias = 0.1;
  ViewMode mode = ViewMode::both;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  std::size_t batch = 16;
  nn::AdamConfig adam{};

  std::size_t fc_hidden_value() const { return fc_hidden.value_or(hidden == 2048 ? 4096 : 4 * hidden); }
};

/// One labelled or unlabelled example: two K-row views.
using Example = dccae::FusedRepresentation;

struct ClassifierModel {
  ClassifierConfig cfg;
  nn::Standardizer norm_visual, norm_textual;
  LstmParams lstm_v, lstm_t;
  nn::Dense fc1, fc2;

  static ClassifierModel init(Eigen::Index textual_dim, Eigen::Index visual_dim, const ClassifierConfig& cfg,
                              SeededRng& rng) {
    ClassifierModel m;
    m.cfg = cfg;
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    m.lstm_v = LstmParams::init(visual_dim, h, cfg.forget_bias, rng);
    m.lstm_t = LstmParams::init(textual_dim, h, cfg.forget_bias, rng);
    m.fc1 = nn::Dense::init(2 * h, static_cast<Eigen::Index>(cfg.fc_hidden_value()), nn::Activation::tanh, rng);
    m.fc2 = nn::Dense::init(static_cast<Eigen::Index>(cfg.fc_hidden_value()), kNumEmotions, nn::Activation::identity,
                            rng);
    m.norm_visual = nn::Standardizer::identity(visual_dim);
    m.norm_textual = nn::Standardizer::identity(textual_dim);
    return m;
  }

  /// Parameter blocks: lstm_v (W, R, b), lstm_t (W, R, b), fc1 (W, b), fc2 (W, b).
  std::vector<Matrix*> params() {
    return {&lstm_v.W, &lstm_v.R, &lstm_v.b, &lstm_t.W, &lstm_t.R, &lstm_t.b,
            &fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias};
  }
};

struct Batch {
  std::vector<Matrix> visual;   // K entries of N x dv (normalized)
  std::vector<Matrix> textual;  // K entries of N x dt
  std::vector<std::size_t> labels;
};

inline Batch make_batch(const ClassifierModel& model, const std::vector<const Example*>& examples) {
  Batch b;
  if (examples.empty()) return b;
  const auto K = examples.front()->textual_out.rows();
  const auto N = static_cast<Eigen::Index>(examples.size());
  for (Eigen::Index t = 0; t < K; ++t) {
    Matrix v(N, examples.front()->visual_out.cols());
    Matrix x(N, examples.front()->textual_out.cols());
    for (Eigen::Index n = 0; n < N; ++n) {
      const auto& e = *examples[static_cast<std::size_t>(n)];
      if (e.textual_out.rows() != K || e.visual_out.rows() != K)
        throw Error(ErrorKind::InvalidInput, e.video_id + ": sequence length differs within batch");
      v.row(n) = e.visual_out.row(t);
      x.row(n) = e.textual_out.row(t);
    }
    b.visual.push_back(model.norm_visual.apply(v));
    b.textual.push_back(model.norm_textual.apply(x));
  }
  for (const auto* e : examples) b.labels.push_back(e->label ? static_cast<std::size_t>(*e->label) : 0);
  return b;
}

struct ForwardState {
  LstmCache cache_v, cache_t;
  Matrix h_all;   // N x 2h
  Matrix a1;      // N x fc
  Matrix probs;   // N x 7
};

inline Matrix forward_batch(const ClassifierModel& model, const Batch& batch, ForwardState* st = nullptr) {
  const auto H = static_cast<Eigen::Index>(model.cfg.hidden);
  const auto N = batch.textual.front().rows();
  Matrix h_all = Matrix::Zero(N, 2 * H);
  if (model.cfg.mode != ViewMode::textual)
    h_all.leftCols(H) = lstm_forward(model.lstm_v, batch.visual, st ? &st->cache_v : nullptr);
  if (model.cfg.mode != ViewMode::visual)
    h_all.rightCols(H) = lstm_forward(model.lstm_t, batch.textual, st ? &st->cache_t : nullptr);
  Matrix a1 = model.fc1.forward(h_all);
  Matrix logits = model.fc2.forward(a1);
  Matrix probs(N, logits.cols());
  for (Eigen::Index n = 0; n < N; ++n) probs.row(n) = softmax(logits.row(n).transpose()).transpose();
  if (st) {
    st->h_all = std::move(h_all);
    st->a1 = std::move(a1);
    st->probs = probs;
  }
  return probs;
}

struct LossGrad {
  double loss = 0.0;
  std::vector<Matrix> grads;  // ClassifierModel::params() order
};

/// Mean cross-entropy over the batch and its gradient for every block.
inline LossGrad loss_and_grad(const ClassifierModel& model, const Batch& batch) {
  ForwardState st;
  forward_batch(model, batch, &st);
  const auto N = st.probs.rows();
  const auto H = static_cast<Eigen::Index>(model.cfg.hidden);
  LossGrad out;
  Matrix d_logits = st.probs;
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto y = static_cast<Eigen::Index>(batch.labels[static_cast<std::size_t>(n)]);
    out.loss -= std::log(std::max(st.probs(n, y), 1e-300));
    d_logits(n, y) -= 1.0;
  }
  out.loss /= static_cast<double>(N);
  d_logits /= static_cast<double>(N);

  const Matrix d_fc2w = st.a1.transpose() * d_logits;
  const Matrix d_fc2b = d_logits.colwise().sum();
  Matrix d_a1 = d_logits * model.fc2.weight.transpose();
  d_a1 = d_a1.cwiseProduct((1.0 - st.a1.array().square()).matrix());
  const Matrix d_fc1w = st.h_all.transpose() * d_a1;
  const Matrix d_fc1b = d_a1.colwise().sum();
  const Matrix d_h = d_a1 * model.fc1.weight.transpose();

  LstmGrads gv{Matrix::Zero(model.lstm_v.W.rows(), model.lstm_v.W.cols()),
               Matrix::Zero(model.lstm_v.R.rows(), model.lstm_v.R.cols()), Matrix::Zero(1, model.lstm_v.b.cols())};
  LstmGrads gt{Matrix::Zero(model.lstm_t.W.rows(), model.lstm_t.W.cols()),
               Matrix::Zero(model.lstm_t.R.rows(), model.lstm_t.R.cols()), Matrix::Zero(1, model.lstm_t.b.cols())};
  if (model.cfg.mode != ViewMode::textual) gv = lstm_backward(model.lstm_v, st.cache_v, d_h.leftCols(H));
  if (model.cfg.mode != ViewMode::visual) gt = lstm_backward(model.lstm_t, st.cache_t, d_h.rightCols(H));

  out.grads = {gv.W, gv.R, gv.b, gt.W, gt.R, gt.b, d_fc1w, d_fc1b, d_fc2w, d_fc2b};
  return out;
}

struct Prediction {
  std::string video_id;
  Vector probs;
  std::size_t label = 0;
};

inline std::vector<Prediction> predict(const ClassifierModel& model, const std::vector<Example>& examples) {
  std::vector<Prediction> out;
  if (examples.empty()) return out;
  std::vector<const Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  const Matrix probs = forward_batch(model, make_batch(model, ptrs));
  for (std::size_t n = 0; n < examples.size(); ++n) {
    Prediction p{examples[n].video_id, probs.row(static_cast<Eigen::Index>(n)).transpose(), 0};
    Eigen::Index arg = 0;
    p.probs.maxCoeff(&arg);
    p.label = static_cast<std::size_t>(arg);
    out.push_back(std::move(p));
  }
  return out;
}

inline Prediction forward(const ClassifierModel& model, const Example& example) {
  return predict(model, {example}).front();
}

// ---------------------------------------------------------------------------
// metrics

struct Metrics {
  double accuracy = 0.0;
  std::array<double, kNumEmotions> precision{};
  std::array<bool, kNumEmotions> precision_defined{};
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> confusion{};  // [true][predicted]
  std::size_t total = 0;
};

inline Metrics compute_metrics(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::InvalidInput, "metrics: length mismatch");
  if (truth.empty()) throw Error(ErrorKind::InvalidInput, "metrics: empty set");
  Metrics m;
  m.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m.confusion.at(truth[i]).at(predicted[i]);
    if (truth[i] == predicted[i]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    std::size_t col = 0;
    for (std::size_t r = 0; r < kNumEmotions; ++r) col += m.confusion[r][c];
    m.precision_defined[c] = col > 0;
    m.precision[c] = col > 0 ? static_cast<double>(m.confusion[c][c]) / static_cast<double>(col) : 0.0;
  }
  return m;
}

inline Metrics evaluate(const ClassifierModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw Error(ErrorKind::InvalidInput, "evaluate: empty set");
  std::vector<std::size_t> truth, pred;
  const auto preds = predict(model, examples);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].label) throw Error(ErrorKind::InvalidInput, examples[i].video_id + ": evaluate needs a label");
    truth.push_back(static_cast<std::size_t>(*examples[i].label));
    pred.push_back(preds[i].label);
  }
  return compute_metrics(truth, pred);
}

inline nlohmann::json metrics_json(const Metrics& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["total"] = m.total;
  nlohmann::json prec = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    const std::string name(kEmotionNames[c]);
    prec[name] = m.precision_defined[c] ? nlohmann::json(m.precision[c]) : nlohmann::json(nullptr);
  }
  j["precision"] = prec;
  j["confusion"] = m.confusion;
  j["labels"] = std::vector<std::string>(kEmotionNames.begin(), kEmotionNames.end());
  return j;
}

// ---------------------------------------------------------------------------
// training

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Stratified 80/10/10 split: per class, shuffled, round(10%) to test and to
/// validation, the rest to training.
inline Split stratified_split(const std::vector<Example>& examples, SeededRng& rng, double val_frac = 0.1,
                              double test_frac = 0.1) {
  std::array<std::vector<std::size_t>, kNumEmotions> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].label) continue;
    by_class[static_cast<std::size_t>(*examples[i].label)].push_back(i);
  }
  Split s;
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    const auto n = static_cast<double>(idx.size());
    const auto n_test = static_cast<std::size_t>(std::lround(n * test_frac));
    const auto n_val = static_cast<std::size_t>(std::lround(n * val_frac));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (j < n_test) s.test.push_back(idx[j]);
      else if (j < n_test + n_val) s.val.push_back(idx[j]);
      else s.train.push_back(idx[j]);
    }
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

struct EpochRecord {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
};

inline double mean_loss(const ClassifierModel& model, const std::vector<const Example*>& ex) {
  const Matrix probs = forward_batch(model, make_batch(model, ex));
  double loss = 0.0;
  for (std::size_t n = 0; n < ex.size(); ++n)
    loss -= std::log(std::max(probs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(*ex[n]->label)), 1e-300));
  return loss / static_cast<double>(ex.size());
}

inline double accuracy_of(const ClassifierModel& model, const std::vector<const Example*>& ex) {
  const Matrix probs = forward_batch(model, make_batch(model, ex));
  std::size_t ok = 0;
  for (std::size_t n = 0; n < ex.size(); ++n) {
    Eigen::Index arg = 0;
    probs.row(static_cast<Eigen::Index>(n)).maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == static_cast<std::size_t>(*ex[n]->label)) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(ex.size());
}

/// Minibatch Adam on cross-entropy with early stopping on validation
/// accuracy (validation loss breaks ties). Returns the best checkpoint.
inline History train(ClassifierModel& model, const std::vector<Example>& examples, const std::vector<std::size_t>& train_idx,
                     const std::vector<std::size_t>& val_idx, SeededRng& rng) {
  if (train_idx.empty() || val_idx.empty()) throw Error(ErrorKind::InvalidInput, "classifier: empty train or validation split");
  std::vector<const Example*> tr, va;
  for (auto i : train_idx) {
    if (!examples[i].label) throw Error(ErrorKind::InvalidInput, examples[i].video_id + ": training example without label");
    tr.push_back(&examples[i]);
  }
  for (auto i : val_idx) {
    if (!examples[i].label) throw Error(ErrorKind::InvalidInput, examples[i].video_id + ": validation example without label");
    va.push_back(&examples[i]);
  }

  // Input normalization from training rows.
  {
    Matrix v(0, tr.front()->visual_out.cols()), t(0, tr.front()->textual_out.cols());
    for (const auto* e : tr) {
      Matrix nv(v.rows() + e->visual_out.rows(), v.cols());
      nv << v, e->visual_out;
      v = std::move(nv);
      Matrix nt(t.rows() + e->textual_out.rows(), t.cols());
      nt << t, e->textual_out;
      t = std::move(nt);
    }
    model.norm_visual = nn::Standardizer::fit(v);
    model.norm_textual = nn::Standardizer::fit(t);
  }

  History hist;
  nn::Adam adam(model.cfg.adam);
  auto params = model.params();
  ClassifierModel best = model;
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, model.cfg.batch);

  for (std::size_t epoch = 0; epoch < model.cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t nb = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const Example*> chunk;
      for (std::size_t j = start; j < std::min(order.size(), start + bs); ++j) chunk.push_back(tr[order[j]]);
      auto lg = loss_and_grad(model, make_batch(model, chunk));
      loss_sum += lg.loss;
      ++nb;
      adam.step(params, lg.grads);
    }
    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(nb);
    rec.train_accuracy = accuracy_of(model, tr);
    rec.val_accuracy = accuracy_of(model, va);
    rec.val_loss = mean_loss(model, va);
    hist.epochs.push_back(rec);
    // Patience counts epochs without a strict accuracy gain; a loss tie-break
    // only moves the checkpoint.
    const bool gain = rec.val_accuracy > best_acc;
    if (gain || (rec.val_accuracy == best_acc && rec.val_loss < best_loss)) {
      best_acc = rec.val_accuracy;
      best_loss = rec.val_loss;
      best = model;
      hist.best_epoch = epoch;
    }
    if (gain) {
      since_best = 0;
    } else if (++since_best >= model.cfg.patience) {
      hist.early_stopped = true;
      break;
    }
  }
  model = std::move(best);
  return hist;
}

/// Stratified k-fold evaluation: fold f is the test fold, fold f+1 the
/// validation fold, the rest train. Returns the pooled test predictions in
/// example order.
struct CrossValidation {
  std::vector<std::size_t> truth, predicted;
  double accuracy = 0.0;
};

inline CrossValidation cross_validate(const std::vector<Example>& examples, const ClassifierConfig& cfg,
                                      std::size_t folds, SeededRng& rng) {
  if (folds < 3) throw Error(ErrorKind::InvalidInput, "cross_validate: need at least 3 folds");
  std::vector<std::size_t> fold_of(examples.size(), 0);
  std::array<std::vector<std::size_t>, kNumEmotions> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!examples[i].label) throw Error(ErrorKind::InvalidInput, examples[i].video_id + ": cross_validate needs labels");
    by_class[static_cast<std::size_t>(*examples[i].label)].push_back(i);
  }
  std::size_t next = 0;
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    for (auto i : idx) fold_of[i] = next++ % folds;
  }
  CrossValidation cv;
  cv.truth.resize(examples.size());
  cv.predicted.resize(examples.size());
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, va;
    std::vector<Example> te;
    std::vector<std::size_t> te_idx;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (fold_of[i] == f) {
        te.push_back(examples[i]);
        te_idx.push_back(i);
      } else if (fold_of[i] == (f + 1) % folds) {
        va.push_back(i);
      } else {
        tr.push_back(i);
      }
    }
    if (te.empty()) continue;
    SeededRng frng = rng.derive(static_cast<std::uint64_t>(f));
    auto model = ClassifierModel::init(examples.front().textual_out.cols(), examples.front().visual_out.cols(), cfg, frng);
    train(model, examples, tr, va, frng);
    const auto preds = predict(model, te);
    for (std::size_t j = 0; j < te.size(); ++j) {
      cv.truth[te_idx[j]] = static_cast<std::size_t>(*te[j].label);
      cv.predicted[te_idx[j]] = preds[j].label;
    }
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) ok += cv.truth[i] == cv.predicted[i];
  cv.accuracy = examples.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(examples.size());
  return cv;
}

// ---------------------------------------------------------------------------
// files

inline constexpr std::string_view kClassifierMagic = "DCVDN-CLF1";

inline void write_lstm(binio::Writer& w, const LstmParams& p) {
  w.f64(p.forget_bias);
  w.matrix(p.W);
  w.matrix(p.R);
  w.matrix(p.b);
}

inline LstmParams read_lstm(binio::Reader& r) {
  LstmParams p;
  p.forget_bias = r.f64();
  p.W = r.matrix();
  p.R = r.matrix();
  p.b = r.matrix();
  return p;
}

inline void save(const ClassifierModel& m, const std::string& path) {
  binio::Writer w;
  w.magic(kClassifierMagic);
  w.u64(m.cfg.hidden);
  w.u64(m.cfg.fc_hidden_value());
  w.u32(static_cast<std::uint32_t>(m.cfg.mode));
  w.matrix(m.norm_visual.mean);
  w.matrix(m.norm_visual.inv_std);
  w.matrix(m.norm_textual.mean);
  w.matrix(m.norm_textual.inv_std);
  write_lstm(w, m.lstm_v);
  write_lstm(w, m.lstm_t);
  w.matrix(m.fc1.weight);
  w.matrix(m.fc1.bias);
  w.matrix(m.fc2.weight);
  w.matrix(m.fc2.bias);
  w.save(path);
}

inline ClassifierModel load(const std::string& path) {
  auto r = binio::Reader::from_file(path);
  r.expect_magic(kClassifierMagic);
  ClassifierModel m;
  m.cfg.hidden = r.u64();
  m.cfg.fc_hidden = r.u64();
  m.cfg.mode = static_cast<ViewMode>(r.u32());
  m.norm_visual.mean = r.matrix();
  m.norm_visual.inv_std = r.matrix();
  m.norm_textual.mean = r.matrix();
  m.norm_textual.inv_std = r.matrix();
  m.lstm_v = read_lstm(r);
  m.lstm_t = read_lstm(r);
  m.fc1 = nn::Dense{r.matrix(), r.matrix(), nn::Activation::tanh};
  m.fc2 = nn::Dense{r.matrix(), r.matrix(), nn::Activation::identity};
  m.cfg.forget_bias = m.lstm_v.forget_bias;
  return m;
}

inline void write_predictions(std::ostream& out, const std::vector<Prediction>& preds) {
  for (const auto& p : preds) {
    nlohmann::json j;
    j["video_id"] = p.video_id;
    j["probs"] = std::vector<double>(p.probs.data(), p.probs.data() + p.probs.size());
    j["label"] = std::string(kEmotionNames.at(p.label));
    out << j.dump() << '\n';
  }
}

}  // namespace dcvdn::classifier
