#pragma once

// Deep canonically correlated autoencoders. Two autoencoders (one per view)
// are trained on the sum of top-L canonical correlations between the encoded
// views, traded off against reconstruction error; CCA projections are then
// fitted in closed form on the encoded training pool.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcvdn/binio.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/nn.hpp"
#include "dcvdn/numkit.hpp"
#include "dcvdn/visual.hpp"

namespace dcvdn::dccae {

// ---------------------------------------------------------------------------
// CCA objective

struct CcaResult {
  double corr = 0.0;
  Vector singular_values;  // all singular values of the whitened cross-covariance
  Matrix d_h1;             // d corr / d H1
  Matrix d_h2;
};

/// Sum of the top-L singular values of T = S11^-1/2 S12 S22^-1/2, where the
/// covariances use 1/(M-1) and S11, S22 carry `ridge` on the diagonal.
inline CcaResult cca_corr(const Matrix& h1, const Matrix& h2, std::size_t L, double ridge, bool with_grad = true) {
  const Eigen::Index M = h1.rows();
  if (h2.rows() != M) throw Error(ErrorKind::InvalidInput, "cca_corr: views have different sample counts");
  if (M <= static_cast<Eigen::Index>(L))
    throw Error(ErrorKind::BatchTooSmall,
                "cca_corr: batch of " + std::to_string(M) + " must exceed L=" + std::to_string(L));
  if (L == 0 || static_cast<Eigen::Index>(L) > std::min(h1.cols(), h2.cols()))
    throw Error(ErrorKind::InvalidInput, "cca_corr: L must lie in [1, min(d1, d2)]");
  require_finite(h1, "cca_corr");
  require_finite(h2, "cca_corr");

  const double scale = 1.0 / static_cast<double>(M - 1);
  const Matrix c1 = h1.rowwise() - h1.colwise().mean();
  const Matrix c2 = h2.rowwise() - h2.colwise().mean();
  const Matrix s11 = scale * c1.transpose() * c1;
  const Matrix s22 = scale * c2.transpose() * c2;
  const Matrix s12 = scale * c1.transpose() * c2;
  const Matrix a1 = sym_inv_sqrt(s11, ridge);
  const Matrix a2 = sym_inv_sqrt(s22, ridge);
  const Matrix t = a1 * s12 * a2;
  const Svd dec = svd(t);

  CcaResult out;
  out.singular_values = dec.s;
  const auto l = static_cast<Eigen::Index>(L);
  out.corr = dec.s.head(l).sum();
  if (!with_grad) return out;

  const Matrix ul = dec.U.leftCols(l);
  const Matrix vl = dec.Vt.topRows(l).transpose();
  const Vector dl = dec.s.head(l);
  const Matrix grad12 = a1 * ul * vl.transpose() * a2;
  const Matrix grad11 = -0.5 * a1 * ul * dl.asDiagonal() * ul.transpose() * a1;
  const Matrix grad22 = -0.5 * a2 * vl * dl.asDiagonal() * vl.transpose() * a2;
  out.d_h1 = scale * (2.0 * c1 * grad11 + c2 * grad12.transpose());
  out.d_h2 = scale * (2.0 * c2 * grad22 + c1 * grad12);
  return out;
}

// ---------------------------------------------------------------------------
// model

struct DccaeConfig {
  std::size_t hidden = 256;  // middle (code) layer size
  std::size_t L = 128;
  double lambda = 1.0;
  double ridge = 1e-4;
  bool abs_recon = false;  // unsquared (pseudo-Huber smoothed) reconstruction norm
  double huber_delta = 1e-6;
  bool linear_encoders = false;
  std::size_t batch = 400;
  std::size_t epochs = 30;
  nn::AdamConfig adam{};
};

using nn::Standardizer;

struct DccaeModel {
  DccaeConfig cfg;
  Standardizer std_text, std_visual;
  nn::Mlp enc_text, dec_text, enc_visual, dec_visual;
  Matrix U, V;                    // hidden x L
  Matrix code_mean_text, code_mean_visual;  // 1 x hidden, pool means used for centering
  bool fitted = false;

  static DccaeModel init(Eigen::Index text_dim, Eigen::Index visual_dim, const DccaeConfig& cfg, SeededRng& rng) {
    if (cfg.L == 0 || cfg.L > cfg.hidden) throw Error(ErrorKind::InvalidInput, "dccae: L must lie in [1, hidden]");
    DccaeModel m;
    m.cfg = cfg;
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    const auto code_act = cfg.linear_encoders ? nn::Activation::identity : nn::Activation::tanh;
    m.enc_text = nn::Mlp::init({text_dim, h}, code_act, rng);
    m.dec_text = nn::Mlp::init({h, text_dim}, nn::Activation::identity, rng);
    m.enc_visual = nn::Mlp::init({visual_dim, h}, code_act, rng);
    m.dec_visual = nn::Mlp::init({h, visual_dim}, nn::Activation::identity, rng);
    m.std_text = Standardizer::identity(text_dim);
    m.std_visual = Standardizer::identity(visual_dim);
    return m;
  }

  /// Parameter blocks in a fixed order: enc_text, dec_text, enc_visual, dec_visual.
  std::vector<Matrix*> params() {
    std::vector<Matrix*> out;
    for (auto* net : {&enc_text, &dec_text, &enc_visual, &dec_visual})
      for (auto* p : net->params()) out.push_back(p);
    return out;
  }
};

struct LossResult {
  double loss = 0.0;
  double corr = 0.0;
  double recon = 0.0;  // mean per-sample reconstruction penalty (both views)
  std::vector<Matrix> grads;  // DccaeModel::params() order
};

namespace detail {

/// Returns sum over rows of the reconstruction penalty and writes its gradient.
inline double recon_penalty(const Matrix& target, const Matrix& recon, const DccaeConfig& cfg, Matrix& grad) {
  const Matrix r = recon - target;
  if (!cfg.abs_recon) {
    grad = 2.0 * r;
    return r.squaredNorm();
  }
  grad = Matrix(r.rows(), r.cols());
  double total = 0.0;
  const double d2 = cfg.huber_delta * cfg.huber_delta;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const double n = std::sqrt(r.row(i).squaredNorm() + d2);
    total += n - cfg.huber_delta;
    grad.row(i) = r.row(i) / n;
  }
  return total;
}

}  // namespace detail

/// loss = -corr + (lambda / M) * sum_i (penalty(x_i) + penalty(y_i)) on
/// already-standardized batches.
inline LossResult dccae_loss(const DccaeModel& model, const Matrix& text, const Matrix& vis, bool with_grad = true) {
  const auto& cfg = model.cfg;
  const double M = static_cast<double>(text.rows());
  nn::Mlp::Cache c_et, c_dt, c_ev, c_dv;
  const Matrix f = model.enc_text.forward(text, c_et);
  const Matrix g = model.enc_visual.forward(vis, c_ev);
  const Matrix rt = model.dec_text.forward(f, c_dt);
  const Matrix rv = model.dec_visual.forward(g, c_dv);
  const auto cca = cca_corr(f, g, cfg.L, cfg.ridge, with_grad);

  Matrix gt, gv;
  const double pen = detail::recon_penalty(text, rt, cfg, gt) + detail::recon_penalty(vis, rv, cfg, gv);

  LossResult out;
  out.corr = cca.corr;
  out.recon = pen / M;
  out.loss = -cca.corr + cfg.lambda * pen / M;
  if (!with_grad) return out;

  const double w = cfg.lambda / M;
  std::vector<Matrix> g_et, g_dt, g_ev, g_dv;
  const Matrix df_rec = model.dec_text.backward(c_dt, w * gt, g_dt);
  const Matrix dg_rec = model.dec_visual.backward(c_dv, w * gv, g_dv);
  model.enc_text.backward(c_et, df_rec - cca.d_h1, g_et, false);
  model.enc_visual.backward(c_ev, dg_rec - cca.d_h2, g_ev, false);
  for (auto* gs : {&g_et, &g_dt, &g_ev, &g_dv})
    for (auto& m : *gs) out.grads.push_back(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// training

/// Flattened pool of (textual row, visual row) pairs.
struct PairPool {
  Matrix text;
  Matrix visual;
  std::vector<std::pair<std::size_t, std::size_t>> origin;  // (sequence, cluster)
};

/// Rows missing or all-zero in either view are left out of the pool.
inline PairPool build_pool(const std::vector<visual::ViewSequence>& seqs) {
  std::vector<std::pair<std::size_t, std::size_t>> keep;
  Eigen::Index dt = 0, dv = 0;
  for (std::size_t s = 0; s < seqs.size(); ++s) {
    dt = seqs[s].textual.cols();
    dv = seqs[s].visual.cols();
    for (std::size_t k = 0; k < seqs[s].length(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      if (seqs[s].textual_missing[k] || seqs[s].visual_missing[k]) continue;
      if (seqs[s].textual.row(r).isZero(0.0) || seqs[s].visual.row(r).isZero(0.0)) continue;
      keep.emplace_back(s, k);
    }
  }
  PairPool pool{Matrix(static_cast<Eigen::Index>(keep.size()), dt), Matrix(static_cast<Eigen::Index>(keep.size()), dv),
                keep};
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto [s, k] = keep[i];
    pool.text.row(static_cast<Eigen::Index>(i)) = seqs[s].textual.row(static_cast<Eigen::Index>(k));
    pool.visual.row(static_cast<Eigen::Index>(i)) = seqs[s].visual.row(static_cast<Eigen::Index>(k));
  }
  return pool;
}

struct TrainReport {
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
  std::vector<double> epoch_corr;
  std::size_t batch_used = 0;
  bool batch_shrunk = false;
};

inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), src.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = src.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

/// Closed-form CCA on the encoded pool: U = S11^-1/2 A_L, V = S22^-1/2 B_L.
inline void fit_projections(DccaeModel& model, const Matrix& text_raw, const Matrix& visual_raw) {
  const Matrix f = model.enc_text.forward(model.std_text.apply(text_raw));
  const Matrix g = model.enc_visual.forward(model.std_visual.apply(visual_raw));
  const auto L = static_cast<Eigen::Index>(model.cfg.L);
  if (f.rows() <= L)
    throw Error(ErrorKind::BatchTooSmall, "fit_projections: pool of " + std::to_string(f.rows()) + " <= L");
  model.code_mean_text = f.colwise().mean();
  model.code_mean_visual = g.colwise().mean();
  const Matrix s11 = cross_covariance(f, f);
  const Matrix s22 = cross_covariance(g, g);
  const Matrix s12 = cross_covariance(f, g);
  const Matrix a1 = sym_inv_sqrt(s11, model.cfg.ridge);
  const Matrix a2 = sym_inv_sqrt(s22, model.cfg.ridge);
  const Svd dec = svd(a1 * s12 * a2);
  const Matrix u = a1 * dec.U.leftCols(L);
  const Matrix v = a2 * dec.Vt.topRows(L).transpose();
  // The ridge picks the subspace; re-whiten inside it against the unregularized
  // covariance so U^T S11 U = I holds exactly.
  model.U = u * sym_inv_sqrt(u.transpose() * s11 * u, 0.0);
  model.V = v * sym_inv_sqrt(v.transpose() * s22 * v, 0.0);
  model.fitted = true;
}

/// Minibatch Adam on dccae_loss over a shuffled pool, then fit_projections.
inline TrainReport train(DccaeModel& model, const PairPool& pool, SeededRng& rng) {
  const auto& cfg = model.cfg;
  const std::size_t n = static_cast<std::size_t>(pool.text.rows());
  if (n <= cfg.L)
    throw Error(ErrorKind::BatchTooSmall,
                "dccae: pool of " + std::to_string(n) + " pairs must exceed L=" + std::to_string(cfg.L));
  model.std_text = Standardizer::fit(pool.text);
  model.std_visual = Standardizer::fit(pool.visual);
  const Matrix text = model.std_text.apply(pool.text);
  const Matrix vis = model.std_visual.apply(pool.visual);

  TrainReport report;
  std::size_t batch = cfg.batch;
  if (n < batch) {
    batch = n;
    report.batch_shrunk = true;
  }
  const std::size_t num_batches = std::max<std::size_t>(1, n / batch);
  report.batch_used = n / num_batches;
  if (report.batch_used <= cfg.L) throw Error(ErrorKind::BatchTooSmall, "dccae: batch must exceed L");

  nn::Adam adam(cfg.adam);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto params = model.params();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0, corr_sum = 0.0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      // Near-equal contiguous batches covering the whole pool.
      const std::size_t begin = b * n / num_batches;
      const std::size_t end = (b + 1) * n / num_batches;
      const Matrix xb = gather_rows(text, order, begin, end);
      const Matrix yb = gather_rows(vis, order, begin, end);
      auto res = dccae_loss(model, xb, yb);
      loss_sum += res.loss;
      corr_sum += res.corr;
      adam.step(params, res.grads);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(num_batches));
    report.epoch_corr.push_back(corr_sum / static_cast<double>(num_batches));
  }
  fit_projections(model, pool.text, pool.visual);
  return report;
}

struct FusedRepresentation {
  std::string video_id;
  Matrix textual_out;  // K x L
  Matrix visual_out;   // K x L
  std::optional<Emotion> label;
};

inline std::pair<Matrix, Matrix> project(const DccaeModel& model, const Matrix& text_raw, const Matrix& visual_raw) {
  if (!model.fitted) throw Error(ErrorKind::InvalidInput, "dccae: projections not fitted");
  Matrix f = model.enc_text.forward(model.std_text.apply(text_raw));
  Matrix g = model.enc_visual.forward(model.std_visual.apply(visual_raw));
  f.rowwise() -= model.code_mean_text.row(0);
  g.rowwise() -= model.code_mean_visual.row(0);
  return {f * model.U, g * model.V};
}

inline FusedRepresentation transform(const DccaeModel& model, const visual::ViewSequence& seq) {
  auto [t, v] = project(model, seq.textual, seq.visual);
  return {seq.video_id, std::move(t), std::move(v), seq.label};
}

// ---------------------------------------------------------------------------
// files

inline constexpr std::string_view kDccaeMagic = "DCVDN-CCAE1";

inline void save(const DccaeModel& m, const std::string& path) {
  binio::Writer w;
  w.magic(kDccaeMagic);
  w.f64(m.cfg.lambda);
  w.f64(m.cfg.ridge);
  w.u64(m.cfg.L);
  w.u64(m.cfg.hidden);
  w.u32(m.cfg.abs_recon ? 1 : 0);
  w.f64(m.cfg.huber_delta);
  w.u32(m.fitted ? 1 : 0);
  w.matrix(m.std_text.mean);
  w.matrix(m.std_text.inv_std);
  w.matrix(m.std_visual.mean);
  w.matrix(m.std_visual.inv_std);
  m.enc_text.write(w);
  m.dec_text.write(w);
  m.enc_visual.write(w);
  m.dec_visual.write(w);
  w.matrix(m.U);
  w.matrix(m.V);
  w.matrix(m.code_mean_text);
  w.matrix(m.code_mean_visual);
  w.save(path);
}

inline DccaeModel load(const std::string& path) {
  auto r = binio::Reader::from_file(path);
  r.expect_magic(kDccaeMagic);
  DccaeModel m;
  m.cfg.lambda = r.f64();
  m.cfg.ridge = r.f64();
  m.cfg.L = r.u64();
  m.cfg.hidden = r.u64();
  m.cfg.abs_recon = r.u32() != 0;
  m.cfg.huber_delta = r.f64();
  m.fitted = r.u32() != 0;
  m.std_text.mean = r.matrix();
  m.std_text.inv_std = r.matrix();
  m.std_visual.mean = r.matrix();
  m.std_visual.inv_std = r.matrix();
  m.enc_text = nn::Mlp::read(r);
  m.dec_text = nn::Mlp::read(r);
  m.enc_visual = nn::Mlp::read(r);
  m.dec_visual = nn::Mlp::read(r);
  m.U = r.matrix();
  m.V = r.matrix();
  m.code_mean_text = r.matrix();
  m.code_mean_visual = r.matrix();
  return m;
}

inline void write_fused(std::ostream& out, const std::vector<FusedRepresentation>& fused) {
  for (const auto& f : fused)
    for (Eigen::Index k = 0; k < f.textual_out.rows(); ++k) {
      nlohmann::json j;
      j["video_id"] = f.video_id;
      j["cluster_index"] = k;
      const Vector t = f.textual_out.row(k).transpose();
      const Vector v = f.visual_out.row(k).transpose();
      j["textual_out"] = std::vector<double>(t.data(), t.data() + t.size());
      j["visual_out"] = std::vector<double>(v.data(), v.data() + v.size());
      out << j.dump() << '\n';
    }
}

/// Reads fused.jsonl back into per-video K x L sequences (cluster order).
inline std::vector<FusedRepresentation> parse_fused(std::istream& in, const LabelMap& labels = {}) {
  std::map<std::string, std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (dcvdn::detail::trim(line).empty()) continue;
    const auto where = "fused line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j.contains("cluster_index") || !j.contains("textual_out") ||
        !j.contains("visual_out") || !j["textual_out"].is_array() || !j["visual_out"].is_array())
      throw Error(ErrorKind::SchemaError, where + ": expected {video_id, cluster_index, textual_out, visual_out}");
    rows[j["video_id"].get<std::string>()][j["cluster_index"].get<std::size_t>()] = {
        j["textual_out"].get<std::vector<double>>(), j["visual_out"].get<std::vector<double>>()};
  }
  std::vector<FusedRepresentation> out;
  for (const auto& [id, clusters] : rows) {
    FusedRepresentation f;
    f.video_id = id;
    const auto K = static_cast<Eigen::Index>(clusters.size());
    const auto lt = static_cast<Eigen::Index>(clusters.begin()->second.first.size());
    const auto lv = static_cast<Eigen::Index>(clusters.begin()->second.second.size());
    f.textual_out = Matrix(K, lt);
    f.visual_out = Matrix(K, lv);
    Eigen::Index r = 0;
    for (const auto& [ci, pr] : clusters) {
      if (static_cast<Eigen::Index>(pr.first.size()) != lt || static_cast<Eigen::Index>(pr.second.size()) != lv)
        throw Error(ErrorKind::SchemaError, id + ": inconsistent fused dimensions");
      for (Eigen::Index c = 0; c < lt; ++c) f.textual_out(r, c) = pr.first[static_cast<std::size_t>(c)];
      for (Eigen::Index c = 0; c < lv; ++c) f.visual_out(r, c) = pr.second[static_cast<std::size_t>(c)];
      ++r;
    }
    if (auto it = labels.find(id); it != labels.end()) f.label = it->second;
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace dcvdn::dccae
