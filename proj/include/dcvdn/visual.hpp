#pragma once

// Visual view: per-burst-point frame features (file contract or synthetic
// stand-in) and alignment with the textual document embeddings.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcvdn/corpus.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/ewe.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::visual {

inline constexpr std::size_t kFeatureDim = 4096;

struct FrameFeature {
  std::string video_id;
  std::size_t cluster_index = 0;
  Vector vector;
};

struct FeatureLoad {
  std::vector<FrameFeature> features;  // ordered by (video_id, cluster_index)
  std::size_t duplicate_warnings = 0;
};

inline FeatureLoad parse_features(std::istream& in, std::size_t dim = kFeatureDim) {
  std::map<std::pair<std::string, std::size_t>, FrameFeature> rows;
  FeatureLoad out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto where = "features line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::SchemaError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j["video_id"].is_string() || !j.contains("cluster_index") ||
        !j["cluster_index"].is_number_unsigned() || !j.contains("vector") || !j["vector"].is_array())
      throw Error(ErrorKind::SchemaError, where + ": expected {video_id, cluster_index, vector}");
    const auto& arr = j["vector"];
    if (arr.size() != dim)
      throw Error(ErrorKind::SchemaError,
                  where + ": vector has " + std::to_string(arr.size()) + " entries, expected " + std::to_string(dim));
    FrameFeature f{j["video_id"].get<std::string>(), j["cluster_index"].get<std::size_t>(),
                   Vector(static_cast<Eigen::Index>(dim))};
    for (std::size_t i = 0; i < dim; ++i) {
      if (!arr[i].is_number()) throw Error(ErrorKind::SchemaError, where + ": non-numeric vector entry");
      f.vector(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    }
    if (!f.vector.allFinite()) throw Error(ErrorKind::SchemaError, where + ": non-finite vector entry");
    auto key = std::make_pair(f.video_id, f.cluster_index);
    if (rows.count(key)) ++out.duplicate_warnings;
    rows.insert_or_assign(key, std::move(f));
  }
  out.features.reserve(rows.size());
  for (auto& [k, f] : rows) out.features.push_back(std::move(f));
  return out;
}

inline FeatureLoad load_features(const std::string& path, std::size_t dim = kFeatureDim) {
  auto in = dcvdn::detail::open_input(path);
  return parse_features(in, dim);
}

inline void write_features(std::ostream& out, const std::vector<FrameFeature>& features) {
  for (const auto& f : features) {
    nlohmann::json j;
    j["video_id"] = f.video_id;
    j["cluster_index"] = f.cluster_index;
    j["vector"] = std::vector<double>(f.vector.data(), f.vector.data() + f.vector.size());
    out << j.dump() << '\n';
  }
}

/// Options for the deterministic synthetic featurizer.
struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t dim = kFeatureDim;
  double noise = 1.0;
  double class_shift = 0.0;  // 0 disables class conditioning
};

/// Class mean direction: a seeded unit vector per emotion class.
inline Vector class_direction(std::size_t label, const SynthOptions& opt) {
  SeededRng rng = SeededRng(opt.seed).derive("visual-class").derive(label);
  Vector v(static_cast<Eigen::Index>(opt.dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v / v.norm();
}

/// K pseudo-random frame features, seeded by (seed, video_id, cluster_index).
/// With a label and a non-zero class_shift, each vector's mean moves by
/// class_shift along the class direction.
inline std::vector<FrameFeature> synth_features(const std::string& video_id, const std::vector<double>& burst_times,
                                                const SynthOptions& opt, std::optional<std::size_t> label = {}) {
  std::vector<FrameFeature> out;
  out.reserve(burst_times.size());
  const SeededRng base = SeededRng(opt.seed).derive("visual-frame").derive(video_id);
  std::optional<Vector> shift;
  if (label && opt.class_shift != 0.0) shift = opt.class_shift * class_direction(*label, opt);
  for (std::size_t c = 0; c < burst_times.size(); ++c) {
    SeededRng rng = base.derive(static_cast<std::uint64_t>(c));
    FrameFeature f{video_id, c, Vector(static_cast<Eigen::Index>(opt.dim))};
    for (Eigen::Index i = 0; i < f.vector.size(); ++i) f.vector(i) = opt.noise * rng.normal();
    if (shift) f.vector += *shift;
    out.push_back(std::move(f));
  }
  return out;
}

struct ViewSequence {
  std::string video_id;
  Matrix textual;  // K x Dt
  Matrix visual;   // K x Dv
  std::optional<Emotion> label;
  std::vector<bool> textual_missing;
  std::vector<bool> visual_missing;

  std::size_t length() const noexcept { return static_cast<std::size_t>(textual.rows()); }
};

/// Pairs the two views per (video_id, cluster_index) in cluster (burst) order.
/// Missing rows inside a present video become zero rows and are flagged; a
/// video present in only one view is an AlignmentError.
inline std::vector<ViewSequence> assemble_sequences(const std::vector<ewe::DocEmbedding>& docs,
                                                    const std::vector<FrameFeature>& features,
                                                    const LabelMap& labels, std::size_t k) {
  std::map<std::string, std::map<std::size_t, const Vector*>> text_rows, vis_rows;
  std::size_t dt = 0, dv = 0;
  for (const auto& d : docs) {
    text_rows[d.video_id][d.cluster_index] = &d.vector;
    dt = static_cast<std::size_t>(d.vector.size());
  }
  for (const auto& f : features) {
    vis_rows[f.video_id][f.cluster_index] = &f.vector;
    dv = static_cast<std::size_t>(f.vector.size());
  }
  std::vector<std::string> only_text, only_vis;
  for (const auto& [id, rows] : text_rows)
    if (!vis_rows.count(id)) only_text.push_back(id);
  for (const auto& [id, rows] : vis_rows)
    if (!text_rows.count(id)) only_vis.push_back(id);
  if (!only_text.empty() || !only_vis.empty()) {
    std::string msg = "views disagree on videos;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ... (" + std::to_string(ids.size()) + " total)";
      msg += ";";
    };
    list("textual only", only_text);
    list("visual only", only_vis);
    throw Error(ErrorKind::AlignmentError, msg);
  }

  std::vector<ViewSequence> out;
  out.reserve(text_rows.size());
  for (const auto& [id, trows] : text_rows) {
    const auto& vrows = vis_rows.at(id);
    for (const auto* rows : {&trows, &vrows})
      for (const auto& [ci, v] : *rows)
        if (ci >= k)
          throw Error(ErrorKind::AlignmentError,
                      id + ": cluster_index " + std::to_string(ci) + " exceeds K=" + std::to_string(k));
    ViewSequence s;
    s.video_id = id;
    s.textual = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dt));
    s.visual = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dv));
    s.textual_missing.assign(k, true);
    s.visual_missing.assign(k, true);
    for (const auto& [ci, v] : trows) {
      s.textual.row(static_cast<Eigen::Index>(ci)) = v->transpose();
      s.textual_missing[ci] = false;
    }
    for (const auto& [ci, v] : vrows) {
      s.visual.row(static_cast<Eigen::Index>(ci)) = v->transpose();
      s.visual_missing[ci] = false;
    }
    if (auto it = labels.find(id); it != labels.end()) s.label = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dcvdn::visual
