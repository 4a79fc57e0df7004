#pragma once

// Temporal burst clustering of danmu offsets: exact 1-D k-means by dynamic
// programming, per-cluster document aggregation and key-frame timestamps.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcvdn/corpus.hpp"
#include "dcvdn/error.hpp"

namespace dcvdn {

inline constexpr std::size_t kDefaultClusters = 10;

struct ClusterPartition {
  std::string video_id;
  std::vector<std::size_t> assignments;  // per offset, 0..k-1
  std::vector<double> centroids;         // mean offset; 0 for degenerate clusters
  std::vector<std::size_t> sizes;
  std::vector<bool> degenerate;
  double objective = 0.0;

  std::size_t k() const noexcept { return centroids.size(); }
};

struct DanmuDocument {
  std::string video_id;
  std::size_t cluster_index = 0;
  std::vector<std::string> tokens;
  double burst_point = 0.0;
  bool degenerate = false;

  std::string text() const { return join_tokens(tokens); }
};

/// Sum of squared distances to each cluster's mean, recomputed from assignments.
inline double partition_objective(const std::vector<double>& offsets, const std::vector<std::size_t>& assignments,
                                  std::size_t k) {
  std::vector<double> sum(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    sum[assignments[i]] += offsets[i];
    ++count[assignments[i]];
  }
  double obj = 0.0;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const std::size_t c = assignments[i];
    const double d = offsets[i] - sum[c] / static_cast<double>(count[c]);
    obj += d * d;
  }
  return obj;
}

/// Globally optimal contiguous k-partition of sorted offsets. Boundaries are
/// only placed between distinct values; when fewer than k distinct values
/// exist the trailing clusters are empty and flagged degenerate. Among
/// equal-objective partitions the lexicographically smallest boundary
/// vector wins.
inline ClusterPartition cluster_offsets(const std::vector<double>& offsets, std::size_t k,
                                        std::string video_id = {}) {
  if (offsets.empty()) throw Error(ErrorKind::EmptyInput, "cluster_offsets: no offsets");
  if (k == 0) throw Error(ErrorKind::InvalidInput, "cluster_offsets: k must be >= 1");
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (!std::isfinite(offsets[i])) throw Error(ErrorKind::InvalidInput, "cluster_offsets: non-finite offset");
    if (i && offsets[i] < offsets[i - 1]) throw Error(ErrorKind::InvalidInput, "cluster_offsets: offsets not sorted");
  }
  const std::size_t n = offsets.size();

  // Candidate cut positions: index i starts a new cluster iff offsets[i-1] < offsets[i].
  std::vector<bool> can_cut(n + 1, false);
  can_cut[0] = can_cut[n] = true;
  std::size_t distinct = 1;
  for (std::size_t i = 1; i < n; ++i)
    if (offsets[i - 1] < offsets[i]) {
      can_cut[i] = true;
      ++distinct;
    }
  const std::size_t active = std::min(k, distinct);

  // Prefix sums of centered values limit cancellation in sumsq - sum^2/n.
  double mean = 0.0;
  for (double x : offsets) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = offsets[i] - mean;
    s1[i + 1] = s1[i] + x;
    s2[i + 1] = s2[i] + x * x;
  }
  auto cost = [&](std::size_t a, std::size_t b) {  // segment [a, b)
    const double cnt = static_cast<double>(b - a);
    const double s = s1[b] - s1[a];
    return std::max(0.0, (s2[b] - s2[a]) - s * s / cnt);
  };

  // best[m][i]: minimal cost of splitting the suffix [i, n) into m clusters.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(active + 1, std::vector<double>(n + 1, inf));
  best[0][n] = 0.0;
  for (std::size_t m = 1; m <= active; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!can_cut[i]) continue;
      double b = inf;
      for (std::size_t j = i + 1; j <= n; ++j) {
        if (!can_cut[j] || best[m - 1][j] == inf) continue;
        b = std::min(b, cost(i, j) + best[m - 1][j]);
      }
      best[m][i] = b;
    }
  }

  ClusterPartition part;
  part.video_id = std::move(video_id);
  part.assignments.assign(n, 0);
  std::size_t start = 0;
  for (std::size_t m = active; m >= 1; --m) {
    const double target = best[m][start];
    const double tol = 1e-12 * std::max(1.0, std::abs(target));
    std::size_t chosen = n;
    for (std::size_t j = start + 1; j <= n; ++j) {
      if (!can_cut[j] || best[m - 1][j] == inf) continue;
      if (cost(start, j) + best[m - 1][j] <= target + tol) {
        chosen = j;
        break;
      }
    }
    const std::size_t cluster = active - m;
    for (std::size_t i = start; i < chosen; ++i) part.assignments[i] = cluster;
    start = chosen;
  }

  part.centroids.assign(k, 0.0);
  part.sizes.assign(k, 0);
  part.degenerate.assign(k, true);
  for (std::size_t i = 0; i < n; ++i) {
    part.centroids[part.assignments[i]] += offsets[i];
    ++part.sizes[part.assignments[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (part.sizes[c] == 0) continue;
    part.centroids[c] /= static_cast<double>(part.sizes[c]);
    part.degenerate[c] = false;
  }
  part.objective = partition_objective(offsets, part.assignments, k);
  return part;
}

/// Key-frame timestamps: centroids in cluster order; degenerate clusters
/// inherit the previous timestamp (0 for the first).
inline std::vector<double> burst_frame_times(const ClusterPartition& part) {
  std::vector<double> out(part.k(), 0.0);
  double prev = 0.0;
  for (std::size_t c = 0; c < part.k(); ++c) {
    out[c] = part.degenerate[c] ? prev : part.centroids[c];
    prev = out[c];
  }
  return out;
}

inline std::vector<DanmuDocument> aggregate_documents(const VideoRecord& video, const ClusterPartition& part) {
  if (video.video_id != part.video_id)
    throw Error(ErrorKind::InvalidInput,
                "aggregate_documents: partition for '" + part.video_id + "' applied to '" + video.video_id + "'");
  if (video.danmus.size() != part.assignments.size())
    throw Error(ErrorKind::InvalidInput, "aggregate_documents: assignment count differs from danmu count");
  const auto times = burst_frame_times(part);
  std::vector<DanmuDocument> docs(part.k());
  for (std::size_t c = 0; c < part.k(); ++c) {
    docs[c].video_id = video.video_id;
    docs[c].cluster_index = c;
    docs[c].burst_point = times[c];
    docs[c].degenerate = part.degenerate[c];
  }
  for (std::size_t i = 0; i < video.danmus.size(); ++i) {
    auto& doc = docs[part.assignments[i]];
    const auto& toks = video.danmus[i].tokens;
    doc.tokens.insert(doc.tokens.end(), toks.begin(), toks.end());
  }
  return docs;
}

/// Cluster every video into k documents (k per video, burst order).
inline std::vector<DanmuDocument> cluster_corpus(const std::vector<VideoRecord>& videos, std::size_t k) {
  std::vector<DanmuDocument> out;
  out.reserve(videos.size() * k);
  for (const auto& v : videos) {
    const auto part = cluster_offsets(v.offsets(), k, v.video_id);
    auto docs = aggregate_documents(v, part);
    for (auto& d : docs) out.push_back(std::move(d));
  }
  return out;
}

inline void write_clusters(std::ostream& out, const std::vector<DanmuDocument>& docs) {
  for (const auto& d : docs)
    out << "{\"video_id\":" << nlohmann::json(d.video_id).dump() << ",\"cluster_index\":" << d.cluster_index
        << ",\"burst_point\":" << format_float(d.burst_point) << ",\"text\":" << nlohmann::json(d.text()).dump()
        << "}\n";
}

/// Reads clusters.jsonl; output is ordered by (video_id, cluster_index).
inline std::vector<DanmuDocument> parse_clusters(std::istream& in) {
  std::map<std::pair<std::string, std::size_t>, DanmuDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto where = "clusters line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j.contains("cluster_index") || !j.contains("burst_point") ||
        !j.contains("text") || !j["video_id"].is_string() || !j["cluster_index"].is_number_unsigned() ||
        !j["burst_point"].is_number() || !j["text"].is_string())
      throw Error(ErrorKind::SchemaError, where + ": expected {video_id, cluster_index, burst_point, text}");
    DanmuDocument d;
    d.video_id = j["video_id"].get<std::string>();
    d.cluster_index = j["cluster_index"].get<std::size_t>();
    d.burst_point = j["burst_point"].get<double>();
    d.tokens = tokenize(j["text"].get<std::string>());
    d.degenerate = d.tokens.empty();
    docs.insert_or_assign({d.video_id, d.cluster_index}, std::move(d));
  }
  std::vector<DanmuDocument> out;
  out.reserve(docs.size());
  for (auto& [key, d] : docs) out.push_back(std::move(d));
  return out;
}

}  // namespace dcvdn
