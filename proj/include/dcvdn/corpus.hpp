#pragma once

// Data model and file ingestion: danmus (JSON-lines), emotion lexicon and
// video labels (header-less CSV).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dcvdn/error.hpp"

namespace dcvdn {

inline constexpr std::size_t kNumEmotions = 7;

enum class Emotion : int { happy = 0, love, anger, sad, fear, disgust, surprise };

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "happy", "love", "anger", "sad", "fear", "disgust", "surprise"};

inline std::string_view emotion_name(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

inline std::optional<Emotion> parse_emotion(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kNumEmotions; ++i)
    if (kEmotionNames[i] == lower) return static_cast<Emotion>(i);
  return std::nullopt;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

struct DanmuEvent {
  std::string video_id;
  double offset = 0.0;
  std::vector<std::string> tokens;

  std::string text() const { return join_tokens(tokens); }
};

struct VideoRecord {
  std::string video_id;
  double duration = 0.0;
  std::optional<Emotion> label;
  std::vector<DanmuEvent> danmus;  // sorted by offset

  std::vector<double> offsets() const {
    std::vector<double> out;
    out.reserve(danmus.size());
    for (const auto& d : danmus) out.push_back(d.offset);
    return out;
  }
};

struct EmotionLexicon {
  std::map<std::string, Emotion> entries;
  std::array<std::size_t, kNumEmotions> class_counts{};

  std::optional<Emotion> lookup(const std::string& token) const {
    auto it = entries.find(token);
    if (it == entries.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return entries.size(); }

  void insert(const std::string& token, Emotion e) {
    entries.insert_or_assign(token, e);
    class_counts.fill(0);
    for (const auto& [tok, emo] : entries) ++class_counts[static_cast<std::size_t>(emo)];
  }
};

struct LexiconLoad {
  EmotionLexicon lexicon;
  std::size_t duplicate_warnings = 0;
};

using LabelMap = std::map<std::string, Emotion>;

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return in;
}

/// Splits `key,emotion` at the last comma so keys may contain commas (emoticons).
inline std::pair<std::string, Emotion> parse_csv_pair(const std::string& line, std::size_t line_no,
                                                      std::string_view what) {
  const auto comma = line.rfind(',');
  if (comma == std::string::npos)
    throw Error(ErrorKind::ParseError, std::string(what) + " line " + std::to_string(line_no) + ": missing comma");
  std::string key = trim(std::string_view(line).substr(0, comma));
  std::string name = trim(std::string_view(line).substr(comma + 1));
  if (key.empty())
    throw Error(ErrorKind::ParseError, std::string(what) + " line " + std::to_string(line_no) + ": empty key");
  auto emo = parse_emotion(name);
  if (!emo)
    throw Error(ErrorKind::ParseError,
                std::string(what) + " line " + std::to_string(line_no) + ": unknown emotion '" + name + "'");
  return {key, *emo};
}

}  // namespace detail

/// Canonical 6-decimal rendering used by every text output.
inline std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::vector<VideoRecord> parse_danmus(std::istream& in) {
  std::map<std::string, VideoRecord> videos;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto where = "danmus line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j.contains("offset") || !j.contains("text") ||
        !j["video_id"].is_string() || !j["offset"].is_number() || !j["text"].is_string())
      throw Error(ErrorKind::ParseError, where + ": expected {video_id: str, offset: number, text: str}");
    DanmuEvent ev;
    ev.video_id = j["video_id"].get<std::string>();
    ev.offset = j["offset"].get<double>();
    ev.tokens = tokenize(j["text"].get<std::string>());
    if (!std::isfinite(ev.offset)) throw Error(ErrorKind::InvalidInput, where + ": non-finite offset");
    if (ev.offset < 0.0) throw Error(ErrorKind::InvalidInput, where + ": negative offset");
    if (ev.tokens.empty()) throw Error(ErrorKind::ParseError, where + ": empty text");
    auto& video = videos[ev.video_id];
    video.video_id = ev.video_id;
    if (j.contains("duration") && j["duration"].is_number())
      video.duration = std::max(video.duration, j["duration"].get<double>());
    video.danmus.push_back(std::move(ev));
  }
  std::vector<VideoRecord> out;
  out.reserve(videos.size());
  for (auto& [id, video] : videos) {
    std::stable_sort(video.danmus.begin(), video.danmus.end(),
                     [](const DanmuEvent& a, const DanmuEvent& b) { return a.offset < b.offset; });
    video.duration = std::max(video.duration, video.danmus.back().offset);
    out.push_back(std::move(video));
  }
  return out;
}

inline std::vector<VideoRecord> load_danmus(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_danmus(in);
}

/// Canonical form: videos in id order, danmus in offset order, 6-decimal offsets.
inline void write_danmus(std::ostream& out, const std::vector<VideoRecord>& videos) {
  for (const auto& v : videos)
    for (const auto& d : v.danmus)
      out << "{\"video_id\":" << nlohmann::json(d.video_id).dump() << ",\"offset\":" << format_float(d.offset)
          << ",\"text\":" << nlohmann::json(d.text()).dump() << "}\n";
}

inline LexiconLoad parse_lexicon(std::istream& in) {
  LexiconLoad out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto [token, emo] = detail::parse_csv_pair(line, line_no, "lexicon");
    if (out.lexicon.entries.count(token)) ++out.duplicate_warnings;
    out.lexicon.entries.insert_or_assign(token, emo);
  }
  out.lexicon.class_counts.fill(0);
  for (const auto& [tok, emo] : out.lexicon.entries) ++out.lexicon.class_counts[static_cast<std::size_t>(emo)];
  return out;
}

inline LexiconLoad load_lexicon(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_lexicon(in);
}

inline void write_lexicon(std::ostream& out, const EmotionLexicon& lex) {
  for (const auto& [tok, emo] : lex.entries) out << tok << ',' << emotion_name(emo) << '\n';
}

inline LabelMap parse_labels(std::istream& in) {
  LabelMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto [id, emo] = detail::parse_csv_pair(line, line_no, "labels");
    out.insert_or_assign(id, emo);
  }
  return out;
}

inline LabelMap load_labels(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_labels(in);
}

inline void write_labels(std::ostream& out, const LabelMap& labels) {
  for (const auto& [id, emo] : labels) out << id << ',' << emotion_name(emo) << '\n';
}

inline std::array<std::size_t, kNumEmotions> class_histogram(const LabelMap& labels) {
  std::array<std::size_t, kNumEmotions> h{};
  for (const auto& [id, emo] : labels) ++h[static_cast<std::size_t>(emo)];
  return h;
}

inline void attach_labels(std::vector<VideoRecord>& videos, const LabelMap& labels) {
  for (auto& v : videos) {
    auto it = labels.find(v.video_id);
    v.label = it == labels.end() ? std::nullopt : std::optional<Emotion>(it->second);
  }
}

}  // namespace dcvdn
