#pragma once

// Planted-signal corpus generator.
//
// Video i gets label i mod 7, so the class histogram is balanced within one.
// Every video has `bursts` centres drawn uniformly in [0, duration); each
// danmu picks a centre uniformly and lands at centre + N(0, spread_c) with
// spread_c = base_spread * (1 + c / 2), clipped to [0, duration]. That is the
// class-conditioned timing.
//
// Each danmu has between min_tokens and max_tokens tokens. A token is drawn
// from, in order of the cumulative probabilities:
//   p_lexicon     one of the class's lexicon tokens   ("lex_<class>_<j>")
//   p_slang       one of the class's slang tokens     ("slang_<class>_<j>"),
//                 not in the lexicon; eLDA has to learn their emotion
//   p_confuse     a lexicon or slang token of a uniformly chosen other class
//   otherwise     a generic token "w<j>", j uniform over the generic vocabulary
//
// The visual signal is added later by visual::synth_features with a class
// mean shift; nothing about it is stored here.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dcvdn/corpus.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/numkit.hpp"

namespace dcvdn::synth {

struct CorpusOptions {
  std::size_t num_videos = 70;
  std::size_t danmus_per_video = 60;
  std::uint64_t seed = 7;
  double duration = 600.0;
  std::size_t bursts = 10;
  double base_spread = 4.0;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  std::size_t lexicon_per_class = 6;
  std::size_t slang_per_class = 6;
  std::size_t generic_vocab = 200;
  // Sparse enough that no single view saturates the classifier and the
  // emotion-aware embedding has room to beat plain skip-gram.
  double p_lexicon = 0.05;
  double p_slang = 0.05;
  double p_confuse = 0.05;
};

struct Corpus {
  std::vector<VideoRecord> videos;  // ordered by video_id
  LabelMap labels;
  EmotionLexicon lexicon;
};

inline std::string video_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "v%04zu", i);
  return buf;
}

inline std::string lexicon_token(std::size_t cls, std::size_t j) {
  return "lex_" + std::string(kEmotionNames[cls]) + "_" + std::to_string(j);
}

inline std::string slang_token(std::size_t cls, std::size_t j) { return "slang_" + std::to_string(cls) + "_" + std::to_string(j); }

inline Corpus generate(const CorpusOptions& opt) {
  if (opt.num_videos < 2 * kNumEmotions)
    throw Error(ErrorKind::InvalidInput, "synth: need at least 14 videos (two per class)");
  if (opt.danmus_per_video == 0 || opt.min_tokens == 0 || opt.max_tokens < opt.min_tokens || opt.bursts == 0)
    throw Error(ErrorKind::InvalidInput, "synth: invalid size options");
  if (opt.p_lexicon + opt.p_slang + opt.p_confuse > 1.0)
    throw Error(ErrorKind::InvalidInput, "synth: token probabilities exceed 1");

  Corpus out;
  for (std::size_t c = 0; c < kNumEmotions; ++c)
    for (std::size_t j = 0; j < opt.lexicon_per_class; ++j) out.lexicon.insert(lexicon_token(c, j), static_cast<Emotion>(c));

  const SeededRng root = SeededRng(opt.seed).derive("synth-corpus");
  for (std::size_t i = 0; i < opt.num_videos; ++i) {
    const std::size_t cls = i % kNumEmotions;
    SeededRng rng = root.derive(static_cast<std::uint64_t>(i));
    VideoRecord v;
    v.video_id = video_name(i);
    v.duration = opt.duration;
    v.label = static_cast<Emotion>(cls);
    out.labels[v.video_id] = static_cast<Emotion>(cls);

    std::vector<double> centres(opt.bursts);
    for (auto& c : centres) c = rng.uniform(0.0, opt.duration);
    const double spread = opt.base_spread * (1.0 + static_cast<double>(cls) / 2.0);

    for (std::size_t d = 0; d < opt.danmus_per_video; ++d) {
      DanmuEvent ev;
      ev.video_id = v.video_id;
      const double centre = centres[rng.below(opt.bursts)];
      ev.offset = std::clamp(centre + spread * rng.normal(), 0.0, opt.duration);
      // Offsets are stored with 6 decimals; round now so a reload is identical.
      ev.offset = std::round(ev.offset * 1e6) / 1e6;
      const std::size_t n = opt.min_tokens + rng.below(opt.max_tokens - opt.min_tokens + 1);
      for (std::size_t t = 0; t < n; ++t) {
        const double u = rng.uniform();
        if (u < opt.p_lexicon) {
          ev.tokens.push_back(lexicon_token(cls, rng.below(opt.lexicon_per_class)));
        } else if (u < opt.p_lexicon + opt.p_slang) {
          ev.tokens.push_back(slang_token(cls, rng.below(opt.slang_per_class)));
        } else if (u < opt.p_lexicon + opt.p_slang + opt.p_confuse) {
          std::size_t other = rng.below(kNumEmotions - 1);
          if (other >= cls) ++other;
          if (rng.uniform() < 0.5)
            ev.tokens.push_back(lexicon_token(other, rng.below(opt.lexicon_per_class)));
          else
            ev.tokens.push_back(slang_token(other, rng.below(opt.slang_per_class)));
        } else {
          ev.tokens.push_back("w" + std::to_string(rng.below(opt.generic_vocab)));
        }
      }
      v.danmus.push_back(std::move(ev));
    }
    std::stable_sort(v.danmus.begin(), v.danmus.end(),
                     [](const DanmuEvent& a, const DanmuEvent& b) { return a.offset < b.offset; });
    out.videos.push_back(std::move(v));
  }
  return out;
}

/// Writes danmus.jsonl, labels.csv and lexicon.csv into `dir`.
inline void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("danmus.jsonl");
    write_danmus(f, corpus.videos);
  }
  {
    auto f = open("labels.csv");
    write_labels(f, corpus.labels);
  }
  {
    auto f = open("lexicon.csv");
    write_lexicon(f, corpus.lexicon);
  }
}

}  // namespace dcvdn::synth
