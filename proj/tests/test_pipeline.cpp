#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dcvdn/pipeline.hpp"
#include "dcvdn/synth.hpp"

using namespace dcvdn;
namespace pl = dcvdn::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dcvdn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// A corpus and configuration small enough to run every stage in a few seconds.
pl::PipelineConfig small_run(const fs::path& dir) {
  synth::CorpusOptions opt;
  opt.num_videos = 35;
  opt.danmus_per_video = 24;
  synth::write_corpus(synth::generate(opt), dir / "data");
  pl::PipelineConfig cfg;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"k", "4"}, {"elda_iters", "40"}, {"elda_burn_in", "20"}, {"elda_lag", "5"}, {"elda_ke", "5"},
           {"ewe_dim", "8"}, {"ewe_epochs", "1"}, {"dccae_hidden", "6"}, {"dccae_L", "2"}, {"dccae_batch", "70"},
           {"dccae_epochs", "2"}, {"clf_hidden", "4"}, {"clf_epochs", "5"}, {"visual_dim", "16"},
           {"synth_features", "true"}})
    pl::set_override(cfg, k, v);
  cfg.danmus = (dir / "data" / "danmus.jsonl").string();
  cfg.labels = (dir / "data" / "labels.csv").string();
  cfg.lexicon = (dir / "data" / "lexicon.csv").string();
  cfg.out_dir = (dir / "out").string();
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DCVDN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  pl::PipelineConfig cfg;
  pl::set_override(cfg, "dccae_L", "16");
  pl::set_override(cfg, "clf_mode", "visual");
  pl::set_override(cfg, "elda_alpha", "0.3");
  pl::set_override(cfg, "out_dir", "elsewhere");
  pl::PipelineConfig back;
  pl::apply_json(back, pl::to_json(cfg));
  EXPECT_EQ(pl::to_json(back), pl::to_json(cfg));
  EXPECT_EQ(back.dccae.L, 16u);
  EXPECT_EQ(back.clf.mode, classifier::ViewMode::visual);
  EXPECT_EQ(back.out_dir, "elsewhere");
  pl::set_override(back, "elda_alpha", "auto");
  EXPECT_FALSE(back.elda.alpha.has_value());
}

TEST(Config, UnknownKeyAndWrongType) {
  pl::PipelineConfig cfg;
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{{"nope", "1"}, {"k", "\"ten\""}, {"k", "-3"},
                                                                       {"synth_features", "2"}, {"clf_mode", "audio"}}) {
    try {
      pl::set_override(cfg, k, v);
      FAIL() << k << "=" << v;
    } catch (const Error& e) {
      EXPECT_TRUE(e.is_validation()) << k << "=" << v;
    }
  }
}

TEST(Config, ValidateRejectsInconsistentSizes) {
  pl::PipelineConfig cfg;
  cfg.dccae.L = cfg.dccae.hidden + 1;
  EXPECT_THROW(pl::validate(cfg), Error);
  cfg = {};
  cfg.k = 0;
  EXPECT_THROW(pl::validate(cfg), Error);
  EXPECT_NO_THROW(pl::validate(pl::PipelineConfig{}));
}

TEST(Synth, DeterministicAndBalanced) {
  const auto a = synth::generate({}), b = synth::generate({});
  ASSERT_EQ(a.videos.size(), 70u);
  std::ostringstream sa, sb;
  write_danmus(sa, a.videos);
  write_danmus(sb, b.videos);
  EXPECT_EQ(sa.str(), sb.str());
  for (auto n : class_histogram(a.labels)) EXPECT_EQ(n, 10u);
}

TEST(Synth, MajorityBaselineNearChance) {
  const auto c = synth::generate({});
  const auto h = class_histogram(c.labels);
  const double majority = static_cast<double>(*std::max_element(h.begin(), h.end())) / 70.0;
  EXPECT_NEAR(majority, 1.0 / 7.0, 0.03);
}

TEST(Synth, PlantedTokensAndTiming) {
  const auto c = synth::generate({});
  std::array<double, kNumEmotions> own{}, other{}, spread{};
  for (const auto& v : c.videos) {
    const auto cls = static_cast<std::size_t>(*v.label);
    for (const auto& d : v.danmus)
      for (const auto& t : d.tokens)
        if (auto e = c.lexicon.lookup(t)) (static_cast<std::size_t>(*e) == cls ? own : other)[cls] += 1.0;
    // Gap-based dispersion: the median gap between consecutive sorted offsets grows with the spread.
    std::vector<double> gaps;
    for (std::size_t i = 1; i < v.danmus.size(); ++i) gaps.push_back(v.danmus[i].offset - v.danmus[i - 1].offset);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    spread[cls] += gaps[gaps.size() / 2];
  }
  for (std::size_t cls = 0; cls < kNumEmotions; ++cls) EXPECT_GT(own[cls], 3.0 * other[cls] / 6.0) << cls;
  EXPECT_GT(spread[6], spread[0]);
}

TEST(Synth, RejectsBadOptions) {
  synth::CorpusOptions o;
  o.num_videos = 13;
  EXPECT_THROW(synth::generate(o), Error);
  o = {};
  o.p_lexicon = 0.6;
  o.p_slang = 0.6;
  EXPECT_THROW(synth::generate(o), Error);
}

TEST(Synth, WrittenFilesParseBack) {
  const auto dir = scratch("synth_files");
  synth::CorpusOptions o;
  o.num_videos = 14;
  o.danmus_per_video = 5;
  const auto c = synth::generate(o);
  synth::write_corpus(c, dir);
  EXPECT_EQ(load_danmus((dir / "danmus.jsonl").string()).size(), 14u);
  EXPECT_EQ(load_labels((dir / "labels.csv").string()), c.labels);
  EXPECT_EQ(load_lexicon((dir / "lexicon.csv").string()).lexicon.size(), c.lexicon.size());
  fs::remove_all(dir);
}

TEST(Pipeline, PermutedLabelsKeepTheHistogram) {
  pl::PipelineConfig cfg;
  cfg.permute_labels = true;
  const auto labels = synth::generate({}).labels;
  const auto permuted = pl::effective_labels(cfg, labels);
  EXPECT_EQ(class_histogram(permuted), class_histogram(labels));
  EXPECT_NE(permuted, labels);
  EXPECT_EQ(pl::effective_labels(cfg, labels), permuted);
  cfg.permute_labels = false;
  EXPECT_EQ(pl::effective_labels(cfg, labels), labels);
}

TEST(Pipeline, AlignWithoutFeaturesIsAlignmentError) {
  const auto dir = scratch("align");
  auto cfg = small_run(dir);
  cfg.synth_features = false;
  cfg.features = (dir / "missing.jsonl").string();
  try {
    pl::run_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AlignmentError);
    EXPECT_NE(std::string(e.what()).find("stage align"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Pipeline, RunsAreBitIdentical) {
  const auto d1 = scratch("run1"), d2 = scratch("run2");
  const auto m1 = pl::run_pipeline(small_run(d1));
  const auto m2 = pl::run_pipeline(small_run(d2));
  EXPECT_EQ(m1, m2);
  for (const char* f : {pl::kEldaFile, pl::kEweFile, pl::kDccaeFile, pl::kClassifierFile, pl::kMetricsFile,
                        pl::kPredictionsFile, pl::kFusedFile, pl::kSplitFile}) {
    const auto a = slurp(d1 / "out" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(d2 / "out" / f)) << f;
  }
  const auto metrics = nlohmann::json::parse(slurp(d1 / "out" / pl::kMetricsFile));
  EXPECT_TRUE(metrics.contains("majority_baseline_accuracy"));
  EXPECT_EQ(metrics["confusion"].size(), 7u);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const std::string d = dir.string();
  ASSERT_EQ(run_cli("synth --num-videos 35 --danmus-per-video 24 --out " + d + "/data"), 0);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"k": 4, "elda_iters": 40, "elda_burn_in": 20, "elda_lag": 5, "elda_ke": 5, "ewe_dim": 8,
              "ewe_epochs": 1, "dccae_hidden": 6, "dccae_L": 2, "dccae_batch": 70, "dccae_epochs": 2,
              "clf_hidden": 4, "clf_epochs": 5, "visual_dim": 16})";
  }
  const std::string common = " --config " + d + "/config.json --danmus " + d + "/data/danmus.jsonl --labels " + d +
                             "/data/labels.csv --lexicon " + d + "/data/lexicon.csv --out-dir " + d + "/out";
  EXPECT_EQ(run_cli("run" + common + " --synth-features"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "metrics.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "predictions.jsonl"));
  EXPECT_EQ(run_cli("eval" + common), 0);
  EXPECT_EQ(run_cli("run" + common + " --features " + d + "/none.jsonl"), 2);
  EXPECT_EQ(run_cli("run" + common + " --no-such-flag"), 2);
  EXPECT_EQ(run_cli("run" + common + " --dccae-L 99"), 2);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"mystery": 1})";
  }
  EXPECT_EQ(run_cli("run --config " + d + "/bad.json"), 2);
  fs::remove_all(dir);
}
