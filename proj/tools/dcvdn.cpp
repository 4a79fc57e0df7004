// dcvdn: command-line front end for the burst/eLDA/EWE/DCCAE/LSTM pipeline.
//
//   dcvdn synth --out data
//   dcvdn run --danmus data/danmus.jsonl --labels data/labels.csv \
//             --lexicon data/lexicon.csv --synth-features --out-dir out
//
// Every config key is also a flag (underscores become dashes); flags win
// over --config. Exit codes: 0 ok, 2 validation error, 1 runtime error.

#include <algorithm>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dcvdn/pipeline.hpp"
#include "dcvdn/synth.hpp"

namespace {

using dcvdn::pipeline::PipelineConfig;

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

struct ConfigFlags {
  std::string config_path;
  bool synth_features = false;
  std::map<std::string, std::string> overrides;  // key -> raw value

  void attach(CLI::App& sub) {
    sub.add_option("--config", config_path, "flat JSON config file");
    sub.add_flag("--synth-features", synth_features, "generate class-conditioned synthetic visual features");
    PipelineConfig defaults;
    for (const auto& b : dcvdn::pipeline::bindings(defaults)) {
      if (b.key == "synth_features") continue;
      const std::string key = b.key;
      sub.add_option_function<std::string>(
          flag_name(key), [this, key](const std::string& v) { overrides[key] = v; }, "config key " + key);
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : dcvdn::pipeline::load_config(config_path);
    for (const auto& [k, v] : overrides) dcvdn::pipeline::set_override(cfg, k, v);
    if (synth_features) cfg.synth_features = true;
    dcvdn::pipeline::validate(cfg);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-textual emotion pipeline over danmu-commented videos"};
  app.require_subcommand(1);

  namespace pl = dcvdn::pipeline;
  const pl::StageLog log{&std::cerr};

  struct Command {
    const char* name;
    const char* help;
    std::function<void(const PipelineConfig&)> run;
  };
  const std::vector<Command> commands = {
      {"cluster", "burst clustering: danmus -> clusters.jsonl", [&](const auto& c) { pl::stage_cluster(c, log); }},
      {"elda", "emotion LDA + re-clustering -> elda_model.bin", [&](const auto& c) { pl::stage_elda(c, log); }},
      {"ewe", "emotional word embeddings -> ewe_model.bin", [&](const auto& c) { pl::stage_ewe(c, log); }},
      {"embed-docs", "document embeddings -> doc_embeddings.jsonl",
       [&](const auto& c) { pl::stage_embed_docs(c, log); }},
      {"align", "validate view alignment (writes synthetic features if requested)",
       [&](const auto& c) { pl::stage_align(c, log); }},
      {"dccae", "multi-view fusion -> dccae_model.bin, fused.jsonl", [&](const auto& c) { pl::stage_dccae(c, log); }},
      {"classify", "train the dual-LSTM classifier -> classifier_model.bin",
       [&](const auto& c) { pl::stage_classify(c, log); }},
      {"eval", "test-split metrics -> metrics.json",
       [&](const auto& c) { std::cout << pl::stage_eval(c, log).dump(2) << '\n'; }},
      {"predict", "predictions for every fused video -> predictions.jsonl",
       [&](const auto& c) { pl::stage_predict(c, log); }},
      {"run", "all stages in order", [&](const auto& c) { std::cout << pl::run_pipeline(c, log).dump(2) << '\n'; }},
  };

  std::vector<ConfigFlags> flags(commands.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    auto* sub = app.add_subcommand(commands[i].name, commands[i].help);
    flags[i].attach(*sub);
    subs.push_back(sub);
  }

  dcvdn::synth::CorpusOptions synth_opt;
  std::string synth_out = "data";
  auto* synth = app.add_subcommand("synth", "generate a planted-signal corpus (danmus, labels, lexicon)");
  synth->add_option("--num-videos", synth_opt.num_videos, "number of videos (>= 14)");
  synth->add_option("--danmus-per-video", synth_opt.danmus_per_video, "danmus per video");
  synth->add_option("--seed", synth_opt.seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      const auto corpus = dcvdn::synth::generate(synth_opt);
      dcvdn::synth::write_corpus(corpus, synth_out);
      std::cerr << "synth: " << corpus.videos.size() << " videos written to " << synth_out << '\n';
      return 0;
    }
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const auto cfg = flags[i].resolve();
      commands[i].run(cfg);
    }
  } catch (const dcvdn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
