#pragma once

// Stage-wise pipeline: cluster -> elda -> ewe -> embed-docs -> align -> dccae
// -> classify -> eval (-> predict). Every stage reads its inputs from files and
// writes its outputs into cfg.out_dir, so stages can be rerun individually.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dcvdn/burst.hpp"
#include "dcvdn/classifier.hpp"
#include "dcvdn/corpus.hpp"
#include "dcvdn/dccae.hpp"
#include "dcvdn/elda.hpp"
#include "dcvdn/error.hpp"
#include "dcvdn/ewe.hpp"
#include "dcvdn/visual.hpp"

namespace dcvdn::pipeline {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t k = kDefaultClusters;
  elda::EldaConfig elda{};
  ewe::EweConfig ewe{};
  dccae::DccaeConfig dccae{};
  classifier::ClassifierConfig clf{};

  bool synth_features = false;
  std::size_t visual_dim = visual::kFeatureDim;
  double synth_visual_shift = 1.0;
  double synth_visual_noise = 1.0;
  bool permute_labels = false;  // label-permutation control for classify/eval

  std::string danmus = "danmus.jsonl";
  std::string labels = "labels.csv";
  std::string lexicon = "lexicon.csv";
  std::string features = "features.jsonl";
  std::string out_dir = "out";

  fs::path out(const char* name) const { return fs::path(out_dir) / name; }
  SeededRng stage_rng(std::string_view stage) const { return SeededRng(seed).derive(stage); }
};

// ---------------------------------------------------------------------------
// flat JSON config

// Counts and the seed share one slot type; both are 64-bit unsigned here.
static_assert(std::is_same_v<std::uint64_t, std::size_t>, "config slots assume a 64-bit size_t");
using Slot = std::variant<std::size_t*, double*, bool*, std::string*, std::optional<double>*, classifier::ViewMode*>;

struct Binding {
  std::string key;
  Slot slot;
};

inline std::vector<Binding> bindings(PipelineConfig& c) {
  return {
      {"seed", &c.seed},
      {"k", &c.k},
      {"elda_num_emotions", &c.elda.num_emotions},
      {"elda_alpha", &c.elda.alpha},
      {"elda_beta", &c.elda.beta},
      {"elda_iters", &c.elda.gibbs_iters},
      {"elda_burn_in", &c.elda.burn_in},
      {"elda_lag", &c.elda.sample_lag},
      {"elda_ke", &c.elda.ke},
      {"elda_per_type", &c.elda.per_type},
      {"ewe_dim", &c.ewe.dim},
      {"ewe_window", &c.ewe.window},
      {"ewe_negatives", &c.ewe.negatives},
      {"ewe_epochs", &c.ewe.epochs},
      {"ewe_lr", &c.ewe.lr},
      {"ewe_min_lr", &c.ewe.min_lr},
      {"ewe_min_count", &c.ewe.min_count},
      {"ewe_emotion_term", &c.ewe.emotion_term},
      {"dccae_hidden", &c.dccae.hidden},
      {"dccae_L", &c.dccae.L},
      {"dccae_lambda", &c.dccae.lambda},
      {"dccae_ridge", &c.dccae.ridge},
      {"dccae_abs_recon", &c.dccae.abs_recon},
      {"dccae_linear_encoders", &c.dccae.linear_encoders},
      {"dccae_batch", &c.dccae.batch},
      {"dccae_epochs", &c.dccae.epochs},
      {"dccae_lr", &c.dccae.adam.lr},
      {"clf_hidden", &c.clf.hidden},
      {"clf_epochs", &c.clf.epochs},
      {"clf_patience", &c.clf.patience},
      {"clf_batch", &c.clf.batch},
      {"clf_lr", &c.clf.adam.lr},
      {"clf_mode", &c.clf.mode},
      {"synth_features", &c.synth_features},
      {"visual_dim", &c.visual_dim},
      {"synth_visual_shift", &c.synth_visual_shift},
      {"synth_visual_noise", &c.synth_visual_noise},
      {"permute_labels", &c.permute_labels},
      {"danmus", &c.danmus},
      {"labels", &c.labels},
      {"lexicon", &c.lexicon},
      {"features", &c.features},
      {"out_dir", &c.out_dir},
  };
}

inline std::string_view view_mode_name(classifier::ViewMode m) {
  switch (m) {
    case classifier::ViewMode::textual: return "textual";
    case classifier::ViewMode::visual: return "visual";
    default: return "both";
  }
}

inline classifier::ViewMode parse_view_mode(const std::string& s) {
  if (s == "both") return classifier::ViewMode::both;
  if (s == "textual") return classifier::ViewMode::textual;
  if (s == "visual") return classifier::ViewMode::visual;
  throw Error(ErrorKind::InvalidInput, "unknown view mode '" + s + "' (both, textual, visual)");
}

inline nlohmann::json to_json(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  nlohmann::json j = nlohmann::json::object();
  for (auto& b : bindings(c)) {
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::optional<double>>)
            j[b.key] = *p ? nlohmann::json(**p) : nlohmann::json(nullptr);
          else if constexpr (std::is_same_v<T, classifier::ViewMode>)
            j[b.key] = std::string(view_mode_name(*p));
          else
            j[b.key] = *p;
        },
        b.slot);
  }
  return j;
}

/// Applies the keys of a flat JSON object; unknown keys and wrong types are
/// SchemaErrors.
inline void apply_json(PipelineConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaError, "config: expected a flat JSON object");
  auto binds = bindings(cfg);
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(binds.begin(), binds.end(), [&](const Binding& b) { return b.key == key; });
    if (it == binds.end()) throw Error(ErrorKind::SchemaError, "config: unknown key '" + key + "'");
    const auto bad = [&](const char* want) {
      return Error(ErrorKind::SchemaError, "config: key '" + key + "' expects " + want);
    };
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) throw bad("a boolean");
            *p = value.get<bool>();
          } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) throw bad("a string");
            *p = value.get<std::string>();
          } else if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw bad("a number");
            *p = value.get<double>();
          } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (value.is_null()) *p = std::nullopt;
            else if (value.is_number()) *p = value.get<double>();
            else throw bad("a number or null");
          } else if constexpr (std::is_same_v<T, classifier::ViewMode>) {
            if (!value.is_string()) throw bad("a string");
            *p = parse_view_mode(value.get<std::string>());
          } else {
            if (!value.is_number_unsigned()) throw bad("a non-negative integer");
            *p = value.get<T>();
          }
        },
        it->slot);
  }
}


/// Command-line override for one key; the string is read as JSON except for
/// string-valued keys, which take it verbatim.
inline void set_override(PipelineConfig& cfg, const std::string& key, const std::string& text) {
  auto binds = bindings(cfg);
  auto it = std::find_if(binds.begin(), binds.end(), [&](const Binding& b) { return b.key == key; });
  if (it == binds.end()) throw Error(ErrorKind::SchemaError, "config: unknown key '" + key + "'");
  nlohmann::json value;
  if (std::holds_alternative<std::string*>(it->slot) || std::holds_alternative<classifier::ViewMode*>(it->slot)) {
    value = text;
  } else if (text == "auto") {
    value = nullptr;
  } else {
    try {
      value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      throw Error(ErrorKind::SchemaError, "config: cannot read '" + text + "' for key '" + key + "'");
    }
  }
  apply_json(cfg, nlohmann::json{{key, value}});
}

inline PipelineConfig load_config(const std::string& path) {
  auto in = dcvdn::detail::open_input(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  PipelineConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

inline void validate(const PipelineConfig& cfg) {
  if (cfg.k == 0) throw Error(ErrorKind::InvalidInput, "config: k must be >= 1");
  cfg.elda.validate();
  cfg.ewe.validate();
  if (cfg.dccae.L == 0 || cfg.dccae.L > cfg.dccae.hidden)
    throw Error(ErrorKind::InvalidInput, "config: dccae_L must lie in [1, dccae_hidden]");
  if (cfg.clf.hidden == 0) throw Error(ErrorKind::InvalidInput, "config: clf_hidden must be >= 1");
  if (cfg.visual_dim == 0) throw Error(ErrorKind::InvalidInput, "config: visual_dim must be >= 1");
}

// ---------------------------------------------------------------------------
// file helpers

inline constexpr const char* kClustersFile = "clusters.jsonl";
inline constexpr const char* kEldaFile = "elda_model.bin";
inline constexpr const char* kEweFile = "ewe_model.bin";
inline constexpr const char* kDocEmbeddingsFile = "doc_embeddings.jsonl";
inline constexpr const char* kSynthFeaturesFile = "features.jsonl";
inline constexpr const char* kDccaeFile = "dccae_model.bin";
inline constexpr const char* kFusedFile = "fused.jsonl";
inline constexpr const char* kClassifierFile = "classifier_model.bin";
inline constexpr const char* kSplitFile = "split.json";
inline constexpr const char* kHistoryFile = "history.json";
inline constexpr const char* kMetricsFile = "metrics.json";
inline constexpr const char* kPredictionsFile = "predictions.jsonl";

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  return f;
}

inline std::vector<DanmuDocument> read_clusters(const fs::path& path) {
  auto in = dcvdn::detail::open_input(path.string());
  return parse_clusters(in);
}

inline std::vector<ewe::DocEmbedding> read_doc_embeddings(const fs::path& path) {
  auto in = dcvdn::detail::open_input(path.string());
  return ewe::parse_doc_embeddings(in);
}

/// Labels as seen by classify/eval: with permute_labels, the label vector
/// (in video_id order) is shuffled by a seed-derived permutation.
inline LabelMap effective_labels(const PipelineConfig& cfg, const LabelMap& labels) {
  if (!cfg.permute_labels) return labels;
  std::vector<Emotion> values;
  for (const auto& [id, e] : labels) values.push_back(e);
  SeededRng rng = cfg.stage_rng("permute-labels");
  rng.shuffle(values);
  LabelMap out;
  std::size_t i = 0;
  for (const auto& [id, e] : labels) out[id] = values[i++];
  return out;
}

inline std::vector<classifier::Example> read_fused(const PipelineConfig& cfg, const LabelMap& labels) {
  auto in = dcvdn::detail::open_input(cfg.out(kFusedFile).string());
  return dccae::parse_fused(in, labels);
}

// ---------------------------------------------------------------------------
// stages

struct StageLog {
  std::ostream* out = nullptr;
  template <typename... A>
  void operator()(const A&... parts) const {
    if (!out) return;
    ((*out << parts), ...);
    *out << '\n';
  }
};

inline void stage_cluster(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto videos = load_danmus(cfg.danmus);
  if (videos.empty()) throw Error(ErrorKind::EmptyInput, "no danmus in " + cfg.danmus);
  const auto docs = cluster_corpus(videos, cfg.k);
  auto f = open_output(cfg.out(kClustersFile));
  write_clusters(f, docs);
  log("cluster: ", videos.size(), " videos -> ", docs.size(), " documents");
}

inline elda::EldaModel stage_elda(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto docs = read_clusters(cfg.out(kClustersFile));
  const auto lex = load_lexicon(cfg.lexicon);
  if (lex.duplicate_warnings) log("elda: warning: ", lex.duplicate_warnings, " duplicate lexicon tokens (last wins)");
  SeededRng rng = cfg.stage_rng("elda");
  const auto post = elda::gibbs_train(docs, lex.lexicon, cfg.elda, rng);
  SeededRng krng = cfg.stage_rng("elda-recluster");
  const auto assign = elda::recluster_emotion_distributions(post, cfg.elda.ke, krng, cfg.elda.per_type);
  if (assign.ke_reduced)
    log("elda: warning: ke reduced from ", assign.requested_ke, " to ", assign.centroids.rows(),
        " (too few distinct distributions)");
  auto model = elda::make_model(post, assign);
  elda::save(model, cfg.out(kEldaFile).string());
  log("elda: vocabulary ", post.vocab.size(), ", occurrences ", post.num_occurrences(), ", ke ", model.ke());
  return model;
}

inline ewe::EmbeddingTable stage_ewe(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto docs = read_clusters(cfg.out(kClustersFile));
  const auto model = elda::load(cfg.out(kEldaFile).string());
  SeededRng rng = cfg.stage_rng("ewe");
  ewe::TrainTrace trace;
  auto table = ewe::train(ewe::label_documents(docs, model), model.ke(), cfg.ewe, rng, &trace);
  ewe::save(table, cfg.out(kEweFile).string());
  log("ewe: vocabulary ", table.vocab.size(), ", final epoch loss ",
      trace.epoch_ns_loss.empty() ? 0.0 : trace.epoch_ns_loss.back());
  return table;
}

inline std::vector<ewe::DocEmbedding> embed_documents(const std::vector<DanmuDocument>& docs,
                                                      const elda::EldaModel& model, const ewe::EmbeddingTable& table,
                                                      bool include_emotion) {
  std::vector<ewe::DocEmbedding> out;
  out.reserve(docs.size());
  for (const auto& d : docs)
    out.push_back({d.video_id, d.cluster_index,
                   ewe::document_embedding(table, d.tokens, model.label_tokens(d), include_emotion)});
  return out;
}

inline void stage_embed_docs(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto docs = read_clusters(cfg.out(kClustersFile));
  const auto model = elda::load(cfg.out(kEldaFile).string());
  const auto table = ewe::load(cfg.out(kEweFile).string());
  const auto rows = embed_documents(docs, model, table, cfg.ewe.emotion_term);
  auto f = open_output(cfg.out(kDocEmbeddingsFile));
  ewe::write_doc_embeddings(f, rows);
  log("embed-docs: ", rows.size(), " document embeddings of dimension ", 2 * table.dim());
}

/// Path of the visual features the later stages read.
inline fs::path features_path(const PipelineConfig& cfg) {
  return cfg.synth_features ? cfg.out(kSynthFeaturesFile) : fs::path(cfg.features);
}

inline std::vector<visual::FrameFeature> synth_corpus_features(const PipelineConfig& cfg,
                                                               const std::vector<DanmuDocument>& docs,
                                                               const LabelMap& labels) {
  std::map<std::string, std::vector<double>> times;
  for (const auto& d : docs) {
    auto& t = times[d.video_id];
    if (t.size() <= d.cluster_index) t.resize(d.cluster_index + 1, 0.0);
    t[d.cluster_index] = d.burst_point;
  }
  visual::SynthOptions opt{cfg.seed, cfg.visual_dim, cfg.synth_visual_noise, cfg.synth_visual_shift};
  std::vector<visual::FrameFeature> out;
  for (const auto& [id, t] : times) {
    std::optional<std::size_t> label;
    if (auto it = labels.find(id); it != labels.end()) label = static_cast<std::size_t>(it->second);
    auto rows = visual::synth_features(id, t, opt, label);
    for (auto& r : rows) out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<visual::ViewSequence> stage_align(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto docs = read_clusters(cfg.out(kClustersFile));
  const auto labels = load_labels(cfg.labels);
  std::vector<visual::FrameFeature> feats;
  if (cfg.synth_features) {
    feats = synth_corpus_features(cfg, docs, labels);
    auto f = open_output(cfg.out(kSynthFeaturesFile));
    visual::write_features(f, feats);
  } else {
    if (!fs::exists(cfg.features))
      throw Error(ErrorKind::AlignmentError,
                  "no visual features at '" + cfg.features + "' (supply features.jsonl or pass --synth-features)");
    auto load = visual::load_features(cfg.features, cfg.visual_dim);
    if (load.duplicate_warnings) log("align: warning: ", load.duplicate_warnings, " duplicate feature rows (last wins)");
    feats = std::move(load.features);
  }
  const auto emb = read_doc_embeddings(cfg.out(kDocEmbeddingsFile));
  auto seqs = visual::assemble_sequences(emb, feats, labels, cfg.k);
  std::size_t missing = 0;
  for (const auto& s : seqs)
    for (bool m : s.visual_missing) missing += m;
  log("align: ", seqs.size(), " videos aligned, ", missing, " missing visual rows");
  return seqs;
}

inline std::vector<visual::ViewSequence> aligned_sequences(const PipelineConfig& cfg) {
  const auto labels = load_labels(cfg.labels);
  const auto emb = read_doc_embeddings(cfg.out(kDocEmbeddingsFile));
  const fs::path fp = features_path(cfg);
  if (!fs::exists(fp)) throw Error(ErrorKind::AlignmentError, "no visual features at '" + fp.string() + "'");
  auto feats = visual::load_features(fp.string(), cfg.visual_dim).features;
  return visual::assemble_sequences(emb, feats, labels, cfg.k);
}

inline dccae::TrainReport stage_dccae(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto seqs = aligned_sequences(cfg);
  const auto pool = dccae::build_pool(seqs);
  if (pool.text.rows() == 0) throw Error(ErrorKind::EmptyInput, "dccae: no complete (textual, visual) pairs");
  SeededRng rng = cfg.stage_rng("dccae");
  auto model = dccae::DccaeModel::init(pool.text.cols(), pool.visual.cols(), cfg.dccae, rng);
  const auto report = dccae::train(model, pool, rng);
  if (report.batch_shrunk) log("dccae: warning: batch shrunk to ", report.batch_used);
  dccae::save(model, cfg.out(kDccaeFile).string());
  std::vector<dccae::FusedRepresentation> fused;
  fused.reserve(seqs.size());
  for (const auto& s : seqs) fused.push_back(dccae::transform(model, s));
  auto f = open_output(cfg.out(kFusedFile));
  dccae::write_fused(f, fused);
  if (!report.epoch_loss.empty())
    log("dccae: ", pool.text.rows(), " pairs, loss ", report.epoch_loss.front(), " -> ", report.epoch_loss.back(),
        ", corr ", report.epoch_corr.back());
  return report;
}

inline nlohmann::json split_json(const std::vector<classifier::Example>& ex, const classifier::Split& s) {
  auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(ex[i].video_id);
    return out;
  };
  return {{"train", ids(s.train)}, {"val", ids(s.val)}, {"test", ids(s.test)}};
}

inline std::vector<std::size_t> indices_of(const std::vector<classifier::Example>& ex, const nlohmann::json& ids) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ex.size(); ++i) pos[ex[i].video_id] = i;
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    auto it = pos.find(id.get<std::string>());
    if (it == pos.end()) throw Error(ErrorKind::SchemaError, "split names unknown video " + id.get<std::string>());
    out.push_back(it->second);
  }
  return out;
}

inline classifier::History stage_classify(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto labels = effective_labels(cfg, load_labels(cfg.labels));
  auto all = read_fused(cfg, labels);
  std::vector<classifier::Example> ex;
  for (auto& e : all)
    if (e.label) ex.push_back(std::move(e));
  if (ex.empty()) throw Error(ErrorKind::InvalidInput, "classify: no labelled videos");
  SeededRng split_rng = cfg.stage_rng("split");
  const auto split = classifier::stratified_split(ex, split_rng);
  SeededRng rng = cfg.stage_rng("classifier");
  auto model = classifier::ClassifierModel::init(ex.front().textual_out.cols(), ex.front().visual_out.cols(), cfg.clf, rng);
  const auto hist = classifier::train(model, ex, split.train, split.val, rng);
  classifier::save(model, cfg.out(kClassifierFile).string());
  {
    auto f = open_output(cfg.out(kSplitFile));
    f << split_json(ex, split).dump(2) << '\n';
  }
  {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& r : hist.epochs)
      h.push_back({{"train_loss", r.train_loss}, {"train_accuracy", r.train_accuracy},
                   {"val_accuracy", r.val_accuracy}, {"val_loss", r.val_loss}});
    auto f = open_output(cfg.out(kHistoryFile));
    f << nlohmann::json{{"epochs", h}, {"best_epoch", hist.best_epoch}, {"early_stopped", hist.early_stopped}}.dump(2)
      << '\n';
  }
  log("classify: ", split.train.size(), "/", split.val.size(), "/", split.test.size(), " train/val/test, best epoch ",
      hist.best_epoch, ", val accuracy ", hist.epochs[hist.best_epoch].val_accuracy);
  return hist;
}

/// Accuracy of always predicting the most frequent training class (lowest
/// class index on ties).
inline double majority_baseline(const std::vector<classifier::Example>& ex, const std::vector<std::size_t>& train,
                                const std::vector<std::size_t>& test) {
  std::array<std::size_t, kNumEmotions> h{};
  for (auto i : train) ++h[static_cast<std::size_t>(*ex[i].label)];
  const auto major = static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin());
  std::size_t ok = 0;
  for (auto i : test) ok += static_cast<std::size_t>(*ex[i].label) == major;
  return test.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(test.size());
}

inline nlohmann::json stage_eval(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto labels = effective_labels(cfg, load_labels(cfg.labels));
  auto all = read_fused(cfg, labels);
  std::vector<classifier::Example> ex;
  for (auto& e : all)
    if (e.label) ex.push_back(std::move(e));
  const auto model = classifier::load(cfg.out(kClassifierFile).string());
  auto in = dcvdn::detail::open_input(cfg.out(kSplitFile).string());
  nlohmann::json split;
  try {
    split = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ParseError, std::string("split.json: ") + e.what());
  }
  const auto train = indices_of(ex, split.at("train"));
  const auto test = indices_of(ex, split.at("test"));
  std::vector<classifier::Example> test_ex;
  for (auto i : test) test_ex.push_back(ex[i]);
  const auto m = classifier::evaluate(model, test_ex);
  auto j = classifier::metrics_json(m);
  j["majority_baseline_accuracy"] = majority_baseline(ex, train, test);
  j["permuted_labels"] = cfg.permute_labels;
  auto f = open_output(cfg.out(kMetricsFile));
  f << j.dump(2) << '\n';
  log("eval: test accuracy ", m.accuracy, " on ", m.total, " videos");
  return j;
}

inline std::vector<classifier::Prediction> stage_predict(const PipelineConfig& cfg, const StageLog& log = {}) {
  const auto model = classifier::load(cfg.out(kClassifierFile).string());
  const auto fused = read_fused(cfg, {});
  const auto preds = classifier::predict(model, fused);
  auto f = open_output(cfg.out(kPredictionsFile));
  classifier::write_predictions(f, preds);
  log("predict: ", preds.size(), " predictions");
  return preds;
}

/// Runs one stage and prefixes any error with the stage name.
template <typename F>
auto run_stage(std::string_view name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + std::string(name) + ": " + e.message());
  }
}

/// Full run; returns the metrics JSON.
inline nlohmann::json run_pipeline(const PipelineConfig& cfg, const StageLog& log = {}) {
  validate(cfg);
  fs::create_directories(cfg.out_dir);
  {
    auto f = open_output(cfg.out("config.json"));
    f << to_json(cfg).dump(2) << '\n';
  }
  run_stage("cluster", [&] { stage_cluster(cfg, log); });
  run_stage("elda", [&] { stage_elda(cfg, log); });
  run_stage("ewe", [&] { stage_ewe(cfg, log); });
  run_stage("embed-docs", [&] { stage_embed_docs(cfg, log); });
  run_stage("align", [&] { stage_align(cfg, log); });
  run_stage("dccae", [&] { stage_dccae(cfg, log); });
  run_stage("classify", [&] { stage_classify(cfg, log); });
  auto metrics = run_stage("eval", [&] { return stage_eval(cfg, log); });
  run_stage("predict", [&] { stage_predict(cfg, log); });
  return metrics;
}

// ---------------------------------------------------------------------------
// experiment helpers

/// Text-only examples straight from document embeddings (visual view empty).
inline std::vector<classifier::Example> text_examples(const std::vector<ewe::DocEmbedding>& rows,
                                                      const LabelMap& labels, std::size_t k) {
  std::map<std::string, std::map<std::size_t, const Vector*>> by_video;
  Eigen::Index dim = 0;
  for (const auto& r : rows) {
    by_video[r.video_id][r.cluster_index] = &r.vector;
    dim = r.vector.size();
  }
  std::vector<classifier::Example> out;
  for (const auto& [id, clusters] : by_video) {
    classifier::Example e;
    e.video_id = id;
    e.textual_out = Matrix::Zero(static_cast<Eigen::Index>(k), dim);
    e.visual_out = Matrix::Zero(static_cast<Eigen::Index>(k), 1);
    for (const auto& [ci, v] : clusters)
      if (ci < k) e.textual_out.row(static_cast<Eigen::Index>(ci)) = v->transpose();
    if (auto it = labels.find(id); it != labels.end()) e.label = it->second;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dcvdn::pipeline
