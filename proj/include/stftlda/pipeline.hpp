#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "ingest.hpp"
#include "lda.hpp"
#include "similarity.hpp"
#include "stft.hpp"
#include "topics.hpp"

namespace stftlda {

inline constexpr int kSchemaVersion = 1;

/// Every tunable of the batch pipeline. Artifacts embed the effective copy.
struct PipelineConfig {
  double window_s = 5.0;
  double hop_s = 0.125;
  WindowFn window_fn = WindowFn::hann;
  MagnitudeKind magnitude = MagnitudeKind::magnitude;
  double f_max_hz = 16.0;
  std::size_t m = 80;
  std::size_t n_topics = 5;
  std::optional<double> alpha;
  std::optional<double> eta;
  std::uint64_t seed = 0;
  std::size_t max_iter = 200;
  double tol = 1e-6;
  std::size_t max_doc_iter = 2000;
  double doc_tol = 1e-10;
  double ridge = 1e-6;
  std::size_t threads = 1;

  StftOptions stft_options() const { return {window_s, hop_s, window_fn, magnitude}; }

  LdaOptions lda_options() const {
    LdaOptions o;
    o.n_topics = n_topics;
    o.alpha = alpha;
    o.eta = eta;
    o.seed = seed;
    o.max_iter = max_iter;
    o.tol = tol;
    o.max_doc_iter = max_doc_iter;
    o.doc_tol = doc_tol;
    o.threads = threads;
    return o;
  }
};

inline const std::set<std::string>& pipeline_config_keys() {
  static const std::set<std::string> keys{"window_s", "hop_s",    "window_fn", "magnitude",    "f_max_hz",
                                          "m",        "K",        "alpha",     "eta",          "seed",
                                          "max_iter", "tol",      "max_doc_iter", "doc_tol",   "ridge",
                                          "threads"};
  return keys;
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j{{"window_s", c.window_s},
                   {"hop_s", c.hop_s},
                   {"window_fn", to_string(c.window_fn)},
                   {"magnitude", to_string(c.magnitude)},
                   {"f_max_hz", c.f_max_hz},
                   {"m", c.m},
                   {"K", c.n_topics},
                   {"seed", c.seed},
                   {"max_iter", c.max_iter},
                   {"tol", c.tol},
                   {"max_doc_iter", c.max_doc_iter},
                   {"doc_tol", c.doc_tol},
                   {"ridge", c.ridge}};
  j["alpha"] = c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr);
  j["eta"] = c.eta ? nlohmann::json(*c.eta) : nlohmann::json(nullptr);
  return j;
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline PipelineConfig apply_config(PipelineConfig base, const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!pipeline_config_keys().count(key)) throw ValidationError("config: unknown key '" + key + "'");
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("window_s", base.window_s);
    get("hop_s", base.hop_s);
    if (j.contains("window_fn")) base.window_fn = parse_window_fn(j.at("window_fn").get<std::string>());
    if (j.contains("magnitude")) base.magnitude = parse_magnitude_kind(j.at("magnitude").get<std::string>());
    get("f_max_hz", base.f_max_hz);
    get("m", base.m);
    get("K", base.n_topics);
    if (j.contains("alpha"))
      base.alpha = j.at("alpha").is_null() ? std::nullopt : std::optional<double>(j.at("alpha").get<double>());
    if (j.contains("eta"))
      base.eta = j.at("eta").is_null() ? std::nullopt : std::optional<double>(j.at("eta").get<double>());
    get("seed", base.seed);
    get("max_iter", base.max_iter);
    get("tol", base.tol);
    get("max_doc_iter", base.max_doc_iter);
    get("doc_tol", base.doc_tol);
    get("ridge", base.ridge);
    get("threads", base.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return base;
}

/// Throws ValidationError naming the keys that cannot hold together.
inline void validate_config(const PipelineConfig& c, std::optional<double> sample_rate_hz = std::nullopt) {
  std::vector<std::string> problems;
  if (!(c.window_s > 0.0)) problems.push_back("window_s must be positive");
  if (!(c.hop_s > 0.0)) problems.push_back("hop_s must be positive");
  if (c.hop_s > c.window_s) problems.push_back("conflict [hop_s, window_s]: hop exceeds window");
  if (c.m < 1) problems.push_back("m must be >= 1");
  if (c.n_topics < 1) problems.push_back("K must be >= 1");
  if (c.alpha && !(*c.alpha > 0.0)) problems.push_back("alpha must be positive");
  if (c.eta && !(*c.eta > 0.0)) problems.push_back("eta must be positive");
  if (!(c.ridge > 0.0)) problems.push_back("ridge must be positive");
  if (!(c.f_max_hz > 0.0)) problems.push_back("f_max_hz must be positive");
  if (sample_rate_hz) {
    if (c.f_max_hz > *sample_rate_hz / 2.0)
      problems.push_back("conflict [f_max_hz, sample_rate_hz]: f_max above Nyquist");
    const double native = 1.0 / c.window_s;
    if (c.f_max_hz / static_cast<double>(c.m) < native * (1.0 - 1e-9))
      problems.push_back("conflict [m, f_max_hz, window_s]: bins narrower than the spectral resolution");
  }
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
}

/// Fitted model together with its vocabulary and configuration.
struct ModelArtifact {
  PipelineConfig config;
  Vocabulary vocab;
  TopicModel model;
  std::vector<std::string> warnings;
};

inline std::vector<DocumentSeries> documents_for(const std::vector<SimulationRecord>& records,
                                                 const PipelineConfig& cfg) {
  std::vector<DocumentSeries> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    validate_config(cfg, rec.sample_rate_hz);
    out.push_back(record_documents(rec, cfg.stft_options(), cfg.f_max_hz, cfg.m));
  }
  return out;
}

inline ModelArtifact fit_model(const std::vector<SimulationRecord>& records, const PipelineConfig& cfg) {
  if (records.empty()) throw ValidationError("fit: no records");
  validate_config(cfg);
  auto docs = documents_for(records, cfg);
  auto corpus = assemble_corpus(docs);
  auto fitted = fit(corpus, cfg.lda_options());
  return {cfg, corpus.vocab, std::move(fitted.model), std::move(fitted.warnings)};
}

inline std::vector<TopicTimeSeries> topic_series_for(const std::vector<SimulationRecord>& records,
                                                     const ModelArtifact& art) {
  std::vector<TopicTimeSeries> out;
  for (const auto& ds : documents_for(records, art.config)) {
    if (!(ds.vocab == art.vocab))
      throw DimensionError("record '" + ds.record_id + "' does not match the model vocabulary");
    out.push_back(topic_series(art.model, ds, art.config.threads));
  }
  return out;
}

// Artifact files.

inline nlohmann::json to_json(const Vocabulary& v) {
  return {{"m", v.m}, {"n", v.n}, {"channel_labels", v.channel_labels}, {"bin_edges_hz", v.bin_edges_hz}};
}

inline Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  Vocabulary v;
  v.m = j.at("m").get<std::size_t>();
  v.n = j.at("n").get<std::size_t>();
  v.channel_labels = j.at("channel_labels").get<std::vector<std::string>>();
  v.bin_edges_hz = j.at("bin_edges_hz").get<std::vector<double>>();
  return v;
}

/// Qualitative colorblind-safe palette (Okabe-Ito), assigned in topic order.
inline std::vector<std::string> topic_colors(std::size_t K) {
  static const std::vector<std::string> palette{"#E69F00", "#56B4E9", "#009E73", "#F0E442",
                                                "#0072B2", "#D55E00", "#CC79A7", "#000000"};
  std::vector<std::string> out;
  for (std::size_t k = 0; k < K; ++k) out.push_back(palette[k % palette.size()]);
  return out;
}

inline void check_kind(const nlohmann::json& j, const std::string& kind) {
  if (!j.is_object() || j.value("kind", std::string{}) != kind)
    throw ParseError("expected a '" + kind + "' artifact", 0, "kind");
  if (j.value("schema_version", 0) != kSchemaVersion)
    throw ParseError("unsupported schema_version", 0, "schema_version");
}

inline nlohmann::json collection_to_json(const std::vector<SimulationRecord>& records) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records) recs.push_back(to_json(r));
  return {{"schema_version", kSchemaVersion}, {"kind", "stftlda.collection"}, {"records", std::move(recs)}};
}

inline std::vector<SimulationRecord> collection_from_json(const nlohmann::json& j) {
  check_kind(j, "stftlda.collection");
  std::vector<SimulationRecord> out;
  std::set<std::string> ids;
  for (const auto& r : j.at("records")) {
    out.push_back(record_from_json(r));
    if (!ids.insert(out.back().id).second) throw ValidationError("duplicate record id '" + out.back().id + "'");
  }
  return out;
}

inline nlohmann::json model_artifact_to_json(const ModelArtifact& a) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "stftlda.model"},
          {"config", to_json(a.config)},
          {"vocabulary", to_json(a.vocab)},
          {"warnings", a.warnings},
          {"model", to_json(a.model)}};
}

inline ModelArtifact model_artifact_from_json(const nlohmann::json& j) {
  check_kind(j, "stftlda.model");
  try {
    ModelArtifact a;
    a.config = apply_config(PipelineConfig{}, j.at("config"));
    a.vocab = vocabulary_from_json(j.at("vocabulary"));
    a.model = model_from_json(j.at("model"));
    a.warnings = j.value("warnings", std::vector<std::string>{});
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model artifact: ") + e.what());
  }
}

inline nlohmann::json topics_artifact_to_json(const PipelineConfig& cfg, const std::vector<TopicTimeSeries>& series) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : series) arr.push_back(to_json(s));
  const std::size_t K = series.empty() ? 0 : series.front().n_topics();
  return {{"schema_version", kSchemaVersion}, {"kind", "stftlda.topics"}, {"config", to_json(cfg)},
          {"topic_colors", topic_colors(K)},  {"series", std::move(arr)}};
}

inline std::vector<TopicTimeSeries> topics_artifact_from_json(const nlohmann::json& j) {
  check_kind(j, "stftlda.topics");
  std::vector<TopicTimeSeries> out;
  for (const auto& s : j.at("series")) out.push_back(topic_series_from_json(s));
  return out;
}

inline nlohmann::json matrix_artifact_to_json(const PipelineConfig& cfg, const SimilarityMatrix& sm) {
  return {{"schema_version", kSchemaVersion}, {"kind", "stftlda.matrix"}, {"config", to_json(cfg)},
          {"matrix", to_json(sm)}};
}

inline SimilarityMatrix matrix_artifact_from_json(const nlohmann::json& j) {
  check_kind(j, "stftlda.matrix");
  return similarity_from_json(j.at("matrix"));
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump() << '\n';
}

}  // namespace stftlda
