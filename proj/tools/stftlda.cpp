// Command-line driver for the batch pipeline and the HTTP service.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <stftlda/stftlda.hpp>
#include <stftlda/service.hpp>

namespace fs = std::filesystem;
using namespace stftlda;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

/// Pipeline keys that may be overridden from the command line.
struct ConfigFlags {
  std::string config_path;
  std::optional<double> window_s, hop_s, f_max_hz, alpha, eta, tol, ridge;
  std::optional<std::size_t> m, n_topics, max_iter, threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> window_fn, magnitude;

  void add_to(CLI::App& app, bool lda_flags) {
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--window-s", window_s, "STFT window length in seconds");
    app.add_option("--hop-s", hop_s, "STFT hop in seconds");
    app.add_option("--window-fn", window_fn, "hann or rect");
    app.add_option("--magnitude", magnitude, "document weights: magnitude or power");
    app.add_option("--f-max", f_max_hz, "upper edge of the analysis band in Hz");
    app.add_option("-m,--bins", m, "number of frequency bins");
    app.add_option("--ridge", ridge, "covariance ridge for the similarity matrix");
    app.add_option("--threads", threads, "worker threads for the E-step");
    if (lda_flags) {
      app.add_option("-K,--topics", n_topics, "number of topics");
      app.add_option("--alpha", alpha, "document-topic prior (default 1/K)");
      app.add_option("--eta", eta, "topic-word prior (default 1/K)");
      app.add_option("--seed", seed, "random seed");
      app.add_option("--max-iter", max_iter, "maximum EM iterations");
      app.add_option("--tol", tol, "relative bound change for convergence");
    }
  }

  /// Config file first, then flags on top.
  PipelineConfig resolve(PipelineConfig base = {}) const {
    if (!config_path.empty()) base = apply_config(base, read_json_file(config_path));
    nlohmann::json overrides = nlohmann::json::object();
    if (window_s) overrides["window_s"] = *window_s;
    if (hop_s) overrides["hop_s"] = *hop_s;
    if (window_fn) overrides["window_fn"] = *window_fn;
    if (magnitude) overrides["magnitude"] = *magnitude;
    if (f_max_hz) overrides["f_max_hz"] = *f_max_hz;
    if (m) overrides["m"] = *m;
    if (n_topics) overrides["K"] = *n_topics;
    if (alpha) overrides["alpha"] = *alpha;
    if (eta) overrides["eta"] = *eta;
    if (seed) overrides["seed"] = *seed;
    if (max_iter) overrides["max_iter"] = *max_iter;
    if (tol) overrides["tol"] = *tol;
    if (ridge) overrides["ridge"] = *ridge;
    if (threads) overrides["threads"] = *threads;
    auto cfg = apply_config(base, overrides);
    validate_config(cfg);
    return cfg;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

void emit(const nlohmann::json& j, const std::string& out_path) {
  if (out_path.empty() || out_path == "-")
    std::cout << j.dump() << '\n';
  else
    write_json_file(out_path, j);
}

std::vector<SimulationRecord> load_collection(const std::string& path) {
  return collection_from_json(read_json_file(path));
}

std::shared_ptr<const SessionState> load_session(const std::string& collection, const std::string& model,
                                                 const std::string& topics, const std::string& matrix) {
  auto s = std::make_shared<SessionState>();
  s->records = load_collection(collection);
  s->model = model_artifact_from_json(read_json_file(model));
  s->topic_series = topics.empty() ? topic_series_for(s->records, s->model)
                                   : topics_artifact_from_json(read_json_file(topics));
  if (s->topic_series.size() != s->records.size())
    throw ValidationError("topic series and collection differ in record count");
  for (std::size_t i = 0; i < s->records.size(); ++i)
    if (s->topic_series[i].record_id != s->records[i].id)
      throw ValidationError("topic series and collection disagree on record order at '" + s->records[i].id + "'");
  if (!matrix.empty())
    s->matrix = matrix_artifact_from_json(read_json_file(matrix));
  else if (s->records.size() >= 2)
    s->matrix = similarity_matrix(s->topic_series, s->model.config.ridge);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STFT-LDA topic analytics for ensembles of multivariate time series"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic simulation records");
  bool example = false;
  std::size_t synth_count = 50;
  std::uint64_t synth_seed = 0;
  std::string synth_config, synth_out, synth_format = "json";
  synth->add_flag("--example", example, "the 4-phase, 13-channel, 50 s illustrative signal");
  synth->add_option("--count", synth_count, "number of ensemble records");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--config", synth_config, "ensemble generator JSON config");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--format", synth_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load, validate and normalize records into a collection");
  std::vector<std::string> ingest_inputs;
  std::string ingest_out;
  bool no_normalize = false;
  ingest->add_option("inputs", ingest_inputs, "record files (.csv/.json) or directories")->required();
  ingest->add_option("-o,--out", ingest_out, "collection JSON")->required();
  ingest->add_flag("--no-normalize", no_normalize, "keep raw values");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit the topic model over a collection");
  std::string fit_collection, fit_out, fit_corpus_out;
  ConfigFlags fit_flags;
  fit_cmd->add_option("--collection", fit_collection, "collection JSON")->required();
  fit_cmd->add_option("-o,--out", fit_out, "model JSON")->required();
  fit_cmd->add_option("--corpus-triplets", fit_corpus_out, "also write the corpus as (doc word weight) triplets");
  fit_flags.add_to(*fit_cmd, true);

  // topics
  auto* topics_cmd = app.add_subcommand("topics", "compute per-record topic time series");
  std::string topics_collection, topics_model, topics_out;
  topics_cmd->add_option("--collection", topics_collection, "collection JSON")->required();
  topics_cmd->add_option("--model", topics_model, "model JSON")->required();
  topics_cmd->add_option("-o,--out", topics_out, "topic series JSON");

  // search
  auto* search_cmd = app.add_subcommand("search", "content-based search over topic series");
  std::string search_topics, search_record, search_out;
  std::size_t search_start = 0, search_length = 0, search_top = 10;
  std::optional<std::size_t> search_sep;
  std::vector<std::size_t> search_mask;
  search_cmd->add_option("--topics", search_topics, "topic series JSON")->required();
  search_cmd->add_option("--record", search_record, "source record id")->required();
  search_cmd->add_option("--start", search_start, "first window of the query")->required();
  search_cmd->add_option("--length", search_length, "query length in windows")->required();
  search_cmd->add_option("--mask", search_mask, "topic indices to compare (default all)")->delimiter(',');
  search_cmd->add_option("--top-n", search_top, "number of hits");
  search_cmd->add_option("--min-separation", search_sep, "minimum offset gap of the two hits per record");
  search_cmd->add_option("-o,--out", search_out, "output JSON (default stdout)");

  // matrix
  auto* matrix_cmd = app.add_subcommand("matrix", "pairwise similarity matrix with complete-linkage order");
  std::string matrix_topics, matrix_out;
  std::optional<double> matrix_ridge;
  matrix_cmd->add_option("--topics", matrix_topics, "topic series JSON")->required();
  matrix_cmd->add_option("--ridge", matrix_ridge, "covariance ridge (default from topic artifact config)");
  matrix_cmd->add_option("-o,--out", matrix_out, "matrix JSON");

  // bench-search
  auto* bench_cmd = app.add_subcommand("bench-search", "time naive vs FFT sliding distance; CSV to stdout");
  std::vector<std::size_t> bench_n;
  std::size_t bench_rows = 5, bench_repeats = 5, bench_records = 50;
  bench_cmd->add_option("-n", bench_n, "target lengths (default 1024..16384)")->delimiter(',');
  bench_cmd->add_option("--rows", bench_rows, "topic rows");
  bench_cmd->add_option("--repeats", bench_repeats, "repetitions; best time is reported");
  bench_cmd->add_option("--records", bench_records, "records for the whole-collection estimate");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "serve pipeline artifacts over HTTP");
  std::string serve_collection, serve_model, serve_topics, serve_matrix, serve_static, serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve_cmd->add_option("--collection", serve_collection, "collection JSON")->required();
  serve_cmd->add_option("--model", serve_model, "model JSON")->required();
  serve_cmd->add_option("--topics", serve_topics, "topic series JSON (computed if omitted)");
  serve_cmd->add_option("--matrix", serve_matrix, "matrix JSON (computed if omitted)");
  serve_cmd->add_option("--static", serve_static, "directory with the built UI bundle");
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--port", serve_port, "port");

  // export
  auto* export_cmd = app.add_subcommand("export", "write every API payload to a directory");
  std::string export_collection, export_model, export_topics, export_matrix, export_out;
  std::size_t export_width = Api::kDefaultWidth;
  export_cmd->add_option("--collection", export_collection, "collection JSON")->required();
  export_cmd->add_option("--model", export_model, "model JSON")->required();
  export_cmd->add_option("--topics", export_topics, "topic series JSON (computed if omitted)");
  export_cmd->add_option("--matrix", export_matrix, "matrix JSON (computed if omitted)");
  export_cmd->add_option("--width", export_width, "decimation width for line/heatmap payloads");
  export_cmd->add_option("-o,--out", export_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) {
      std::vector<SimulationRecord> records;
      if (example) {
        records.push_back(example_record(synth_seed));
      } else {
        EnsembleConfig cfg;
        if (!synth_config.empty()) cfg = read_json_file(synth_config).get<EnsembleConfig>();
        records = generate_ensemble(synth_count, synth_seed, cfg);
      }
      fs::create_directories(synth_out);
      const auto format = synth_format == "csv" ? RecordFormat::csv : RecordFormat::json;
      for (const auto& r : records) save_simulation(fs::path(synth_out) / (r.id + "." + synth_format), r, format);
      std::cerr << "wrote " << records.size() << " record(s) to " << synth_out << '\n';
    } else if (*ingest) {
      std::vector<fs::path> files;
      for (const auto& in : ingest_inputs) {
        if (fs::is_directory(in)) {
          std::vector<fs::path> found;
          for (const auto& e : fs::directory_iterator(in)) {
            auto ext = e.path().extension();
            if (ext == ".csv" || ext == ".json") found.push_back(e.path());
          }
          std::sort(found.begin(), found.end());
          files.insert(files.end(), found.begin(), found.end());
        } else {
          if (!fs::exists(in)) throw ParseError("input '" + in + "' does not exist");
          files.emplace_back(in);
        }
      }
      if (files.empty()) throw ValidationError("no input records");
      std::vector<SimulationRecord> records;
      for (const auto& f : files) {
        auto rec = load_simulation(f);
        records.push_back(no_normalize ? std::move(rec) : normalize_channels(std::move(rec)));
      }
      write_json_file(ingest_out, collection_to_json(records));
      std::cerr << "ingested " << records.size() << " record(s)\n";
    } else if (*fit_cmd) {
      const auto cfg = fit_flags.resolve();
      const auto records = load_collection(fit_collection);
      if (!fit_corpus_out.empty()) {
        std::ostringstream ss;
        write_triplets(ss, assemble_corpus(documents_for(records, cfg)));
        write_text(fit_corpus_out, ss.str());
      }
      const auto art = fit_model(records, cfg);
      for (const auto& w : art.warnings) std::cerr << "warning: " << w << '\n';
      write_json_file(fit_out, model_artifact_to_json(art));
      std::cerr << "fit K=" << art.model.n_topics << " in " << art.model.n_iters_run
                << " iterations, bound " << art.model.final_bound << '\n';
    } else if (*topics_cmd) {
      const auto records = load_collection(topics_collection);
      const auto art = model_artifact_from_json(read_json_file(topics_model));
      emit(topics_artifact_to_json(art.config, topic_series_for(records, art)), topics_out);
    } else if (*search_cmd) {
      const auto series = topics_artifact_from_json(read_json_file(search_topics));
      QuerySelection q{search_record, search_start, search_length, search_mask};
      const auto result = search_collection(q, series, search_top, search_sep);
      for (const auto& d : result.diagnostics) std::cerr << "note: " << d << '\n';
      nlohmann::json hits = nlohmann::json::array();
      for (std::size_t i = 0; i < result.hits.size(); ++i) {
        const auto& h = result.hits[i];
        hits.push_back({{"rank", i + 1},
                        {"record_id", h.record_id},
                        {"offset", h.offset},
                        {"length", h.length},
                        {"distance", h.distance},
                        {"alignment_shift", h.alignment_shift}});
      }
      emit({{"schema_version", kSchemaVersion}, {"kind", "stftlda.search"}, {"hits", hits},
            {"diagnostics", result.diagnostics}},
           search_out);
    } else if (*matrix_cmd) {
      const auto j = read_json_file(matrix_topics);
      const auto series = topics_artifact_from_json(j);
      const auto cfg = apply_config(PipelineConfig{}, j.at("config"));
      emit(matrix_artifact_to_json(cfg, similarity_matrix(series, matrix_ridge.value_or(cfg.ridge))), matrix_out);
    } else if (*bench_cmd) {
      if (bench_n.empty())
        for (std::size_t n = 1024; n <= 16384; n *= 2) bench_n.push_back(n);
      std::cout << "n,l,m,records,naive_ms,fft_ms,collection_naive_ms,collection_fft_ms\n";
      for (std::size_t n : bench_n) {
        if (n < 2) throw ValidationError("bench-search: n must be >= 2");
        const auto t = bench::time_sliding_distance(bench_rows, n, n / 2, bench_repeats);
        const double R = static_cast<double>(bench_records);
        std::printf("%zu,%zu,%zu,%zu,%.4f,%.4f,%.4f,%.4f\n", t.n, t.l, t.rows, bench_records, t.naive_ms, t.fft_ms,
                    t.naive_ms * R, t.fft_ms * R);
      }
    } else if (*serve_cmd) {
      auto session = load_session(serve_collection, serve_model, serve_topics, serve_matrix);
      auto api = std::make_shared<const Api>(session);
      httplib::Server server;
      register_routes(server, api, serve_static);
      std::cerr << "serving " << session->records.size() << " record(s) on http://" << serve_host << ':' << serve_port
                << '\n';
      if (!server.listen(serve_host, serve_port)) throw Error("cannot listen on " + serve_host + ":" + std::to_string(serve_port));
    } else if (*export_cmd) {
      auto session = load_session(export_collection, export_model, export_topics, export_matrix);
      const Api api(session);
      const fs::path out(export_out);
      auto put = [&](const fs::path& rel, const ApiResponse& r) {
        if (r.status != 200) throw Error("export of " + rel.string() + " failed: " + r.body.dump());
        write_json_file(out / rel, r.body);
      };
      put("records.json", api.records());
      if (session->records.size() >= 2) put("matrix.json", api.matrix());
      for (std::size_t k = 0; k < session->model.model.n_topics; ++k)
        put(fs::path("topics") / (std::to_string(k) + "_spectrum.json"), api.topic_spectrum(std::to_string(k)));
      for (const auto& rec : session->records) {
        const fs::path dir = fs::path("records") / rec.id;
        put(dir / "topic-series.json", api.topic_series(rec.id));
        put(dir / "ground-accel.json", api.ground_accel(rec.id, export_width));
        std::set<Attribute> attrs;
        for (const auto& ch : rec.channels) attrs.insert(ch.attribute);
        for (auto a : attrs)
          put(dir / ("heatmap_" + std::string(to_string(a)) + ".json"),
              api.heatmap(rec.id, std::string(to_string(a)), export_width));
      }
      std::cerr << "exported to " << export_out << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
