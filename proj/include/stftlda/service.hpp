#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "ingest.hpp"
#include "pipeline.hpp"
#include "search.hpp"
#include "similarity.hpp"
#include "topics.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen internals.
#include <httplib.h>

namespace stftlda {

/// Everything the API serves; immutable once built.
struct SessionState {
  std::vector<SimulationRecord> records;
  ModelArtifact model;
  std::vector<TopicTimeSeries> topic_series;
  SimilarityMatrix matrix;
};

/// Runs the whole batch pipeline over already-normalized records.
inline std::shared_ptr<const SessionState> build_session(std::vector<SimulationRecord> records,
                                                         const PipelineConfig& cfg) {
  auto s = std::make_shared<SessionState>();
  s->model = fit_model(records, cfg);
  s->topic_series = topic_series_for(records, s->model);
  s->matrix = similarity_matrix(s->topic_series, cfg.ridge);
  s->records = std::move(records);
  return s;
}

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Peak-preserving decimation into at most `width` buckets of equal sample count.
struct Bucketing {
  std::size_t bucket_size = 1;
  std::size_t count = 0;
};

inline Bucketing bucketing(std::size_t length, std::size_t width) {
  width = std::max<std::size_t>(width, 1);
  Bucketing b;
  b.bucket_size = std::max<std::size_t>(1, (length + width - 1) / width);
  b.count = (length + b.bucket_size - 1) / b.bucket_size;
  return b;
}

/// Request handlers, independent of the transport.
class Api {
 public:
  static constexpr std::size_t kDefaultWidth = 1000;
  static constexpr std::size_t kDefaultTopN = 10;

  explicit Api(std::shared_ptr<const SessionState> session) : session_(std::move(session)) {}

  bool ready() const noexcept { return session_ != nullptr; }

  ApiResponse records() const {
    if (!ready()) return unavailable();
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t i = 0; i < session_->records.size(); ++i) {
      const auto& r = session_->records[i];
      list.push_back({{"id", r.id},
                      {"duration_s", r.duration_s()},
                      {"n_channels", r.channels.size()},
                      {"n_windows", session_->topic_series[i].size()}});
    }
    return ok("stftlda.records", {{"records", std::move(list)}});
  }

  ApiResponse topic_series(const std::string& id) const {
    if (!ready()) return unavailable();
    auto idx = find_record(id);
    if (!idx) return error(404, "unknown record '" + id + "'");
    auto body = to_json(session_->topic_series[*idx]);
    body["topic_colors"] = topic_colors(session_->model.model.n_topics);
    return ok("stftlda.topic_series", std::move(body));
  }

  ApiResponse topic_spectrum(const std::string& k_str) const {
    if (!ready()) return unavailable();
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(k_str.data(), k_str.data() + k_str.size(), k);
    if (ec != std::errc{} || ptr != k_str.data() + k_str.size() || k >= session_->model.model.n_topics)
      return error(404, "unknown topic '" + k_str + "'");
    const auto grid = stftlda::topic_spectrum(session_->model.model, k, session_->model.vocab);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < grid.rows(); ++r) rows.push_back(std::vector<double>(grid.row(r).begin(), grid.row(r).end()));
    return ok("stftlda.topic_spectrum", {{"k", k},
                                         {"n_topics", session_->model.model.n_topics},
                                         {"color", topic_colors(session_->model.model.n_topics)[k]},
                                         {"mass", session_->model.model.topic_mass(k)},
                                         {"grid", std::move(rows)},
                                         {"bin_edges_hz", session_->model.vocab.bin_edges_hz},
                                         {"channel_labels", session_->model.vocab.channel_labels}});
  }

  ApiResponse matrix() const {
    if (!ready()) return unavailable();
    return ok("stftlda.matrix", to_json(session_->matrix));
  }

  ApiResponse search(const std::string& request_body) const {
    if (!ready()) return unavailable();
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(request_body);
    } catch (const nlohmann::json::parse_error& e) {
      return error(400, std::string("malformed JSON: ") + e.what());
    }
    QuerySelection q;
    std::size_t top_n = kDefaultTopN;
    std::optional<std::size_t> min_sep;
    try {
      if (!req.is_object()) return error(400, "request must be a JSON object");
      q.source_record_id = req.at("record_id").get<std::string>();
      q.start_index = req.at("start_index").get<std::size_t>();
      q.length = req.at("length").get<std::size_t>();
      if (req.contains("topic_mask")) q.topic_mask = req.at("topic_mask").get<std::vector<std::size_t>>();
      if (req.contains("top_n")) top_n = req.at("top_n").get<std::size_t>();
      if (req.contains("min_separation")) min_sep = req.at("min_separation").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      return error(400, std::string("invalid search request: ") + e.what());
    }
    auto src = find_record(q.source_record_id);
    if (!src) return error(404, "unknown record '" + q.source_record_id + "'");
    SearchResult result;
    try {
      result = search_collection(q, session_->topic_series, top_n, min_sep);
    } catch (const NotFoundError& e) {
      return error(404, e.what());
    } catch (const Error& e) {
      return error(400, e.what());
    }
    const auto& source = session_->topic_series[*src];
    nlohmann::json hits = nlohmann::json::array();
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
      const auto& h = result.hits[i];
      const auto& ts = session_->topic_series[h.record_index];
      const double start_s = ts.times_s[h.offset];
      hits.push_back({{"rank", i + 1},
                      {"record_id", h.record_id},
                      {"offset", h.offset},
                      {"length", h.length},
                      {"distance", h.distance},
                      {"alignment_shift", h.alignment_shift},
                      {"start_s", start_s},
                      {"end_s", start_s + static_cast<double>(h.length) * ts.hop_s}});
    }
    const double q_start = source.times_s[q.start_index];
    return ok("stftlda.search", {{"query",
                                  {{"record_id", q.source_record_id},
                                   {"start_index", q.start_index},
                                   {"length", q.length},
                                   {"topic_mask", q.topic_mask},
                                   {"start_s", q_start},
                                   {"end_s", q_start + static_cast<double>(q.length) * source.hop_s}}},
                                 {"hits", std::move(hits)},
                                 {"diagnostics", result.diagnostics}});
  }

  /// Time x floor grid of one attribute, decimated by keeping the signed
  /// sample of largest magnitude in each bucket.
  ApiResponse heatmap(const std::string& id, const std::string& attribute, std::size_t width) const {
    if (!ready()) return unavailable();
    auto idx = find_record(id);
    if (!idx) return error(404, "unknown record '" + id + "'");
    auto attr = parse_attribute(attribute);
    if (!attr) return error(404, "unknown attribute '" + attribute + "'");
    const auto& rec = session_->records[*idx];
    std::vector<const ChannelSeries*> floors;
    for (const auto& ch : rec.channels)
      if (ch.attribute == *attr) floors.push_back(&ch);
    if (floors.empty()) return error(404, "record '" + id + "' has no '" + attribute + "' channels");
    const auto b = bucketing(rec.length(), width);
    nlohmann::json times = nlohmann::json::array(), values = nlohmann::json::array(), floor_ids = nlohmann::json::array();
    for (const auto* ch : floors) floor_ids.push_back(ch->floor);
    for (std::size_t i = 0; i < b.count; ++i) {
      const std::size_t begin = i * b.bucket_size, end = std::min(rec.length(), begin + b.bucket_size);
      times.push_back(static_cast<double>(begin) / rec.sample_rate_hz);
      std::vector<double> row;
      for (const auto* ch : floors) {
        double peak = ch->values[begin];
        for (std::size_t t = begin + 1; t < end; ++t)
          if (std::abs(ch->values[t]) > std::abs(peak)) peak = ch->values[t];
        row.push_back(peak);
      }
      values.push_back(std::move(row));
    }
    return ok("stftlda.heatmap", {{"record_id", id},
                                  {"attribute", attribute},
                                  {"floors", std::move(floor_ids)},
                                  {"bucket_s", static_cast<double>(b.bucket_size) / rec.sample_rate_hz},
                                  {"times_s", std::move(times)},
                                  {"values", std::move(values)}});
  }

  /// Min/max per bucket of the ground acceleration.
  ApiResponse ground_accel(const std::string& id, std::size_t width) const {
    if (!ready()) return unavailable();
    auto idx = find_record(id);
    if (!idx) return error(404, "unknown record '" + id + "'");
    const auto& rec = session_->records[*idx];
    const auto b = bucketing(rec.length(), width);
    nlohmann::json buckets = nlohmann::json::array();
    for (std::size_t i = 0; i < b.count; ++i) {
      const std::size_t begin = i * b.bucket_size, end = std::min(rec.length(), begin + b.bucket_size);
      auto [lo, hi] = std::minmax_element(rec.ground_accel.begin() + static_cast<std::ptrdiff_t>(begin),
                                          rec.ground_accel.begin() + static_cast<std::ptrdiff_t>(end));
      buckets.push_back({{"t0_s", static_cast<double>(begin) / rec.sample_rate_hz},
                         {"t1_s", static_cast<double>(end) / rec.sample_rate_hz},
                         {"min", *lo},
                         {"max", *hi}});
    }
    return ok("stftlda.ground_accel",
              {{"record_id", id}, {"sample_rate_hz", rec.sample_rate_hz}, {"buckets", std::move(buckets)}});
  }

 private:
  std::optional<std::size_t> find_record(const std::string& id) const {
    for (std::size_t i = 0; i < session_->records.size(); ++i)
      if (session_->records[i].id == id) return i;
    return std::nullopt;
  }

  static ApiResponse ok(const char* kind, nlohmann::json body) {
    body["schema_version"] = kSchemaVersion;
    body["kind"] = kind;
    return {200, std::move(body)};
  }

  static ApiResponse error(int status, const std::string& message) {
    return {status, {{"schema_version", kSchemaVersion}, {"kind", "stftlda.error"}, {"error", message}}};
  }

  static ApiResponse unavailable() { return error(503, "pipeline results not loaded"); }

  std::shared_ptr<const SessionState> session_;
};

inline std::size_t width_param(const httplib::Request& req) {
  if (!req.has_param("width")) return Api::kDefaultWidth;
  const auto s = req.get_param_value("width");
  std::size_t w = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), w);
  if (ec != std::errc{} || ptr != s.data() + s.size() || w == 0) return 0;
  return w;
}

/// Binds the API routes (and an optional static UI directory) to a server.
inline void register_routes(httplib::Server& server, std::shared_ptr<const Api> api,
                            const std::string& static_dir = {}) {
  auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/api/records", [api, send](const httplib::Request&, httplib::Response& res) { send(res, api->records()); });
  server.Get(R"(/api/records/([^/]+)/topic-series)", [api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api->topic_series(req.matches[1]));
  });
  server.Get(R"(/api/records/([^/]+)/heatmap)", [api, send](const httplib::Request& req, httplib::Response& res) {
    const auto width = width_param(req);
    if (width == 0) return send(res, {400, {{"schema_version", kSchemaVersion}, {"kind", "stftlda.error"}, {"error", "invalid width"}}});
    const auto attribute = req.has_param("attribute") ? req.get_param_value("attribute") : std::string("shear");
    send(res, api->heatmap(req.matches[1], attribute, width));
  });
  server.Get(R"(/api/records/([^/]+)/ground-accel)", [api, send](const httplib::Request& req, httplib::Response& res) {
    const auto width = width_param(req);
    if (width == 0) return send(res, {400, {{"schema_version", kSchemaVersion}, {"kind", "stftlda.error"}, {"error", "invalid width"}}});
    send(res, api->ground_accel(req.matches[1], width));
  });
  server.Get(R"(/api/topics/([^/]+)/spectrum)", [api, send](const httplib::Request& req, httplib::Response& res) {
    send(res, api->topic_spectrum(req.matches[1]));
  });
  server.Get("/api/matrix", [api, send](const httplib::Request&, httplib::Response& res) { send(res, api->matrix()); });
  server.Post("/api/search",
              [api, send](const httplib::Request& req, httplib::Response& res) { send(res, api->search(req.body)); });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace stftlda
