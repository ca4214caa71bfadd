#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "lda.hpp"
#include "matrix.hpp"

namespace stftlda {

/// Per-window topic proportions of one record; each row sums to 1.
struct TopicTimeSeries {
  std::string record_id;
  double window_s = 0.0;
  double hop_s = 0.0;
  std::vector<double> times_s;  // window start times
  Matrix weights;               // T x K

  std::size_t size() const noexcept { return weights.rows(); }
  std::size_t n_topics() const noexcept { return weights.cols(); }

  friend bool operator==(const TopicTimeSeries&, const TopicTimeSeries&) = default;
};

inline TopicTimeSeries topic_series(const TopicModel& model, const DocumentSeries& series, std::size_t threads = 1) {
  if (series.vocab.size() != model.vocab_size)
    throw DimensionError("topic_series: record '" + series.record_id + "' vocabulary has " +
                         std::to_string(series.vocab.size()) + " words, model has " +
                         std::to_string(model.vocab_size));
  TopicTimeSeries out;
  out.record_id = series.record_id;
  out.window_s = series.window_s;
  out.hop_s = series.hop_s;
  out.times_s = series.times_s;
  out.weights = transform(model, series.docs, threads);
  return out;
}

/// Rows [start, start + length).
inline Matrix segment(const TopicTimeSeries& series, std::size_t start, std::size_t length) {
  if (length == 0) throw ValidationError("segment: length must be >= 1");
  if (start > series.size() || length > series.size() - start)
    throw ValidationError("segment: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                          ") outside series of " + std::to_string(series.size()) + " windows");
  return series.weights.row_slice(start, length);
}

inline nlohmann::json to_json(const TopicTimeSeries& s) {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t t = 0; t < s.size(); ++t)
    weights.push_back(std::vector<double>(s.weights.row(t).begin(), s.weights.row(t).end()));
  return {{"record_id", s.record_id}, {"window_s", s.window_s}, {"hop_s", s.hop_s},
          {"times_s", s.times_s},     {"weights", std::move(weights)}};
}

inline TopicTimeSeries topic_series_from_json(const nlohmann::json& j) {
  try {
    TopicTimeSeries s;
    s.record_id = j.at("record_id").get<std::string>();
    s.window_s = j.value("window_s", 0.0);
    s.hop_s = j.value("hop_s", 0.0);
    s.times_s = j.at("times_s").get<std::vector<double>>();
    const auto& rows = j.at("weights");
    const std::size_t T = rows.size();
    if (T != s.times_s.size()) throw ParseError("weights and times_s differ in length", 0, "weights");
    const std::size_t K = T ? rows[0].size() : 0;
    s.weights = Matrix(T, K);
    for (std::size_t t = 0; t < T; ++t) {
      auto row = rows[t].get<std::vector<double>>();
      if (row.size() != K) throw ParseError("ragged weights row", 0, "weights");
      std::copy(row.begin(), row.end(), s.weights.row(t).begin());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid topic series JSON: ") + e.what());
  }
}

}  // namespace stftlda
