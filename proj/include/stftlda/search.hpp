#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "matrix.hpp"
#include "topics.hpp"

namespace stftlda {

// Sliding distances operate on topic-major matrices: rows are topics,
// columns are time steps.

namespace detail {

inline void check_sliding_shapes(const Matrix& query, const Matrix& target) {
  if (query.rows() != target.rows())
    throw DimensionError("sliding distance: query has " + std::to_string(query.rows()) + " rows, target has " +
                         std::to_string(target.rows()));
  if (query.cols() == 0) throw DimensionError("sliding distance: empty query");
  if (query.cols() > target.cols())
    throw DimensionError("sliding distance: query length " + std::to_string(query.cols()) +
                         " exceeds target length " + std::to_string(target.cols()));
}

}  // namespace detail

/// d[k] = || query - target[:, k : k + l] ||_F, evaluated directly.
inline std::vector<double> sliding_distance_naive(const Matrix& query, const Matrix& target) {
  detail::check_sliding_shapes(query, target);
  const std::size_t rows = query.rows(), l = query.cols(), n = target.cols();
  std::vector<double> d(n - l + 1, 0.0);
  for (std::size_t k = 0; k + l <= n; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      auto u = query.row(i);
      auto v = target.row(i);
      for (std::size_t j = 0; j < l; ++j) {
        const double diff = u[j] - v[k + j];
        sum += diff * diff;
      }
    }
    d[k] = std::sqrt(sum);
  }
  return d;
}

/// Squared sliding distance c - 2a + b before clamping, where a is the
/// sliding dot product computed by FFT correlation, b the windowed energy of
/// the target from prefix sums, and c the query energy.
/// `energy`, when given, receives c + b per lag (the scale of the cancellation error).
inline std::vector<double> sliding_sq_distance_fft(const Matrix& query, const Matrix& target,
                                                   std::vector<double>* energy = nullptr) {
  detail::check_sliding_shapes(query, target);
  const std::size_t rows = query.rows(), l = query.cols(), n = target.cols();
  const std::size_t lags = n - l + 1;
  if (energy) energy->assign(lags, 0.0);
  const std::size_t P = fft::next_pow2(n + l - 1);
  auto& plan = fft::real_plan(P);
  auto buf = plan.real();
  auto spec = plan.spectrum();
  const std::size_t F = spec.size();

  // Reused across calls: fresh large allocations cost page faults.
  thread_local std::vector<std::complex<double>> acc, query_spec;
  thread_local std::vector<double> prefix;
  acc.assign(F, 0.0);
  query_spec.resize(F);
  prefix.assign(n + 1, 0.0);
  double c = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    auto u = query.row(i);
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(l), buf.end(), 0.0);
    for (std::size_t j = 0; j < l; ++j) {
      buf[j] = u[l - 1 - j];  // reversed: convolution with the reversed query is correlation
      c += u[j] * u[j];
    }
    plan.forward();
    std::copy(spec.begin(), spec.end(), query_spec.begin());

    auto v = target.row(i);
    std::copy(v.begin(), v.end(), buf.begin());
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(n), buf.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) prefix[j + 1] += v[j] * v[j];
    plan.forward();
    for (std::size_t f = 0; f < F; ++f) acc[f] += query_spec[f] * spec[f];
  }
  std::copy(acc.begin(), acc.end(), spec.begin());
  plan.inverse();
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] += prefix[j];

  const double scale = 1.0 / static_cast<double>(P);
  std::vector<double> sq(lags);
  for (std::size_t k = 0; k < lags; ++k) {
    const double a = buf[k + l - 1] * scale;
    const double b = prefix[k + l] - prefix[k];
    sq[k] = c - 2.0 * a + b;
    if (energy) (*energy)[k] = c + b;
  }
  return sq;
}

/// Same distances as sliding_distance_naive in O(n log n).
/// Lags whose squared distance is within 1e-6 of c + b are summed directly:
/// the expanded form loses about sqrt(eps * (c + b)) there.
inline std::vector<double> sliding_distance_fft(const Matrix& query, const Matrix& target) {
  std::vector<double> energy;
  auto d = sliding_sq_distance_fft(query, target, &energy);
  const std::size_t rows = query.rows(), l = query.cols();
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k] <= 1e-6 * energy[k]) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        auto u = query.row(i);
        auto v = target.row(i);
        for (std::size_t j = 0; j < l; ++j) {
          const double e = u[j] - v[k + j];
          s += e * e;
        }
      }
      d[k] = s;
    }
    d[k] = std::sqrt(std::max(0.0, d[k]));
  }
  return d;
}

struct QuerySelection {
  std::string source_record_id;
  std::size_t start_index = 0;
  std::size_t length = 0;
  std::vector<std::size_t> topic_mask;  // empty = all topics
};

struct SearchHit {
  std::string record_id;
  std::size_t record_index = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  double distance = 0.0;
  /// Hit offset minus query start: shift that aligns the hit with the query.
  long long alignment_shift = 0;
};

struct SearchResult {
  std::vector<SearchHit> hits;
  std::vector<std::string> diagnostics;
};

/// Topic-major (K' x T) view of a series restricted to `mask` (all topics if empty).
inline Matrix topic_major(const Matrix& weights, const std::vector<std::size_t>& mask, std::size_t begin,
                          std::size_t length) {
  const std::size_t K = weights.cols();
  std::vector<std::size_t> topics = mask;
  if (topics.empty())
    for (std::size_t k = 0; k < K; ++k) topics.push_back(k);
  Matrix out(topics.size(), length);
  for (std::size_t i = 0; i < topics.size(); ++i)
    for (std::size_t t = 0; t < length; ++t) out(i, t) = weights(begin + t, topics[i]);
  return out;
}

/// Best match plus the best match at least `min_separation` away, with
/// offsets in `excluded` (a half-open range) ignored.
inline std::vector<std::pair<std::size_t, double>> best_two(const std::vector<double>& d, std::size_t min_separation,
                                                            std::size_t excluded_begin = 0,
                                                            std::size_t excluded_end = 0) {
  auto allowed = [&](std::size_t k) { return k < excluded_begin || k >= excluded_end; };
  std::optional<std::size_t> first;
  for (std::size_t k = 0; k < d.size(); ++k)
    if (allowed(k) && (!first || d[k] < d[*first])) first = k;
  std::vector<std::pair<std::size_t, double>> out;
  if (!first) return out;
  out.emplace_back(*first, d[*first]);
  std::optional<std::size_t> second;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const std::size_t gap = k > *first ? k - *first : *first - k;
    if (allowed(k) && gap >= min_separation && (!second || d[k] < d[*second])) second = k;
  }
  if (second) out.emplace_back(*second, d[*second]);
  return out;
}

/// Up to two hits per record, merged and sorted by ascending distance.
/// `min_separation` defaults to the query length. In the source record,
/// offsets closer than `min_separation` to the query start are excluded.
inline SearchResult search_collection(const QuerySelection& query, const std::vector<TopicTimeSeries>& collection,
                                      std::size_t top_n, std::optional<std::size_t> min_separation = std::nullopt) {
  if (collection.empty()) throw ValidationError("search: empty collection");
  auto source_it = std::find_if(collection.begin(), collection.end(),
                                [&](const TopicTimeSeries& s) { return s.record_id == query.source_record_id; });
  if (source_it == collection.end()) throw NotFoundError("search: unknown record '" + query.source_record_id + "'");
  const auto& source = *source_it;
  const std::size_t K = source.n_topics();
  if (query.length < 1) throw ValidationError("search: query length must be >= 1");
  if (query.start_index > source.size() || query.length > source.size() - query.start_index)
    throw ValidationError("search: query [" + std::to_string(query.start_index) + ", " +
                          std::to_string(query.start_index + query.length) + ") outside record of " +
                          std::to_string(source.size()) + " windows");
  std::vector<bool> seen(K, false);
  for (std::size_t k : query.topic_mask) {
    if (k >= K) throw ValidationError("search: topic " + std::to_string(k) + " out of range");
    if (seen[k]) throw ValidationError("search: duplicate topic " + std::to_string(k) + " in mask");
    seen[k] = true;
  }
  const std::size_t sep = min_separation.value_or(query.length);
  if (sep < 1) throw ValidationError("search: min_separation must be >= 1");

  const Matrix v1 = topic_major(source.weights, query.topic_mask, query.start_index, query.length);
  SearchResult result;
  for (std::size_t r = 0; r < collection.size(); ++r) {
    const auto& target = collection[r];
    if (target.n_topics() != K)
      throw DimensionError("search: record '" + target.record_id + "' has a different topic count");
    if (target.size() < query.length) {
      result.diagnostics.push_back("record '" + target.record_id + "' skipped: " + std::to_string(target.size()) +
                                   " windows is shorter than the query (" + std::to_string(query.length) + ")");
      continue;
    }
    const Matrix v2 = topic_major(target.weights, query.topic_mask, 0, target.size());
    const auto d = sliding_distance_fft(v1, v2);
    std::size_t ex_begin = 0, ex_end = 0;
    if (&target == &source) {
      ex_begin = query.start_index >= sep ? query.start_index - sep + 1 : 0;
      ex_end = query.start_index + sep;
    }
    for (auto [offset, dist] : best_two(d, sep, ex_begin, ex_end))
      result.hits.push_back({target.record_id, r, offset, query.length, dist,
                             static_cast<long long>(offset) - static_cast<long long>(query.start_index)});
  }
  std::stable_sort(result.hits.begin(), result.hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.record_index != b.record_index) return a.record_index < b.record_index;
    return a.offset < b.offset;
  });
  if (result.hits.size() > top_n) result.hits.resize(top_n);
  return result;
}

}  // namespace stftlda
