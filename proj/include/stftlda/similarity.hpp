#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include "error.hpp"
#include "matrix.hpp"
#include "topics.hpp"

namespace stftlda {

/// Gaussian fit of a record's topic-weight rows.
struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // population covariance + ridge * I
  std::size_t sample_count = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

inline GaussianSummary fit_gaussian(const Matrix& rows, double ridge = 1e-6) {
  if (rows.rows() < 1) throw ValidationError("fit_gaussian: need at least one sample");
  if (!(ridge > 0.0)) throw ValidationError("fit_gaussian: ridge must be positive");
  const auto T = static_cast<Eigen::Index>(rows.rows());
  const auto K = static_cast<Eigen::Index>(rows.cols());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(rows.data().data(), T, K);
  GaussianSummary g;
  g.sample_count = rows.rows();
  g.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(T);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  g.covariance.diagonal().array() += ridge;
  return g;
}

inline GaussianSummary fit_gaussian(const TopicTimeSeries& series, double ridge = 1e-6) {
  return fit_gaussian(series.weights, ridge);
}

namespace detail {

inline double log_det_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

/// Bhattacharyya coefficient exp(-D_B) between two Gaussians, with
/// D_B = 1/8 dm' S^-1 dm + 1/2 ln(det S / sqrt(det S1 det S2)), S = (S1 + S2) / 2.
inline double bhattacharyya(const GaussianSummary& g1, const GaussianSummary& g2) {
  if (g1.dim() != g2.dim())
    throw DimensionError("bhattacharyya: dimension " + std::to_string(g1.dim()) + " vs " + std::to_string(g2.dim()));
  const Eigen::MatrixXd avg = (g1.covariance + g2.covariance) * 0.5;
  Eigen::LLT<Eigen::MatrixXd> llt(avg);
  if (llt.info() != Eigen::Success) throw ValidationError("bhattacharyya: averaged covariance not positive definite");
  const Eigen::VectorXd diff = g1.mean - g2.mean;
  const double mahalanobis = diff.dot(llt.solve(diff));
  const double log_det_avg = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double log_det_pair = detail::log_det_spd(g1.covariance) + detail::log_det_spd(g2.covariance);
  const double distance = mahalanobis / 8.0 + 0.5 * (log_det_avg - 0.5 * log_det_pair);
  return std::exp(-distance);
}

struct Merge {
  std::size_t left = 0;   // node ids: leaves 0..N-1, merge s creates node N+s
  std::size_t right = 0;
  double height = 0.0;
  std::size_t size = 0;
};

struct Linkage {
  std::vector<Merge> merges;
  std::vector<std::size_t> order;  // leaf order of the dendrogram
};

/// Complete-linkage agglomeration on distance = 1 - similarity. At each step
/// the closest pair of clusters merges; ties go to the lexicographically
/// smallest pair of (smallest member index) keys. Leaves are ordered by a
/// left-before-right walk where the left child holds the smaller member.
inline Linkage complete_linkage(const Matrix& similarity) {
  const std::size_t N = similarity.rows();
  if (similarity.cols() != N) throw DimensionError("complete_linkage: matrix not square");
  Linkage out;
  if (N == 0) return out;

  Matrix dist(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) dist(i, j) = 1.0 - similarity(i, j);
  std::vector<bool> active(N, true);
  std::vector<std::size_t> node(N), size(N, 1);
  for (std::size_t i = 0; i < N; ++i) node[i] = i;

  for (std::size_t step = 0; step + 1 < N; ++step) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t i = 0; i < N; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < N; ++j) {
        if (!active[j]) continue;
        if (!found || dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
          found = true;
        }
      }
    }
    out.merges.push_back({node[bi], node[bj], best, size[bi] + size[bj]});
    for (std::size_t x = 0; x < N; ++x) {
      if (!active[x] || x == bi || x == bj) continue;
      const double d = std::max(dist(bi, x), dist(bj, x));
      dist(bi, x) = d;
      dist(x, bi) = d;
    }
    active[bj] = false;
    node[bi] = N + step;
    size[bi] += size[bj];
  }

  std::function<void(std::size_t)> walk = [&](std::size_t id) {
    if (id < N) {
      out.order.push_back(id);
      return;
    }
    walk(out.merges[id - N].left);
    walk(out.merges[id - N].right);
  };
  walk(N == 1 ? 0 : 2 * N - 2);
  return out;
}

struct SimilarityMatrix {
  std::vector<std::string> ids;
  Matrix values;
  std::vector<std::size_t> display_order;
  std::vector<Merge> dendrogram;
};

inline SimilarityMatrix similarity_matrix(const std::vector<TopicTimeSeries>& collection, double ridge = 1e-6) {
  if (collection.size() < 2) throw ValidationError("similarity_matrix: need at least two records");
  const std::size_t N = collection.size();
  std::vector<GaussianSummary> fits;
  fits.reserve(N);
  for (const auto& s : collection) fits.push_back(fit_gaussian(s, ridge));
  SimilarityMatrix sm;
  sm.values = Matrix(N, N);
  for (std::size_t i = 0; i < N; ++i) {
    sm.ids.push_back(collection[i].record_id);
    sm.values(i, i) = bhattacharyya(fits[i], fits[i]);
    for (std::size_t j = i + 1; j < N; ++j) {
      const double bc = bhattacharyya(fits[i], fits[j]);
      sm.values(i, j) = bc;
      sm.values(j, i) = bc;
    }
  }
  auto linkage = complete_linkage(sm.values);
  sm.display_order = std::move(linkage.order);
  sm.dendrogram = std::move(linkage.merges);
  return sm;
}

inline nlohmann::json to_json(const SimilarityMatrix& sm) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t i = 0; i < sm.values.rows(); ++i)
    values.push_back(std::vector<double>(sm.values.row(i).begin(), sm.values.row(i).end()));
  nlohmann::json dendrogram = nlohmann::json::array();
  for (const auto& m : sm.dendrogram)
    dendrogram.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
  return {{"ids", sm.ids},
          {"values", std::move(values)},
          {"display_order", sm.display_order},
          {"dendrogram", std::move(dendrogram)}};
}

inline SimilarityMatrix similarity_from_json(const nlohmann::json& j) {
  try {
    SimilarityMatrix sm;
    sm.ids = j.at("ids").get<std::vector<std::string>>();
    const std::size_t N = sm.ids.size();
    sm.values = Matrix(N, N);
    const auto& rows = j.at("values");
    if (rows.size() != N) throw ParseError("values has wrong row count", 0, "values");
    for (std::size_t i = 0; i < N; ++i) {
      auto row = rows[i].get<std::vector<double>>();
      if (row.size() != N) throw ParseError("values row has wrong width", 0, "values");
      std::copy(row.begin(), row.end(), sm.values.row(i).begin());
    }
    sm.display_order = j.at("display_order").get<std::vector<std::size_t>>();
    for (const auto& m : j.at("dendrogram"))
      sm.dendrogram.push_back({m.at("left").get<std::size_t>(), m.at("right").get<std::size_t>(),
                               m.at("height").get<double>(), m.at("size").get<std::size_t>()});
    return sm;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid matrix JSON: ") + e.what());
  }
}

}  // namespace stftlda
