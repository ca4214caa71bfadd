#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "matrix.hpp"
#include "special.hpp"

namespace stftlda {

struct LdaOptions {
  std::size_t n_topics = 5;
  std::optional<double> alpha;  // document-topic prior, default 1/K
  std::optional<double> eta;    // topic-word prior, default 1/K
  std::size_t max_iter = 200;
  double tol = 1e-6;  // relative change of the bound between EM iterations
  std::uint64_t seed = 0;
  std::size_t max_doc_iter = 2000;
  /// Per-document fixed point stops once max_k |delta gamma_k| <= doc_tol * sum_k gamma_k.
  double doc_tol = 1e-10;
  std::size_t threads = 1;
  /// Documents per E-step work unit. Sufficient statistics are reduced block
  /// by block in document order, so results do not depend on `threads`.
  std::size_t block_size = 64;
};

/// Variational topic-word parameters (lambda) plus the settings that produced them.
struct TopicModel {
  std::size_t n_topics = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_iters_run = 0;
  double final_bound = 0.0;
  std::vector<double> bound_trace;
  std::size_t max_doc_iter = 2000;
  double doc_tol = 1e-10;
  Matrix topic_word;  // K x |W|, every entry >= eta

  /// Row k divided by its sum.
  std::vector<double> normalized_topic(std::size_t k) const {
    auto row = topic_word.row(k);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    std::vector<double> out(row.begin(), row.end());
    for (double& v : out) v /= total;
    return out;
  }

  double topic_mass(std::size_t k) const {
    auto row = topic_word.row(k);
    return std::accumulate(row.begin(), row.end(), 0.0);
  }
};

struct FitResult {
  TopicModel model;
  Matrix doc_topic;  // D x K, rows on the simplex
  std::vector<std::string> warnings;
};

namespace detail {

/// exp(E[log beta]) stored word-major (W x K) for the per-word inner loops.
inline Matrix exp_elog_beta_wk(const Matrix& lambda) {
  const std::size_t K = lambda.rows(), W = lambda.cols();
  Matrix out(W, K);
  for (std::size_t k = 0; k < K; ++k) {
    auto row = lambda.row(k);
    const double psi_total = special::digamma(std::accumulate(row.begin(), row.end(), 0.0));
    for (std::size_t w = 0; w < W; ++w) out(w, k) = std::exp(special::digamma(row[w]) - psi_total);
  }
  return out;
}

struct EStepWorkspace {
  std::vector<std::size_t> words;
  std::vector<double> et, acc, next;
  explicit EStepWorkspace(std::size_t K) : et(K), acc(K), next(K) {}
};

inline void initial_gamma(std::span<const double> doc, double alpha, std::span<double> gamma) {
  const double total = std::accumulate(doc.begin(), doc.end(), 0.0);
  for (double& g : gamma) g = alpha + total / static_cast<double>(gamma.size());
}

/// Coordinate ascent on one document's gamma against frozen exp(E[log beta]).
/// When `sstat` is non-null, adds n_w * phi_wk into sstat (K x W).
inline void doc_estep(std::span<const double> doc, const Matrix& eb, double alpha, std::span<double> gamma,
                      std::size_t max_iter, double tol, EStepWorkspace& ws, Matrix* sstat) {
  const std::size_t K = gamma.size();
  ws.words.clear();
  for (std::size_t w = 0; w < doc.size(); ++w)
    if (doc[w] != 0.0) ws.words.push_back(w);

  special::exp_dirichlet_expectation(gamma, ws.et);
  for (std::size_t it = 0; it < max_iter && !ws.words.empty(); ++it) {
    std::fill(ws.acc.begin(), ws.acc.end(), 0.0);
    for (std::size_t w : ws.words) {
      const double* b = eb.row(w).data();
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += ws.et[k] * b[k];
      const double r = doc[w] / s;
      for (std::size_t k = 0; k < K; ++k) ws.acc[k] += b[k] * r;
    }
    double change = 0.0, total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      ws.next[k] = alpha + ws.et[k] * ws.acc[k];
      change = std::max(change, std::abs(ws.next[k] - gamma[k]));
      total += ws.next[k];
    }
    std::copy(ws.next.begin(), ws.next.end(), gamma.begin());
    special::exp_dirichlet_expectation(gamma, ws.et);
    if (change <= tol * total) break;
  }

  if (sstat) {
    for (std::size_t w : ws.words) {
      const double* b = eb.row(w).data();
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += ws.et[k] * b[k];
      for (std::size_t k = 0; k < K; ++k) (*sstat)(k, w) += doc[w] * ((ws.et[k] * b[k]) / s);
    }
  }
}

/// Runs the E-step over all documents in fixed blocks. Returns the summed
/// sufficient statistics when requested.
inline Matrix estep_all(const Matrix& docs, const Matrix& eb, double alpha, Matrix& gamma, std::size_t max_iter,
                        double tol, bool want_sstat, std::size_t threads, std::size_t block_size) {
  const std::size_t D = docs.rows(), K = gamma.cols(), W = docs.cols();
  block_size = std::max<std::size_t>(block_size, 1);
  const std::size_t n_blocks = (D + block_size - 1) / block_size;
  std::vector<Matrix> partial(want_sstat ? n_blocks : 0);

  auto run_block = [&](std::size_t blk, EStepWorkspace& ws) {
    Matrix* out = nullptr;
    if (want_sstat) {
      partial[blk] = Matrix(K, W);
      out = &partial[blk];
    }
    const std::size_t end = std::min(D, (blk + 1) * block_size);
    for (std::size_t d = blk * block_size; d < end; ++d)
      doc_estep(docs.row(d), eb, alpha, gamma.row(d), max_iter, tol, ws, out);
  };

  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_blocks, 1));
  if (threads == 1) {
    EStepWorkspace ws(K);
    for (std::size_t blk = 0; blk < n_blocks; ++blk) run_block(blk, ws);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        EStepWorkspace ws(K);
        for (std::size_t blk; (blk = next.fetch_add(1)) < n_blocks;) run_block(blk, ws);
      });
  }

  Matrix total(want_sstat ? K : 0, want_sstat ? W : 0);
  for (const auto& p : partial)
    for (std::size_t i = 0; i < p.data().size(); ++i) total.data()[i] += p.data()[i];
  return total;
}

/// Evidence lower bound with phi at its optimum for the given gamma and lambda.
inline double evidence_bound(const Matrix& docs, const Matrix& gamma, const Matrix& lambda, double alpha, double eta) {
  const std::size_t D = docs.rows(), K = lambda.rows(), W = lambda.cols();
  const Matrix eb = exp_elog_beta_wk(lambda);
  std::vector<double> et(K), elog_theta(K);
  double bound = 0.0;
  for (std::size_t d = 0; d < D; ++d) {
    auto g = gamma.row(d);
    const double g_total = std::accumulate(g.begin(), g.end(), 0.0);
    const double psi_total = special::digamma(g_total);
    for (std::size_t k = 0; k < K; ++k) {
      elog_theta[k] = special::digamma(g[k]) - psi_total;
      et[k] = std::exp(elog_theta[k]);
    }
    auto doc = docs.row(d);
    for (std::size_t w = 0; w < W; ++w) {
      if (doc[w] == 0.0) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += et[k] * eb(w, k);
      bound += doc[w] * std::log(s);
    }
    for (std::size_t k = 0; k < K; ++k)
      bound += (alpha - g[k]) * elog_theta[k] + std::lgamma(g[k]) - std::lgamma(alpha);
    bound += std::lgamma(alpha * static_cast<double>(K)) - std::lgamma(g_total);
  }
  for (std::size_t k = 0; k < K; ++k) {
    auto row = lambda.row(k);
    const double l_total = std::accumulate(row.begin(), row.end(), 0.0);
    const double psi_total = special::digamma(l_total);
    for (std::size_t w = 0; w < W; ++w)
      bound += (eta - row[w]) * (special::digamma(row[w]) - psi_total) + std::lgamma(row[w]) - std::lgamma(eta);
    bound += std::lgamma(eta * static_cast<double>(W)) - std::lgamma(l_total);
  }
  return bound;
}

inline void check_documents(const Matrix& docs) {
  for (std::size_t d = 0; d < docs.rows(); ++d)
    for (double v : docs.row(d)) {
      if (!std::isfinite(v)) throw ValidationError("lda: non-finite weight in document " + std::to_string(d));
      if (v < 0.0) throw ValidationError("lda: negative weight in document " + std::to_string(d));
    }
}

inline Matrix initial_gammas(const Matrix& docs, std::size_t K, double alpha) {
  Matrix gamma(docs.rows(), K);
  for (std::size_t d = 0; d < docs.rows(); ++d) initial_gamma(docs.row(d), alpha, gamma.row(d));
  return gamma;
}

inline Matrix normalize_rows(const Matrix& gamma) {
  Matrix out = gamma;
  for (std::size_t d = 0; d < out.rows(); ++d) {
    auto row = out.row(d);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  }
  return out;
}

}  // namespace detail

/// Batch variational EM. Gamma is warm-started across iterations so the
/// bound is non-decreasing; a last E-step against the final lambda produces
/// `doc_topic`. Topics are returned sorted by descending total mass.
inline FitResult fit(const Corpus& corpus, const LdaOptions& opts) {
  const Matrix& docs = corpus.docs;
  const std::size_t K = opts.n_topics, W = corpus.vocab.size();
  if (K < 1) throw ValidationError("lda: number of topics must be >= 1");
  if (docs.rows() == 0) throw ValidationError("lda: empty corpus");
  if (docs.cols() != W) throw DimensionError("lda: document width does not match vocabulary");
  const double alpha = opts.alpha.value_or(1.0 / static_cast<double>(K));
  const double eta = opts.eta.value_or(1.0 / static_cast<double>(K));
  if (!(alpha > 0.0) || !(eta > 0.0)) throw ValidationError("lda: alpha and eta must be positive");
  detail::check_documents(docs);

  FitResult result;
  if (K > W)
    result.warnings.push_back("number of topics (" + std::to_string(K) + ") exceeds vocabulary size (" +
                              std::to_string(W) + ")");

  TopicModel& model = result.model;
  model.n_topics = K;
  model.vocab_size = W;
  model.alpha = alpha;
  model.eta = eta;
  model.seed = opts.seed;
  model.max_doc_iter = opts.max_doc_iter;
  model.doc_tol = opts.doc_tol;

  std::mt19937_64 rng(opts.seed);
  std::gamma_distribution<double> init(100.0, 1.0 / 100.0);
  Matrix lambda(K, W);
  for (double& v : lambda.data()) v = init(rng);

  Matrix gamma = detail::initial_gammas(docs, K, alpha);
  double previous = 0.0;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    const Matrix eb = detail::exp_elog_beta_wk(lambda);
    Matrix sstat = detail::estep_all(docs, eb, alpha, gamma, opts.max_doc_iter, opts.doc_tol, true, opts.threads,
                                     opts.block_size);
    for (std::size_t i = 0; i < lambda.data().size(); ++i) lambda.data()[i] = eta + sstat.data()[i];
    const double b = detail::evidence_bound(docs, gamma, lambda, alpha, eta);
    model.bound_trace.push_back(b);
    model.n_iters_run = it + 1;
    if (it > 0 && std::abs(b - previous) <= opts.tol * std::abs(previous)) break;
    previous = b;
  }

  detail::estep_all(docs, detail::exp_elog_beta_wk(lambda), alpha, gamma, opts.max_doc_iter, opts.doc_tol, false,
                    opts.threads, opts.block_size);
  model.final_bound = detail::evidence_bound(docs, gamma, lambda, alpha, eta);

  // Sort topics by descending total mass (stable on ties).
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> mass(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto row = lambda.row(k);
    mass[k] = std::accumulate(row.begin(), row.end(), 0.0);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  model.topic_word = Matrix(K, W);
  Matrix sorted_gamma(gamma.rows(), K);
  for (std::size_t k = 0; k < K; ++k) {
    std::copy(lambda.row(order[k]).begin(), lambda.row(order[k]).end(), model.topic_word.row(k).begin());
    for (std::size_t d = 0; d < gamma.rows(); ++d) sorted_gamma(d, k) = gamma(d, order[k]);
  }
  result.doc_topic = detail::normalize_rows(sorted_gamma);
  return result;
}

/// Per-document topic proportions against the frozen model.
inline Matrix transform(const TopicModel& model, const Matrix& docs, std::size_t threads = 1) {
  if (docs.cols() != model.vocab_size)
    throw DimensionError("lda transform: documents have " + std::to_string(docs.cols()) + " words, model has " +
                         std::to_string(model.vocab_size));
  detail::check_documents(docs);
  Matrix gamma = detail::initial_gammas(docs, model.n_topics, model.alpha);
  detail::estep_all(docs, detail::exp_elog_beta_wk(model.topic_word), model.alpha, gamma, model.max_doc_iter,
                    model.doc_tol, false, threads, 64);
  return detail::normalize_rows(gamma);
}

/// Evidence lower bound of a corpus under the model, with per-document
/// variational parameters re-optimized.
inline double bound(const TopicModel& model, const Matrix& docs) {
  if (docs.cols() != model.vocab_size) throw DimensionError("lda bound: width mismatch");
  Matrix gamma = detail::initial_gammas(docs, model.n_topics, model.alpha);
  detail::estep_all(docs, detail::exp_elog_beta_wk(model.topic_word), model.alpha, gamma, model.max_doc_iter,
                    model.doc_tol, false, 1, 64);
  return detail::evidence_bound(docs, gamma, model.topic_word, model.alpha, model.eta);
}

inline double bound(const TopicModel& model, const Corpus& corpus) { return bound(model, corpus.docs); }

/// Topic k as a channels x bins grid scaled so its maximum is 1.
inline Matrix topic_spectrum(const TopicModel& model, std::size_t k, const Vocabulary& vocab) {
  if (k >= model.n_topics) throw ValidationError("topic index " + std::to_string(k) + " out of range");
  if (vocab.size() != model.vocab_size) throw DimensionError("topic_spectrum: vocabulary size mismatch");
  auto row = model.topic_word.row(k);
  const double peak = *std::max_element(row.begin(), row.end());
  Matrix grid(vocab.n, vocab.m);
  for (std::size_t ch = 0; ch < vocab.n; ++ch)
    for (std::size_t b = 0; b < vocab.m; ++b) grid(ch, b) = row[vocab.word_index(ch, b)] / peak;
  return grid;
}

inline nlohmann::json to_json(const TopicModel& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < m.n_topics; ++k) rows.push_back(std::vector<double>(m.topic_word.row(k).begin(),
                                                                                  m.topic_word.row(k).end()));
  return {{"n_topics", m.n_topics},   {"vocab_size", m.vocab_size},     {"alpha", m.alpha},
          {"eta", m.eta},             {"seed", m.seed},                 {"n_iters_run", m.n_iters_run},
          {"final_bound", m.final_bound}, {"bound_trace", m.bound_trace}, {"max_doc_iter", m.max_doc_iter},
          {"doc_tol", m.doc_tol},     {"topic_word", std::move(rows)}};
}

inline TopicModel model_from_json(const nlohmann::json& j) {
  try {
    TopicModel m;
    m.n_topics = j.at("n_topics").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.alpha = j.at("alpha").get<double>();
    m.eta = j.at("eta").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_iters_run = j.at("n_iters_run").get<std::size_t>();
    m.final_bound = j.at("final_bound").get<double>();
    m.bound_trace = j.at("bound_trace").get<std::vector<double>>();
    m.max_doc_iter = j.value("max_doc_iter", m.max_doc_iter);
    m.doc_tol = j.value("doc_tol", m.doc_tol);
    const auto& rows = j.at("topic_word");
    if (rows.size() != m.n_topics) throw ParseError("topic_word has wrong row count", 0, "topic_word");
    m.topic_word = Matrix(m.n_topics, m.vocab_size);
    for (std::size_t k = 0; k < m.n_topics; ++k) {
      auto row = rows[k].get<std::vector<double>>();
      if (row.size() != m.vocab_size) throw ParseError("topic_word row has wrong width", 0, "topic_word");
      std::copy(row.begin(), row.end(), m.topic_word.row(k).begin());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid model JSON: ") + e.what());
  }
}

}  // namespace stftlda
