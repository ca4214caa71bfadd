// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include <stftlda/bench.hpp>
#include <stftlda/stftlda.hpp>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace stftlda;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void illustrative_example() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rec = normalize_channels(example_record(0));
  PipelineConfig cfg;
  cfg.n_topics = 3;
  const auto art = fit_model({rec}, cfg);
  const auto series = topic_series_for({rec}, art)[0];
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  // (a) peak bin of each normalized topic contains one of the phase frequencies.
  std::multiset<double> found;
  const auto& edges = art.vocab.bin_edges_hz;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto topic = art.model.normalized_topic(k);
    const std::size_t bin = art.vocab.word(argmax(topic)).second;
    for (double f : {0.4, 1.6, 3.2})
      if (f > edges[bin] && f <= edges[bin + 1]) found.insert(f);
  }
  const bool a = found == std::multiset<double>{0.4, 1.6, 3.2};

  // (b) dominant-topic changes, timestamped at window centers.
  std::vector<double> changes;
  std::size_t prev = argmax(series.weights.row(0));
  for (std::size_t t = 1; t < series.size(); ++t) {
    const std::size_t cur = argmax(series.weights.row(t));
    if (cur != prev) changes.push_back(series.times_s[t] + 0.5 * series.window_s);
    prev = cur;
  }
  const double bounds[] = {12.5, 25.0, 37.5};
  bool b = changes.size() == 3;
  double worst = 0.0;
  for (std::size_t i = 0; b && i < 3; ++i) {
    worst = std::max(worst, std::abs(changes[i] - bounds[i]));
    b = std::abs(changes[i] - bounds[i]) <= 2.5;
  }

  // (c) windows centered in the mixed phase: two topics with mean >= 0.25.
  std::vector<double> mean(3, 0.0);
  std::size_t count = 0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double center = series.times_s[t] + 0.5 * series.window_s;
    if (center < 25.0 || center >= 37.5) continue;
    for (std::size_t k = 0; k < 3; ++k) mean[k] += series.weights(t, k);
    ++count;
  }
  for (double& v : mean) v /= static_cast<double>(count);
  std::vector<double> sorted = mean;
  std::sort(sorted.rbegin(), sorted.rend());
  const bool c = sorted[1] >= 0.25;

  report("illustrative-example.topic-spectra", a, fmt("peak bins cover %zu of {0.4, 1.6, 3.2} Hz", found.size()));
  std::string times;
  for (double x : changes) times += fmt(" %.3f", x);
  report("illustrative-example.dominant-changes", b,
         fmt("%zu changes at [%s ] s, worst offset %.3f s (limit 2.5)", changes.size(), times.c_str(), worst));
  report("illustrative-example.mixed-phase", c,
         fmt("phase-3 mean weights %.3f %.3f %.3f (need two >= 0.25)", mean[0], mean[1], mean[2]));
  report("illustrative-example.runtime", seconds < 60.0, fmt("%.2f s (limit 60)", seconds));
}

void search_equivalence() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> rows_d(1, 8), n_d(1, 2048);
  double worst_rel = 0.0, worst_planted = 0.0;
  std::size_t misplaced = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = rows_d(rng), n = n_d(rng);
    const std::size_t l = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t off = std::uniform_int_distribution<std::size_t>(0, n - l)(rng);
    auto target = oracle::random_matrix(rows, n, rng);
    const auto query = oracle::random_matrix(rows, l, rng);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < l; ++j) target(i, off + j) = query(i, j);
    const auto fast = sliding_distance_fft(query, target);
    const auto slow = sliding_distance_naive(query, target);
    for (std::size_t k = 0; k < fast.size(); ++k) {
      const double diff = std::abs(fast[k] - slow[k]);
      if (diff == 0.0) continue;
      worst_rel = std::max(worst_rel, slow[k] > 0.0 ? diff / slow[k] : std::numeric_limits<double>::infinity());
    }
    worst_planted = std::max(worst_planted, fast[off]);
    if (fast[off] > *std::min_element(fast.begin(), fast.end())) ++misplaced;
  }
  report("search.fft-matches-naive", worst_rel <= 1e-6, fmt("200 pairs, worst rel err %.3g (limit 1e-6)", worst_rel));
  report("search.planted-copy", worst_planted <= 1e-6 && misplaced == 0,
         fmt("worst planted d %.3g (limit 1e-6), %zu minima off the planted offset", worst_planted, misplaced));
}

/// Growth per doubling of n from a least-squares fit of log2(time) on log2(n).
double growth_per_doubling(const std::vector<bench::SearchTiming>& t, double bench::SearchTiming::*ms) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& x : t) {
    const double a = std::log2(static_cast<double>(x.n)), b = std::log2(x.*ms);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  const double k = static_cast<double>(t.size());
  return std::exp2((k * sxy - sx * sy) / (k * sxx - sx * sx));
}

void search_performance() {
  // Three interleaved sweeps; per-size minimum of each path.
  std::vector<bench::SearchTiming> t;
  for (int sweep = 0; sweep < 3; ++sweep) {
    std::size_t i = 0;
    for (std::size_t n = 1024; n <= 16384; n *= 2, ++i) {
      std::mt19937_64 rng(n);
      const Matrix target = bench::random_matrix(5, n, rng), query = bench::random_matrix(5, n / 2, rng);
      volatile double sink = 0.0;
      sliding_distance_fft(query, target);
      const double naive = bench::best_time_ms([&] { sink = sink + sliding_distance_naive(query, target)[0]; }, 5);
      const double fast = bench::best_time_ms([&] { sink = sink + sliding_distance_fft(query, target)[0]; }, 50);
      if (sweep == 0) t.push_back({n, n / 2, 5, naive, fast});
      t[i].naive_ms = std::min(t[i].naive_ms, naive);
      t[i].fft_ms = std::min(t[i].fft_ms, fast);
    }
  }
  std::string naive_r, fft_r;
  for (std::size_t i = 1; i < t.size(); ++i) {
    naive_r += fmt(" %.2f", t[i].naive_ms / t[i - 1].naive_ms);
    fft_r += fmt(" %.2f", t[i].fft_ms / t[i - 1].fft_ms);
  }
  const double gn = growth_per_doubling(t, &bench::SearchTiming::naive_ms);
  const double gf = growth_per_doubling(t, &bench::SearchTiming::fft_ms);
  const double speedup = t.back().naive_ms / t.back().fft_ms;
  report("search.naive-scaling", gn >= 3.2 && gn <= 4.8,
         fmt("fitted %.2fx per doubling (need 3.2..4.8), steps [%s ]", gn, naive_r.c_str()));
  report("search.fft-scaling", gf <= 2.2, fmt("fitted %.2fx per doubling (need <= 2.2), steps [%s ]", gf, fft_r.c_str()));
  report("search.fft-speedup", speedup >= 3.0,
         fmt("n=16384: naive %.2f ms, fft %.3f ms, %.1fx (need >= 3)", t.back().naive_ms, t.back().fft_ms, speedup));
}

Corpus ensemble_corpus(const PipelineConfig& cfg) {
  EnsembleConfig e;
  e.duration_min_s = 20.0;
  e.duration_max_s = 30.0;
  e.phases_max = 4;
  auto recs = generate_ensemble(4, 77, e);
  for (auto& r : recs) r = normalize_channels(std::move(r));
  return assemble_corpus(documents_for(recs, cfg));
}

void lda_properties() {
  PipelineConfig cfg;
  cfg.n_topics = 4;
  cfg.max_iter = 100;
  const auto corpus = ensemble_corpus(cfg);
  const auto opts = cfg.lda_options();
  const auto r1 = fit(corpus, opts);
  const auto r2 = fit(corpus, opts);

  double doc_err = 0.0, topic_err = 0.0;
  for (std::size_t d = 0; d < r1.doc_topic.rows(); ++d) {
    auto row = r1.doc_topic.row(d);
    doc_err = std::max(doc_err, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
  }
  const auto theta = transform(r1.model, corpus.docs);
  for (double v : theta.data())
    if (!(v >= 0.0)) doc_err = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < r1.model.n_topics; ++k) {
    const auto row = r1.model.normalized_topic(k);
    topic_err = std::max(topic_err, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
  }
  report("lda.simplex-rows", doc_err <= 1e-9 && topic_err <= 1e-9,
         fmt("max |row sum - 1|: documents %.3g, topics %.3g (limit 1e-9)", doc_err, topic_err));

  const auto& trace = r1.model.bound_trace;
  double worst_drop = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i)
    worst_drop = std::max(worst_drop, (trace[i - 1] - trace[i]) / std::abs(trace[i - 1]));
  report("lda.bound-monotone", worst_drop <= 1e-6 && trace.size() >= 2,
         fmt("%zu iterations, worst relative drop %.3g (limit 1e-6)", trace.size(), worst_drop));

  const bool same = r1.model.topic_word == r2.model.topic_word && r1.doc_topic == r2.doc_topic &&
                    r1.model.bound_trace == r2.model.bound_trace;
  report("lda.refit-bit-identical", same, same ? "topic-word, doc-topic and bound trace equal" : "refit differs");

  auto one = opts;
  one.n_topics = 1;
  const auto r = fit(corpus, one);
  bool exact = true;
  for (double v : r.doc_topic.data()) exact = exact && v == 1.0;
  double lambda_err = 0.0;
  for (std::size_t w = 0; w < corpus.docs.cols(); ++w) {
    long double column = 0.0L;
    for (std::size_t d = 0; d < corpus.docs.rows(); ++d) column += corpus.docs(d, w);
    const double expect = static_cast<double>(1.0L + column);
    lambda_err = std::max(lambda_err, std::abs(r.model.topic_word(0, w) - expect) / expect);
  }
  exact = exact && lambda_err <= 1e-12;
  report("lda.single-topic", exact,
         fmt("all doc weights 1: %s, lambda vs eta + column sums rel err %.3g", exact ? "yes" : "no", lambda_err));
}

TopicTimeSeries random_series(std::mt19937_64& rng, std::size_t K, std::size_t T, const std::string& id) {
  TopicTimeSeries s;
  s.record_id = id;
  s.window_s = 5.0;
  s.hop_s = 0.125;
  s.weights = oracle::random_matrix(T, K, rng);
  for (std::size_t t = 0; t < T; ++t) {
    auto row = s.weights.row(t);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
    s.times_s.push_back(0.125 * static_cast<double>(t));
  }
  return s;
}

void similarity_properties() {
  std::mt19937_64 rng(99);
  std::vector<TopicTimeSeries> coll;
  for (std::size_t i = 0; i < 12; ++i)
    coll.push_back(random_series(rng, 4, 40 + 13 * i, "r" + std::to_string(i)));
  const auto sm = similarity_matrix(coll);
  bool symmetric = true;
  double diag = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    diag = std::max(diag, std::abs(sm.values(i, i) - 1.0));
    for (std::size_t j = 0; j < 12; ++j) symmetric = symmetric && sm.values(i, j) == sm.values(j, i);
  }
  report("similarity.symmetric", symmetric, symmetric ? "12x12 matrix bit-exact symmetric" : "asymmetric entry");
  report("similarity.diagonal", diag <= 1e-9, fmt("max |diag - 1| %.3g (limit 1e-9)", diag));

  double worst = 0.0;
  for (double delta : {0.0, 0.1, 0.5, 1.0, 2.0, 4.0})
    for (double sigma : {0.05, 0.3, 1.0, 2.5})
      for (std::size_t dim : {1u, 3u, 6u}) {
        GaussianSummary g1, g2;
        g1.mean = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), 0.2);
        g2.mean = g1.mean;
        g2.mean[0] += delta;
        g1.covariance = g2.covariance = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)) * sigma * sigma;
        const double expect = std::exp(-delta * delta / (8.0 * sigma * sigma));
        worst = std::max(worst, std::abs(bhattacharyya(g1, g2) - expect) / expect);
      }
  report("similarity.closed-form", worst <= 1e-9, fmt("equal-covariance one-axis rel err %.3g (limit 1e-9)", worst));

  std::size_t mismatched = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t N = 2 + static_cast<std::size_t>(trial) % 7;
    Matrix s(N, N);
    std::uniform_int_distribution<int> level(0, trial % 2 ? 4 : 1000);  // coarse levels force ties
    for (std::size_t i = 0; i < N; ++i) {
      s(i, i) = 1.0;
      for (std::size_t j = i + 1; j < N; ++j) s(i, j) = s(j, i) = level(rng) / (trial % 2 ? 4.0 : 1000.0);
    }
    const auto link = complete_linkage(s);
    const auto brute = oracle::complete_linkage(s);
    for (std::size_t m = 0; m < brute.size(); ++m)
      if (link.merges[m].height != brute[m].height) {
        ++mismatched;
        break;
      }
  }
  report("similarity.linkage-heights", mismatched == 0,
         fmt("300 matrices with N in 2..8, %zu with a height differing from brute force", mismatched));
}

void stft_properties() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise;
  std::vector<double> x(4000);
  for (double& v : x) v = noise(rng);
  double worst = 0.0;
  for (double c : {-3.7, 0.001, 2.0, 12345.678}) {
    std::vector<double> y(x);
    for (double& v : y) v *= c;
    const auto a = stft(x, 400.0), b = stft(y, 400.0);
    for (std::size_t i = 0; i < a.frames.data().size(); ++i) {
      const double expect = std::abs(c) * a.frames.data()[i];
      if (expect > 0.0) worst = std::max(worst, std::abs(b.frames.data()[i] - expect) / expect);
    }
  }
  report("stft.scale-covariance", worst <= 1e-12, fmt("max rel err %.3g (limit 1e-12)", worst));

  std::size_t bad = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t W = std::uniform_int_distribution<std::size_t>(1, 300)(rng);
    const std::size_t H = std::uniform_int_distribution<std::size_t>(1, W)(rng);
    const std::size_t L = std::uniform_int_distribution<std::size_t>(W, 3000)(rng);
    const std::vector<double> sig(L, 1.0);
    StftOptions o{static_cast<double>(W), static_cast<double>(H)};
    if (stft(sig, 1.0, o).n_frames() != oracle::count_frames(L, W, H)) ++bad;
  }
  report("stft.frame-count", bad == 0, fmt("100 random (L, W, H), %zu mismatches", bad));

  std::size_t off_peak = 0, frames = 0;
  for (std::size_t k : {2u, 3u, 8u, 15u, 40u, 79u}) {
    const double fs = 400.0, W = 2000.0;
    std::vector<double> sig(4 * 2000);
    for (std::size_t n = 0; n < sig.size(); ++n)
      sig[n] = std::sin(2.0 * std::numbers::pi * static_cast<double>(k) * fs / W * static_cast<double>(n) / fs + 0.3);
    const auto spec = stft(sig, fs);
    for (std::size_t t = 0; t < spec.n_frames(); ++t, ++frames)
      if (argmax(spec.frames.row(t)) != k) ++off_peak;
  }
  report("stft.bin-center-argmax", off_peak == 0, fmt("%zu frames, %zu with argmax off the tone bin", frames, off_peak));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool cli(const std::string& args) {
  const std::string cmd = std::string(STFTLDA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

void pipeline_determinism() {
  const auto dir = testutil::scratch_dir("acceptance_pipeline");
  const auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  std::ofstream(dir / "ensemble.json") << R"({"duration_min_s": 20, "duration_max_s": 30, "phases_max": 3})";
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    ok = ok && cli("synth --count 3 --seed 7 --config " + q(dir / "ensemble.json") + " -o " + q(out / "raw"));
    ok = ok && cli("ingest " + q(out / "raw") + " -o " + q(out / "collection.json"));
    ok = ok && cli("fit --collection " + q(out / "collection.json") + " -K 3 --seed 7 -o " + q(out / "model.json"));
    ok = ok && cli("topics --collection " + q(out / "collection.json") + " --model " + q(out / "model.json") + " -o " +
                   q(out / "topics.json"));
    ok = ok && cli("matrix --topics " + q(out / "topics.json") + " -o " + q(out / "matrix.json"));
  }
  std::size_t differing = 0;
  for (const char* name : {"collection.json", "model.json", "topics.json", "matrix.json"}) {
    const auto a = slurp(dir / "a" / name);
    if (a.empty() || a != slurp(dir / "b" / name)) ++differing;
  }
  report("pipeline.byte-identical", ok && differing == 0,
         ok ? fmt("4 artifacts compared, %zu differ", differing) : std::string("a pipeline step failed"));
  fs::remove_all(dir);
}

}  // namespace

int main() {
  try {
    illustrative_example();
    search_equivalence();
    search_performance();
    lda_properties();
    similarity_properties();
    stft_properties();
    pipeline_determinism();
  } catch (const std::exception& e) {
    report("suite", false, std::string("uncaught exception: ") + e.what());
  }
  std::cout << (failures == 0 ? "ALL PASS" : fmt("%d FAILED", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
