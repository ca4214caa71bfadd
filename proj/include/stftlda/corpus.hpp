#pragma once

#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "matrix.hpp"
#include "stft.hpp"

namespace stftlda {

/// Words are (channel, frequency bin) pairs, indexed channel-major.
struct Vocabulary {
  std::size_t m = 0;  // frequency bins
  std::size_t n = 0;  // channels
  std::vector<std::string> channel_labels;
  std::vector<double> bin_edges_hz;

  std::size_t size() const noexcept { return m * n; }
  std::size_t word_index(std::size_t channel, std::size_t bin) const noexcept { return channel * m + bin; }
  std::pair<std::size_t, std::size_t> word(std::size_t index) const noexcept { return {index / m, index % m}; }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

inline Vocabulary make_vocabulary(const SimulationRecord& rec, const std::vector<double>& bin_edges_hz) {
  if (bin_edges_hz.size() < 2) throw ValidationError("vocabulary: need at least one frequency bin");
  Vocabulary v;
  v.m = bin_edges_hz.size() - 1;
  v.n = rec.channels.size();
  v.bin_edges_hz = bin_edges_hz;
  for (const auto& ch : rec.channels) v.channel_labels.push_back(ch.label());
  return v;
}

/// Time series of documents for one record. Documents keep their raw
/// magnitudes; no per-document normalization is applied.
struct DocumentSeries {
  std::string record_id;
  Vocabulary vocab;
  double window_s = 0.0;
  double hop_s = 0.0;
  std::vector<double> times_s;  // window start times
  Matrix docs;                  // T x |W|
  std::vector<bool> zero_doc;   // all-zero windows, kept for time alignment

  std::size_t size() const noexcept { return docs.rows(); }
};

inline DocumentSeries build_documents(std::string record_id, const std::vector<BinnedSpectrogram>& binned,
                                      const Vocabulary& vocab, double window_s, double hop_s) {
  if (binned.size() != vocab.n)
    throw DimensionError("build_documents: " + std::to_string(binned.size()) + " channels, vocabulary has " +
                         std::to_string(vocab.n));
  if (binned.empty()) throw DimensionError("build_documents: no channels");
  const std::size_t T = binned.front().n_frames();
  for (std::size_t ch = 0; ch < binned.size(); ++ch) {
    if (binned[ch].m != vocab.m)
      throw DimensionError("build_documents: channel " + std::to_string(ch) + " has " + std::to_string(binned[ch].m) +
                           " bins, vocabulary has " + std::to_string(vocab.m));
    if (binned[ch].n_frames() != T)
      throw DimensionError("build_documents: channel " + std::to_string(ch) + " has a different frame count");
  }
  DocumentSeries ds;
  ds.record_id = std::move(record_id);
  ds.vocab = vocab;
  ds.window_s = window_s;
  ds.hop_s = hop_s;
  ds.docs = Matrix(T, vocab.size());
  ds.times_s.resize(T);
  ds.zero_doc.assign(T, true);
  for (std::size_t t = 0; t < T; ++t) {
    ds.times_s[t] = static_cast<double>(t) * hop_s;
    auto doc = ds.docs.row(t);
    for (std::size_t ch = 0; ch < vocab.n; ++ch) {
      auto frame = binned[ch].frames.row(t);
      for (std::size_t b = 0; b < vocab.m; ++b) {
        doc[vocab.word_index(ch, b)] = frame[b];
        if (frame[b] != 0.0) ds.zero_doc[t] = false;
      }
    }
  }
  return ds;
}

/// Record -> STFT per channel -> binning -> documents.
inline DocumentSeries record_documents(const SimulationRecord& rec, const StftOptions& opts, double f_max_hz,
                                       std::size_t m) {
  auto binned = binned_channels(rec, opts, f_max_hz, m);
  auto vocab = make_vocabulary(rec, binned.front().bin_edges_hz);
  const double fs = rec.sample_rate_hz;
  const double window_s = static_cast<double>(to_samples(opts.window_s, fs, "window")) / fs;
  const double hop_s = static_cast<double>(to_samples(opts.hop_s, fs, "hop")) / fs;
  return build_documents(rec.id, binned, vocab, window_s, hop_s);
}

struct DocRef {
  std::size_t series = 0;  // index into Corpus::record_ids
  std::size_t window = 0;
};

/// Documents pooled over all records, with back-pointers.
struct Corpus {
  Vocabulary vocab;
  std::vector<std::string> record_ids;
  std::vector<std::size_t> offsets;  // first row of each record; size = records + 1
  Matrix docs;
  std::vector<DocRef> refs;

  std::size_t size() const noexcept { return docs.rows(); }

  /// Rows belonging to record i.
  Matrix record_docs(std::size_t i) const { return docs.row_slice(offsets[i], offsets[i + 1] - offsets[i]); }
};

inline Corpus assemble_corpus(const std::vector<DocumentSeries>& series) {
  if (series.empty()) throw ValidationError("assemble_corpus: empty corpus");
  Corpus c;
  c.vocab = series.front().vocab;
  std::size_t total = 0;
  for (const auto& s : series) {
    if (!(s.vocab == c.vocab))
      throw DimensionError("assemble_corpus: record '" + s.record_id + "' uses a different vocabulary");
    total += s.size();
  }
  if (total == 0) throw ValidationError("assemble_corpus: no documents");
  c.docs = Matrix(total, c.vocab.size());
  c.offsets.push_back(0);
  std::size_t row = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    c.record_ids.push_back(s.record_id);
    std::copy(s.docs.data().begin(), s.docs.data().end(),
              c.docs.data().begin() + static_cast<std::ptrdiff_t>(row * c.vocab.size()));
    for (std::size_t t = 0; t < s.size(); ++t) c.refs.push_back({i, t});
    row += s.size();
    c.offsets.push_back(row);
  }
  return c;
}

/// Sparse (doc, word, weight) triplets, nonzero entries only.
inline void write_triplets(std::ostream& out, const Corpus& c) {
  out << "# docs=" << c.size() << " words=" << c.vocab.size() << '\n';
  for (std::size_t d = 0; d < c.size(); ++d) {
    auto doc = c.docs.row(d);
    for (std::size_t w = 0; w < doc.size(); ++w)
      if (doc[w] != 0.0) out << d << ' ' << w << ' ' << detail::format_double(doc[w]) << '\n';
  }
}

}  // namespace stftlda
