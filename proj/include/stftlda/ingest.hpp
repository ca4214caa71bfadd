#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace stftlda {

enum class Attribute {
  acceleration,
  shear,
  diaphragm_force,
  moment,
  drift_ratio,
  interstory_drift_ratio,
};

inline constexpr std::array<std::pair<Attribute, std::string_view>, 6> kAttributeNames{{
    {Attribute::acceleration, "acceleration"},
    {Attribute::shear, "shear"},
    {Attribute::diaphragm_force, "diaphragm_force"},
    {Attribute::moment, "moment"},
    {Attribute::drift_ratio, "drift_ratio"},
    {Attribute::interstory_drift_ratio, "interstory_drift_ratio"},
}};

inline std::string_view to_string(Attribute a) {
  for (const auto& [attr, name] : kAttributeNames)
    if (attr == a) return name;
  return "unknown";
}

inline std::optional<Attribute> parse_attribute(std::string_view name) {
  for (const auto& [attr, n] : kAttributeNames)
    if (n == name) return attr;
  return std::nullopt;
}

/// One (floor, attribute) response trace.
struct ChannelSeries {
  int floor = 1;
  Attribute attribute = Attribute::shear;
  double design_limit = 1.0;
  std::vector<double> values;

  std::string label() const { return std::string(to_string(attribute)) + "_f" + std::to_string(floor); }

  friend bool operator==(const ChannelSeries&, const ChannelSeries&) = default;
};

/// One simulation run. Channels are kept ordered by (attribute, floor).
struct SimulationRecord {
  std::string id;
  double sample_rate_hz = 400.0;
  std::vector<double> ground_accel;
  std::vector<ChannelSeries> channels;
  bool normalized = false;

  std::size_t length() const noexcept { return ground_accel.size(); }
  double duration_s() const noexcept { return static_cast<double>(length()) / sample_rate_hz; }

  const ChannelSeries* find_channel(Attribute a, int floor) const {
    for (const auto& ch : channels)
      if (ch.attribute == a && ch.floor == floor) return &ch;
    return nullptr;
  }

  friend bool operator==(const SimulationRecord&, const SimulationRecord&) = default;
};

inline bool channel_order_less(const ChannelSeries& a, const ChannelSeries& b) {
  return std::pair(static_cast<int>(a.attribute), a.floor) < std::pair(static_cast<int>(b.attribute), b.floor);
}

inline void sort_channels(SimulationRecord& rec) {
  std::stable_sort(rec.channels.begin(), rec.channels.end(), channel_order_less);
}

/// Throws ValidationError if any record invariant is violated.
inline void validate(const SimulationRecord& rec) {
  const std::string where = "record '" + rec.id + "': ";
  if (!(rec.sample_rate_hz > 0.0) || !std::isfinite(rec.sample_rate_hz))
    throw ValidationError(where + "sample_rate_hz must be positive");
  if (rec.channels.empty()) throw ValidationError(where + "no channels");
  if (rec.ground_accel.empty()) throw ValidationError(where + "series length must be >= 1");
  std::set<std::pair<int, int>> seen;
  for (const auto& ch : rec.channels) {
    if (ch.floor < 1) throw ValidationError(where + "channel " + ch.label() + " has floor < 1");
    if (ch.values.size() != rec.ground_accel.size())
      throw ValidationError(where + "ragged lengths: channel " + ch.label() + " has " +
                            std::to_string(ch.values.size()) + " samples, ground_accel has " +
                            std::to_string(rec.ground_accel.size()));
    if (!seen.emplace(static_cast<int>(ch.attribute), ch.floor).second)
      throw ValidationError(where + "duplicate channel " + ch.label());
    if (!(ch.design_limit > 0.0) || !std::isfinite(ch.design_limit))
      throw ValidationError(where + "channel " + ch.label() + " has non-positive design limit");
  }
  if (!std::is_sorted(rec.channels.begin(), rec.channels.end(), channel_order_less))
    throw ValidationError(where + "channels not ordered by (attribute, floor)");
}

/// Divides every channel by its design limit. A record already normalized is
/// returned unchanged.
inline SimulationRecord normalize_channels(SimulationRecord rec) {
  if (rec.normalized) return rec;
  for (auto& ch : rec.channels) {
    if (!(ch.design_limit > 0.0) || !std::isfinite(ch.design_limit))
      throw ValidationError("record '" + rec.id + "': design limit for channel " + ch.label() +
                            " must be strictly positive");
  }
  for (auto& ch : rec.channels)
    for (double& v : ch.values) v /= ch.design_limit;
  rec.normalized = true;
  return rec;
}

enum class RecordFormat { csv, json };

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Splits "<attr>_f<floor>" into its parts.
inline std::optional<std::pair<Attribute, int>> parse_channel_label(std::string_view label) {
  auto pos = label.rfind("_f");
  if (pos == std::string_view::npos) return std::nullopt;
  auto attr = parse_attribute(label.substr(0, pos));
  if (!attr) return std::nullopt;
  auto floor_str = label.substr(pos + 2);
  int floor = 0;
  auto [ptr, ec] = std::from_chars(floor_str.data(), floor_str.data() + floor_str.size(), floor);
  if (ec != std::errc{} || ptr != floor_str.data() + floor_str.size() || floor_str.empty()) return std::nullopt;
  return std::pair(*attr, floor);
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses the CSV record format:
///   # sample_rate_hz=400 design_limits=shear_f1:2.5,shear_f2:2.0 [id=name] [normalized=1]
///   time,ground_accel,shear_f1,shear_f2
///   0,0.01,0.2,0.1
inline SimulationRecord parse_csv(std::istream& in, std::string default_id) {
  SimulationRecord rec;
  rec.id = std::move(default_id);
  std::map<std::string, double, std::less<>> limits;
  bool have_rate = false;
  std::vector<std::pair<Attribute, int>> columns;
  bool have_header_row = false;
  std::vector<std::vector<double>> column_values;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      view.remove_prefix(1);
      std::istringstream tokens{std::string(view)};
      std::string tok;
      while (tokens >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value in header comment", line_no, tok);
        std::string key = tok.substr(0, eq);
        std::string value = tok.substr(eq + 1);
        if (key == "sample_rate_hz") {
          auto v = detail::parse_double(value);
          if (!v) throw ParseError("invalid number", line_no, key);
          rec.sample_rate_hz = *v;
          have_rate = true;
        } else if (key == "design_limits") {
          for (auto entry : detail::split(value, ',')) {
            if (entry.empty()) continue;
            auto colon = entry.rfind(':');
            if (colon == std::string_view::npos) throw ParseError("expected <channel>:<limit>", line_no, key);
            auto v = detail::parse_double(entry.substr(colon + 1));
            if (!v) throw ParseError("invalid design limit", line_no, std::string(entry.substr(0, colon)));
            limits[std::string(entry.substr(0, colon))] = *v;
          }
        } else if (key == "id") {
          rec.id = value;
        } else if (key == "normalized") {
          rec.normalized = (value == "1" || value == "true");
        } else {
          throw ParseError("unknown header key", line_no, key);
        }
      }
      continue;
    }
    auto fields = detail::split(view, ',');
    if (!have_header_row) {
      if (fields.size() < 3 || fields[0] != "time" || fields[1] != "ground_accel")
        throw ParseError("header row must start with 'time,ground_accel' followed by channel columns", line_no);
      for (std::size_t i = 2; i < fields.size(); ++i) {
        auto parsed = detail::parse_channel_label(fields[i]);
        if (!parsed) throw ParseError("invalid channel column", line_no, std::string(fields[i]));
        if (std::find(columns.begin(), columns.end(), *parsed) != columns.end())
          throw ValidationError("record '" + rec.id + "': duplicate channel " + std::string(fields[i]));
        columns.push_back(*parsed);
      }
      column_values.resize(columns.size() + 1);
      have_header_row = true;
      continue;
    }
    if (fields.size() != columns.size() + 2)
      throw ParseError("expected " + std::to_string(columns.size() + 2) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    if (!detail::parse_double(fields[0])) throw ParseError("invalid number", line_no, "time");
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto v = detail::parse_double(fields[i]);
      if (!v) {
        std::string name = i == 1 ? "ground_accel"
                                  : std::string(to_string(columns[i - 2].first)) + "_f" +
                                        std::to_string(columns[i - 2].second);
        throw ParseError("invalid number", line_no, name);
      }
      column_values[i - 1].push_back(*v);
    }
  }
  if (!have_header_row) throw ParseError("missing header row");
  if (!have_rate) throw ParseError("missing sample_rate_hz in header comment", 0, "sample_rate_hz");

  rec.ground_accel = std::move(column_values[0]);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    ChannelSeries ch;
    ch.attribute = columns[i].first;
    ch.floor = columns[i].second;
    ch.values = std::move(column_values[i + 1]);
    auto it = limits.find(ch.label());
    if (it == limits.end()) throw ParseError("missing design limit", 0, ch.label());
    ch.design_limit = it->second;
    limits.erase(it);
    rec.channels.push_back(std::move(ch));
  }
  if (!limits.empty()) throw ParseError("design limit for unknown channel", 0, limits.begin()->first);
  sort_channels(rec);
  validate(rec);
  return rec;
}

inline void write_csv(std::ostream& out, const SimulationRecord& rec) {
  out << "# sample_rate_hz=" << detail::format_double(rec.sample_rate_hz) << " design_limits=";
  for (std::size_t i = 0; i < rec.channels.size(); ++i) {
    if (i) out << ',';
    out << rec.channels[i].label() << ':' << detail::format_double(rec.channels[i].design_limit);
  }
  out << " id=" << rec.id;
  if (rec.normalized) out << " normalized=1";
  out << "\ntime,ground_accel";
  for (const auto& ch : rec.channels) out << ',' << ch.label();
  out << '\n';
  for (std::size_t t = 0; t < rec.length(); ++t) {
    out << detail::format_double(static_cast<double>(t) / rec.sample_rate_hz) << ','
        << detail::format_double(rec.ground_accel[t]);
    for (const auto& ch : rec.channels) out << ',' << detail::format_double(ch.values[t]);
    out << '\n';
  }
}

inline nlohmann::json to_json(const SimulationRecord& rec) {
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& ch : rec.channels) {
    channels.push_back({{"attribute", to_string(ch.attribute)},
                        {"floor", ch.floor},
                        {"design_limit", ch.design_limit},
                        {"values", ch.values}});
  }
  return {{"id", rec.id},
          {"sample_rate_hz", rec.sample_rate_hz},
          {"normalized", rec.normalized},
          {"ground_accel", rec.ground_accel},
          {"channels", std::move(channels)}};
}

inline SimulationRecord record_from_json(const nlohmann::json& j) {
  auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError("missing field", 0, key);
    return obj.at(key);
  };
  SimulationRecord rec;
  try {
    rec.id = require(j, "id").get<std::string>();
    rec.sample_rate_hz = require(j, "sample_rate_hz").get<double>();
    rec.normalized = j.value("normalized", false);
    rec.ground_accel = require(j, "ground_accel").get<std::vector<double>>();
    const auto& chans = require(j, "channels");
    if (!chans.is_array()) throw ParseError("expected array", 0, "channels");
    for (std::size_t i = 0; i < chans.size(); ++i) {
      const auto& c = chans[i];
      ChannelSeries ch;
      auto attr_name = require(c, "attribute").get<std::string>();
      auto attr = parse_attribute(attr_name);
      if (!attr) throw ParseError("unknown attribute '" + attr_name + "'", 0, "channels[" + std::to_string(i) + "]");
      ch.attribute = *attr;
      ch.floor = require(c, "floor").get<int>();
      ch.design_limit = c.value("design_limit", 1.0);
      ch.values = require(c, "values").get<std::vector<double>>();
      rec.channels.push_back(std::move(ch));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid record JSON: ") + e.what());
  }
  sort_channels(rec);
  validate(rec);
  return rec;
}

inline RecordFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".csv") return RecordFormat::csv;
  if (ext == ".json") return RecordFormat::json;
  throw ParseError("cannot infer record format from extension '" + ext + "'");
}

inline SimulationRecord load_simulation(const std::filesystem::path& path, RecordFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  if (format == RecordFormat::csv) return parse_csv(in, path.stem().string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON in '") + path.string() + "': " + e.what());
  }
  return record_from_json(j);
}

inline SimulationRecord load_simulation(const std::filesystem::path& path) {
  return load_simulation(path, format_from_path(path));
}

inline void save_simulation(const std::filesystem::path& path, const SimulationRecord& rec, RecordFormat format) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  if (format == RecordFormat::csv)
    write_csv(out, rec);
  else
    out << to_json(rec).dump();
}

}  // namespace stftlda
