#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include <stftlda/ingest.hpp>
#include <stftlda/synth.hpp>

using namespace stftlda;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("stftlda_ingest_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

SimulationRecord parse(const std::string& text, const std::string& id = "rec") {
  std::istringstream in(text);
  return parse_csv(in, id);
}

SimulationRecord random_record(std::uint64_t seed, std::size_t length) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SimulationRecord rec;
  rec.id = "r" + std::to_string(seed);
  rec.sample_rate_hz = 400.0;
  for (std::size_t i = 0; i < length; ++i) rec.ground_accel.push_back(n(rng) * 1e-3);
  for (int f = 1; f <= 3; ++f) {
    ChannelSeries ch{f, Attribute::shear, 0.5 * f, {}};
    for (std::size_t i = 0; i < length; ++i) ch.values.push_back(n(rng) * std::pow(10.0, n(rng)));
    rec.channels.push_back(ch);
  }
  rec.channels.push_back({2, Attribute::acceleration, 3.0, rec.ground_accel});
  sort_channels(rec);
  validate(rec);
  return rec;
}

}  // namespace

TEST(Ingest, ParsesCsvWithHeaderComment) {
  auto rec = parse(
      "# sample_rate_hz=400 design_limits=shear_f2:2.0,shear_f1:4.0\n"
      "time,ground_accel,shear_f2,shear_f1\n"
      "0,0.1,1.0,2.0\n"
      "0.0025,0.2,-1.0,-2.0\n");
  EXPECT_EQ(rec.id, "rec");
  EXPECT_EQ(rec.sample_rate_hz, 400.0);
  ASSERT_EQ(rec.channels.size(), 2u);
  EXPECT_EQ(rec.channels[0].label(), "shear_f1");  // sorted by (attribute, floor)
  EXPECT_EQ(rec.channels[0].design_limit, 4.0);
  EXPECT_EQ(rec.channels[0].values, (std::vector<double>{2.0, -2.0}));
  EXPECT_EQ(rec.channels[1].values, (std::vector<double>{1.0, -1.0}));
  EXPECT_EQ(rec.ground_accel, (std::vector<double>{0.1, 0.2}));
  EXPECT_FALSE(rec.normalized);
}

TEST(Ingest, ChannelOrderIsAttributeThenFloor) {
  auto rec = parse(
      "# sample_rate_hz=100 design_limits=moment_f1:1,shear_f3:1,acceleration_f2:1,shear_f1:1\n"
      "time,ground_accel,moment_f1,shear_f3,acceleration_f2,shear_f1\n"
      "0,0,1,2,3,4\n");
  std::vector<std::string> labels;
  for (const auto& ch : rec.channels) labels.push_back(ch.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"acceleration_f2", "shear_f1", "shear_f3", "moment_f1"}));
}

TEST(Ingest, ThirteenFloorShearRecordAt400Hz) {
  std::ostringstream csv;
  csv << "# sample_rate_hz=400 design_limits=";
  for (int f = 1; f <= 13; ++f) csv << (f > 1 ? "," : "") << "shear_f" << f << ":1.5";
  csv << "\ntime,ground_accel";
  for (int f = 1; f <= 13; ++f) csv << ",shear_f" << f;
  csv << '\n';
  for (int t = 0; t < 20000; ++t) {
    csv << t / 400.0 << ",0.5";
    for (int f = 1; f <= 13; ++f) csv << ',' << f * 0.01;
    csv << '\n';
  }
  auto rec = parse(csv.str());
  EXPECT_EQ(rec.channels.size(), 13u);
  EXPECT_EQ(rec.length(), 20000u);
  EXPECT_DOUBLE_EQ(rec.duration_s(), 50.0);
}

TEST(Ingest, SingleSampleRecordIsValid) {
  auto rec = parse("# sample_rate_hz=400 design_limits=drift_ratio_f1:1\ntime,ground_accel,drift_ratio_f1\n0,0,0.5\n");
  EXPECT_EQ(rec.length(), 1u);
  EXPECT_EQ(rec.channels.size(), 1u);
  EXPECT_EQ(rec.channels[0].attribute, Attribute::drift_ratio);
}

TEST(Ingest, EmptyChannelListIsValidationError) {
  EXPECT_THROW(parse("# sample_rate_hz=400 design_limits=\ntime,ground_accel\n0,0\n"), ParseError);
  SimulationRecord rec;
  rec.id = "x";
  rec.ground_accel = {0.0};
  EXPECT_THROW(validate(rec), ValidationError);
  nlohmann::json j = {{"id", "x"}, {"sample_rate_hz", 400}, {"ground_accel", {0.0}}, {"channels", nlohmann::json::array()}};
  EXPECT_THROW(record_from_json(j), ValidationError);
}

TEST(Ingest, RaggedLengthsAreValidationErrors) {
  nlohmann::json j = {{"id", "x"},
                      {"sample_rate_hz", 400},
                      {"ground_accel", {0.0, 1.0}},
                      {"channels", {{{"attribute", "shear"}, {"floor", 1}, {"design_limit", 1.0}, {"values", {1.0}}}}}};
  try {
    record_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("ragged"), std::string::npos);
  }
}

TEST(Ingest, MalformedCsvReportsLineAndField) {
  try {
    parse("# sample_rate_hz=400 design_limits=shear_f1:1\ntime,ground_accel,shear_f1\n0,0,1\n0.1,0,abc\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(e.field(), "shear_f1");
  }
  try {
    parse("# sample_rate_hz=400 design_limits=shear_f1:1\ntime,ground_accel,shear_f1\n0,0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse("# sample_rate_hz=400 design_limits=shear_f1:1\ntime,ground_accel,bogus\n0,0,1\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "bogus");
  }
  EXPECT_THROW(parse("time,ground_accel,shear_f1\n0,0,1\n"), ParseError);  // no sample rate
  EXPECT_THROW(parse("# sample_rate_hz=400\ntime,ground_accel,shear_f1\n0,0,1\n"), ParseError);  // no limit
}

TEST(Ingest, DuplicateChannelRejected) {
  EXPECT_THROW(parse("# sample_rate_hz=400 design_limits=shear_f1:1\ntime,ground_accel,shear_f1,shear_f1\n0,0,1,2\n"),
               ValidationError);
}

TEST(Ingest, NonPositiveSampleRateRejected) {
  EXPECT_THROW(parse("# sample_rate_hz=0 design_limits=shear_f1:1\ntime,ground_accel,shear_f1\n0,0,1\n"),
               ValidationError);
}

TEST(Normalize, DividesByDesignLimit) {
  SimulationRecord rec;
  rec.id = "n";
  rec.ground_accel = {3.0, 5.0};
  rec.channels.push_back({1, Attribute::shear, 2.0, {2.0, -4.0}});
  auto out = normalize_channels(rec);
  EXPECT_EQ(out.channels[0].values, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(out.ground_accel, rec.ground_accel);
  EXPECT_TRUE(out.normalized);
  // The flag prevents a second division.
  EXPECT_EQ(normalize_channels(out).channels[0].values, out.channels[0].values);
}

TEST(Normalize, UnitLimitIsIdentity) {
  auto rec = random_record(7, 50);
  for (auto& ch : rec.channels) ch.design_limit = 1.0;
  auto out = normalize_channels(rec);
  for (std::size_t c = 0; c < rec.channels.size(); ++c) EXPECT_EQ(out.channels[c].values, rec.channels[c].values);
}

TEST(Normalize, ZeroLimitErrorNamesChannel) {
  SimulationRecord rec;
  rec.id = "z";
  rec.ground_accel = {0.0};
  rec.channels.push_back({4, Attribute::moment, 0.0, {1.0}});
  try {
    normalize_channels(rec);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("moment_f4"), std::string::npos);
  }
  rec.channels[0].design_limit = -1.0;
  EXPECT_THROW(normalize_channels(rec), ValidationError);
}

TEST(Normalize, OutOfSpecValuesPermitted) {
  SimulationRecord rec;
  rec.id = "o";
  rec.ground_accel = {0.0};
  rec.channels.push_back({1, Attribute::shear, 0.5, {2.0}});
  EXPECT_EQ(normalize_channels(rec).channels[0].values[0], 4.0);
}

TEST(RoundTrip, JsonIsBitExact) {
  const auto dir = temp_dir();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rec = random_record(seed, 257);
    save_simulation(dir / "r.json", rec, RecordFormat::json);
    auto back = load_simulation(dir / "r.json");
    EXPECT_EQ(back, rec);
  }
}

TEST(RoundTrip, CsvWithinRelativeTolerance) {
  const auto dir = temp_dir();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rec = random_record(seed, 257);
    save_simulation(dir / "r.csv", rec, RecordFormat::csv);
    auto back = load_simulation(dir / "r.csv");
    EXPECT_EQ(back.id, rec.id);
    ASSERT_EQ(back.channels.size(), rec.channels.size());
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      EXPECT_EQ(back.channels[c].label(), rec.channels[c].label());
      EXPECT_EQ(back.channels[c].design_limit, rec.channels[c].design_limit);
      for (std::size_t t = 0; t < rec.length(); ++t) {
        const double a = rec.channels[c].values[t], b = back.channels[c].values[t];
        EXPECT_LE(std::abs(a - b), 1e-12 * std::abs(a));
      }
    }
    auto normalized = normalize_channels(rec);
    save_simulation(dir / "n.csv", normalized, RecordFormat::csv);
    EXPECT_TRUE(load_simulation(dir / "n.csv").normalized);
  }
}

TEST(RoundTrip, UnknownExtensionAndMissingFile) {
  EXPECT_THROW(load_simulation("record.txt"), ParseError);
  EXPECT_THROW(load_simulation(temp_dir() / "missing.csv"), ParseError);
  std::ofstream(temp_dir() / "bad.json") << "{not json";
  EXPECT_THROW(load_simulation(temp_dir() / "bad.json"), ParseError);
}

TEST(RoundTrip, AttributeNames) {
  for (const auto& [a, name] : kAttributeNames) {
    EXPECT_EQ(to_string(a), name);
    EXPECT_EQ(parse_attribute(name), a);
  }
  EXPECT_FALSE(parse_attribute("torque").has_value());
}
