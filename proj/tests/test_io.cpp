#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "kcm/runner.hpp"

using namespace kcm;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* small_run =
    "[grid]\ncells = 8\nactivity_subdivision = 2\nradial_nodes = 4\n"
    "[run]\nt_final = 0.05\n"
    "[output]\ncadence = 2\n";

}  // namespace

TEST(ParseConfig, MinimalConfigFillsDefaults) {
  const RunConfig c = parse_config("[scaling]\neps = 0.05\n");
  EXPECT_EQ(c.params.eps, 0.05);
  EXPECT_EQ(c.grid.cells, RunConfig{}.grid.cells);
  EXPECT_EQ(c.params.a, 0.5);
  EXPECT_EQ(c.kernels.chemotaxis, "saturating");
  EXPECT_TRUE(parse_config("") == RunConfig{});
}

TEST(ParseConfig, ScalingExponentOutOfRangeCitesConstraintAndLine) {
  const auto msg = error_of("[grid]\ncells = 8\n\n[scaling]\na = 1.5\n");
  EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
  EXPECT_NE(msg.find("0 < a < 1"), std::string::npos) << msg;
}

TEST(ParseConfig, DuplicateKeyCitesBothLines) {
  const auto msg = error_of("[run]\nt_final = 1\n# again\nt_final = 2\n");
  EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(ParseConfig, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(error_of("[grid]\ncels = 8\n").find("line 2: unknown key 'cels'"), std::string::npos);
  EXPECT_NE(error_of("[gird]\n").find("unknown section"), std::string::npos);
  EXPECT_NE(error_of("cells = 8\n").find("outside of any section"), std::string::npos);
  EXPECT_NE(error_of("[grid]\ncells\n").find("key = value"), std::string::npos);
}

TEST(ParseConfig, TypeMismatchRejected) {
  EXPECT_NE(error_of("[grid]\ncells = eight\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[grid]\ncells = 8.5\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[output]\nsnapshots = maybe\n").find("line 2"), std::string::npos);
}

TEST(ParseConfig, ConstraintViolationsRejected) {
  EXPECT_FALSE(error_of("[grid]\ndimension = 3\n").empty());
  EXPECT_FALSE(error_of("[grid]\nspeed_ratio = 1.0\n").empty());
  EXPECT_FALSE(error_of("[kernels]\nchi = 5\n").empty());
  EXPECT_FALSE(error_of("[kernels]\nturning = quadratic\n").empty());
  EXPECT_FALSE(error_of("[run]\ninitial = file\n").empty());
  EXPECT_FALSE(error_of("[scaling]\nb = 0.5\n").empty());
}

TEST(ParseConfig, EnvironmentOverride) {
  ::setenv("KCM_GRID_CELLS", "12", 1);
  const RunConfig c = parse_config("[grid]\ncells = 8\n");
  ::unsetenv("KCM_GRID_CELLS");
  EXPECT_EQ(c.grid.cells, 12);
  EXPECT_EQ(parse_config("[grid]\ncells = 8\n").grid.cells, 8);
}

TEST(ParseConfig, DimensionalInputsResolveToScaledExponents) {
  const RunConfig c = load_config(KCM_SOURCE_DIR "/configs/dimensional.ini");
  EXPECT_NEAR(c.params.eps, 0.05, 1e-12);
  EXPECT_NEAR(c.params.a, 0.5, 1e-12);
  EXPECT_EQ(c.params.b, 1.0);
  EXPECT_EQ(c.params.d, 2.0);
}

TEST(ParseConfig, ShippedConfigsParse) {
  for (const char* f : {"default.ini", "dimensional.ini", "two_dim_smoke.ini"})
    EXPECT_NO_THROW(load_config(std::string(KCM_SOURCE_DIR "/configs/") + f)) << f;
  EXPECT_THROW(load_config(KCM_SOURCE_DIR "/configs/invalid_a.ini"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/kcm.ini"), IoError);
}

TEST(ParseConfig, SerializeRoundTrip) {
  RunConfig c = parse_config("[params]\nk1 = 0.1\n[run]\neps_list = 0.3, 0.2, 0.1\nseed = 18446744073709551615\n");
  c.params.kappa = 1.0 / 3.0;
  const RunConfig back = parse_config(serialize_config(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.params.kappa, 1.0 / 3.0);
  EXPECT_EQ(back.run.seed, 18446744073709551615ULL);
  EXPECT_EQ(back.run.eps_list, (std::vector<double>{0.3, 0.2, 0.1}));
}

TEST(Container, RoundTripIsBitIdentical) {
  Rng rng(2);
  std::vector<Field> in{{"f", {4, 3, 2}, random_field(rng, 24, -1.0, 1.0)}, {"empty", {0}, {}}, {"s", {}, {2.5}}};
  in[0].data[3] = std::numeric_limits<double>::quiet_NaN();
  in[0].data[4] = -0.0;
  const auto bytes = encode_fields(in);
  EXPECT_EQ(bytes.substr(0, 4), "KCM1");
  const auto out = decode_fields(bytes);
  ASSERT_EQ(out.size(), in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(out[i].name, in[i].name);
    EXPECT_EQ(out[i].shape, in[i].shape);
    ASSERT_EQ(out[i].data.size(), in[i].data.size());
    EXPECT_EQ(std::memcmp(out[i].data.data(), in[i].data.data(), in[i].data.size() * sizeof(double)), 0);
  }
  EXPECT_EQ(encode_fields(out), bytes);
}

TEST(Container, CorruptInputRejected) {
  const auto bytes = encode_fields({{"x", {2}, {1.0, 2.0}}});
  EXPECT_THROW(decode_fields("KCM2" + bytes.substr(4)), IoError);
  EXPECT_THROW(decode_fields(bytes.substr(0, bytes.size() - 3)), IoError);
  EXPECT_THROW(decode_fields(""), IoError);
}

TEST(Container, FileErrorsCarryThePath) {
  try {
    read_fields("/nonexistent/dir/x.kcm");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.kcm"), std::string::npos);
  }
  const auto p = (std::filesystem::temp_directory_path() / "kcm_io_test.kcm").string();
  write_fields(p, {{"a", {1}, {3.0}}});
  EXPECT_EQ(read_fields(p)[0].data[0], 3.0);
  std::filesystem::remove(p);
}

TEST(Timeseries, EmptyIsHeaderOnly) {
  EXPECT_EQ(format_timeseries({"t", "mass"}, {}), "t,mass\n");
}

TEST(Timeseries, OneRowIsTwoLines) {
  const auto s = format_timeseries({"t", "mass"}, {{0.1, 1.0}});
  EXPECT_EQ(s, "t,mass\n1.0000000000000001e-01,1.0000000000000000e+00\n");
  EXPECT_THROW(format_timeseries({"t"}, {{1.0, 2.0}}), ConfigError);
}

TEST(Runner, ZeroInitialDataGivesZeroOutputs) {
  RunConfig c = parse_config(std::string(small_run) + "[run]\ninitial = zero\n");
  const auto a = run_subcommand("simulate-kinetic", c);
  EXPECT_EQ(a.status, 0);
  bool any_snapshot = false;
  for (const auto& [name, bytes] : a.files) {
    if (name.find(".kcm") == std::string::npos) continue;
    any_snapshot = true;
    for (const auto& f : decode_fields(bytes))
      if (f.name != "time") {
        for (double v : f.data) EXPECT_EQ(v, 0.0) << name << " " << f.name;
      }
  }
  EXPECT_TRUE(any_snapshot);
  const auto* csv = a.find("kinetic_moments.csv");
  ASSERT_NE(csv, nullptr);
  std::istringstream in(*csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string cell;
    int col = 0;
    while (std::getline(row, cell, ',')) {
      if (col >= 2) {
        EXPECT_EQ(std::stod(cell), 0.0) << line;
      }
      ++col;
    }
  }
}

TEST(Runner, RerunIsByteIdenticalAcrossWorkerCounts) {
  const RunConfig c = parse_config(small_run);
  set_worker_count(1);
  const auto a = run_subcommand("simulate-kinetic", c);
  set_worker_count(3);
  const auto b = run_subcommand("simulate-kinetic", c);
  set_worker_count(1);
  ASSERT_EQ(a.files.size(), b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    EXPECT_EQ(a.files[i].first, b.files[i].first);
    EXPECT_TRUE(a.files[i].second == b.files[i].second) << a.files[i].first;
  }
}

TEST(Runner, HydroAndPicardRun) {
  const RunConfig c = parse_config(std::string(small_run) + "[run]\npicard_t0 = 0.02\npicard_dt = 0.01\n");
  const auto h = run_subcommand("simulate-hydro", c);
  EXPECT_EQ(h.status, 0);
  EXPECT_NE(h.find("hydro_moments.csv"), nullptr);
  const auto p = run_subcommand("picard", c);
  EXPECT_EQ(p.status, 0);
  ASSERT_NE(p.find("picard.csv"), nullptr);
}

TEST(Runner, UnknownSubcommandAndCflAbort) {
  const RunConfig c = parse_config(small_run);
  EXPECT_THROW(run_subcommand("simulate-quantum", c), ConfigError);
  const RunConfig big = parse_config(std::string(small_run) + "[run]\ndt = 1.0\n");
  EXPECT_EQ(run_subcommand("simulate-kinetic", big).status, 3);
}

TEST(Runner, SnapshotNames) {
  EXPECT_EQ(snapshot_name("kinetic", 42), "kinetic_000042.kcm");
}
