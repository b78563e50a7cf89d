#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "pdmr/profile.hpp"
#include "pdmr/table.hpp"

using namespace pdmr;

namespace {
struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "pdmr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path tmp(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / "pdmr_cli_test";
  std::filesystem::create_directories(d);
  return d / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}
}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"nonsense"}).code == cli::kExitUsage);
  CHECK(run({"spectrum", "--b-mag", "-1"}).code == cli::kExitUsage);
  CHECK(run({"spectrum", "--b-dir", "0,0,0"}).code == cli::kExitUsage);
  CHECK(run({"spectrum", "--profile", "no-such-profile"}).code == cli::kExitUsage);
  CHECK(run({"fit-power", "--in", tmp("missing.txt").string()}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("numerical failures exit with 2") {
  // No field up to the grid limit puts a <100> line this low.
  DataTable t(std::vector<ColumnSpec>{{"center", "Hz"}});
  t.add_row({5e7});
  t.add_row({6e7});
  const auto path = tmp("far.txt");
  t.write(path);
  const auto r = run({"invert-field", "--in", path.string(), "--class", "100"});
  CHECK(r.code == cli::kExitNumerical);
  CHECK_FALSE(r.err.empty());

  // A flat spectrum has nothing to fit: reported as a usage problem.
  DataTable flat({{"freq", "Hz"}, {"current", "A"}});
  for (int i = 0; i < 50; ++i) flat.add_row({2.6e9 + 1e7 * i, 1e-3});
  flat.write(tmp("flat.txt"));
  CHECK(run({"invert-field", "--in", tmp("flat.txt").string()}).code == cli::kExitUsage);
}

TEST_CASE("spectrum minimum sits at 2.87 GHz") {
  const auto r = run({"spectrum", "--b-mag", "0", "--b-dir", "1,0,0", "--power", "100e-3"});
  REQUIRE(r.code == 0);
  const auto t = DataTable::parse(r.out);
  const auto f = t.column("freq"), i = t.column("current");
  const auto k = std::min_element(i.begin(), i.end()) - i.begin();
  CHECK(std::abs(f[static_cast<std::size_t>(k)] - 2.87e9) <= (f[1] - f[0]));
  CHECK(t.meta("profile") == std::string(kDefaultProfileName));
  CHECK(t.has_meta("seed"));
  // Numbers carry at most 12 significant digits.
  const auto line = r.out.substr(r.out.rfind('\n', r.out.size() - 2) + 1);
  for (std::size_t p = 0, q; p < line.size(); p = q + 1) {
    q = line.find_first_of(",\n", p);
    if (q == std::string::npos) q = line.size();
    std::string cell = line.substr(p, q - p);
    const auto e = cell.find('e');
    std::string mant = cell.substr(0, e);
    mant.erase(std::remove_if(mant.begin(), mant.end(), [](char c) { return c == '-' || c == '.'; }), mant.end());
    mant.erase(0, std::min(mant.find_first_not_of('0'), mant.size()));
    CHECK(mant.size() <= 12);
  }
}

TEST_CASE("identical config and seed give byte-identical output") {
  const std::vector<std::string> args{"spectrum", "--b-mag", "3e-3", "--b-dir", "1,2,3",
                                      "--noise", "1e-5", "--seed", "77", "--points", "301"};
  const auto a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  auto other = args;
  other[8] = "78";
  CHECK(run(other).out != a.out);

  const auto f1 = tmp("map1.txt"), f2 = tmp("map2.txt");
  const std::vector<std::string> m{"fieldmap", "--steps", "6", "--points", "101", "--noise", "1e-5", "--seed", "3"};
  auto m1 = m, m2 = m;
  m1.insert(m1.end(), {"--out", f1.string()});
  m2.insert(m2.end(), {"--out", f2.string()});
  REQUIRE(run(m1).code == 0);
  REQUIRE(run(m2).code == 0);
  CHECK(slurp(f1) == slurp(f2));
  CHECK_FALSE(slurp(f1).empty());
}

TEST_CASE("iv regime flips near 10 V and the curve is monotone") {
  const auto r = run({"iv", "--gap", "10e-6", "--vmax", "60"});
  REQUIRE(r.code == 0);
  const auto t = DataTable::parse(r.out);
  const auto v = t.column("voltage"), i = t.column("current"), s = t.column("saturated");
  double flip = -1.0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    CHECK(i[k] >= i[k - 1]);
    if (flip < 0 && s[k] == 1.0) flip = v[k];
  }
  CHECK(flip >= 5.0);
  CHECK(flip <= 15.0);
  CHECK(s.front() == 0.0);
  CHECK(s.back() == 1.0);
  const auto preset = DataTable::parse(run({"iv", "--gap", "7.5um"}).out);
  CHECK(std::stod(preset.meta("gap_m")) == doctest::Approx(7.5e-6));
  CHECK(run({"iv", "--gap", "3um"}).code == cli::kExitUsage);
}

TEST_CASE("fit-power recovers the profile pair from a power sweep") {
  const auto sweep = tmp("sweep.txt");
  REQUIRE(run({"power-sweep", "--out", sweep.string()}).code == 0);
  const auto r = run({"fit-power", "--in", sweep.string()});
  REQUIRE(r.code == 0);
  const auto t = DataTable::parse(r.out);
  const Profile p = default_profile();
  CHECK(std::stod(t.meta("alpha_W")) == doctest::Approx(p.power_curve.alpha).epsilon(1e-3));
  CHECK(std::stod(t.meta("beta_W_per_A")) == doctest::Approx(p.power_curve.beta).epsilon(1e-3));
  CHECK(std::stod(t.meta("r_squared")) > 0.99);
}

TEST_CASE("spectrum -> fit-spectrum -> invert-field") {
  const auto spec = tmp("spec.txt"), dips = tmp("dips.txt");
  REQUIRE(run({"spectrum", "--b-mag", "5e-3", "--b-dir", "1,0,0", "--noise", "2e-6", "--seed", "1", "--out",
               spec.string()})
              .code == 0);
  REQUIRE(run({"fit-spectrum", "--in", spec.string(), "--out", dips.string()}).code == 0);
  CHECK(DataTable::read(dips).rows().size() == 2);
  const auto r = run({"invert-field", "--in", dips.string(), "--class", "100"});
  REQUIRE(r.code == 0);
  CHECK(std::stod(DataTable::parse(r.out).meta("b_mag_T")) == doctest::Approx(5e-3).epsilon(0.01));
}

TEST_CASE("invert-field --refine fits the trace") {
  const auto spec = tmp("close.txt"), dips = tmp("close_dips.txt");
  REQUIRE(run({"spectrum", "--b-mag", "0.89e-3", "--b-dir", "1,0,0", "--f-start", "2.78e9", "--f-stop", "2.96e9",
               "--points", "3001", "--noise", "2e-6", "--seed", "4", "--out", spec.string()})
              .code == 0);
  const auto r = run({"invert-field", "--in", spec.string(), "--class", "100", "--dips", "2", "--refine"});
  REQUIRE(r.code == 0);
  const auto t = DataTable::parse(r.out);
  CHECK(t.meta("refined") == "true");
  CHECK(std::stod(t.meta("b_mag_T")) == doctest::Approx(0.89e-3).epsilon(1e-3));
  REQUIRE(run({"fit-spectrum", "--in", spec.string(), "--dips", "2", "--out", dips.string()}).code == 0);
  CHECK(run({"invert-field", "--in", dips.string(), "--class", "100", "--refine"}).code == 1);
}

TEST_CASE("config files") {
  const auto cfg = tmp("cfg.json");
  std::ofstream(cfg) << "{\n  \"b-mag\": 2e-3,\n  \"points\": 11\n}\n";
  const auto r = run({"spectrum", "--config", cfg.string()});
  REQUIRE(r.code == 0);
  const auto t = DataTable::parse(r.out);
  CHECK(t.rows().size() == 11);
  CHECK(std::stod(t.meta("b_mag_T")) == doctest::Approx(2e-3));
  // Command-line values win over the config file.
  CHECK(DataTable::parse(run({"spectrum", "--config", cfg.string(), "--points", "5"}).out).rows().size() == 5);

  const auto bad = tmp("bad.json");
  std::ofstream(bad) << "{\n  \"points\": 11,\n  \"bogus\": 1\n}\n";
  const auto e = run({"spectrum", "--config", bad.string()});
  CHECK(e.code == cli::kExitUsage);
  CHECK(e.err.find("(line 3)") != std::string::npos);

  const auto broken = tmp("broken.json");
  std::ofstream(broken) << "{\n  \"points\": \n";
  CHECK(run({"spectrum", "--config", broken.string()}).code == cli::kExitUsage);

  const auto prof = tmp("prof.json");
  std::ofstream(prof) << "{\"mu_e\": -1}";
  CHECK(run({"iv", "--profile", prof.string()}).code == cli::kExitUsage);
}

TEST_CASE("calibration show") {
  const auto r = run({"calibration", "show"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("d_gs") != std::string::npos);
  const auto j = run({"calibration", "show", "--json"});
  REQUIRE(j.code == 0);
  const Profile p = parse_profile(j.out);
  CHECK(p.d_gs == default_profile().d_gs);
}
