#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "pdmr/profile.hpp"
#include "pdmr/spin_model.hpp"

using namespace pdmr;

namespace {
std::filesystem::path scratch_dir() {
  auto d = std::filesystem::temp_directory_path() / "pdmr_profile_test";
  std::filesystem::create_directories(d);
  return d;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string message_of(const std::string& text) {
  try {
    parse_profile(text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return {};
}
}  // namespace

TEST_CASE("empty input gives the default calibration") {
  const Profile d = default_profile();
  for (const char* text : {"", "  \n", "{}"}) {
    const Profile p = parse_profile(text);
    CHECK(p.name == std::string(kDefaultProfileName));
    for (const auto& k : profile_keys()) CHECK(profile_value(p, k.key) == profile_value(d, k.key));
  }
  const auto path = scratch_dir() / "empty.json";
  write(path, "");
  CHECK(load_profile(path).d_gs == d.d_gs);
}

TEST_CASE("default values") {
  const Profile p = default_profile();
  CHECK(p.d_gs == 2.87e9);
  CHECK(p.gamma == 28e9);
  CHECK(p.transport.contact_resistance == 240e3);
  CHECK(p.power_curve.alpha == 0.0755);
  CHECK(p.power_curve.beta == 7.04);
  CHECK(p.photo.isc_es_ms1 > p.photo.isc_es_ms0);
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("overrides propagate") {
  const Profile p = parse_profile(R"({"d_es": 1.68e9, "name": "custom"})");
  CHECK(p.name == "custom");
  CHECK(lac_fields(p.d_gs, p.d_es, p.gamma).b_eslac == doctest::Approx(0.06));
  CHECK(p.d_gs == default_profile().d_gs);
}

TEST_CASE("invalid profiles are rejected") {
  CHECK_THROWS_AS(parse_profile(R"({"mu_e": -0.1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_profile(R"({"radiative_rate": -1})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_profile(R"({"mu_e": "fast"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_profile("[1, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(parse_profile("{\"d_gs\": "), std::invalid_argument);
  const std::string msg = message_of("{\n  \"d_gs\": 2.87e9,\n  \"bogus\": 1\n}");
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(msg.find("(line 3)") != std::string::npos);
}

TEST_CASE("JSON round trip") {
  Profile p = default_profile();
  p.mw_rabi = 1.25e6;
  const Profile q = parse_profile(profile_to_json(p));
  for (const auto& k : profile_keys()) CHECK(profile_value(q, k.key) == profile_value(p, k.key));
}

TEST_CASE("profile resolution and PDMR_PROFILE_DIR") {
  const auto dir = scratch_dir();
  write(dir / "slow.json", R"({"mw_rabi": 1e6})");
  CHECK(resolve_profile("").mw_rabi == default_profile().mw_rabi);
  CHECK(resolve_profile((dir / "slow.json").string()).mw_rabi == 1e6);

  ::unsetenv("PDMR_PROFILE_DIR");
  CHECK_THROWS_AS(resolve_profile("slow"), std::invalid_argument);
  CHECK_NOTHROW(resolve_profile(std::string(kDefaultProfileName)));

  ::setenv("PDMR_PROFILE_DIR", dir.c_str(), 1);
  CHECK(resolve_profile("slow").mw_rabi == 1e6);
  write(dir / (std::string(kDefaultProfileName) + ".json"), R"({"mw_rabi": 2e6})");
  CHECK(resolve_profile(std::string(kDefaultProfileName)).mw_rabi == 2e6);
  ::unsetenv("PDMR_PROFILE_DIR");
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped profile file matches the built-in defaults") {
  const auto path = std::filesystem::path(PDMR_SOURCE_DIR) / "profiles" / (std::string(kDefaultProfileName) + ".json");
  const Profile file = load_profile(path);
  const Profile d = default_profile();
  for (const auto& k : profile_keys()) CHECK(profile_value(file, k.key) == profile_value(d, k.key));
}
