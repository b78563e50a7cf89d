#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pdmr/geometry.hpp"
#include "pdmr/photodynamics.hpp"
#include "pdmr/transport.hpp"

namespace pdmr {

inline constexpr std::string_view kDefaultProfileName = "paper-2023-calibration";

/// Where a profile value comes from.
enum class Provenance { paper, derived, literature, calibrated };

std::string_view to_string(Provenance p);

/// Complete parameter set for one device/sample. Every field is overridable from a profile file.
struct Profile {
  std::string name{kDefaultProfileName};

  // Spin Hamiltonian constants.
  double d_gs = 0.0;   // Hz
  double d_es = 0.0;   // Hz
  double gamma = 0.0;  // Hz/T

  PhotophysicsParams photo;
  TransportParams transport;

  // MW drive used for spectra.
  double mw_rabi = 0.0;       // Hz
  double mw_dephasing = 0.0;  // s^-1

  PowerCurveParams power_curve;

  double reference_power = 0.0;      // W
  double bias_voltage = 0.0;         // V
  double power_range_min = 0.0;      // W, calibrated contrast range
  double power_range_max = 0.0;      // W
  double es_depth_fraction = 0.0;    // excited-state dip depth relative to the ground-state dip
  double residual_transverse = 0.0;  // T, misalignment field used by magnet sweeps
  std::array<double, kNumFamilies> family_weights{};

  void validate() const;
};

/// The shipped default profile.
Profile default_profile();

struct ProfileKey {
  std::string_view key;
  std::string_view unit;
  Provenance provenance;
  std::string_view note;
  double& (*field)(Profile&);
};

/// Registry of every scalar key a profile file may set, in display order.
const std::vector<ProfileKey>& profile_keys();

double profile_value(const Profile& p, std::string_view key);

/// Parses a JSON object of overrides on top of the defaults. Unknown keys, non-numeric values
/// and invalid parameters are rejected with std::invalid_argument carrying the line number
/// where available.
Profile parse_profile(std::string_view text);

Profile load_profile(const std::filesystem::path& path);

/// Resolves a profile argument: empty -> defaults; existing file -> that file; otherwise
/// `<name>.json` inside the directory named by PDMR_PROFILE_DIR. The default name always resolves.
Profile resolve_profile(const std::string& name_or_path);

/// JSON with every key (round-trips through parse_profile).
std::string profile_to_json(const Profile& p);

}  // namespace pdmr
