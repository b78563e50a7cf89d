#include "pdmr/profile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "pdmr/constants.hpp"

namespace pdmr {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::paper: return "paper";
    case Provenance::derived: return "derived";
    case Provenance::literature: return "literature";
    case Provenance::calibrated: return "calibrated";
  }
  return "unknown";
}

Profile default_profile() {
  Profile p;
  p.d_gs = constants::kZeroFieldSplittingGs;
  p.d_es = constants::kZeroFieldSplittingEs;
  p.gamma = constants::kGyromagneticRatio;

  auto& ph = p.photo;
  ph.pump_rate_coeff = 3.3202e8;
  ph.radiative_rate = 65e6;
  ph.isc_es_ms0 = 11e6;
  ph.isc_es_ms1 = 80e6;
  ph.singlet_decay_ms0_frac = 0.5;
  ph.singlet_rate = 6.7e6;
  ph.ionize_coeff = 2e5;
  ph.nv0_pump_coeff = 3.3202e8;
  ph.nv0_radiative = 52e6;
  ph.backconvert_coeff = 4e5;
  ph.nv_density = 8.8e20;
  ph.excitation_volume = 2.25e-17;
  ph.collection_gain = 4.9250e8;
  ph.background_coeff = 0.10204;

  auto& tr = p.transport;
  tr.mu_e = 0.1;
  tr.mu_h = 0.1;
  tr.tau_e = 4.56e-10;
  tr.tau_h = 4.56e-10;
  tr.vsat_e = 1.8e5;
  tr.vsat_h = 1.8e5;
  tr.saturation_exponent = 2.0;
  tr.gap = 10e-6;
  tr.cross_section = constants::kElectrodeLength * 1.5e-6;
  tr.contact_resistance = constants::kContactResistance;

  p.mw_rabi = 3.5873e6;
  p.mw_dephasing = 1e6;
  p.power_curve = PowerCurveParams{75.5e-3, 7.04};
  p.reference_power = 0.1;
  p.bias_voltage = 60.0;
  p.power_range_min = 0.1;
  p.power_range_max = 1.0;
  p.es_depth_fraction = 0.2;
  p.residual_transverse = 0.5e-3;
  p.family_weights = {0.25, 0.25, 0.25, 0.25};
  return p;
}

const std::vector<ProfileKey>& profile_keys() {
  using P = Provenance;
  static const std::vector<ProfileKey> keys = {
      {"d_gs", "Hz", P::paper, "ground-state zero-field splitting", [](Profile& p) -> double& { return p.d_gs; }},
      {"d_es", "Hz", P::derived, "excited-state splitting, gamma x 51 mT ESLAC", [](Profile& p) -> double& { return p.d_es; }},
      {"gamma", "Hz/T", P::paper, "electron gyromagnetic ratio", [](Profile& p) -> double& { return p.gamma; }},
      {"pump_rate_coeff", "Hz/W", P::calibrated, "3A2->3E excitation per watt", [](Profile& p) -> double& { return p.photo.pump_rate_coeff; }},
      {"radiative_rate", "1/s", P::literature, "3E->3A2 radiative decay", [](Profile& p) -> double& { return p.photo.radiative_rate; }},
      {"isc_es_ms0", "1/s", P::literature, "3E(ms=0)->singlet", [](Profile& p) -> double& { return p.photo.isc_es_ms0; }},
      {"isc_es_ms1", "1/s", P::literature, "3E(ms=+-1)->singlet", [](Profile& p) -> double& { return p.photo.isc_es_ms1; }},
      {"singlet_decay_ms0_frac", "1", P::literature, "singlet->3A2 branching into ms=0", [](Profile& p) -> double& { return p.photo.singlet_decay_ms0_frac; }},
      {"singlet_rate", "1/s", P::literature, "lumped singlet decay to 3A2", [](Profile& p) -> double& { return p.photo.singlet_rate; }},
      {"ionize_coeff", "Hz/W", P::calibrated, "3E->CB second-photon ionization per watt", [](Profile& p) -> double& { return p.photo.ionize_coeff; }},
      {"nv0_pump_coeff", "Hz/W", P::calibrated, "2E->2A excitation per watt", [](Profile& p) -> double& { return p.photo.nv0_pump_coeff; }},
      {"nv0_radiative", "1/s", P::literature, "2A->2E radiative decay", [](Profile& p) -> double& { return p.photo.nv0_radiative; }},
      {"backconvert_coeff", "Hz/W", P::calibrated, "VB->2E second-photon back-conversion per watt", [](Profile& p) -> double& { return p.photo.backconvert_coeff; }},
      {"nv_density", "1/m^3", P::paper, "NV- density, a few ppb", [](Profile& p) -> double& { return p.photo.nv_density; }},
      {"excitation_volume", "m^3", P::derived, "1.5 um spot across the junction gap", [](Profile& p) -> double& { return p.photo.excitation_volume; }},
      {"collection_gain", "1", P::calibrated, "readout gain matching the power-curve scale", [](Profile& p) -> double& { return p.photo.collection_gain; }},
      {"background_coeff", "A/W", P::calibrated, "MW-independent background current per watt", [](Profile& p) -> double& { return p.photo.background_coeff; }},
      {"mu_e", "m^2/(V s)", P::literature, "electron drift mobility", [](Profile& p) -> double& { return p.transport.mu_e; }},
      {"mu_h", "m^2/(V s)", P::literature, "hole drift mobility", [](Profile& p) -> double& { return p.transport.mu_h; }},
      {"tau_e", "s", P::calibrated, "electron lifetime", [](Profile& p) -> double& { return p.transport.tau_e; }},
      {"tau_h", "s", P::calibrated, "hole lifetime", [](Profile& p) -> double& { return p.transport.tau_h; }},
      {"vsat_e", "m/s", P::literature, "electron saturation velocity", [](Profile& p) -> double& { return p.transport.vsat_e; }},
      {"vsat_h", "m/s", P::literature, "hole saturation velocity", [](Profile& p) -> double& { return p.transport.vsat_h; }},
      {"saturation_exponent", "1", P::literature, "velocity-saturation exponent", [](Profile& p) -> double& { return p.transport.saturation_exponent; }},
      {"gap", "m", P::paper, "electrode gap", [](Profile& p) -> double& { return p.transport.gap; }},
      {"cross_section", "m^2", P::derived, "electrode length x spot size", [](Profile& p) -> double& { return p.transport.cross_section; }},
      {"contact_resistance", "ohm", P::paper, "per-contact resistance", [](Profile& p) -> double& { return p.transport.contact_resistance; }},
      {"mw_rabi", "Hz", P::calibrated, "MW Rabi frequency", [](Profile& p) -> double& { return p.mw_rabi; }},
      {"mw_dephasing", "1/s", P::literature, "bare spin dephasing rate", [](Profile& p) -> double& { return p.mw_dephasing; }},
      {"alpha", "W", P::paper, "power-curve saturation power", [](Profile& p) -> double& { return p.power_curve.alpha; }},
      {"beta", "W/A", P::paper, "power-curve inverse responsivity", [](Profile& p) -> double& { return p.power_curve.beta; }},
      {"reference_power", "W", P::paper, "optical power of the reference spectra", [](Profile& p) -> double& { return p.reference_power; }},
      {"bias_voltage", "V", P::paper, "junction bias during PDMR", [](Profile& p) -> double& { return p.bias_voltage; }},
      {"power_range_min", "W", P::calibrated, "lower end of the calibrated power range", [](Profile& p) -> double& { return p.power_range_min; }},
      {"power_range_max", "W", P::calibrated, "upper end of the calibrated power range", [](Profile& p) -> double& { return p.power_range_max; }},
      {"es_depth_fraction", "1", P::calibrated, "excited-state dip depth / ground-state dip depth", [](Profile& p) -> double& { return p.es_depth_fraction; }},
      {"residual_transverse", "T", P::calibrated, "residual transverse field in magnet sweeps", [](Profile& p) -> double& { return p.residual_transverse; }},
      {"family_weight_0", "1", P::paper, "relative weight of NV family 0", [](Profile& p) -> double& { return p.family_weights[0]; }},
      {"family_weight_1", "1", P::paper, "relative weight of NV family 1", [](Profile& p) -> double& { return p.family_weights[1]; }},
      {"family_weight_2", "1", P::paper, "relative weight of NV family 2", [](Profile& p) -> double& { return p.family_weights[2]; }},
      {"family_weight_3", "1", P::paper, "relative weight of NV family 3", [](Profile& p) -> double& { return p.family_weights[3]; }},
  };
  return keys;
}

double profile_value(const Profile& p, std::string_view key) {
  for (const auto& k : profile_keys()) {
    if (k.key == key) return k.field(const_cast<Profile&>(p));
  }
  throw std::invalid_argument("unknown profile key '" + std::string(key) + "'");
}

void Profile::validate() const {
  const auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("profile: '") + what + "' must be positive");
    }
  };
  positive(d_gs, "d_gs");
  positive(d_es, "d_es");
  positive(gamma, "gamma");
  photo.validate();
  transport.validate();
  if (!(mw_rabi >= 0.0)) throw std::invalid_argument("profile: 'mw_rabi' must be nonnegative");
  positive(mw_dephasing, "mw_dephasing");
  positive(power_curve.alpha, "alpha");
  positive(power_curve.beta, "beta");
  positive(reference_power, "reference_power");
  if (!(bias_voltage >= 0.0)) throw std::invalid_argument("profile: 'bias_voltage' must be nonnegative");
  positive(power_range_min, "power_range_min");
  if (!(power_range_max > power_range_min)) {
    throw std::invalid_argument("profile: power range must satisfy min < max");
  }
  if (!(es_depth_fraction >= 0.0)) throw std::invalid_argument("profile: 'es_depth_fraction' must be nonnegative");
  if (!(residual_transverse >= 0.0)) throw std::invalid_argument("profile: 'residual_transverse' must be nonnegative");
  double wsum = 0.0;
  for (double w : family_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("profile: family weights must be nonnegative");
    wsum += w;
  }
  positive(wsum, "sum of family weights");
}

Profile parse_profile(std::string_view text) {
  Profile p = default_profile();
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return p;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("profile: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("profile: top level must be a JSON object");

  // Line numbers for diagnostics: first line mentioning the quoted key.
  const auto line_of = [&](const std::string& key) {
    const std::string needle = "\"" + key + "\"";
    const auto pos = text.find(needle);
    if (pos == std::string_view::npos) return std::string();
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n');
    return " (line " + std::to_string(line) + ")";
  };

  for (const auto& [key, value] : doc.items()) {
    if (key == "name") {
      if (!value.is_string()) throw std::invalid_argument("profile: 'name' must be a string" + line_of(key));
      p.name = value.get<std::string>();
      continue;
    }
    const ProfileKey* match = nullptr;
    for (const auto& k : profile_keys()) {
      if (k.key == key) match = &k;
    }
    if (!match) throw std::invalid_argument("profile: unknown key '" + key + "'" + line_of(key));
    if (!value.is_number()) {
      throw std::invalid_argument("profile: value of '" + key + "' must be a number" + line_of(key));
    }
    match->field(p) = value.get<double>();
  }
  p.validate();
  return p;
}

Profile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("profile: cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_profile(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

Profile resolve_profile(const std::string& name_or_path) {
  if (name_or_path.empty()) return default_profile();
  const std::filesystem::path direct(name_or_path);
  if (std::filesystem::is_regular_file(direct)) return load_profile(direct);
  if (const char* dir = std::getenv("PDMR_PROFILE_DIR")) {
    const auto candidate = std::filesystem::path(dir) / (name_or_path + ".json");
    if (std::filesystem::is_regular_file(candidate)) return load_profile(candidate);
  }
  if (name_or_path == kDefaultProfileName) return default_profile();
  throw std::invalid_argument("profile '" + name_or_path + "' not found");
}

std::string profile_to_json(const Profile& p) {
  nlohmann::ordered_json doc;
  doc["name"] = p.name;
  for (const auto& k : profile_keys()) doc[std::string(k.key)] = k.field(const_cast<Profile&>(p));
  return doc.dump(2) + "\n";
}

}  // namespace pdmr
