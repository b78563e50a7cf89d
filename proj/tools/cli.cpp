#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdmr/inversion.hpp"
#include "pdmr/profile.hpp"
#include "pdmr/spectra.hpp"
#include "pdmr/table.hpp"
#include "pdmr/transport.hpp"

namespace pdmr::cli {

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

bool unset(double v) { return std::isnan(v); }

struct Common {
  std::string profile;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
};

struct SpectrumArgs {
  double b_mag = 0.0;
  std::string b_dir = "1,0,0";
  double power = kUnset;
  double f_start = 2.6e9;
  double f_stop = 3.14e9;
  std::size_t points = 2001;
  double rabi = kUnset;
  double dephasing = kUnset;
  double noise = 0.0;
  double residual = 0.0;
  bool excited = false;
  std::string path = "fast";
};

struct FieldmapArgs {
  std::string b_dir = "1,1,1";
  double b_min = 0.0;
  double b_max = 0.135;
  std::size_t steps = 200;
  double d_min = kUnset;
  double d_max = kUnset;
  double magnet_b0 = 0.5;
  double magnet_d0 = 1e-3;
  double power = kUnset;
  double f_start = 0.0;
  double f_stop = 6.0e9;
  std::size_t points = 2000;
  double noise = 0.0;
  double residual = kUnset;
  bool no_excited = false;
};

struct IvArgs {
  std::string gap = "10um";
  double vmin = 0.0;
  double vmax = 60.0;
  std::size_t points = 121;
  double power = kUnset;
};

struct PowerSweepArgs {
  double p_min = 1e-3;
  double p_max = 1.0;
  std::size_t points = 41;
  std::string spacing = "log";
  std::string model = "rate";
  double noise_rel = 0.0;
};

struct FitSpectrumArgs {
  std::string input;
  int dips = 0;
  double k_sigma = 3.0;
};

struct FitPowerArgs {
  std::string input;
  std::string column = "current";
};

struct InvertArgs {
  std::string input;
  std::string direction_class = "100";
  bool excited = false;
  double outlier = 50e6;
  int dips = 0;
  bool refine = false;
};

struct CalibrationArgs {
  bool json = false;
};

struct State {
  Common common;
  SpectrumArgs spectrum;
  FieldmapArgs fieldmap;
  IvArgs iv;
  PowerSweepArgs power_sweep;
  FitSpectrumArgs fit_spectrum;
  FitPowerArgs fit_power;
  InvertArgs invert;
  CalibrationArgs calibration;
};

void add_common(CLI::App* sub, Common& c, bool seeded) {
  sub->add_option("--profile", c.profile, "Profile file or name (default: " + std::string(kDefaultProfileName) + ")");
  if (seeded) sub->add_option("--seed", c.seed, "64-bit noise seed");
  sub->add_option("--out,-o", c.out, "Output file (default: stdout)");
  sub->add_option("--config", c.config, "JSON object of option values, keyed by long option name");
}

void build(CLI::App& app, State& s) {
  app.require_subcommand(1);

  auto* sp = app.add_subcommand("spectrum", "CW PDMR spectrum at one field");
  add_common(sp, s.common, true);
  sp->add_option("--b-mag", s.spectrum.b_mag, "Field magnitude (T)")->check(CLI::NonNegativeNumber);
  sp->add_option("--b-dir", s.spectrum.b_dir, "Field direction x,y,z (crystal frame)");
  sp->add_option("--power", s.spectrum.power, "Optical power (W)");
  sp->add_option("--f-start", s.spectrum.f_start, "First MW frequency (Hz)");
  sp->add_option("--f-stop", s.spectrum.f_stop, "Last MW frequency (Hz)");
  sp->add_option("--points", s.spectrum.points, "Number of frequencies")->check(CLI::Range(2, 10000000));
  sp->add_option("--rabi", s.spectrum.rabi, "MW Rabi frequency (Hz)");
  sp->add_option("--dephasing", s.spectrum.dephasing, "Spin dephasing rate (1/s)");
  sp->add_option("--noise", s.spectrum.noise, "Additive current noise, rms (A)");
  sp->add_option("--residual", s.spectrum.residual, "Residual transverse field (T)");
  sp->add_flag("--excited", s.spectrum.excited, "Include excited-state lines");
  sp->add_option("--path", s.spectrum.path, "fast or full")->check(CLI::IsMember({"fast", "full"}));

  auto* fm = app.add_subcommand("fieldmap", "Spectra over a field (or magnet distance) sweep");
  add_common(fm, s.common, true);
  fm->add_option("--b-dir", s.fieldmap.b_dir, "Field direction x,y,z");
  fm->add_option("--b-min", s.fieldmap.b_min, "First field magnitude (T)");
  fm->add_option("--b-max", s.fieldmap.b_max, "Last field magnitude (T)");
  fm->add_option("--steps", s.fieldmap.steps, "Number of sweep steps")->check(CLI::Range(1, 1000000));
  fm->add_option("--d-min", s.fieldmap.d_min, "First magnet distance (m); sweeps distance instead of field");
  fm->add_option("--d-max", s.fieldmap.d_max, "Last magnet distance (m)");
  fm->add_option("--magnet-b0", s.fieldmap.magnet_b0, "Magnet field at the reference distance (T)");
  fm->add_option("--magnet-d0", s.fieldmap.magnet_d0, "Magnet reference distance (m)");
  fm->add_option("--power", s.fieldmap.power, "Optical power (W)");
  fm->add_option("--f-start", s.fieldmap.f_start, "First MW frequency (Hz)");
  fm->add_option("--f-stop", s.fieldmap.f_stop, "Last MW frequency (Hz)");
  fm->add_option("--points", s.fieldmap.points, "Frequencies per spectrum")->check(CLI::Range(2, 10000000));
  fm->add_option("--noise", s.fieldmap.noise, "Additive current noise, rms (A)");
  fm->add_option("--residual", s.fieldmap.residual, "Residual transverse field (T; default from profile)");
  fm->add_flag("--no-excited", s.fieldmap.no_excited, "Omit excited-state lines");

  auto* iv = app.add_subcommand("iv", "Current-voltage curve of the junction under illumination");
  add_common(iv, s.common, false);
  iv->add_option("--gap", s.iv.gap, "Electrode gap: meters, or preset 5um, 7.5um, 10um, 20um");
  iv->add_option("--vmin", s.iv.vmin, "First bias (V)");
  iv->add_option("--vmax", s.iv.vmax, "Last bias (V)");
  iv->add_option("--points", s.iv.points, "Number of bias points")->check(CLI::Range(2, 10000000));
  iv->add_option("--power", s.iv.power, "Optical power (W)");

  auto* ps = app.add_subcommand("power-sweep", "NV photocurrent versus optical power");
  add_common(ps, s.common, true);
  ps->add_option("--p-min", s.power_sweep.p_min, "Lowest power (W)");
  ps->add_option("--p-max", s.power_sweep.p_max, "Highest power (W)");
  ps->add_option("--points", s.power_sweep.points, "Number of powers")->check(CLI::Range(2, 10000000));
  ps->add_option("--spacing", s.power_sweep.spacing, "log or linear")->check(CLI::IsMember({"log", "linear"}));
  ps->add_option("--model", s.power_sweep.model, "rate (rate equations) or closed (saturation formula)")
      ->check(CLI::IsMember({"rate", "closed"}));
  ps->add_option("--noise-rel", s.power_sweep.noise_rel, "Multiplicative noise, relative rms");

  auto* fs = app.add_subcommand("fit-spectrum", "Fit Lorentzian dips to a spectrum table");
  add_common(fs, s.common, false);
  fs->add_option("--in,input", s.fit_spectrum.input, "Spectrum table (freq, current columns)")->required();
  fs->add_option("--dips", s.fit_spectrum.dips, "Number of dips (0: detected count)")->check(CLI::NonNegativeNumber);
  fs->add_option("--k", s.fit_spectrum.k_sigma, "Detection threshold in noise sigmas");

  auto* fp = app.add_subcommand("fit-power", "Fit the saturation power curve to a power-sweep table");
  add_common(fp, s.common, false);
  fp->add_option("--in,input", s.fit_power.input, "Table with a power column")->required();
  fp->add_option("--column", s.fit_power.column, "Current column to fit");

  auto* inv = app.add_subcommand("invert-field", "Magnetic field from resonance positions");
  add_common(inv, s.common, false);
  inv->add_option("--in,input", s.invert.input, "Dip table (center column) or spectrum table")->required();
  inv->add_option("--class", s.invert.direction_class, "100, 111 or free")
      ->check(CLI::IsMember({"100", "111", "free"}));
  inv->add_flag("--excited", s.invert.excited, "Match excited-state lines too");
  inv->add_option("--outlier", s.invert.outlier, "Distance beyond which a dip stays unassigned (Hz)");
  inv->add_option("--dips", s.invert.dips, "Dips to fit when the input is a spectrum (0: detected)");
  inv->add_flag("--refine", s.invert.refine,
                "Spectrum input only: fit the forward model to the trace, starting from the dip inversion");

  auto* cal = app.add_subcommand("calibration", "Calibration profiles");
  cal->require_subcommand(1);
  auto* show = cal->add_subcommand("show", "Print every profile value with unit and provenance");
  add_common(show, s.common, false);
  show->add_flag("--json", s.calibration.json, "Print the profile as JSON instead");
}

std::string line_of(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return "";
  return " (line " + std::to_string(1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + ")";
}

// Options from a JSON config file not already given on the command line.
std::vector<std::string> config_args(const CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument(path + ": top level must be a JSON object");
  std::vector<std::string> args;
  for (const auto& [key, value] : doc.items()) {
    const CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (!opt) throw std::invalid_argument(path + ": unknown key '" + key + "'" + line_of(text, key));
    if (opt->count() > 0) continue;
    if (value.is_boolean()) {
      if (opt->get_type_size() != 0) {
        throw std::invalid_argument(path + ": '" + key + "' takes a value" + line_of(text, key));
      }
      if (value.get<bool>()) args.push_back("--" + key);
      continue;
    }
    if (opt->get_type_size() == 0) {
      throw std::invalid_argument(path + ": '" + key + "' is a flag; use true/false" + line_of(text, key));
    }
    args.push_back("--" + key);
    if (value.is_string()) {
      args.push_back(value.get<std::string>());
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      args.push_back(value.dump());
    } else if (value.is_number()) {
      args.push_back(format_number(value.get<double>()));
    } else {
      throw std::invalid_argument(path + ": value of '" + key + "' must be a string, number or boolean" +
                                  line_of(text, key));
    }
  }
  return args;
}

UnitVector parse_direction(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("direction '" + text + "' must be x,y,z");
    v.push_back(x);
  }
  if (v.size() != 3) throw std::invalid_argument("direction '" + text + "' must have three components");
  return UnitVector::from_components(v[0], v[1], v[2]);
}

double parse_gap(const std::string& text) {
  const std::pair<const char*, double> presets[] = {
      {"5um", kGapPresets[0]}, {"7.5um", kGapPresets[1]}, {"10um", kGapPresets[2]}, {"20um", kGapPresets[3]}};
  for (const auto& [name, value] : presets)
    if (text == name) return value;
  std::size_t used = 0;
  double g = 0.0;
  try {
    g = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !(g > 0.0)) {
    throw std::invalid_argument("gap '" + text + "' must be a positive length in meters or one of 5um, 7.5um, 10um, 20um");
  }
  return g;
}

std::string dir_string(const UnitVector& d) {
  return format_number(d.x()) + "," + format_number(d.y()) + "," + format_number(d.z());
}

void header(DataTable& t, const std::string& command, const Profile& profile, const Common& c, bool seeded) {
  t.set_meta("command", command);
  t.set_meta("profile", profile.name);
  if (seeded) t.set_meta("seed", std::to_string(c.seed));
}

void emit(const std::string& text, const Common& c, std::ostream& out) {
  if (c.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open '" + c.out + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("write to '" + c.out + "' failed");
}

int cmd_spectrum(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.spectrum;
  SpectrumConfig cfg = SpectrumConfig::from_profile(profile);
  cfg.field = MagneticField{a.b_mag, parse_direction(a.b_dir)};
  if (!unset(a.power)) cfg.optical_power = a.power;
  if (!unset(a.rabi)) cfg.rabi = a.rabi;
  if (!unset(a.dephasing)) cfg.dephasing = a.dephasing;
  if (!(a.f_stop > a.f_start)) throw std::invalid_argument("--f-stop must exceed --f-start");
  cfg.freq_grid = linear_grid(a.f_start, a.f_stop, a.points);
  cfg.noise_rms = a.noise;
  cfg.residual_transverse = a.residual;
  cfg.include_excited = a.excited;
  cfg.seed = s.common.seed;
  cfg.path = a.path == "full" ? SynthesisPath::full : SynthesisPath::fast;
  const Spectrum sp = synth_spectrum(profile, cfg);

  DataTable t({{"freq", "Hz"}, {"current", "A"}, {"contrast", "1"}});
  header(t, "spectrum", profile, s.common, true);
  t.set_meta("b_mag_T", cfg.field.magnitude);
  t.set_meta("b_dir", dir_string(cfg.field.direction));
  t.set_meta("power_W", cfg.optical_power);
  t.set_meta("rabi_Hz", cfg.rabi);
  t.set_meta("dephasing_per_s", cfg.dephasing);
  t.set_meta("residual_transverse_T", cfg.residual_transverse);
  t.set_meta("noise_rms_A", cfg.noise_rms);
  t.set_meta("excited_lines", a.excited ? "true" : "false");
  t.set_meta("path", a.path);
  t.set_meta("baseline_A", sp.baseline);
  for (std::size_t i = 0; i < sp.freqs.size(); ++i) t.add_row({sp.freqs[i], sp.current[i], sp.contrast_trace[i]});
  emit(t.to_text(), s.common, out);
  return kExitOk;
}

int cmd_fieldmap(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.fieldmap;
  SpectrumConfig cfg = SpectrumConfig::from_profile(profile);
  cfg.field.direction = parse_direction(a.b_dir);
  if (!unset(a.power)) cfg.optical_power = a.power;
  if (!(a.f_stop > a.f_start)) throw std::invalid_argument("--f-stop must exceed --f-start");
  cfg.freq_grid = linear_grid(a.f_start, a.f_stop, a.points);
  cfg.noise_rms = a.noise;
  cfg.residual_transverse = unset(a.residual) ? profile.residual_transverse : a.residual;
  cfg.include_excited = !a.no_excited;
  cfg.seed = s.common.seed;

  const bool by_distance = !unset(a.d_min) || !unset(a.d_max);
  std::vector<double> sweep;
  PDMRMap map;
  MagnetModel magnet{a.magnet_b0, a.magnet_d0};
  if (by_distance) {
    if (unset(a.d_min) || unset(a.d_max)) throw std::invalid_argument("--d-min and --d-max go together");
    sweep = linear_grid(a.d_min, a.d_max, a.steps);
    map = field_map_from_distances(profile, magnet, sweep, cfg);
  } else {
    sweep = linear_grid(a.b_min, a.b_max, a.steps);
    map = field_map(profile, sweep, cfg);
  }

  std::vector<ColumnSpec> cols;
  if (by_distance) cols.push_back({"distance", "m"});
  cols.insert(cols.end(), {{"b", "T"}, {"freq", "Hz"}, {"current", "A"}, {"contrast", "1"}});
  DataTable t(cols);
  header(t, "fieldmap", profile, s.common, true);
  t.set_meta("b_dir", dir_string(cfg.field.direction));
  t.set_meta("power_W", cfg.optical_power);
  t.set_meta("residual_transverse_T", cfg.residual_transverse);
  t.set_meta("noise_rms_A", cfg.noise_rms);
  t.set_meta("excited_lines", cfg.include_excited ? "true" : "false");
  if (by_distance) {
    t.set_meta("magnet_b0_T", magnet.surface_field);
    t.set_meta("magnet_d0_m", magnet.reference_distance);
  }
  for (std::size_t r = 0; r < map.sweep.size(); ++r) {
    for (std::size_t i = 0; i < map.freqs.size(); ++i) {
      const double c = map.current[r][i];
      const double contrast = map.baseline[r] > 0.0 ? 1.0 - c / map.baseline[r] : 0.0;
      std::vector<double> row;
      if (by_distance) row.push_back(sweep[r]);
      row.insert(row.end(), {map.sweep[r], map.freqs[i], c, contrast});
      t.add_row(std::move(row));
    }
  }
  emit(t.to_text(), s.common, out);
  return kExitOk;
}

int cmd_iv(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.iv;
  TransportParams tp = profile.transport;
  tp.gap = parse_gap(a.gap);
  const double power = unset(a.power) ? profile.reference_power : a.power;
  if (!(a.vmax > a.vmin)) throw std::invalid_argument("--vmax must exceed --vmin");
  const Generation g = optical_generation(profile, power);
  const auto volts = linear_grid(a.vmin, a.vmax, a.points);
  const auto curve = iv_curve(volts, g, tp);

  DataTable t({{"voltage", "V"}, {"current", "A"}, {"field", "V/m"}, {"saturated", "1"}});
  header(t, "iv", profile, s.common, false);
  t.set_meta("gap_m", tp.gap);
  t.set_meta("power_W", power);
  t.set_meta("contact_resistance_ohm", tp.contact_resistance);
  t.set_meta("junction_resistance_ohm", junction_resistance(g, tp));
  t.set_meta("saturation_current_A", saturation_current(g, tp));
  for (const auto& p : curve) {
    t.add_row({p.voltage, p.current, p.field, p.regime == Regime::saturated ? 1.0 : 0.0});
  }
  emit(t.to_text(), s.common, out);
  return kExitOk;
}

int cmd_power_sweep(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.power_sweep;
  if (!(a.p_min > 0.0) || !(a.p_max > a.p_min)) throw std::invalid_argument("need 0 < --p-min < --p-max");
  if (!(a.noise_rel >= 0.0)) throw std::invalid_argument("--noise-rel must be nonnegative");
  std::vector<double> powers;
  if (a.spacing == "log") {
    for (double lp : linear_grid(std::log(a.p_min), std::log(a.p_max), a.points)) powers.push_back(std::exp(lp));
    powers.front() = a.p_min;
    powers.back() = a.p_max;
  } else {
    powers = linear_grid(a.p_min, a.p_max, a.points);
  }

  const auto spins = family_spins(profile, MagneticField{});
  std::vector<SpinSolution> gs, es;
  for (const auto& f : spins) {
    gs.push_back(f.ground);
    es.push_back(f.excited);
  }
  MWDrive mw;
  mw.frequency = profile.d_gs;
  mw.rabi = profile.mw_rabi;
  mw.dephasing = profile.mw_dephasing;
  mw.on = true;

  std::mt19937_64 rng(s.common.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DataTable t({{"power", "W"}, {"current", "A"}, {"total", "A"}, {"contrast", "1"}});
  header(t, "power-sweep", profile, s.common, true);
  t.set_meta("model", a.model);
  t.set_meta("noise_rel", a.noise_rel);
  t.set_meta("profile_alpha_W", profile.power_curve.alpha);
  t.set_meta("profile_beta_W_per_A", profile.power_curve.beta);
  for (double p : powers) {
    double i_nv = a.model == "closed"
                      ? photocurrent_model(p, profile.power_curve)
                      : rate_model_photocurrent(profile.photo, p, profile.d_gs, profile.d_es, profile.gamma);
    if (a.noise_rel > 0.0) i_nv *= 1.0 + a.noise_rel * gauss(rng);
    const double contrast = ensemble_contrast(profile.photo, p, mw, gs, es, profile.family_weights);
    t.add_row({p, i_nv, i_nv + background_current(profile.photo, p), contrast});
  }
  emit(t.to_text(), s.common, out);
  return kExitOk;
}

DataTable dip_table(const std::vector<DipEstimate>& dips) {
  DataTable t({{"center", "Hz"}, {"center_ci95", "Hz"}, {"fwhm", "Hz"}, {"fwhm_ci95", "Hz"}, {"depth", "A"}, {"depth_ci95", "A"}});
  for (const auto& d : dips) t.add_row({d.center, d.center_ci, d.fwhm, d.fwhm_ci, d.depth, d.depth_ci});
  return t;
}

LorentzianFit fit_table(const DataTable& in, int dips, double k_sigma) {
  const auto f = in.column("freq");
  const auto y = in.column("current");
  PeakOptions po;
  po.k_sigma = k_sigma;
  const auto found = detect_peaks(f, y, po);
  int n = dips > 0 ? dips : static_cast<int>(found.size());
  if (n == 0) throw std::invalid_argument("no dips detected; pass --dips to force a fit");
  return fit_lorentzians(f, y, n, found, po);
}

int cmd_fit_spectrum(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.fit_spectrum;
  const DataTable in = DataTable::read(a.input);
  const LorentzianFit fit = fit_table(in, a.dips, a.k_sigma);
  DataTable t = dip_table(fit.dips);
  header(t, "fit-spectrum", profile, s.common, false);
  t.set_meta("input", a.input);
  if (in.has_meta("seed")) t.set_meta("input_seed", in.meta("seed"));
  t.set_meta("baseline_A", fit.baseline);
  t.set_meta("baseline_ci95_A", fit.baseline_ci);
  t.set_meta("converged", fit.fit.converged ? "true" : "false");
  t.set_meta("iterations", std::to_string(fit.fit.iterations));
  t.set_meta("residual_norm_A", fit.fit.residual_norm);
  t.set_meta("singular", fit.fit.singular ? "true" : "false");
  emit(t.to_text(), s.common, out);
  return fit.fit.converged ? kExitOk : kExitNumerical;
}

int cmd_fit_power(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.fit_power;
  const DataTable in = DataTable::read(a.input);
  const auto p = in.column("power");
  const auto i = in.column(a.column);
  const PowerFit fit = fit_power_curve(p, i);
  DataTable t({{"power", "W"}, {"current", "A"}, {"model", "A"}, {"residual", "A"}});
  header(t, "fit-power", profile, s.common, false);
  t.set_meta("input", a.input);
  t.set_meta("column", a.column);
  t.set_meta("alpha_W", fit.params.alpha);
  t.set_meta("alpha_ci95_W", fit.alpha_ci);
  t.set_meta("beta_W_per_A", fit.params.beta);
  t.set_meta("beta_ci95_W_per_A", fit.beta_ci);
  t.set_meta("r_squared", fit.r_squared);
  t.set_meta("converged", fit.fit.converged ? "true" : "false");
  t.set_meta("iterations", std::to_string(fit.fit.iterations));
  t.set_meta("wide_intervals", fit.wide_intervals ? "true" : "false");
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = photocurrent_model(p[k], fit.params);
    t.add_row({p[k], i[k], m, i[k] - m});
  }
  emit(t.to_text(), s.common, out);
  return fit.fit.converged ? kExitOk : kExitNumerical;
}

int cmd_invert(const State& s, const Profile& profile, std::ostream& out) {
  const auto& a = s.invert;
  const DataTable in = DataTable::read(a.input);
  std::vector<DipEstimate> dips;
  if (a.refine && in.has_column("center")) throw std::invalid_argument("--refine needs a spectrum table, not a dip table");
  if (in.has_column("center")) {
    const auto c = in.column("center");
    const auto w = in.has_column("fwhm") ? in.column("fwhm") : std::vector<double>(c.size(), 0.0);
    const auto d = in.has_column("depth") ? in.column("depth") : std::vector<double>(c.size(), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) dips.push_back({c[k], w[k], d[k]});
  } else {
    dips = fit_table(in, a.dips, 3.0).dips;
  }
  InversionOptions opt = InversionOptions::from_profile(profile);
  opt.include_excited = a.excited;
  opt.outlier_distance = a.outlier;
  const DirectionClass cls = a.direction_class == "100"   ? DirectionClass::axis_100
                             : a.direction_class == "111" ? DirectionClass::axis_111
                                                          : DirectionClass::free;
  FieldInversion r = invert_field(dips, cls, opt);
  std::optional<SpectrumFieldFit> polish;
  if (a.refine) {
    SpectrumConfig cfg = SpectrumConfig::from_profile(profile);
    const auto meta = [&](const char* key, double& v) {
      if (!in.has_meta(key)) return;
      const std::string text = in.meta(key);
      std::size_t used = 0;
      try {
        v = std::stod(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size()) throw std::invalid_argument("metadata '" + std::string(key) + "' is not a number");
    };
    meta("power_W", cfg.optical_power);
    meta("rabi_Hz", cfg.rabi);
    meta("dephasing_per_s", cfg.dephasing);
    meta("residual_transverse_T", cfg.residual_transverse);
    cfg.include_excited = a.excited || in.meta("excited_lines") == "true";
    polish = refine_field(profile, cfg, in.column("freq"), in.column("current"), cls, r.field);
    if (!polish->fit.converged) return kExitNumerical;
    r.field = polish->field;
    r.fit = polish->fit;
  }

  DataTable t({{"center", "Hz"}, {"model", "Hz"}, {"assigned", "1"}, {"excited", "1"}});
  header(t, "invert-field", profile, s.common, false);
  t.set_meta("input", a.input);
  t.set_meta("class", a.direction_class);
  t.set_meta("b_mag_T", r.field.magnitude);
  if (cls == DirectionClass::free) {
    const auto v = r.field.vector();
    double var = 0.0;
    if (r.field.magnitude > 0.0) {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) var += v[i] * v[j] * r.fit.covariance(i, j);
      var /= r.field.magnitude * r.field.magnitude;
    }
    t.set_meta("b_mag_ci95_T", 1.96 * std::sqrt(std::max(var, 0.0)));
    t.set_meta("b_x_T", v[0]);
    t.set_meta("b_y_T", v[1]);
    t.set_meta("b_z_T", v[2]);
    t.set_meta("b_x_ci95_T", r.fit.ci95(0));
    t.set_meta("b_y_ci95_T", r.fit.ci95(1));
    t.set_meta("b_z_ci95_T", r.fit.ci95(2));
  } else {
    t.set_meta("b_mag_ci95_T", r.fit.ci95(0));
  }
  t.set_meta("b_dir", dir_string(r.field.direction));
  if (r.aligned_family >= 0) t.set_meta("aligned_family", std::to_string(r.aligned_family));
  t.set_meta("rms_residual_Hz", r.rms_residual);
  if (polish) {
    t.set_meta("refined", "true");
    t.set_meta("scale", polish->scale);
    t.set_meta("offset_A", polish->offset);
    t.set_meta("trace_rms_residual_A", polish->rms_residual);
  }
  t.set_meta("converged", r.fit.converged ? "true" : "false");
  for (std::size_t k = 0; k < dips.size(); ++k) {
    const int line = r.assignment[k];
    t.add_row({dips[k].center, line >= 0 ? r.model_lines[static_cast<std::size_t>(line)] : std::nan(""),
               line >= 0 ? 1.0 : 0.0, r.excited_flag[k] ? 1.0 : 0.0});
  }
  emit(t.to_text(), s.common, out);
  return r.fit.converged ? kExitOk : kExitNumerical;
}

int cmd_calibration_show(const State& s, const Profile& profile, std::ostream& out) {
  if (s.calibration.json) {
    emit(profile_to_json(profile) + "\n", s.common, out);
    return kExitOk;
  }
  std::string text = "# profile: " + profile.name + "\n";
  for (const auto& k : profile_keys()) {
    text += std::string(k.key) + " = " + format_number(profile_value(profile, k.key)) + " " + std::string(k.unit) +
            " [" + std::string(to_string(k.provenance)) + "]";
    if (!k.note.empty()) text += " " + std::string(k.note);
    text += "\n";
  }
  emit(text, s.common, out);
  return kExitOk;
}

int dispatch(const CLI::App& app, const State& s, std::ostream& out) {
  const Profile profile = resolve_profile(s.common.profile);
  if (app.got_subcommand("spectrum")) return cmd_spectrum(s, profile, out);
  if (app.got_subcommand("fieldmap")) return cmd_fieldmap(s, profile, out);
  if (app.got_subcommand("iv")) return cmd_iv(s, profile, out);
  if (app.got_subcommand("power-sweep")) return cmd_power_sweep(s, profile, out);
  if (app.got_subcommand("fit-spectrum")) return cmd_fit_spectrum(s, profile, out);
  if (app.got_subcommand("fit-power")) return cmd_fit_power(s, profile, out);
  if (app.got_subcommand("invert-field")) return cmd_invert(s, profile, out);
  return cmd_calibration_show(s, profile, out);
}

const CLI::App* chosen(const CLI::App& app) {
  const auto subs = app.get_subcommands();
  if (subs.empty()) return nullptr;
  const CLI::App* sub = subs.front();
  while (!sub->get_subcommands().empty()) sub = sub->get_subcommands().front();
  return sub;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    for (int pass = 0; pass < 2; ++pass) {
      State state;
      CLI::App app{"PDMR simulator and inversion toolkit", "pdmr"};
      build(app, state);
      std::vector<const char*> ptrs;
      for (const auto& a : args) ptrs.push_back(a.c_str());
      try {
        app.parse(static_cast<int>(ptrs.size()), ptrs.data());
      } catch (const CLI::CallForHelp&) {
        const CLI::App* sub = chosen(app);
        out << (sub ? sub->help() : app.help());
        return kExitOk;
      } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
      } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const CLI::App* sub = chosen(app);
        err << "run '" << (sub ? "pdmr " + sub->get_name() : std::string("pdmr")) << " --help' for usage\n";
        return kExitUsage;
      }
      if (pass == 0 && !state.common.config.empty()) {
        auto extra = config_args(chosen(app), state.common.config);
        args.insert(args.end(), extra.begin(), extra.end());
        continue;
      }
      return dispatch(app, state, out);
    }
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace pdmr::cli
