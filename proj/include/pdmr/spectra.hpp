#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdmr/geometry.hpp"
#include "pdmr/photodynamics.hpp"
#include "pdmr/profile.hpp"
#include "pdmr/spin_model.hpp"

namespace pdmr {

enum class SynthesisPath { fast, full };

struct SpectrumConfig {
  std::vector<double> freq_grid;     // Hz, ascending
  MagneticField field;
  double residual_transverse = 0.0;  // T, added along orthogonal_to(field.direction)
  double optical_power = 0.1;        // W
  double rabi = 0.0;                 // Hz
  double dephasing = 1.0;            // s^-1
  bool include_excited = false;
  double noise_rms = 0.0;            // A
  std::uint64_t seed = 0;
  SynthesisPath path = SynthesisPath::fast;

  /// Config with MW and power settings taken from the profile.
  static SpectrumConfig from_profile(const Profile& profile);
  void validate() const;
};

enum class Branch { minus, plus, merged };

/// One Lorentzian dip of the fast path.
struct SpectralLine {
  double center = 0.0;  // Hz
  double fwhm = 0.0;    // Hz
  double depth = 0.0;   // A
  int family = 0;
  Manifold manifold = Manifold::ground;
  Branch branch = Branch::minus;
};

struct Spectrum {
  std::vector<double> freqs;
  std::vector<double> current;         // A
  std::vector<double> contrast_trace;  // 1 - current / baseline
  double baseline = 0.0;               // MW-off current, A
  std::vector<SpectralLine> lines;     // fast path only
  MagneticField field;
  double optical_power = 0.0;
  double noise_rms = 0.0;
  std::uint64_t seed = 0;
};

struct PDMRMap {
  std::vector<double> sweep;  // T (field magnitude) per row
  std::vector<double> freqs;  // Hz
  std::vector<std::vector<double>> current;  // [row][freq], A
  std::vector<double> baseline;              // per row
  std::vector<std::vector<SpectralLine>> lines;
};

struct MagnetModel {
  double surface_field = 0.5;         // T
  double reference_distance = 1e-3;   // m

  void validate() const;
};

/// Evenly spaced grid, both ends included.
std::vector<double> linear_grid(double start, double stop, std::size_t n);

/// Per-family spin solutions (ground and excited) for a total applied field.
struct FamilySpin {
  FieldProjection projection;
  SpinSolution ground;
  SpinSolution excited;
};
std::array<FamilySpin, kNumFamilies> family_spins(const Profile& profile, const MagneticField& field);

/// Field with the residual transverse term added.
MagneticField applied_field(const MagneticField& field, double residual_transverse);

/// Lines of the fast path for one field.
std::vector<SpectralLine> spectral_lines(const Profile& profile, const SpectrumConfig& config,
                                         double* baseline_out = nullptr);

Spectrum synth_spectrum(const Profile& profile, const SpectrumConfig& config);

double magnet_field(const MagnetModel& model, double distance);

/// Distance at which the magnet produces `field` (inverse of magnet_field).
double magnet_distance(const MagnetModel& model, double field);

/// One spectrum per field magnitude; direction, power and MW settings from `base`. Noise on
/// row r is drawn from a stream seeded by (base.seed, r).
PDMRMap field_map(const Profile& profile, const std::vector<double>& magnitudes,
                  const SpectrumConfig& base);

PDMRMap field_map_from_distances(const Profile& profile, const MagnetModel& magnet,
                                 const std::vector<double>& distances, const SpectrumConfig& base);

/// Analytic CW linewidth (FWHM, Hz): (gamma_c/pi) sqrt(1 + (2 pi rabi)^2 / (2 gamma_c W_s)),
/// gamma_c = dephasing + pump_rate. W_s is the rate at which optical cycling restores the
/// driven population difference; it defaults to pump_rate.
double linewidth_model(double rabi, double dephasing, double pump_rate,
                       std::optional<double> saturation_rate = std::nullopt);

/// W_s of the rate model at zero field, for use with linewidth_model.
double mw_saturation_rate(const Profile& profile, double optical_power,
                          MwTarget target = MwTarget::both);

/// Carrier generation of the whole ensemble at `power` with the MW off and zero field.
Generation optical_generation(const Profile& profile, double power);

/// 64-bit seed for stream `index` derived from `seed` (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace pdmr
