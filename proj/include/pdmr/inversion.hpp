#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pdmr/geometry.hpp"
#include "pdmr/least_squares.hpp"
#include "pdmr/photodynamics.hpp"
#include "pdmr/profile.hpp"
#include "pdmr/spectra.hpp"

namespace pdmr {

/// One resonance dip. The *_ci fields are 95% half-widths (zero for unfitted estimates).
struct DipEstimate {
  double center = 0.0;  // Hz
  double fwhm = 0.0;    // Hz
  double depth = 0.0;   // A, measured down from the baseline
  double center_ci = 0.0;
  double fwhm_ci = 0.0;
  double depth_ci = 0.0;
};

struct PeakOptions {
  double k_sigma = 3.0;
  /// Minimum prominence as a fraction of the deepest excursion below the baseline.
  double relative_floor = 1e-3;
};

/// Baseline and white-noise estimates used by detect_peaks.
struct NoiseEstimate {
  double baseline = 0.0;
  double sigma = 0.0;
};

NoiseEstimate estimate_noise(std::span<const double> y);

std::vector<DipEstimate> detect_peaks(std::span<const double> freqs, std::span<const double> current,
                                      const PeakOptions& options = {});
std::vector<DipEstimate> detect_peaks(const Spectrum& spectrum, const PeakOptions& options = {});

struct LorentzianFit {
  double baseline = 0.0;
  double baseline_ci = 0.0;
  std::vector<DipEstimate> dips;  // sorted by center
  FitResult fit;                  // params: baseline, then (center, fwhm, depth) per dip
};

/// Baseline minus n Lorentzian dips. Initial guesses come from detect_peaks unless given.
LorentzianFit fit_lorentzians(std::span<const double> freqs, std::span<const double> current,
                              int n_dips, std::span<const DipEstimate> initial = {},
                              const PeakOptions& options = {});
LorentzianFit fit_lorentzians(const Spectrum& spectrum, int n_dips,
                              std::span<const DipEstimate> initial = {},
                              const PeakOptions& options = {});

double lorentzian_dips(double f, double baseline, std::span<const DipEstimate> dips);

struct AlignedInversion {
  double b_par = 0.0;         // tesla
  double sum_deviation = 0.0;  // f_minus + f_plus - 2D, Hz (with the beyond-GSLAC reading applied)
  bool inconsistent = false;
  bool beyond_gslac = false;  // f_minus read as gamma B - D
};

/// B_par from the two transitions of an aligned family. `tolerance` bounds |f_minus + f_plus - 2D|.
AlignedInversion invert_aligned(double f_minus, double f_plus, double d, double gamma,
                                double tolerance = 10e6);

enum class DirectionClass { axis_100, axis_111, free };

struct InversionOptions {
  double d_gs = constants::kZeroFieldSplittingGs;
  double d_es = constants::kZeroFieldSplittingEs;
  double gamma = constants::kGyromagneticRatio;
  bool include_excited = false;
  /// Dips farther than this from every model line are left unassigned.
  double outlier_distance = 50e6;
  /// Model lines closer than this are one line.
  double merge_distance = 2e6;
  /// Pairs summing to 2 D_es within this tolerance are treated as excited-state lines.
  double es_sum_tolerance = 10e6;
  double grid_max = 0.150;   // T
  double grid_step = 1e-3;   // T
  int direction_samples = 400;
  int refine_seeds = 5;

  static InversionOptions from_profile(const Profile& profile);
};

struct FieldInversion {
  MagneticField field;
  FitResult fit;                 // params: |B| (constrained classes) or (Bx, By, Bz)
  std::vector<int> assignment;   // per input dip: model-line index, or -1 if unassigned/excluded
  std::vector<double> model_lines;
  std::vector<bool> excited_flag;  // per input dip: excluded as an excited-state line
  int aligned_family = -1;         // axis_111 class only
  double rms_residual = 0.0;       // Hz over assigned dips
};

/// Model resonance positions for a field: ground-state (and optionally excited-state)
/// transitions of all families, merged within options.merge_distance, ascending.
std::vector<double> model_lines(const MagneticField& field, const InversionOptions& options);

FieldInversion invert_field(std::span<const DipEstimate> dips, DirectionClass direction_class,
                            const InversionOptions& options = {});

struct SpectrumFieldFit {
  MagneticField field;
  double scale = 1.0;   // measured / modelled current
  double offset = 0.0;  // A
  FitResult fit;        // params: field params as in FieldInversion, then scale, offset / baseline
  double rms_residual = 0.0;  // A
};

/// Fits the forward spectrum model directly to a measured trace, starting from `initial`
/// (typically an invert_field result). MW, power and residual-field settings come from
/// `config`; its grid, field, noise and path are ignored. Removes the bias a Lorentzian dip
/// model has when lines of one family overlap and saturate jointly.
SpectrumFieldFit refine_field(const Profile& profile, const SpectrumConfig& config,
                              std::span<const double> freqs, std::span<const double> current,
                              DirectionClass direction_class, const MagneticField& initial);

struct PowerFit {
  PowerCurveParams params;
  double alpha_ci = 0.0;  // 95% half-widths
  double beta_ci = 0.0;
  double r_squared = 0.0;
  bool wide_intervals = false;  // some relative half-width above 50% or singular covariance
  FitResult fit;                // params: alpha, beta
};

/// Least-squares fit of I = P^2 / (beta (alpha + P)). Residuals are relative when all currents
/// are positive (multiplicative noise), absolute otherwise.
PowerFit fit_power_curve(std::span<const double> power, std::span<const double> current);

double r_squared(std::span<const double> y, std::span<const double> model);

}  // namespace pdmr
