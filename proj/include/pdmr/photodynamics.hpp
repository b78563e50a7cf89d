#pragma once

#include <array>
#include <span>
#include <stdexcept>

#include <Eigen/Dense>

#include "pdmr/spin_model.hpp"

namespace pdmr {

/// Raised when a numerical solve has no unique or finite answer.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Optical, ionization and intersystem-crossing rates of the NV charge/spin cycle.
/// Rates in s^-1; *_coeff values are per watt of pump power.
struct PhotophysicsParams {
  double pump_rate_coeff = 0.0;          // 3A2 -> 3E, Hz/W
  double radiative_rate = 0.0;           // 3E -> 3A2
  double isc_es_ms0 = 0.0;               // 3E(ms=0) -> singlet
  double isc_es_ms1 = 0.0;               // 3E(ms=+-1) -> singlet
  double singlet_decay_ms0_frac = 0.0;   // fraction of singlet decay landing in ms=0
  double singlet_rate = 0.0;             // singlet -> 3A2
  double ionize_coeff = 0.0;             // 3E -> CB (electron), Hz/W
  double nv0_pump_coeff = 0.0;           // 2E -> 2A, Hz/W
  double nv0_radiative = 0.0;            // 2A -> 2E
  double backconvert_coeff = 0.0;        // VB -> 2E from 2A (hole), Hz/W
  double nv_density = 0.0;               // m^-3
  double excitation_volume = 0.0;        // m^3
  double collection_gain = 1.0;          // photoconductive gain of the readout
  double background_coeff = 0.0;         // MW-independent background current, A/W

  void validate() const;
};

enum class MwTarget { minus_one, plus_one, both };

struct MWDrive {
  double frequency = 0.0;  // Hz
  double rabi = 0.0;       // Hz (ordinary Rabi frequency)
  double dephasing = 1.0;  // s^-1, bare coherence decay rate
  MwTarget target = MwTarget::both;
  bool on = false;

  void validate() const;
};

/// Level order of the 9-state model. Spin labels refer to the dominant m_s character of the
/// eigenstates of each triplet manifold.
enum Level : int {
  kGsMinus = 0,
  kGsZero = 1,
  kGsPlus = 2,
  kEsMinus = 3,
  kEsZero = 4,
  kEsPlus = 5,
  kSinglet = 6,
  kNv0Gs = 7,
  kNv0Es = 8,
};
inline constexpr int kNumLevels = 9;

using RateMatrix = Eigen::Matrix<double, kNumLevels, kNumLevels>;
using Populations = Eigen::Matrix<double, kNumLevels, 1>;

struct SteadyStateResult {
  Populations populations = Populations::Zero();
  double gamma_e = 0.0;            // electrons generated, s^-1 m^-3
  double gamma_h = 0.0;            // holes generated, s^-1 m^-3
  double photocurrent_flux = 0.0;  // carrier pairs per second in the excitation volume
  double pl_rate = 0.0;            // photons per second
};

/// Closed-form power curve I = (P^2/(alpha beta)) / (1 + P/alpha).
struct PowerCurveParams {
  double alpha = 0.0;  // W, saturation power
  double beta = 0.0;   // W/A
};

/// Incoherent MW transfer rate (s^-1) at detuning `detuning` (Hz) for coherence decay `gamma_c`.
double mw_transfer_rate(double rabi, double gamma_c, double detuning);

/// Coherence decay including optical cycling: dephasing + pump rate.
double effective_decoherence(const PhotophysicsParams& params, double power, double dephasing);

/// Off-diagonal (i, j) = rate j -> i; columns sum to zero.
RateMatrix build_rate_matrix(const PhotophysicsParams& params, double power, const MWDrive& mw,
                             const SpinSolution& ground, const SpinSolution& excited);

/// Unique normalized null vector of a conservative rate matrix. Throws NumericalError if the
/// steady state is not unique.
Populations steady_state(const RateMatrix& m);

/// Carrier generation per unit volume from populations.
std::pair<double, double> carrier_rates(const Populations& n, const PhotophysicsParams& params,
                                        double power);

/// Full solve. At zero power the dark state is degenerate; the populations are then split
/// equally over the ground-state sublevels.
SteadyStateResult solve_steady_state(const PhotophysicsParams& params, double power,
                                     const MWDrive& mw, const SpinSolution& ground,
                                     const SpinSolution& excited);

/// NV photocurrent in amperes (electrons + holes, times the collection gain).
double nv_photocurrent(const SteadyStateResult& r, const PhotophysicsParams& params);

double background_current(const PhotophysicsParams& params, double power);

double photocurrent_model(double power, const PowerCurveParams& pc);

/// Single-family contrast (I_off - I_on)/I_off, NV current only.
double pdmr_contrast(const PhotophysicsParams& params, double power, const MWDrive& mw,
                     const SpinSolution& ground, const SpinSolution& excited);

/// Family-summed contrast including the background current. One (ground, excited) pair per family.
double ensemble_contrast(const PhotophysicsParams& params, double power, const MWDrive& mw,
                         std::span<const SpinSolution> ground, std::span<const SpinSolution> excited,
                         std::span<const double> weights = {});

/// NV photocurrent of one family at zero field with the MW off.
double rate_model_photocurrent(const PhotophysicsParams& params, double power, double d_gs,
                               double d_es, double gamma);

}  // namespace pdmr
