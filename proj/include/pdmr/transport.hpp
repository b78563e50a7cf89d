#pragma once

#include <span>
#include <vector>

namespace pdmr {

struct TransportParams {
  double mu_e = 0.0;    // m^2/(V s)
  double mu_h = 0.0;
  double tau_e = 0.0;   // s
  double tau_h = 0.0;
  double vsat_e = 0.0;  // m/s
  double vsat_h = 0.0;
  double saturation_exponent = 1.0;  // 1 = single-pole form
  double gap = 10e-6;                // m
  double cross_section = 0.0;        // m^2
  double contact_resistance = 0.0;   // ohm, per contact

  void validate() const;
};

/// Carrier generation per unit volume, s^-1 m^-3.
struct Generation {
  double gamma_e = 0.0;
  double gamma_h = 0.0;
};

enum class Regime { ohmic, saturated };

struct IVPoint {
  double voltage = 0.0;  // V, applied across both contacts and the junction
  double field = 0.0;    // V/m in the junction
  double current = 0.0;  // A
  Regime regime = Regime::ohmic;
};

struct Conductivity {
  double sigma = 0.0;  // S/m
  double n = 0.0;      // m^-3
  double p = 0.0;      // m^-3
};

/// v = mu E / (1 + (mu E / vsat)^k)^(1/k).
double drift_velocity(double mu, double vsat, double field, double exponent = 1.0);

Conductivity conductivity(const Generation& g, const TransportParams& params);

/// Ohmic (low-field) junction resistance gap / (sigma A).
double junction_resistance(const Generation& g, const TransportParams& params);

/// Solves U = 2 R_C I + E gap with I = e (n v_e(E) + p v_h(E)) A.
IVPoint junction_current(double voltage, const Generation& g, const TransportParams& params);

std::vector<IVPoint> iv_curve(std::span<const double> voltages, const Generation& g,
                              const TransportParams& params);

/// e (n vsat_e + p vsat_h) A.
double saturation_current(const Generation& g, const TransportParams& params);

/// Electrode gaps of the fabricated device set, in meters.
inline constexpr double kGapPresets[] = {5e-6, 7.5e-6, 10e-6, 20e-6};

}  // namespace pdmr
