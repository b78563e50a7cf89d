#include "pdmr/transport.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pdmr/constants.hpp"
#include "pdmr/photodynamics.hpp"

namespace pdmr {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("transport parameter '") + name + "' must be positive");
  }
}

double drift_current(double field, const Conductivity& c, const TransportParams& p) {
  const double v_e = drift_velocity(p.mu_e, p.vsat_e, field, p.saturation_exponent);
  const double v_h = drift_velocity(p.mu_h, p.vsat_h, field, p.saturation_exponent);
  return constants::kElementaryCharge * (c.n * v_e + c.p * v_h) * p.cross_section;
}

}  // namespace

void TransportParams::validate() const {
  require_positive(mu_e, "mu_e");
  require_positive(mu_h, "mu_h");
  require_positive(tau_e, "tau_e");
  require_positive(tau_h, "tau_h");
  require_positive(vsat_e, "vsat_e");
  require_positive(vsat_h, "vsat_h");
  require_positive(saturation_exponent, "saturation_exponent");
  require_positive(gap, "gap");
  require_positive(cross_section, "cross_section");
  if (!(contact_resistance >= 0.0)) {
    throw std::invalid_argument("transport parameter 'contact_resistance' must be nonnegative");
  }
}

double drift_velocity(double mu, double vsat, double field, double exponent) {
  if (!(field >= 0.0)) throw std::invalid_argument("drift_velocity: field must be nonnegative");
  const double v_lin = mu * field;
  if (v_lin == 0.0) return 0.0;
  const double x = v_lin / vsat;
  if (exponent == 1.0) return v_lin / (1.0 + x);
  return v_lin / std::pow(1.0 + std::pow(x, exponent), 1.0 / exponent);
}

Conductivity conductivity(const Generation& g, const TransportParams& params) {
  if (!(g.gamma_e >= 0.0) || !(g.gamma_h >= 0.0)) {
    throw std::invalid_argument("conductivity: generation rates must be nonnegative");
  }
  Conductivity c;
  c.n = params.tau_e * g.gamma_e;
  c.p = params.tau_h * g.gamma_h;
  c.sigma = constants::kElementaryCharge * (c.n * params.mu_e + c.p * params.mu_h);
  return c;
}

double junction_resistance(const Generation& g, const TransportParams& params) {
  params.validate();
  const double sigma = conductivity(g, params).sigma;
  if (!(sigma > 0.0)) throw std::invalid_argument("junction_resistance: no carriers");
  return params.gap / (sigma * params.cross_section);
}

double saturation_current(const Generation& g, const TransportParams& params) {
  const Conductivity c = conductivity(g, params);
  return constants::kElementaryCharge * (c.n * params.vsat_e + c.p * params.vsat_h) *
         params.cross_section;
}

IVPoint junction_current(double voltage, const Generation& g, const TransportParams& params) {
  if (!(voltage >= 0.0)) throw std::invalid_argument("junction_current: voltage must be nonnegative");
  params.validate();
  const Conductivity c = conductivity(g, params);
  const double r_series = 2.0 * params.contact_resistance;

  IVPoint pt;
  pt.voltage = voltage;
  if (voltage == 0.0 || (c.n == 0.0 && c.p == 0.0)) {
    pt.field = voltage / params.gap;
    pt.regime = Regime::ohmic;
    return pt;
  }

  // f(U_j) = U_j + R_s I(U_j / gap) - U is strictly increasing; root lies in [0, U].
  const auto residual = [&](double uj) {
    return uj + r_series * drift_current(uj / params.gap, c, params) - voltage;
  };
  double lo = 0.0, hi = voltage;
  double uj = voltage;
  if (residual(hi) > 0.0) {
    constexpr int kMaxIter = 400;
    int it = 0;
    double f_lo = residual(lo), f_hi = residual(hi);
    // Illinois-modified regula falsi.
    int side = 0;
    for (; it < kMaxIter; ++it) {
      uj = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
      const double f = residual(uj);
      if (std::abs(f) <= 1e-12 * voltage || hi - lo <= 1e-15 * voltage) break;
      if (f > 0.0) {
        hi = uj;
        f_hi = f;
        if (side == -1) f_lo *= 0.5;
        side = -1;
      } else {
        lo = uj;
        f_lo = f;
        if (side == 1) f_hi *= 0.5;
        side = 1;
      }
    }
    if (it == kMaxIter) throw NumericalError("junction_current: series solve did not converge");
  }

  pt.field = uj / params.gap;
  pt.current = drift_current(pt.field, c, params);
  const double linear = constants::kElementaryCharge *
                        (c.n * params.mu_e + c.p * params.mu_h) * pt.field * params.cross_section;
  pt.regime = pt.current >= 0.9 * linear ? Regime::ohmic : Regime::saturated;
  return pt;
}

std::vector<IVPoint> iv_curve(std::span<const double> voltages, const Generation& g,
                              const TransportParams& params) {
  std::vector<IVPoint> out;
  out.reserve(voltages.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < voltages.size(); ++i) {
    if (!(voltages[i] >= 0.0) || (i > 0 && voltages[i] < prev)) {
      throw std::invalid_argument("iv_curve: voltages must be sorted and nonnegative");
    }
    prev = voltages[i];
    out.push_back(junction_current(voltages[i], g, params));
  }
  return out;
}

}  // namespace pdmr
