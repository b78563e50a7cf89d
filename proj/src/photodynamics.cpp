#include "pdmr/photodynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "pdmr/constants.hpp"

namespace pdmr {

namespace {

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("photophysics parameter '") + name +
                                "' must be finite and nonnegative");
  }
}

// Mixing rows re-ordered by label: row 0 = minus-like, 1 = zero-like, 2 = plus-like.
Eigen::Matrix3d labeled_mixing(const SpinSolution& s) {
  Eigen::Matrix3d m;
  m.row(kMsMinus) = s.mixing.row(s.labels.minus);
  m.row(kMsZero) = s.mixing.row(s.labels.zero);
  m.row(kMsPlus) = s.mixing.row(s.labels.plus);
  return m;
}

void add_rate(RateMatrix& m, int from, int to, double rate) {
  if (rate == 0.0) return;
  m(to, from) += rate;
  m(from, from) -= rate;
}

}  // namespace

void PhotophysicsParams::validate() const {
  require_nonnegative(pump_rate_coeff, "pump_rate_coeff");
  require_nonnegative(radiative_rate, "radiative_rate");
  require_nonnegative(isc_es_ms0, "isc_es_ms0");
  require_nonnegative(isc_es_ms1, "isc_es_ms1");
  require_nonnegative(singlet_rate, "singlet_rate");
  require_nonnegative(nv0_pump_coeff, "nv0_pump_coeff");
  require_nonnegative(nv0_radiative, "nv0_radiative");
  require_nonnegative(backconvert_coeff, "backconvert_coeff");
  require_nonnegative(nv_density, "nv_density");
  require_nonnegative(excitation_volume, "excitation_volume");
  require_nonnegative(collection_gain, "collection_gain");
  require_nonnegative(background_coeff, "background_coeff");
  if (!(ionize_coeff > 0.0)) throw std::invalid_argument("ionize_coeff must be positive");
  if (!(singlet_decay_ms0_frac >= 0.0 && singlet_decay_ms0_frac <= 1.0)) {
    throw std::invalid_argument("singlet_decay_ms0_frac must lie in [0, 1]");
  }
}

void MWDrive::validate() const {
  if (!(rabi >= 0.0)) throw std::invalid_argument("MW Rabi frequency must be nonnegative");
  if (!(dephasing > 0.0)) throw std::invalid_argument("MW dephasing rate must be positive");
}

double mw_transfer_rate(double rabi, double gamma_c, double detuning) {
  const double omega = 2.0 * constants::kPi * rabi;
  const double x = 2.0 * constants::kPi * detuning / gamma_c;
  return omega * omega / (2.0 * gamma_c) / (1.0 + x * x);
}

double effective_decoherence(const PhotophysicsParams& params, double power, double dephasing) {
  return dephasing + params.pump_rate_coeff * power;
}

RateMatrix build_rate_matrix(const PhotophysicsParams& params, double power, const MWDrive& mw,
                             const SpinSolution& ground, const SpinSolution& excited) {
  if (!(power >= 0.0)) throw std::invalid_argument("optical power must be nonnegative");
  params.validate();

  RateMatrix m = RateMatrix::Zero();
  const Eigen::Matrix3d mg = labeled_mixing(ground);
  const Eigen::Matrix3d me = labeled_mixing(excited);

  const double pump = params.pump_rate_coeff * power;
  const std::array<double, 3> isc{params.isc_es_ms1, params.isc_es_ms0, params.isc_es_ms1};
  const double f0 = params.singlet_decay_ms0_frac;
  const std::array<double, 3> branch{0.5 * (1.0 - f0), f0, 0.5 * (1.0 - f0)};

  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      // Spin-conserving optical transitions between eigenstates of the two manifolds.
      const double overlap = mg.row(a).dot(me.row(b));
      add_rate(m, kGsMinus + a, kEsMinus + b, pump * overlap);
      add_rate(m, kEsMinus + b, kGsMinus + a, params.radiative_rate * overlap);
    }
  }
  for (int b = 0; b < 3; ++b) {
    double k_isc = 0.0;
    for (int j = 0; j < 3; ++j) k_isc += me(b, j) * isc[j];
    add_rate(m, kEsMinus + b, kSinglet, k_isc);
    add_rate(m, kEsMinus + b, kNv0Gs, params.ionize_coeff * power);
  }
  for (int a = 0; a < 3; ++a) {
    double w = 0.0;
    for (int j = 0; j < 3; ++j) w += mg(a, j) * branch[j];
    add_rate(m, kSinglet, kGsMinus + a, params.singlet_rate * w);
    // The captured electron lands with no spin preference.
    add_rate(m, kNv0Es, kGsMinus + a, params.backconvert_coeff * power / 3.0);
  }
  add_rate(m, kNv0Gs, kNv0Es, params.nv0_pump_coeff * power);
  add_rate(m, kNv0Es, kNv0Gs, params.nv0_radiative);

  if (mw.on) {
    mw.validate();
    const double gamma_c = effective_decoherence(params, power, mw.dephasing);
    const auto drive = [&](int level, double f_transition) {
      const double w = mw_transfer_rate(mw.rabi, gamma_c, mw.frequency - f_transition);
      add_rate(m, kGsZero, level, w);
      add_rate(m, level, kGsZero, w);
    };
    if (mw.target != MwTarget::plus_one) drive(kGsMinus, ground.transitions.f_minus);
    if (mw.target != MwTarget::minus_one) drive(kGsPlus, ground.transitions.f_plus);
  }
  return m;
}

Populations steady_state(const RateMatrix& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw NumericalError("steady_state: rate matrix is identically zero");

  Eigen::FullPivLU<RateMatrix> lu(m);
  lu.setThreshold(1e-12);
  if (lu.rank() < kNumLevels - 1) {
    throw NumericalError("steady_state: level graph is disconnected, steady state is not unique");
  }

  // Replace one balance equation by the normalization row.
  RateMatrix a = m / scale;
  a.row(0).setOnes();
  Populations rhs = Populations::Zero();
  rhs(0) = 1.0;
  Eigen::PartialPivLU<RateMatrix> solver(a);
  Populations n = solver.solve(rhs);
  // One refinement step.
  n += solver.solve(rhs - a * n);

  for (int i = 0; i < kNumLevels; ++i) {
    if (!std::isfinite(n(i)) || n(i) < -1e-9) {
      throw NumericalError("steady_state: solve produced a negative or non-finite population");
    }
    n(i) = std::max(n(i), 0.0);
  }
  n /= n.sum();
  if ((m * n).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NumericalError("steady_state: residual above tolerance");
  }
  return n;
}

std::pair<double, double> carrier_rates(const Populations& n, const PhotophysicsParams& params,
                                        double power) {
  const double es_minus = n(kEsMinus) + n(kEsZero) + n(kEsPlus);
  const double gamma_e = params.ionize_coeff * power * es_minus * params.nv_density;
  const double gamma_h = params.backconvert_coeff * power * n(kNv0Es) * params.nv_density;
  return {gamma_e, gamma_h};
}

SteadyStateResult solve_steady_state(const PhotophysicsParams& params, double power,
                                     const MWDrive& mw, const SpinSolution& ground,
                                     const SpinSolution& excited) {
  SteadyStateResult r;
  if (power == 0.0) {
    params.validate();
    r.populations(kGsMinus) = r.populations(kGsZero) = r.populations(kGsPlus) = 1.0 / 3.0;
    return r;
  }
  r.populations = steady_state(build_rate_matrix(params, power, mw, ground, excited));
  const auto [ge, gh] = carrier_rates(r.populations, params, power);
  r.gamma_e = ge;
  r.gamma_h = gh;
  r.photocurrent_flux = ge * params.excitation_volume;
  const double es_minus = r.populations(kEsMinus) + r.populations(kEsZero) + r.populations(kEsPlus);
  r.pl_rate = (params.radiative_rate * es_minus + params.nv0_radiative * r.populations(kNv0Es)) *
              params.nv_density * params.excitation_volume;
  return r;
}

double nv_photocurrent(const SteadyStateResult& r, const PhotophysicsParams& params) {
  return constants::kElementaryCharge * params.collection_gain * (r.gamma_e + r.gamma_h) *
         params.excitation_volume;
}

double background_current(const PhotophysicsParams& params, double power) {
  return params.background_coeff * power;
}

double photocurrent_model(double power, const PowerCurveParams& pc) {
  if (!(power >= 0.0)) throw std::invalid_argument("optical power must be nonnegative");
  if (!(pc.alpha > 0.0) || !(pc.beta > 0.0)) {
    throw std::invalid_argument("power-curve parameters must be positive");
  }
  return (power * power / (pc.alpha * pc.beta)) / (1.0 + power / pc.alpha);
}

double pdmr_contrast(const PhotophysicsParams& params, double power, const MWDrive& mw,
                     const SpinSolution& ground, const SpinSolution& excited) {
  MWDrive off = mw;
  off.on = false;
  MWDrive on = mw;
  on.on = true;
  const double i_off = nv_photocurrent(solve_steady_state(params, power, off, ground, excited), params);
  if (!(i_off > 0.0)) throw NumericalError("pdmr_contrast: no photocurrent without MW drive");
  const double i_on = nv_photocurrent(solve_steady_state(params, power, on, ground, excited), params);
  return (i_off - i_on) / i_off;
}

double ensemble_contrast(const PhotophysicsParams& params, double power, const MWDrive& mw,
                         std::span<const SpinSolution> ground, std::span<const SpinSolution> excited,
                         std::span<const double> weights) {
  if (ground.size() != excited.size() || ground.empty()) {
    throw std::invalid_argument("ensemble_contrast: need one ground/excited pair per family");
  }
  if (!weights.empty() && weights.size() != ground.size()) {
    throw std::invalid_argument("ensemble_contrast: weight count does not match family count");
  }
  MWDrive off = mw;
  off.on = false;
  MWDrive on = mw;
  on.on = true;
  const double bg = background_current(params, power);
  double i_off = bg, i_on = bg;
  for (std::size_t f = 0; f < ground.size(); ++f) {
    const double w = weights.empty() ? 1.0 / static_cast<double>(ground.size()) : weights[f];
    i_off += w * nv_photocurrent(solve_steady_state(params, power, off, ground[f], excited[f]), params);
    i_on += w * nv_photocurrent(solve_steady_state(params, power, on, ground[f], excited[f]), params);
  }
  if (!(i_off > 0.0)) throw NumericalError("ensemble_contrast: no photocurrent without MW drive");
  return (i_off - i_on) / i_off;
}

double rate_model_photocurrent(const PhotophysicsParams& params, double power, double d_gs,
                               double d_es, double gamma) {
  const SpinSolution gs = solve_spin(SpinSystem{d_gs, gamma, {}, Manifold::ground});
  const SpinSolution es = solve_spin(SpinSystem{d_es, gamma, {}, Manifold::excited});
  return nv_photocurrent(solve_steady_state(params, power, MWDrive{}, gs, es), params);
}

}  // namespace pdmr
