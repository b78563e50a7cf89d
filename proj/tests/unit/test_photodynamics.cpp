#include <doctest.h>

#include <cmath>
#include <vector>

#include "pdmr/photodynamics.hpp"
#include "pdmr/profile.hpp"

using namespace pdmr;

namespace {
SpinSolution spin(const Profile& p, Manifold m, double b_par = 0.0, double b_perp = 0.0) {
  SpinSystem s;
  s.d_split = m == Manifold::ground ? p.d_gs : p.d_es;
  s.gamma = p.gamma;
  s.manifold = m;
  s.projection.b_par = b_par;
  s.projection.b_perp = b_perp;
  return solve_spin(s);
}

MWDrive resonant(const Profile& p, double f, MwTarget target = MwTarget::both) {
  MWDrive mw;
  mw.on = true;
  mw.frequency = f;
  mw.rabi = p.mw_rabi;
  mw.dephasing = p.mw_dephasing;
  mw.target = target;
  return mw;
}

double current(const Profile& p, double power, const MWDrive& mw, const SpinSolution& gs,
               const SpinSolution& es) {
  return nv_photocurrent(solve_steady_state(p.photo, power, mw, gs, es), p.photo);
}
}  // namespace

TEST_CASE("rate matrix conserves population") {
  const Profile p = default_profile();
  const auto gs = spin(p, Manifold::ground, 0.03, 0.01);
  const auto es = spin(p, Manifold::excited, 0.03, 0.01);
  for (double power : {0.0, 1e-3, 0.1, 1.0}) {
    for (bool on : {false, true}) {
      MWDrive mw = resonant(p, gs.transitions.f_minus);
      mw.on = on;
      const RateMatrix m = build_rate_matrix(p.photo, power, mw, gs, es);
      const double scale = m.cwiseAbs().maxCoeff();
      for (int j = 0; j < kNumLevels; ++j) CHECK(std::abs(m.col(j).sum()) <= 1e-12 * scale);
      for (int i = 0; i < kNumLevels; ++i)
        for (int j = 0; j < kNumLevels; ++j)
          if (i != j) CHECK(m(i, j) >= 0.0);
    }
  }
  CHECK_THROWS_AS(build_rate_matrix(p.photo, -1.0, MWDrive{}, gs, es), std::invalid_argument);
}

TEST_CASE("dark matrix keeps only spontaneous decay") {
  const Profile p = default_profile();
  const auto gs = spin(p, Manifold::ground);
  const auto es = spin(p, Manifold::excited);
  const RateMatrix m = build_rate_matrix(p.photo, 0.0, MWDrive{}, gs, es);
  // Nothing leaves the ground states of either charge state.
  for (int l : {kGsMinus, kGsZero, kGsPlus, kNv0Gs}) CHECK(m.col(l).cwiseAbs().maxCoeff() == 0.0);
  CHECK(m(kGsZero, kEsZero) == p.photo.radiative_rate);
  CHECK(m(kNv0Gs, kNv0Es) == p.photo.nv0_radiative);
  CHECK(m(kNv0Es, kNv0Gs) == 0.0);
  // Zero field: identity mixing, so the ISC rates are the bare ones.
  CHECK(m(kSinglet, kEsZero) == doctest::Approx(p.photo.isc_es_ms0).epsilon(1e-15));
  CHECK(m(kSinglet, kEsMinus) == doctest::Approx(p.photo.isc_es_ms1).epsilon(1e-15));
  CHECK(m(kSinglet, kEsPlus) == doctest::Approx(p.photo.isc_es_ms1).epsilon(1e-15));
  CHECK(m(kGsZero, kSinglet) ==
        doctest::Approx(p.photo.singlet_rate * p.photo.singlet_decay_ms0_frac).epsilon(1e-15));
}

TEST_CASE("steady state basics") {
  const Profile p = default_profile();
  const auto gs = spin(p, Manifold::ground);
  const auto es = spin(p, Manifold::excited);
  const auto dark = solve_steady_state(p.photo, 0.0, MWDrive{}, gs, es);
  CHECK(dark.populations(kGsMinus) == doctest::Approx(1.0 / 3));
  CHECK(dark.populations(kGsZero) == doctest::Approx(1.0 / 3));
  CHECK(dark.populations(kGsPlus) == doctest::Approx(1.0 / 3));
  CHECK(dark.photocurrent_flux == 0.0);
  const auto [ge0, gh0] = carrier_rates(dark.populations, p.photo, 0.0);
  CHECK(ge0 == 0.0);
  CHECK(gh0 == 0.0);

  for (double power : {1e-3, 0.01, 0.1, 0.5, 1.0}) {
    const auto r = solve_steady_state(p.photo, power, MWDrive{}, gs, es);
    CHECK(std::abs(r.populations.sum() - 1.0) <= 1e-10);
    CHECK(r.populations.minCoeff() >= 0.0);
    CHECK(r.gamma_e > 0.0);
    CHECK(std::abs(r.gamma_e - r.gamma_h) <= 1e-8 * r.gamma_e);
    CHECK((build_rate_matrix(p.photo, power, MWDrive{}, gs, es) * r.populations).norm() <=
          1e-10 * build_rate_matrix(p.photo, power, MWDrive{}, gs, es).cwiseAbs().maxCoeff());
  }
}

TEST_CASE("optical pumping polarizes into m_s = 0") {
  const Profile p = default_profile();
  const auto r = solve_steady_state(p.photo, 1.0, MWDrive{}, spin(p, Manifold::ground),
                                    spin(p, Manifold::excited));
  CHECK(r.populations(kGsZero) > r.populations(kGsMinus));
  CHECK(r.populations(kGsZero) > r.populations(kGsPlus));
}

TEST_CASE("resonant MW lowers the photocurrent") {
  const Profile p = default_profile();
  const auto gs = spin(p, Manifold::ground);
  const auto es = spin(p, Manifold::excited);
  for (double power : {0.01, 0.1, 1.0}) {
    const auto off = solve_steady_state(p.photo, power, MWDrive{}, gs, es);
    const auto on = solve_steady_state(p.photo, power, resonant(p, p.d_gs), gs, es);
    CHECK(on.populations(kEsMinus) + on.populations(kEsPlus) >
          off.populations(kEsMinus) + off.populations(kEsPlus));
    CHECK(on.gamma_e < off.gamma_e);
    const double c = pdmr_contrast(p.photo, power, resonant(p, p.d_gs), gs, es);
    CHECK(c > 0.0);
    CHECK(c < 1.0);
  }
}

TEST_CASE("carrier rates are linear in the ionization coefficient") {
  const Profile p = default_profile();
  const auto r = solve_steady_state(p.photo, 0.1, MWDrive{}, spin(p, Manifold::ground),
                                    spin(p, Manifold::excited));
  PhotophysicsParams doubled = p.photo;
  doubled.ionize_coeff *= 2.0;
  const auto a = carrier_rates(r.populations, p.photo, 0.1);
  const auto b = carrier_rates(r.populations, doubled, 0.1);
  CHECK(b.first == doctest::Approx(2.0 * a.first).epsilon(1e-15));
  CHECK(b.second == a.second);
}

TEST_CASE("no spin selectivity means no contrast") {
  Profile p = default_profile();
  p.photo.isc_es_ms1 = p.photo.isc_es_ms0;
  const auto c = pdmr_contrast(p.photo, 0.1, resonant(p, p.d_gs), spin(p, Manifold::ground),
                               spin(p, Manifold::excited));
  CHECK(std::abs(c) < 1e-12);
}

TEST_CASE("disconnected level graph is rejected") {
  RateMatrix m = RateMatrix::Zero();
  m(1, 0) = 1.0;
  m(0, 0) = -1.0;
  m(0, 1) = 1.0;
  m(1, 1) = -1.0;
  CHECK_THROWS_AS(steady_state(m), NumericalError);
  CHECK_THROWS_AS(steady_state(RateMatrix::Zero()), NumericalError);
}

TEST_CASE("closed-form power curve") {
  const PowerCurveParams pc{0.0755, 7.04};
  CHECK(photocurrent_model(0.0, pc) == 0.0);
  CHECK(photocurrent_model(pc.alpha, pc) == doctest::Approx(pc.alpha / (2 * pc.beta)).epsilon(1e-15));
  CHECK_THROWS_AS(photocurrent_model(-1.0, pc), std::invalid_argument);
  CHECK_THROWS_AS(photocurrent_model(1.0, PowerCurveParams{0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("rate model is quadratic at low power and linear at high power") {
  const Profile p = default_profile();
  const double ps = p.power_curve.alpha;
  const auto slope = [&](double x) {
    const double h = 1e-3;
    const double lo = rate_model_photocurrent(p.photo, x * (1 - h), p.d_gs, p.d_es, p.gamma);
    const double hi = rate_model_photocurrent(p.photo, x * (1 + h), p.d_gs, p.d_es, p.gamma);
    return (std::log(hi) - std::log(lo)) / (std::log1p(h) - std::log1p(-h));
  };
  for (double x : {1e-3, 1e-2, 0.05}) CHECK(std::abs(slope(x * ps) - 2.0) <= 0.1);
  for (double x : {20.0, 50.0, 100.0}) CHECK(std::abs(slope(x * ps) - 1.0) <= 0.1);
}

TEST_CASE("closed form with the shipped pair matches the rate model") {
  const Profile p = default_profile();
  const double a = p.power_curve.alpha;
  std::vector<double> y, f;
  for (int i = 0; i <= 60; ++i) {
    const double power = 0.1 * a * std::pow(100.0, i / 60.0);
    y.push_back(rate_model_photocurrent(p.photo, power, p.d_gs, p.d_es, p.gamma));
    f.push_back(photocurrent_model(power, p.power_curve));
  }
  double mean = 0.0;
  for (double v : y) mean += v / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - f[i]) * (y[i] - f[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  CHECK(1.0 - ss_res / ss_tot > 0.99);
}

TEST_CASE("ensemble contrast at the reference power") {
  const Profile p = default_profile();
  std::vector<SpinSolution> gs(4, spin(p, Manifold::ground)), es(4, spin(p, Manifold::excited));
  const std::vector<double> w(p.family_weights.begin(), p.family_weights.end());
  const double c = ensemble_contrast(p.photo, p.reference_power, resonant(p, p.d_gs), gs, es, w);
  CHECK(c == doctest::Approx(0.12).epsilon(0.02));
  double prev = 1.0;
  for (int i = 0; i <= 10; ++i) {
    const double power = p.power_range_min * std::pow(p.power_range_max / p.power_range_min, i / 10.0);
    const double ci = ensemble_contrast(p.photo, power, resonant(p, p.d_gs), gs, es, w);
    CHECK(ci < prev);
    prev = ci;
  }
}

TEST_CASE("contrast is quenched at the ground-state anticrossing") {
  const Profile p = default_profile();
  const double bperp = 0.5e-3;
  const auto contrast_at = [&](double b_par) {
    const auto gs = spin(p, Manifold::ground, b_par, bperp);
    const auto es = spin(p, Manifold::excited, b_par, bperp);
    return pdmr_contrast(p.photo, p.reference_power,
                         resonant(p, gs.transitions.f_minus, MwTarget::minus_one), gs, es);
  };
  const double c90 = contrast_at(90e-3);
  const double lac = contrast_at(p.d_gs / p.gamma);
  CHECK(c90 > 0.0);
  CHECK(lac < 0.5 * c90);
}
