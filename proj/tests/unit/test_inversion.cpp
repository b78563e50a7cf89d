#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "pdmr/assignment.hpp"
#include "pdmr/inversion.hpp"
#include "pdmr/spectra.hpp"

using namespace pdmr;

namespace {
constexpr double kD = constants::kZeroFieldSplittingGs;
constexpr double kG = constants::kGyromagneticRatio;

struct Dip {
  double c, w, d;
};

std::vector<double> lorentz_data(const std::vector<double>& f, double base, const std::vector<Dip>& dips) {
  std::vector<double> y;
  for (double x : f) {
    double v = base;
    for (const auto& d : dips) {
      const double u = 2.0 * (x - d.c) / d.w;
      v -= d.d / (1.0 + u * u);
    }
    y.push_back(v);
  }
  return y;
}

std::vector<DipEstimate> dips_at(const std::vector<double>& centers) {
  std::vector<DipEstimate> out;
  for (double c : centers) out.push_back(DipEstimate{c, 20e6, 1e-3});
  return out;
}

// Ground-state transitions of all families from the exact eigen oracle.
std::vector<double> oracle_lines(const MagneticField& b) {
  std::vector<double> out;
  for (const auto& fam : nv_families()) {
    SpinSystem s;
    s.projection = project_field(b, fam);
    const auto t = transition_frequencies(s);
    out.push_back(t.f_minus);
    out.push_back(t.f_plus);
  }
  std::sort(out.begin(), out.end());
  std::vector<double> merged;
  for (double f : out)
    if (merged.empty() || f - merged.back() > 1e3) merged.push_back(f);
  return merged;
}

std::vector<double> sorted_abs_cos(const UnitVector& d) {
  std::vector<double> v;
  for (const auto& a : nv_axes()) v.push_back(std::abs(a.dot(d)));
  std::sort(v.begin(), v.end());
  return v;
}
}  // namespace

TEST_CASE("detect_peaks on simple inputs") {
  const auto f = linear_grid(2.77e9, 2.97e9, 401);
  CHECK(detect_peaks(f, std::vector<double>(f.size(), 1.0)).empty());
  CHECK_THROWS_AS(detect_peaks(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}), std::invalid_argument);

  const auto two = linear_grid(2.6e9, 3.14e9, 2001);
  const auto y = lorentz_data(two, 1.0, {{2.77e9, 20e6, 0.1}, {2.97e9, 20e6, 0.08}});
  const auto d = detect_peaks(two, y);
  REQUIRE(d.size() == 2);
  const double step = two[1] - two[0];
  CHECK(std::abs(d[0].center - 2.77e9) <= step);
  CHECK(std::abs(d[1].center - 2.97e9) <= step);
  CHECK(d[0].fwhm == doctest::Approx(20e6).epsilon(0.05));
  CHECK(d[0].depth > 0.0);
}

TEST_CASE("detect_peaks on the zero-field spectrum") {
  const Profile p = default_profile();
  auto c = SpectrumConfig::from_profile(p);
  c.freq_grid = linear_grid(2.6e9, 3.14e9, 2001);
  const auto s = synth_spectrum(p, c);
  const auto d = detect_peaks(s);
  REQUIRE(d.size() == 1);
  CHECK(std::abs(d[0].center - 2.87e9) <= c.freq_grid[1] - c.freq_grid[0]);
}

TEST_CASE("Lorentzian fit: exact recovery") {
  const auto f = linear_grid(2.77e9, 2.97e9, 401);
  const auto y = lorentz_data(f, 1.0, {{2.87e9, 20e6, 0.12}});
  const auto r = fit_lorentzians(f, y, 1);
  CHECK(r.fit.converged);
  REQUIRE(r.dips.size() == 1);
  CHECK(r.dips[0].center == doctest::Approx(2.87e9).epsilon(1e-6));
  CHECK(r.dips[0].fwhm == doctest::Approx(20e6).epsilon(1e-6));
  CHECK(r.dips[0].depth == doctest::Approx(0.12).epsilon(1e-6));
  CHECK(r.baseline == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(lorentzian_dips(2.87e9, r.baseline, r.dips) == doctest::Approx(0.88).epsilon(1e-6));
  CHECK_THROWS_AS(fit_lorentzians(f, y, 0), std::invalid_argument);
}

TEST_CASE("Lorentzian fit: 1% noise over 100 seeds") {
  const auto f = linear_grid(2.77e9, 2.97e9, 401);
  const auto clean = lorentz_data(f, 1.0, {{2.87e9, 20e6, 0.12}});
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(derive_seed(99, seed));
    std::normal_distribution<double> g(0.0, 0.01 * 0.12);
    auto y = clean;
    for (double& v : y) v += g(rng);
    const auto r = fit_lorentzians(f, y, 1);
    REQUIRE(r.dips.size() == 1);
    worst = std::max(worst, std::abs(r.dips[0].center - 2.87e9));
    CHECK(r.dips[0].center_ci > 0.0);
  }
  CHECK(worst < 0.5e6);
}

TEST_CASE("Lorentzian fit: overlapping dips at half a linewidth") {
  const double w = 20e6;
  const double c1 = 2.87e9 - 0.25 * w, c2 = 2.87e9 + 0.25 * w;
  const auto f = linear_grid(2.77e9, 2.97e9, 801);
  const auto y = lorentz_data(f, 1.0, {{c1, w, 0.06}, {c2, w, 0.05}});
  const auto r = fit_lorentzians(f, y, 2);
  CHECK(r.fit.converged);
  REQUIRE(r.dips.size() == 2);
  for (const auto& d : r.dips) {
    CHECK(d.center >= c1 - w);
    CHECK(d.center <= c2 + w);
  }
}

TEST_CASE("invert_aligned") {
  const auto a = invert_aligned(2.842e9, 2.898e9, kD, kG);
  CHECK(a.b_par == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK_FALSE(a.inconsistent);
  CHECK(invert_aligned(2.87e9, 2.87e9, kD, kG).b_par == 0.0);
  CHECK(invert_aligned(2.85e9, 2.94e9, kD, kG).inconsistent);  // sum = 2D + 50 MHz
  CHECK_THROWS_AS(invert_aligned(2.9e9, 2.8e9, kD, kG), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for (int i = 0; i < 1000; ++i) {
    const double b = u(rng);
    SpinSystem s;
    s.projection.b_par = b;
    const auto t = zeeman_aligned(s);
    const auto inv = invert_aligned(t.f_minus, t.f_plus, kD, kG);
    CHECK(std::abs(inv.b_par - b) <= 1e-12 * b);
    CHECK_FALSE(inv.inconsistent);
    CHECK(inv.beyond_gslac == (b > kD / kG && t.f_minus > 1.0));
  }
}

TEST_CASE("invert_field round trips through the forward model") {
  const Profile p = default_profile();
  auto c = SpectrumConfig::from_profile(p);
  c.freq_grid = linear_grid(2.6e9, 3.14e9, 2001);
  c.field = MagneticField{5e-3, direction_from_miller(1, 0, 0)};
  const auto s = synth_spectrum(p, c);
  const auto dips = fit_lorentzians(s, 2).dips;
  const auto r = invert_field(dips, DirectionClass::axis_100, InversionOptions::from_profile(p));
  CHECK(r.field.magnitude == doctest::Approx(5e-3).epsilon(0.01));

  const auto zero = invert_field(dips_at({kD}), DirectionClass::axis_100);
  CHECK(zero.field.magnitude <= 1e-3);

  const MagneticField b111{10e-3, direction_from_miller(1, 1, 1)};
  const auto lines = oracle_lines(b111);
  CHECK(lines.size() == 4);
  const auto r111 = invert_field(dips_at(lines), DirectionClass::axis_111);
  CHECK(r111.field.magnitude == doctest::Approx(10e-3).epsilon(0.01));
  CHECK(r111.aligned_family == 0);
  CHECK(r111.rms_residual < 1e3);

  const MagneticField bf{8e-3, direction_from_miller(1, 2, 3)};
  const auto rf = invert_field(dips_at(oracle_lines(bf)), DirectionClass::free);
  CHECK(rf.field.magnitude == doctest::Approx(8e-3).epsilon(0.01));
  const auto want = sorted_abs_cos(bf.direction), got = sorted_abs_cos(rf.field.direction);
  for (int i = 0; i < 4; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-3));

  CHECK_THROWS_AS(invert_field(dips_at({2.8e9, 2.9e9, 2.95e9}), DirectionClass::free), std::invalid_argument);
  CHECK_THROWS_AS(invert_field({}, DirectionClass::axis_100), std::invalid_argument);
}

TEST_CASE("refine_field removes the overlap bias of the Lorentzian model") {
  const Profile p = default_profile();
  auto c = SpectrumConfig::from_profile(p);
  c.freq_grid = linear_grid(2.78e9, 2.96e9, 3001);
  // The two lines sit 1.4 linewidths apart and saturate jointly.
  c.field = MagneticField{0.89e-3, direction_from_miller(1, 0, 0)};
  const auto s = synth_spectrum(p, c);
  const auto opt = InversionOptions::from_profile(p);
  const auto dip = invert_field(fit_lorentzians(s, 2).dips, DirectionClass::axis_100, opt);
  CHECK(std::abs(dip.field.magnitude - 0.89e-3) / 0.89e-3 > 0.005);

  const auto r = refine_field(p, c, s.freqs, s.current, DirectionClass::axis_100, dip.field);
  CHECK(r.fit.converged);
  CHECK(r.field.magnitude == doctest::Approx(0.89e-3).epsilon(1e-6));
  CHECK(r.scale == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(r.offset) < 1e-9 * s.baseline);

  // Measured trace with a different gain and offset.
  std::vector<double> y;
  for (double v : s.current) y.push_back(0.7 * v + 1e-4);
  const auto g = refine_field(p, c, s.freqs, y, DirectionClass::axis_100, dip.field);
  CHECK(g.field.magnitude == doctest::Approx(0.89e-3).epsilon(1e-6));
  CHECK(g.scale == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(g.offset == doctest::Approx(1e-4).epsilon(1e-5));

  // Free direction from a tilted field.
  c.field = MagneticField{6e-3, direction_from_miller(1, 2, 3)};
  c.freq_grid = linear_grid(2.6e9, 3.14e9, 4001);
  const auto sf = synth_spectrum(p, c);
  const auto df = invert_field(fit_lorentzians(sf, 8).dips, DirectionClass::free, opt);
  const auto rf = refine_field(p, c, sf.freqs, sf.current, DirectionClass::free, df.field);
  CHECK(rf.field.magnitude == doctest::Approx(6e-3).epsilon(1e-5));

  CHECK_THROWS_AS(refine_field(p, c, std::vector<double>{1.0, 2.0}, std::vector<double>{1.0},
                               DirectionClass::axis_100, dip.field),
                  std::invalid_argument);
}

TEST_CASE("invert_field excludes excited-state lines and outliers") {
  const auto es_pair = [](const MagneticField& b) {
    SpinSystem es;
    es.d_split = constants::kZeroFieldSplittingEs;
    es.manifold = Manifold::excited;
    es.projection = project_field(b, nv_families()[0]);
    return transition_frequencies(es);
  };
  {
    // Aligned-family excited-state pair sums to 2 D_es and is flagged.
    const MagneticField b{12e-3, direction_from_miller(1, 1, 1)};
    auto centers = oracle_lines(b);
    const auto t = es_pair(b);
    centers.push_back(t.f_minus);
    centers.push_back(t.f_plus);
    centers.push_back(3.5e9);  // far from every line
    std::sort(centers.begin(), centers.end());
    const auto r = invert_field(dips_at(centers), DirectionClass::axis_111);
    CHECK(r.field.magnitude == doctest::Approx(12e-3).epsilon(0.01));
    int excluded = 0, unassigned = 0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      excluded += r.excited_flag[i] ? 1 : 0;
      unassigned += r.assignment[i] < 0 ? 1 : 0;
    }
    CHECK(excluded == 2);
    CHECK(unassigned == 3);
  }
  {
    // Tilted excited-state lines miss the pair-sum rule but stay unassigned.
    const MagneticField b{6e-3, direction_from_miller(1, 0, 0)};
    auto centers = oracle_lines(b);
    const auto t = es_pair(b);
    centers.push_back(t.f_minus);
    centers.push_back(t.f_plus);
    std::sort(centers.begin(), centers.end());
    const auto r = invert_field(dips_at(centers), DirectionClass::axis_100);
    CHECK(r.field.magnitude == doctest::Approx(6e-3).epsilon(0.01));
    CHECK(std::count(r.assignment.begin(), r.assignment.end(), -1) == 2);
  }
}

TEST_CASE("Hungarian assignment matches brute force") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + trial % 6, cols = 1 + (trial / 6) % 6;
    Eigen::MatrixXd cost(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) cost(i, j) = trial % 3 == 0 ? std::floor(u(rng)) : u(rng);
    const auto a = min_cost_assignment(cost);
    REQUIRE(static_cast<int>(a.size()) == rows);
    double got = 0.0;
    std::vector<int> used;
    for (int i = 0; i < rows; ++i) {
      if (a[i] < 0) continue;
      got += cost(i, a[i]);
      used.push_back(a[i]);
    }
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    CHECK(static_cast<int>(used.size()) == std::min(rows, cols));

    // Brute force over permutations of the larger side.
    const int n = std::max(rows, cols), k = std::min(rows, cols);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += rows <= cols ? cost(i, perm[i]) : cost(perm[i], i);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("power-curve fit") {
  const PowerCurveParams truth{0.0755, 7.04};
  std::vector<double> power;
  for (int i = 0; i <= 40; ++i) power.push_back(1e-3 * std::pow(1e3, i / 40.0));
  std::vector<double> clean;
  for (double x : power) clean.push_back(photocurrent_model(x, truth));
  const auto exact = fit_power_curve(power, clean);
  CHECK(exact.params.alpha == doctest::Approx(truth.alpha).epsilon(1e-6));
  CHECK(exact.params.beta == doctest::Approx(truth.beta).epsilon(1e-6));
  CHECK(exact.r_squared == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> alphas, betas;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(derive_seed(5, seed));
    std::normal_distribution<double> g(0.0, 0.01);
    std::vector<double> y;
    for (double v : clean) y.push_back(v * (1.0 + g(rng)));
    const auto r = fit_power_curve(power, y);
    alphas.push_back(r.params.alpha);
    betas.push_back(r.params.beta);
    CHECK(r.alpha_ci > 0.0);
  }
  std::nth_element(alphas.begin(), alphas.begin() + 50, alphas.end());
  std::nth_element(betas.begin(), betas.begin() + 50, betas.end());
  CHECK(alphas[50] == doctest::Approx(truth.alpha).epsilon(0.05));
  CHECK(betas[50] == doctest::Approx(truth.beta).epsilon(0.05));

  // Quadratic regime only: only alpha * beta is constrained.
  std::vector<double> lp, ly;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.01);
  for (int i = 0; i <= 20; ++i) {
    lp.push_back(1e-6 * std::pow(10.0, i / 20.0));
    ly.push_back(photocurrent_model(lp.back(), truth) * (1.0 + g(rng)));
  }
  CHECK(fit_power_curve(lp, ly).wide_intervals);
  CHECK_THROWS_AS(fit_power_curve(std::vector<double>{1, 2}, std::vector<double>{1, 2}), std::invalid_argument);
}

TEST_CASE("power-curve fit of the rate model") {
  const Profile p = default_profile();
  std::vector<double> power, y;
  for (int i = 0; i <= 40; ++i) {
    power.push_back(1e-3 * std::pow(1e3, i / 40.0));
    y.push_back(rate_model_photocurrent(p.photo, power.back(), p.d_gs, p.d_es, p.gamma));
  }
  const auto r = fit_power_curve(power, y);
  CHECK(r.r_squared > 0.99);
  CHECK(r.params.alpha == doctest::Approx(p.power_curve.alpha).epsilon(1e-3));
  CHECK(r.params.beta == doctest::Approx(p.power_curve.beta).epsilon(1e-3));
}
