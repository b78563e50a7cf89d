#include "pdmr/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pdmr/assignment.hpp"
#include "pdmr/constants.hpp"
#include "pdmr/spin_model.hpp"

namespace pdmr {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

double lorentz(double f, double c, double w) {
  const double x = 2.0 * (f - c) / w;
  return 1.0 / (1.0 + x * x);
}

// Full width at half depth around index i0, by linear interpolation.
double half_depth_width(std::span<const double> f, std::span<const double> y, std::size_t i0,
                        double baseline) {
  const double half = baseline - 0.5 * (baseline - y[i0]);
  const auto cross = [&](int dir) {
    std::ptrdiff_t i = static_cast<std::ptrdiff_t>(i0);
    const auto n = static_cast<std::ptrdiff_t>(y.size());
    while (i + dir >= 0 && i + dir < n) {
      const std::ptrdiff_t k = i + dir;
      if (y[k] >= half) {
        const double t = (half - y[i]) / (y[k] - y[i]);
        return std::abs(f[i] + t * (f[k] - f[i]) - f[i0]);
      }
      if (y[k] < y[i]) break;  // a neighbouring dip before the half-depth point
      i = k;
    }
    return std::abs(f[i] - f[i0]);
  };
  double w = cross(-1) + cross(+1);
  if (!(w > 0.0)) w = f.size() > 1 ? std::abs(f[1] - f[0]) : 1.0;
  return w;
}

}  // namespace

NoiseEstimate estimate_noise(std::span<const double> y) {
  NoiseEstimate e;
  if (y.empty()) return e;
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  // Median of the upper half: robust to dips covering a large part of the window.
  e.baseline = median(std::vector<double>(sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2),
                                          sorted.end()));
  if (y.size() >= 3) {
    std::vector<double> d2(y.size() - 2);
    for (std::size_t i = 1; i + 1 < y.size(); ++i) d2[i - 1] = y[i + 1] - 2.0 * y[i] + y[i - 1];
    const double med = median(d2);
    for (double& v : d2) v = std::abs(v - med);
    // Second differences of white noise have variance 6 sigma^2.
    e.sigma = 1.4826 * median(d2) / std::sqrt(6.0);
  }
  return e;
}

std::vector<DipEstimate> detect_peaks(std::span<const double> freqs, std::span<const double> y,
                                      const PeakOptions& options) {
  if (freqs.size() != y.size()) throw std::invalid_argument("detect_peaks: length mismatch");
  if (y.size() < 5) throw std::invalid_argument("detect_peaks: need at least 5 points");
  if (!(options.k_sigma >= 0.0) || !(options.relative_floor >= 0.0)) {
    throw std::invalid_argument("detect_peaks: thresholds must be nonnegative");
  }
  const auto noise = estimate_noise(y);
  const double lowest = *std::min_element(y.begin(), y.end());
  const double floor = std::max(options.relative_floor * (noise.baseline - lowest),
                                1e-12 * std::abs(noise.baseline));
  const double prominence = std::max(options.k_sigma * noise.sigma, floor);
  const double threshold = noise.baseline - prominence;
  const bool noisy = noise.sigma > floor;

  // Light smoothing for locating minima in noisy data.
  std::vector<double> s(y.begin(), y.end());
  if (noisy) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const std::size_t lo = i >= 2 ? i - 2 : 0, hi = std::min(y.size() - 1, i + 2);
      double acc = 0.0;
      for (std::size_t k = lo; k <= hi; ++k) acc += y[k];
      s[i] = acc / static_cast<double>(hi - lo + 1);
    }
  }

  // Topographic prominence: on each side, the highest point before reaching a deeper one.
  const auto n = static_cast<std::ptrdiff_t>(y.size());
  const auto rise = [&](std::ptrdiff_t k, std::ptrdiff_t dir) {
    double top = s[k];
    for (std::ptrdiff_t i = k + dir; i >= 0 && i < n; i += dir) {
      if (s[i] < s[k]) break;
      top = std::max(top, s[i]);
    }
    return top - s[k];
  };

  std::vector<DipEstimate> found;
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const bool left = k == 0 || s[k] < s[k - 1];
    const bool right = k + 1 == n || s[k] <= s[k + 1];
    if (!left || !right || !(s[k] < threshold)) continue;
    if (std::min(rise(k, -1), rise(k, +1)) < prominence) continue;
    const auto ku = static_cast<std::size_t>(k);
    DipEstimate d;
    d.center = freqs[ku];
    if (k > 0 && k + 1 < n) {
      // Vertex of the parabola through the three samples.
      const double ym = s[ku - 1], y0 = s[ku], yp = s[ku + 1];
      const double den = ym - 2.0 * y0 + yp;
      const double h = 0.5 * (freqs[ku + 1] - freqs[ku - 1]);
      if (den > 0.0) d.center = freqs[ku] + std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5) * h;
    }
    d.depth = noise.baseline - s[ku];
    d.fwhm = half_depth_width(freqs, s, ku, noise.baseline);
    found.push_back(d);
  }

  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
  std::vector<DipEstimate> merged;
  for (const auto& d : found) {
    if (!merged.empty() && d.center - merged.back().center < 0.5 * std::max(d.fwhm, merged.back().fwhm)) {
      if (d.depth > merged.back().depth) merged.back() = d;
      continue;
    }
    merged.push_back(d);
  }
  return merged;
}

std::vector<DipEstimate> detect_peaks(const Spectrum& spectrum, const PeakOptions& options) {
  return detect_peaks(spectrum.freqs, spectrum.current, options);
}

double lorentzian_dips(double f, double baseline, std::span<const DipEstimate> dips) {
  double y = baseline;
  for (const auto& d : dips) y -= d.depth * lorentz(f, d.center, d.fwhm);
  return y;
}

LorentzianFit fit_lorentzians(std::span<const double> freqs, std::span<const double> y, int n_dips,
                              std::span<const DipEstimate> initial, const PeakOptions& options) {
  if (n_dips < 1) throw std::invalid_argument("fit_lorentzians: need at least one dip");
  if (freqs.size() != y.size()) throw std::invalid_argument("fit_lorentzians: length mismatch");
  const auto n = static_cast<std::size_t>(n_dips);
  if (y.size() < 3 * n + 1) throw std::invalid_argument("fit_lorentzians: too few points");

  const double span = freqs.back() - freqs.front();
  const double step = span / static_cast<double>(freqs.size() - 1);
  const auto noise = estimate_noise(y);

  std::vector<DipEstimate> guess(initial.begin(), initial.end());
  if (guess.empty()) guess = detect_peaks(freqs, y, options);
  std::stable_sort(guess.begin(), guess.end(), [](const auto& a, const auto& b) { return a.depth > b.depth; });
  if (guess.size() > n) guess.resize(n);
  if (guess.empty()) {
    const auto k = static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    guess.push_back({freqs[k], 10.0 * step, std::max(noise.baseline - y[k], 1e-12)});
  }
  while (guess.size() < n) {
    // Split the widest estimate; unresolved neighbours show up as one broad dip.
    auto widest = std::max_element(guess.begin(), guess.end(),
                                   [](const auto& a, const auto& b) { return a.fwhm < b.fwhm; });
    DipEstimate a = *widest, b = *widest;
    a.center -= 0.25 * widest->fwhm;
    b.center += 0.25 * widest->fwhm;
    a.fwhm = b.fwhm = 0.6 * widest->fwhm;
    a.depth = b.depth = 0.6 * widest->depth;
    *widest = a;
    guess.push_back(b);
  }

  const auto np = static_cast<Eigen::Index>(1 + 3 * n);
  Eigen::VectorXd p0(np), lower(np), upper(np), typical(np);
  const double inf = std::numeric_limits<double>::infinity();
  p0(0) = noise.baseline;
  lower(0) = -inf;
  upper(0) = inf;
  typical(0) = std::max(std::abs(noise.baseline), 1e-300);
  for (std::size_t k = 0; k < n; ++k) {
    const auto o = static_cast<Eigen::Index>(1 + 3 * k);
    const double w = std::max(guess[k].fwhm, step);
    p0.segment(o, 3) << guess[k].center, w, std::max(guess[k].depth, 1e-300);
    lower.segment(o, 3) << freqs.front() - span, 0.1 * step, 0.0;
    upper.segment(o, 3) << freqs.back() + span, 10.0 * span, inf;
    typical.segment(o, 3) << w, w, std::max(guess[k].depth, std::abs(noise.baseline) * 1e-6);
  }
  SolverOptions opt;
  opt.lower = lower;
  opt.upper = upper;
  opt.typical = typical;
  opt.max_iterations = 500;

  const auto model = [n](double f, const Eigen::VectorXd& p) {
    double v = p(0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto o = static_cast<Eigen::Index>(1 + 3 * k);
      v -= p(o + 2) * lorentz(f, p(o), p(o + 1));
    }
    return v;
  };

  LorentzianFit out;
  out.fit = least_squares(model, freqs, y, p0, opt);
  const auto& p = out.fit.params;
  out.baseline = p(0);
  out.baseline_ci = out.fit.ci95(0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto o = static_cast<Eigen::Index>(1 + 3 * k);
    out.dips.push_back({p(o), p(o + 1), p(o + 2), out.fit.ci95(o), out.fit.ci95(o + 1), out.fit.ci95(o + 2)});
  }
  std::sort(out.dips.begin(), out.dips.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
  return out;
}

LorentzianFit fit_lorentzians(const Spectrum& spectrum, int n_dips, std::span<const DipEstimate> initial,
                              const PeakOptions& options) {
  return fit_lorentzians(spectrum.freqs, spectrum.current, n_dips, initial, options);
}

AlignedInversion invert_aligned(double f_minus, double f_plus, double d, double gamma, double tolerance) {
  if (!(gamma > 0.0) || !(d > 0.0)) throw std::invalid_argument("invert_aligned: D and gamma must be positive");
  if (!(f_minus >= 0.0) || !(f_plus >= f_minus)) {
    throw std::invalid_argument("invert_aligned: need 0 <= f_minus <= f_plus");
  }
  AlignedInversion below;
  below.b_par = (f_plus - f_minus) / (2.0 * gamma);
  below.sum_deviation = f_plus + f_minus - 2.0 * d;

  // Past the ground-state anticrossing f_minus = gamma B - D, so the difference is pinned at 2D.
  AlignedInversion above;
  above.b_par = (f_plus + f_minus) / (2.0 * gamma);
  above.sum_deviation = f_plus - f_minus - 2.0 * d;
  above.beyond_gslac = true;

  AlignedInversion out =
      (above.b_par >= d / gamma && std::abs(above.sum_deviation) < std::abs(below.sum_deviation)) ? above : below;
  out.inconsistent = std::abs(out.sum_deviation) > tolerance;
  return out;
}

InversionOptions InversionOptions::from_profile(const Profile& profile) {
  InversionOptions o;
  o.d_gs = profile.d_gs;
  o.d_es = profile.d_es;
  o.gamma = profile.gamma;
  return o;
}

namespace {

// A model line is a group of transitions (family, manifold, branch) that coincide.
struct ModelLine {
  double freq = 0.0;
  std::vector<int> members;  // family * 4 + manifold * 2 + branch
};

std::array<double, 16> transitions(const MagneticField& field, const InversionOptions& o) {
  std::array<double, 16> t{};
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    const auto proj = project_field(field, nv_families()[f]);
    const auto gs = transition_frequencies(SpinSystem{o.d_gs, o.gamma, proj, Manifold::ground});
    t[f * 4 + 0] = gs.f_minus;
    t[f * 4 + 1] = gs.f_plus;
    if (o.include_excited) {
      const auto es = transition_frequencies(SpinSystem{o.d_es, o.gamma, proj, Manifold::excited});
      t[f * 4 + 2] = es.f_minus;
      t[f * 4 + 3] = es.f_plus;
    }
  }
  return t;
}

std::vector<ModelLine> grouped_lines(const MagneticField& field, const InversionOptions& o) {
  const auto t = transitions(field, o);
  std::vector<int> ids;
  for (int f = 0; f < static_cast<int>(kNumFamilies); ++f) {
    ids.push_back(f * 4);
    ids.push_back(f * 4 + 1);
    if (o.include_excited) {
      ids.push_back(f * 4 + 2);
      ids.push_back(f * 4 + 3);
    }
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return t[a] < t[b]; });
  std::vector<ModelLine> lines;
  for (int id : ids) {
    if (!lines.empty() && t[id] - t[lines.back().members.back()] < o.merge_distance) {
      lines.back().members.push_back(id);
      continue;
    }
    lines.push_back({0.0, {id}});
  }
  for (auto& l : lines) {
    for (int id : l.members) l.freq += t[id];
    l.freq /= static_cast<double>(l.members.size());
  }
  return lines;
}

struct Matching {
  double cost = 0.0;
  std::vector<int> line_of_dip;  // per active dip
};

Matching match(std::span<const double> dips, const std::vector<ModelLine>& lines, double outlier) {
  const auto nd = static_cast<Eigen::Index>(dips.size());
  const auto nl = static_cast<Eigen::Index>(lines.size());
  const double penalty = outlier * outlier;
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(nd, nl + nd, 1e6 * penalty);
  for (Eigen::Index i = 0; i < nd; ++i) {
    for (Eigen::Index j = 0; j < nl; ++j) {
      const double d = dips[i] - lines[j].freq;
      cost(i, j) = std::min(d * d, 1e6 * penalty);
    }
    cost(i, nl + i) = penalty;
  }
  const auto a = min_cost_assignment(cost);
  Matching m;
  m.line_of_dip.resize(dips.size(), -1);
  for (Eigen::Index i = 0; i < nd; ++i) {
    m.cost += cost(i, a[i]);
    if (a[i] < nl) m.line_of_dip[i] = a[i];
  }
  return m;
}

UnitVector class_direction(DirectionClass c) {
  return c == DirectionClass::axis_100 ? direction_from_miller(1, 0, 0) : direction_from_miller(1, 1, 1);
}

MagneticField field_from_params(const Eigen::VectorXd& p, DirectionClass c) {
  if (c == DirectionClass::free) return MagneticField::from_vector({p(0), p(1), p(2)});
  return MagneticField{std::max(p(0), 0.0), class_direction(c)};
}

Eigen::VectorXd params_from_field(const MagneticField& b, DirectionClass c) {
  if (c == DirectionClass::free) {
    const auto v = b.vector();
    return Eigen::Vector3d(v[0], v[1], v[2]);
  }
  return Eigen::VectorXd::Constant(1, b.magnitude);
}

// Fibonacci lattice on the upper hemisphere; B and -B give identical spectra.
std::vector<UnitVector> hemisphere(int n) {
  std::vector<UnitVector> out;
  const double golden = constants::kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.push_back(UnitVector::from_components(r * std::cos(phi), r * std::sin(phi), z));
  }
  return out;
}

}  // namespace

std::vector<double> model_lines(const MagneticField& field, const InversionOptions& options) {
  std::vector<double> out;
  for (const auto& l : grouped_lines(field, options)) out.push_back(l.freq);
  return out;
}

FieldInversion invert_field(std::span<const DipEstimate> dips, DirectionClass direction_class,
                            const InversionOptions& options) {
  const bool free = direction_class == DirectionClass::free;
  if (free && dips.size() < 4) throw std::invalid_argument("invert_field: free direction needs at least 4 dips");
  if (dips.empty()) throw std::invalid_argument("invert_field: no dips");
  if (!(options.grid_step > 0.0) || !(options.grid_max >= 0.0) || !(options.outlier_distance > 0.0)) {
    throw std::invalid_argument("invert_field: invalid grid or outlier settings");
  }

  FieldInversion out;
  out.excited_flag.assign(dips.size(), false);
  if (!options.include_excited) {
    const double gs_sum = 2.0 * options.d_gs, es_sum = 2.0 * options.d_es;
    for (std::size_t i = 0; i < dips.size(); ++i) {
      for (std::size_t j = i + 1; j < dips.size(); ++j) {
        const double s = dips[i].center + dips[j].center;
        if (std::abs(s - es_sum) < options.es_sum_tolerance &&
            std::abs(s - gs_sum) > options.es_sum_tolerance) {
          out.excited_flag[i] = out.excited_flag[j] = true;
        }
      }
    }
  }
  std::vector<std::size_t> active;
  std::vector<double> freqs;
  for (std::size_t i = 0; i < dips.size(); ++i) {
    if (out.excited_flag[i]) continue;
    active.push_back(i);
    freqs.push_back(dips[i].center);
  }
  const std::size_t n_params = free ? 3 : 1;
  if (freqs.size() < (free ? 4u : 1u)) {
    throw std::invalid_argument("invert_field: too few ground-state dips");
  }

  // Grid seeds.
  struct Seed {
    double cost;
    MagneticField field;
  };
  std::vector<Seed> seeds;
  const int n_mag = static_cast<int>(std::floor(options.grid_max / options.grid_step + 1e-9)) + 1;
  const auto dirs = free ? hemisphere(options.direction_samples) : std::vector<UnitVector>{class_direction(direction_class)};
  for (int k = 0; k < n_mag; ++k) {
    const double mag = options.grid_step * k;
    for (const auto& dir : dirs) {
      const MagneticField b{mag, dir};
      seeds.push_back({match(freqs, grouped_lines(b, options), options.outlier_distance).cost, b});
      if (mag == 0.0) break;
    }
  }
  std::stable_sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) { return a.cost < b.cost; });
  seeds.resize(std::min<std::size_t>(seeds.size(), static_cast<std::size_t>(std::max(options.refine_seeds, 1))));

  SolverOptions sopt;
  if (!free) sopt.lower = Eigen::VectorXd::Zero(1);
  sopt.typical = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_params), 1e-3);

  bool have = false;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& seed : seeds) {
    MagneticField b = seed.field;
    FitResult fit;
    Matching m;
    std::vector<ModelLine> lines;
    bool fitted = false;
    for (int round = 0; round < 6; ++round) {
      lines = grouped_lines(b, options);
      const Matching next = match(freqs, lines, options.outlier_distance);
      if (fitted && next.line_of_dip == m.line_of_dip) break;
      m = next;
      std::vector<std::pair<std::size_t, std::vector<int>>> used;
      for (std::size_t i = 0; i < freqs.size(); ++i)
        if (m.line_of_dip[i] >= 0) used.push_back({i, lines[m.line_of_dip[i]].members});
      if (used.size() < n_params) break;
      const auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const auto t = transitions(field_from_params(p, direction_class), options);
        for (std::size_t k = 0; k < used.size(); ++k) {
          double model = 0.0;
          for (int id : used[k].second) model += t[id];
          r(static_cast<Eigen::Index>(k)) = freqs[used[k].first] - model / static_cast<double>(used[k].second.size());
        }
      };
      fit = minimize(residuals, static_cast<Eigen::Index>(used.size()), params_from_field(b, direction_class), sopt);
      b = field_from_params(fit.params, direction_class);
      fitted = true;
    }
    if (!fitted) continue;
    lines = grouped_lines(b, options);
    m = match(freqs, lines, options.outlier_distance);
    if (!have || m.cost < best_cost) {
      have = true;
      best_cost = m.cost;
      out.field = b;
      out.fit = fit;
      out.model_lines.clear();
      for (const auto& l : lines) out.model_lines.push_back(l.freq);
      out.assignment.assign(dips.size(), -1);
      double ss = 0.0;
      int count = 0;
      for (std::size_t i = 0; i < freqs.size(); ++i) {
        out.assignment[active[i]] = m.line_of_dip[i];
        if (m.line_of_dip[i] >= 0) {
          const double d = freqs[i] - lines[m.line_of_dip[i]].freq;
          ss += d * d;
          ++count;
        }
      }
      out.rms_residual = count > 0 ? std::sqrt(ss / count) : 0.0;
    }
  }
  if (!have) throw NumericalError("invert_field: no seed could be matched to enough dips");

  if (direction_class == DirectionClass::axis_111) {
    double best = -1.0;
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
      const double c = std::abs(nv_axes()[f].dot(out.field.direction));
      if (c > best + 1e-12) {
        best = c;
        out.aligned_family = static_cast<int>(f);
      }
    }
  }
  return out;
}

SpectrumFieldFit refine_field(const Profile& profile, const SpectrumConfig& config,
                              std::span<const double> freqs, std::span<const double> current,
                              DirectionClass direction_class, const MagneticField& initial) {
  if (freqs.size() != current.size() || freqs.size() < 8) {
    throw std::invalid_argument("refine_field: need matching frequency and current arrays of at least 8 points");
  }
  SpectrumConfig cfg = config;
  cfg.freq_grid.assign(freqs.begin(), freqs.end());
  cfg.noise_rms = 0.0;
  cfg.path = SynthesisPath::fast;

  const double level = std::accumulate(current.begin(), current.end(), 0.0) / static_cast<double>(current.size());
  if (!(level != 0.0) || !std::isfinite(level)) throw std::invalid_argument("refine_field: degenerate trace");
  const Eigen::Index nb = direction_class == DirectionClass::free ? 3 : 1;

  Eigen::VectorXd init(nb + 2);
  init.head(nb) = params_from_field(initial, direction_class);
  init(nb) = 1.0;
  init(nb + 1) = 0.0;
  {
    // Start scale from the ratio of trace and model means.
    cfg.field = initial;
    const Spectrum s0 = synth_spectrum(profile, cfg);
    const double m0 = std::accumulate(s0.current.begin(), s0.current.end(), 0.0) / static_cast<double>(s0.current.size());
    if (m0 > 0.0) init(nb) = level / m0;
  }

  const auto evaluate = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    SpectrumConfig c = cfg;
    c.field = field_from_params(p.head(nb), direction_class);
    const Spectrum s = synth_spectrum(profile, c);
    for (std::size_t i = 0; i < current.size(); ++i) {
      r(static_cast<Eigen::Index>(i)) = (current[i] - (p(nb) * s.current[i] + p(nb + 1) * level)) / level;
    }
  };
  SolverOptions opt;
  opt.typical = Eigen::VectorXd::Ones(nb + 2);
  opt.typical.head(nb).setConstant(std::max(initial.magnitude, 1e-4));
  opt.typical(nb + 1) = 1e-3;
  if (direction_class != DirectionClass::free) {
    opt.lower = Eigen::VectorXd::Constant(nb + 2, -std::numeric_limits<double>::infinity());
    opt.upper = Eigen::VectorXd::Constant(nb + 2, std::numeric_limits<double>::infinity());
    opt.lower(0) = 0.0;
  }

  SpectrumFieldFit out;
  out.fit = minimize(evaluate, static_cast<Eigen::Index>(current.size()), init, opt);
  out.field = field_from_params(out.fit.params.head(nb), direction_class);
  out.scale = out.fit.params(nb);
  out.offset = out.fit.params(nb + 1) * level;
  out.rms_residual = std::abs(level) * out.fit.residual_norm / std::sqrt(static_cast<double>(current.size()));
  return out;
}

double r_squared(std::span<const double> y, std::span<const double> model) {
  if (y.size() != model.size() || y.empty()) throw std::invalid_argument("r_squared: length mismatch");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - model[i]) * (y[i] - model[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
}

PowerFit fit_power_curve(std::span<const double> power, std::span<const double> current) {
  if (power.size() != current.size()) throw std::invalid_argument("fit_power_curve: length mismatch");
  if (power.size() < 3) throw std::invalid_argument("fit_power_curve: need at least 3 points");
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (!(power[i] > 0.0) || !std::isfinite(current[i])) {
      throw std::invalid_argument("fit_power_curve: powers must be positive and currents finite");
    }
  }
  const bool relative = std::all_of(current.begin(), current.end(), [](double c) { return c > 0.0; });
  const auto weight = [&](std::size_t i) { return relative ? 1.0 / current[i] : 1.0; };
  const auto shape = [](double p, double alpha) { return p * p / (alpha + p); };

  // For fixed alpha the model is linear in 1/beta: scan log(alpha) for a global start.
  const auto [pmin, pmax] = std::minmax_element(power.begin(), power.end());
  double best = std::numeric_limits<double>::infinity(), a0 = *pmax, b0 = 1.0;
  const int n_scan = 400;
  for (int k = 0; k < n_scan; ++k) {
    const double la = std::log(*pmin * 1e-3) + (std::log(*pmax * 1e3) - std::log(*pmin * 1e-3)) * k / (n_scan - 1);
    const double alpha = std::exp(la);
    double sgy = 0.0, sgg = 0.0;
    for (std::size_t i = 0; i < power.size(); ++i) {
      const double w2 = weight(i) * weight(i), g = shape(power[i], alpha);
      sgy += w2 * g * current[i];
      sgg += w2 * g * g;
    }
    const double c = sgy / sgg;
    if (!(c > 0.0)) continue;
    double cost = 0.0;
    for (std::size_t i = 0; i < power.size(); ++i) {
      const double r = weight(i) * (c * shape(power[i], alpha) - current[i]);
      cost += r * r;
    }
    if (cost < best) {
      best = cost;
      a0 = alpha;
      b0 = 1.0 / c;
    }
  }

  const auto m = static_cast<Eigen::Index>(power.size());
  const auto residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    const double alpha = std::exp(p(0)), beta = std::exp(p(1));
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = weight(k) * (shape(power[k], alpha) / beta - current[k]);
    }
  };
  SolverOptions opt;
  opt.typical = Eigen::Vector2d(1.0, 1.0);
  const FitResult log_fit = minimize(residuals, m, Eigen::Vector2d(std::log(a0), std::log(b0)), opt);

  PowerFit out;
  out.params.alpha = std::exp(log_fit.params(0));
  out.params.beta = std::exp(log_fit.params(1));
  // Report in (alpha, beta) coordinates: first-order transform of the log-space covariance.
  out.fit = log_fit;
  out.fit.params = Eigen::Vector2d(out.params.alpha, out.params.beta);
  const Eigen::Matrix2d jac = Eigen::Vector2d(out.params.alpha, out.params.beta).asDiagonal();
  out.fit.covariance = jac * log_fit.covariance * jac;
  out.alpha_ci = out.fit.ci95(0);
  out.beta_ci = out.fit.ci95(1);

  std::vector<double> model(power.size());
  for (std::size_t i = 0; i < power.size(); ++i) model[i] = photocurrent_model(power[i], out.params);
  out.r_squared = r_squared(current, model);
  out.wide_intervals = out.fit.singular || out.alpha_ci > 0.5 * out.params.alpha ||
                       out.beta_ci > 0.5 * out.params.beta;
  return out;
}

}  // namespace pdmr
