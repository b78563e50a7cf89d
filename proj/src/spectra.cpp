#include "pdmr/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>

#include "parallel.hpp"
#include "pdmr/constants.hpp"

namespace pdmr {

namespace {

double lorentzian(double f, double center, double fwhm) {
  const double x = 2.0 * (f - center) / fwhm;
  return 1.0 / (1.0 + x * x);
}

struct FamilyContext {
  const Profile& profile;
  const SpectrumConfig& config;
  const FamilySpin& spin;
  double weight;

  double current(const MWDrive& mw) const {
    const auto r = solve_steady_state(profile.photo, config.optical_power, mw, spin.ground,
                                      spin.excited);
    return weight * nv_photocurrent(r, profile.photo);
  }

  MWDrive drive(double frequency, MwTarget target) const {
    MWDrive mw;
    mw.frequency = frequency;
    mw.rabi = config.rabi;
    mw.dephasing = config.dephasing;
    mw.target = target;
    mw.on = true;
    return mw;
  }
};

// Family current as a function of the two MW rates. Each MW edge is a rank-one update of the
// rate matrix, so numerator and determinant of the steady-state solve are both bilinear in
// (w_minus, w_plus); four corner solves determine them exactly.
class BilinearCurrent {
 public:
  BilinearCurrent(const FamilyContext& ctx, double w_max) : w_max_(w_max) {
    const auto& photo = ctx.profile.photo;
    const double power = ctx.config.optical_power;
    const RateMatrix base =
        build_rate_matrix(photo, power, MWDrive{}, ctx.spin.ground, ctx.spin.excited);
    const double scale = base.cwiseAbs().maxCoeff() + 2.0 * w_max;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        RateMatrix m = base;
        add_edge(m, kGsMinus, i * w_max);
        add_edge(m, kGsPlus, j * w_max);
        const Populations n = steady_state(m);
        const auto [ge, gh] = carrier_rates(n, photo, power);
        const double current = ctx.weight * constants::kElementaryCharge * photo.collection_gain *
                               (ge + gh) * photo.excitation_volume;
        RateMatrix a = m / scale;
        a.row(0).setOnes();
        det_[i][j] = a.partialPivLu().determinant();
        num_[i][j] = current * det_[i][j];
      }
    }
  }

  double operator()(double w_minus, double w_plus) const {
    const double s = w_max_ > 0.0 ? w_minus / w_max_ : 0.0;
    const double t = w_max_ > 0.0 ? w_plus / w_max_ : 0.0;
    const auto bilinear = [&](const double (&v)[2][2]) {
      return (1 - s) * (1 - t) * v[0][0] + s * (1 - t) * v[1][0] + (1 - s) * t * v[0][1] +
             s * t * v[1][1];
    };
    return bilinear(num_) / bilinear(det_);
  }

 private:
  static void add_edge(RateMatrix& m, int level, double w) {
    m(kGsZero, level) += w;
    m(level, level) -= w;
    m(level, kGsZero) += w;
    m(kGsZero, kGsZero) -= w;
  }

  double w_max_;
  double num_[2][2]{};
  double det_[2][2]{};
};

// Half-width (Hz) of the bare MW Lorentzian, including optical decoherence.
double bare_half_width(const Profile& profile, const SpectrumConfig& config) {
  return effective_decoherence(profile.photo, config.optical_power, config.dephasing) /
         (2.0 * constants::kPi);
}

// Depth and FWHM of a dip driven on a single transition. The steady-state current is a
// linear-fractional function of the MW rate W, so the dip is an exact Lorentzian whose width
// follows from the depths at W0 and W0/2.
SpectralLine single_line(const FamilyContext& ctx, double i_off, double f_transition,
                         MwTarget target, double hw) {
  SpectralLine line;
  line.center = f_transition;
  line.depth = i_off - ctx.current(ctx.drive(f_transition, target));
  line.fwhm = 2.0 * hw;
  if (!(line.depth > 0.0)) {
    line.depth = std::max(line.depth, 0.0);
    return line;
  }
  const double half = i_off - ctx.current(ctx.drive(f_transition + hw, target));
  const double r = line.depth / half;
  if (r > 1.0 && r < 2.0) {
    const double gamma_c = 2.0 * constants::kPi * hw;
    const double w0 = mw_transfer_rate(ctx.config.rabi, gamma_c, 0.0);
    const double pump = gamma_c - ctx.config.dephasing;
    line.fwhm = linewidth_model(ctx.config.rabi, ctx.config.dephasing, pump,
                                w0 * (r - 1.0) / (2.0 - r));
  }
  return line;
}

// Both transitions driven together around `center`; width found by bisection on the half depth.
SpectralLine merged_line(const FamilyContext& ctx, double i_off, double center, double hw) {
  SpectralLine line;
  line.center = center;
  line.branch = Branch::merged;
  const auto dip = [&](double f) { return i_off - ctx.current(ctx.drive(f, MwTarget::both)); };
  line.depth = dip(center);
  line.fwhm = 2.0 * hw;
  if (!(line.depth > 0.0)) {
    line.depth = std::max(line.depth, 0.0);
    return line;
  }
  const double target = 0.5 * line.depth;
  double lo = 0.0, hi = hw;
  while (dip(center + hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4 * hw) throw NumericalError("merged_line: half-depth point not bracketed");
  }
  for (int it = 0; it < 100 && hi - lo > 1e-9 * hw; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dip(center + mid) > target ? lo : hi) = mid;
  }
  line.fwhm = lo + hi;  // 2 * midpoint
  return line;
}

// Lines within 0.1 FWHM (same manifold) are combined with summed depth.
std::vector<SpectralLine> merge_lines(std::vector<SpectralLine> lines) {
  std::sort(lines.begin(), lines.end(), [](const SpectralLine& a, const SpectralLine& b) {
    if (a.manifold != b.manifold) return a.manifold < b.manifold;
    return a.center < b.center;
  });
  std::vector<SpectralLine> out;
  for (const auto& l : lines) {
    if (!out.empty()) {
      auto& last = out.back();
      const double tol = 0.1 * std::max(last.fwhm, l.fwhm);
      if (last.manifold == l.manifold && std::abs(l.center - last.center) < tol) {
        const double d = last.depth + l.depth;
        if (d > 0.0) {
          last.center = (last.center * last.depth + l.center * l.depth) / d;
          last.fwhm = (last.fwhm * last.depth + l.fwhm * l.depth) / d;
        }
        last.depth = d;
        continue;
      }
    }
    out.push_back(l);
  }
  std::sort(out.begin(), out.end(),
            [](const SpectralLine& a, const SpectralLine& b) { return a.center < b.center; });
  return out;
}

double family_weight(const Profile& profile, std::size_t f) {
  double total = 0.0;
  for (double w : profile.family_weights) total += w;
  return profile.family_weights[f] / total;
}

void add_noise(std::vector<double>& current, double rms, std::uint64_t seed) {
  if (rms <= 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, rms);
  for (double& c : current) c += gauss(rng);
}

// Ground-state response evaluated exactly per family; excited-state lines added as Lorentzians.
void render(const Profile& profile, const SpectrumConfig& config, Spectrum& s) {
  const auto spins = family_spins(profile, applied_field(config.field, config.residual_transverse));
  const double gamma_c = effective_decoherence(profile.photo, config.optical_power, config.dephasing);
  const double w0 = mw_transfer_rate(config.rabi, gamma_c, 0.0);
  s.current.assign(s.freqs.size(), background_current(profile.photo, config.optical_power));
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    const double w = family_weight(profile, f);
    if (w == 0.0) continue;
    const BilinearCurrent family(FamilyContext{profile, config, spins[f], w}, w0);
    const auto& tr = spins[f].ground.transitions;
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
      s.current[i] += family(mw_transfer_rate(config.rabi, gamma_c, s.freqs[i] - tr.f_minus),
                             mw_transfer_rate(config.rabi, gamma_c, s.freqs[i] - tr.f_plus));
    }
  }
  for (const auto& l : s.lines) {
    if (l.manifold != Manifold::excited) continue;
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
      s.current[i] -= l.depth * lorentzian(s.freqs[i], l.center, l.fwhm);
    }
  }
}

void fill_contrast(Spectrum& s) {
  s.contrast_trace.resize(s.current.size());
  for (std::size_t i = 0; i < s.current.size(); ++i) {
    s.contrast_trace[i] = s.baseline > 0.0 ? 1.0 - s.current[i] / s.baseline : 0.0;
  }
}

}  // namespace

SpectrumConfig SpectrumConfig::from_profile(const Profile& profile) {
  SpectrumConfig c;
  c.optical_power = profile.reference_power;
  c.rabi = profile.mw_rabi;
  c.dephasing = profile.mw_dephasing;
  return c;
}

void SpectrumConfig::validate() const {
  if (!std::is_sorted(freq_grid.begin(), freq_grid.end())) {
    throw std::invalid_argument("spectrum: frequency grid must be ascending");
  }
  if (!(optical_power > 0.0)) throw std::invalid_argument("spectrum: optical power must be positive");
  if (!(rabi >= 0.0)) throw std::invalid_argument("spectrum: Rabi frequency must be nonnegative");
  if (!(dephasing > 0.0)) throw std::invalid_argument("spectrum: dephasing must be positive");
  if (!(noise_rms >= 0.0)) throw std::invalid_argument("spectrum: noise rms must be nonnegative");
  if (!(residual_transverse >= 0.0)) {
    throw std::invalid_argument("spectrum: residual transverse field must be nonnegative");
  }
  if (!(field.magnitude >= 0.0)) throw std::invalid_argument("spectrum: field magnitude must be nonnegative");
  if (path == SynthesisPath::full && include_excited) {
    throw std::invalid_argument("spectrum: excited-state lines are only available on the fast path");
  }
}

std::vector<double> linear_grid(double start, double stop, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {start};
  std::vector<double> g(n);
  const double step = (stop - start) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = start + step * static_cast<double>(i);
  g.back() = stop;
  return g;
}

MagneticField applied_field(const MagneticField& field, double residual_transverse) {
  if (residual_transverse == 0.0) return field;
  const auto b = field.vector();
  const UnitVector perp = orthogonal_to(field.direction);
  return MagneticField::from_vector({b[0] + residual_transverse * perp.x(),
                                     b[1] + residual_transverse * perp.y(),
                                     b[2] + residual_transverse * perp.z()});
}

std::array<FamilySpin, kNumFamilies> family_spins(const Profile& profile, const MagneticField& field) {
  std::array<FamilySpin, kNumFamilies> out;
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    out[f].projection = project_field(field, nv_families()[f]);
    out[f].ground = solve_spin(SpinSystem{profile.d_gs, profile.gamma, out[f].projection, Manifold::ground});
    out[f].excited = solve_spin(SpinSystem{profile.d_es, profile.gamma, out[f].projection, Manifold::excited});
  }
  return out;
}

std::vector<SpectralLine> spectral_lines(const Profile& profile, const SpectrumConfig& config,
                                         double* baseline_out) {
  config.validate();
  const auto spins = family_spins(profile, applied_field(config.field, config.residual_transverse));
  const double hw = bare_half_width(profile, config);

  std::vector<SpectralLine> lines;
  double baseline = background_current(profile.photo, config.optical_power);
  for (std::size_t f = 0; f < kNumFamilies; ++f) {
    const double w = family_weight(profile, f);
    if (w == 0.0) continue;
    const FamilyContext ctx{profile, config, spins[f], w};
    MWDrive off;
    const double i_off = ctx.current(off);
    baseline += i_off;

    const auto& gs = spins[f].ground.transitions;
    std::vector<SpectralLine> family_lines;
    if (std::abs(gs.f_plus - gs.f_minus) < 0.1 * 2.0 * hw) {
      family_lines.push_back(merged_line(ctx, i_off, 0.5 * (gs.f_minus + gs.f_plus), hw));
    } else {
      auto lm = single_line(ctx, i_off, gs.f_minus, MwTarget::minus_one, hw);
      lm.branch = Branch::minus;
      auto lp = single_line(ctx, i_off, gs.f_plus, MwTarget::plus_one, hw);
      lp.branch = Branch::plus;
      family_lines.push_back(lm);
      family_lines.push_back(lp);
    }
    for (auto& l : family_lines) l.family = static_cast<int>(f);

    if (config.include_excited && profile.es_depth_fraction > 0.0) {
      const auto& es = spins[f].excited.transitions;
      const auto gs_for = [&](Branch b) -> const SpectralLine& {
        for (const auto& l : family_lines)
          if (l.branch == b || l.branch == Branch::merged) return l;
        return family_lines.front();
      };
      std::vector<SpectralLine> es_lines;
      for (auto [freq, branch] : {std::pair{es.f_minus, Branch::minus}, std::pair{es.f_plus, Branch::plus}}) {
        const auto& ref = gs_for(branch);
        SpectralLine l;
        l.center = freq;
        l.fwhm = ref.fwhm;
        l.depth = profile.es_depth_fraction * (ref.branch == Branch::merged ? 0.5 : 1.0) * ref.depth;
        l.family = static_cast<int>(f);
        l.manifold = Manifold::excited;
        l.branch = branch;
        es_lines.push_back(l);
      }
      family_lines.insert(family_lines.end(), es_lines.begin(), es_lines.end());
    }
    for (auto& l : family_lines)
      if (l.depth > 0.0) lines.push_back(l);
  }
  if (baseline_out) *baseline_out = baseline;
  return merge_lines(std::move(lines));
}

Spectrum synth_spectrum(const Profile& profile, const SpectrumConfig& config) {
  config.validate();
  Spectrum s;
  s.freqs = config.freq_grid;
  s.field = config.field;
  s.optical_power = config.optical_power;
  s.noise_rms = config.noise_rms;
  s.seed = config.seed;

  if (config.path == SynthesisPath::fast) {
    s.lines = spectral_lines(profile, config, &s.baseline);
    render(profile, config, s);
  } else {
    const auto spins = family_spins(profile, applied_field(config.field, config.residual_transverse));
    const double bg = background_current(profile.photo, config.optical_power);
    s.baseline = bg;
    for (std::size_t f = 0; f < kNumFamilies; ++f) {
      const double w = family_weight(profile, f);
      if (w == 0.0) continue;
      s.baseline += FamilyContext{profile, config, spins[f], w}.current(MWDrive{});
    }
    s.current.assign(s.freqs.size(), bg);
    detail::parallel_for(s.freqs.size(), [&](std::size_t i) {
      double total = bg;
      for (std::size_t f = 0; f < kNumFamilies; ++f) {
        const double w = family_weight(profile, f);
        if (w == 0.0) continue;
        const FamilyContext ctx{profile, config, spins[f], w};
        total += ctx.current(ctx.drive(s.freqs[i], MwTarget::both));
      }
      s.current[i] = total;
    });
  }
  add_noise(s.current, config.noise_rms, config.seed);
  fill_contrast(s);
  return s;
}

void MagnetModel::validate() const {
  if (!(surface_field > 0.0) || !(reference_distance > 0.0)) {
    throw std::invalid_argument("magnet model parameters must be positive");
  }
}

double magnet_field(const MagnetModel& model, double distance) {
  model.validate();
  if (!(distance > 0.0)) throw std::invalid_argument("magnet distance must be positive");
  const double r = model.reference_distance / distance;
  return model.surface_field * r * r * r;
}

double magnet_distance(const MagnetModel& model, double field) {
  model.validate();
  if (!(field > 0.0)) throw std::invalid_argument("magnet field must be positive");
  return model.reference_distance * std::cbrt(model.surface_field / field);
}

PDMRMap field_map(const Profile& profile, const std::vector<double>& magnitudes,
                  const SpectrumConfig& base) {
  if (magnitudes.empty()) throw std::invalid_argument("field_map: sweep is empty");
  base.validate();
  PDMRMap map;
  map.sweep = magnitudes;
  map.freqs = base.freq_grid;
  map.current.resize(magnitudes.size());
  map.baseline.resize(magnitudes.size());
  map.lines.resize(magnitudes.size());
  detail::parallel_for(magnitudes.size(), [&](std::size_t r) {
    SpectrumConfig cfg = base;
    cfg.field.magnitude = magnitudes[r];
    cfg.seed = derive_seed(base.seed, r);
    Spectrum s = synth_spectrum(profile, cfg);
    map.current[r] = std::move(s.current);
    map.baseline[r] = s.baseline;
    map.lines[r] = std::move(s.lines);
  });
  return map;
}

PDMRMap field_map_from_distances(const Profile& profile, const MagnetModel& magnet,
                                 const std::vector<double>& distances, const SpectrumConfig& base) {
  std::vector<double> fields;
  fields.reserve(distances.size());
  for (double d : distances) fields.push_back(magnet_field(magnet, d));
  return field_map(profile, fields, base);
}

double linewidth_model(double rabi, double dephasing, double pump_rate,
                       std::optional<double> saturation_rate) {
  if (!(dephasing > 0.0)) throw std::invalid_argument("linewidth_model: dephasing must be positive");
  if (!(rabi >= 0.0) || !(pump_rate >= 0.0)) {
    throw std::invalid_argument("linewidth_model: rabi and pump rate must be nonnegative");
  }
  const double ws = saturation_rate.value_or(pump_rate);
  if (!(ws >= 0.0)) throw std::invalid_argument("linewidth_model: saturation rate must be nonnegative");
  const double gamma_c = dephasing + pump_rate;
  double broadening = 1.0;
  if (rabi > 0.0) {
    if (!(ws > 0.0)) {
      throw std::invalid_argument("linewidth_model: MW drive without optical pumping saturates");
    }
    const double omega = 2.0 * constants::kPi * rabi;
    broadening = std::sqrt(1.0 + omega * omega / (2.0 * gamma_c * ws));
  }
  return gamma_c / constants::kPi * broadening;
}

double mw_saturation_rate(const Profile& profile, double optical_power, MwTarget target) {
  if (!(optical_power > 0.0)) throw std::invalid_argument("saturation rate: power must be positive");
  SpectrumConfig config = SpectrumConfig::from_profile(profile);
  config.optical_power = optical_power;
  const auto spins = family_spins(profile, MagneticField{});
  const FamilyContext ctx{profile, config, spins[0], 1.0};
  const double i_off = ctx.current(MWDrive{});
  const double f0 = target == MwTarget::plus_one ? spins[0].ground.transitions.f_plus
                                                 : spins[0].ground.transitions.f_minus;
  const double gamma_c = effective_decoherence(profile.photo, optical_power, config.dephasing);
  const double w0 = mw_transfer_rate(config.rabi, gamma_c, 0.0);
  const double full = i_off - ctx.current(ctx.drive(f0, target));
  const double half = i_off - ctx.current(ctx.drive(f0 + gamma_c / (2.0 * constants::kPi), target));
  const double r = full / half;
  if (!(r > 1.0 && r < 2.0)) throw NumericalError("saturation rate: dip is not Lorentzian");
  return w0 * (r - 1.0) / (2.0 - r);
}

Generation optical_generation(const Profile& profile, double power) {
  if (!(power >= 0.0)) throw std::invalid_argument("optical_generation: power must be nonnegative");
  const auto spins = family_spins(profile, MagneticField{});
  const auto r = solve_steady_state(profile.photo, power, MWDrive{}, spins[0].ground, spins[0].excited);
  return Generation{r.gamma_e, r.gamma_h};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pdmr
