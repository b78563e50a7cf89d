#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "pdmr/constants.hpp"
#include "pdmr/inversion.hpp"
#include "pdmr/profile.hpp"
#include "pdmr/spectra.hpp"
#include "pdmr/spin_model.hpp"
#include "pdmr/table.hpp"
#include "pdmr/transport.hpp"

namespace py = pybind11;
using namespace pdmr;

namespace {

DirectionClass parse_class(const std::string& c) {
  if (c == "100" || c == "axis_100") return DirectionClass::axis_100;
  if (c == "111" || c == "axis_111") return DirectionClass::axis_111;
  if (c == "free") return DirectionClass::free;
  throw std::invalid_argument("direction class must be '100', '111' or 'free'");
}

}  // namespace

PYBIND11_MODULE(_pdmr, m) {
  m.doc() = "PDMR simulator and inversion toolkit";
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.attr("D_GS") = constants::kZeroFieldSplittingGs;
  m.attr("D_ES") = constants::kZeroFieldSplittingEs;
  m.attr("GAMMA") = constants::kGyromagneticRatio;
  m.attr("DEFAULT_PROFILE") = std::string(kDefaultProfileName);
  m.attr("GAP_PRESETS") = std::vector<double>(std::begin(kGapPresets), std::end(kGapPresets));

  // geometry
  py::class_<UnitVector>(m, "UnitVector")
      .def(py::init(&UnitVector::from_components), py::arg("x"), py::arg("y"), py::arg("z"))
      .def_property_readonly("x", &UnitVector::x)
      .def_property_readonly("y", &UnitVector::y)
      .def_property_readonly("z", &UnitVector::z)
      .def("as_tuple", &UnitVector::as_array)
      .def("dot", &UnitVector::dot)
      .def("__repr__", [](const UnitVector& u) {
        std::ostringstream s;
        s << "UnitVector(" << u.x() << ", " << u.y() << ", " << u.z() << ")";
        return s.str();
      });
  py::class_<MagneticField>(m, "MagneticField")
      .def(py::init([](double magnitude, const UnitVector& d) { return MagneticField{magnitude, d}; }),
           py::arg("magnitude"), py::arg("direction"))
      .def_static("from_vector", &MagneticField::from_vector)
      .def_readwrite("magnitude", &MagneticField::magnitude)
      .def_readwrite("direction", &MagneticField::direction)
      .def("vector", &MagneticField::vector);
  py::class_<FieldProjection>(m, "FieldProjection")
      .def_readonly("b_par", &FieldProjection::b_par)
      .def_readonly("b_perp", &FieldProjection::b_perp)
      .def_readonly("tilt", &FieldProjection::tilt);
  m.def("nv_axes", [] {
    const auto& a = nv_axes();
    return std::vector<UnitVector>(a.begin(), a.end());
  });
  m.def("direction_from_miller", &direction_from_miller);
  m.def("project_field", [](const MagneticField& b, int family) {
    if (family < 0 || family >= static_cast<int>(kNumFamilies)) throw std::invalid_argument("family must be 0..3");
    return project_field(b, nv_families()[static_cast<std::size_t>(family)]);
  });
  m.def("family_angles", &family_angles, "Angles (rad) between a direction and each NV axis");

  // spin model
  py::enum_<Manifold>(m, "Manifold").value("ground", Manifold::ground).value("excited", Manifold::excited);
  m.def(
      "transition_frequencies",
      [](double d, double gamma, double b_par, double b_perp, Manifold manifold) {
        const auto t = transition_frequencies(SpinSystem{d, gamma, FieldProjection{b_par, b_perp, 0.0}, manifold});
        return std::make_pair(t.f_minus, t.f_plus);
      },
      py::arg("d"), py::arg("gamma"), py::arg("b_par"), py::arg("b_perp") = 0.0,
      py::arg("manifold") = Manifold::ground, "(f_minus, f_plus) in Hz by exact diagonalization");
  m.def(
      "mixing_matrix",
      [](double d, double gamma, double b_par, double b_perp) {
        return Eigen::Matrix3d(mixing_matrix(SpinSystem{d, gamma, FieldProjection{b_par, b_perp, 0.0}, Manifold::ground}));
      },
      py::arg("d"), py::arg("gamma"), py::arg("b_par"), py::arg("b_perp"));
  m.def("lac_fields", [](double d_gs, double d_es, double gamma) {
    const auto l = lac_fields(d_gs, d_es, gamma);
    return std::make_pair(l.b_gslac, l.b_eslac);
  });

  // profile
  py::class_<PowerCurveParams>(m, "PowerCurveParams")
      .def(py::init([](double a, double b) { return PowerCurveParams{a, b}; }), py::arg("alpha"), py::arg("beta"))
      .def_readwrite("alpha", &PowerCurveParams::alpha)
      .def_readwrite("beta", &PowerCurveParams::beta);
  py::class_<Profile>(m, "Profile")
      .def_readwrite("name", &Profile::name)
      .def("get", [](const Profile& p, const std::string& key) { return profile_value(p, key); })
      .def("set",
           [](Profile& p, const std::string& key, double v) {
             for (const auto& k : profile_keys()) {
               if (k.key == key) {
                 k.field(p) = v;
                 p.validate();
                 return;
               }
             }
             throw std::invalid_argument("unknown profile key '" + key + "'");
           })
      .def("keys",
           [](const Profile&) {
             std::vector<std::string> out;
             for (const auto& k : profile_keys()) out.emplace_back(k.key);
             return out;
           })
      .def("to_json", [](const Profile& p) { return profile_to_json(p); })
      .def_readwrite("power_curve", &Profile::power_curve);
  m.def("default_profile", &default_profile);
  m.def("parse_profile", [](const std::string& text) { return parse_profile(text); });
  m.def("load_profile", [](const std::string& path) { return load_profile(path); });
  m.def("resolve_profile", &resolve_profile, py::arg("name_or_path") = "");

  // photodynamics
  m.def("photocurrent_model", [](double p, double alpha, double beta) { return photocurrent_model(p, {alpha, beta}); },
        py::arg("power"), py::arg("alpha"), py::arg("beta"));
  m.def("rate_model_photocurrent", [](const Profile& p, double power) {
    return rate_model_photocurrent(p.photo, power, p.d_gs, p.d_es, p.gamma);
  });
  m.def("background_current", [](const Profile& p, double power) { return background_current(p.photo, power); });

  // spectra
  py::class_<SpectralLine>(m, "SpectralLine")
      .def_readonly("center", &SpectralLine::center)
      .def_readonly("fwhm", &SpectralLine::fwhm)
      .def_readonly("depth", &SpectralLine::depth)
      .def_readonly("family", &SpectralLine::family)
      .def_readonly("manifold", &SpectralLine::manifold);
  py::class_<Spectrum>(m, "Spectrum")
      .def_readonly("freqs", &Spectrum::freqs)
      .def_readonly("current", &Spectrum::current)
      .def_readonly("contrast", &Spectrum::contrast_trace)
      .def_readonly("baseline", &Spectrum::baseline)
      .def_readonly("lines", &Spectrum::lines)
      .def_readonly("seed", &Spectrum::seed);
  m.def("linear_grid", &linear_grid);
  m.def(
      "synth_spectrum",
      [](const Profile& profile, const std::vector<double>& freqs, double b_mag, const UnitVector& direction,
         std::optional<double> power, double noise_rms, std::uint64_t seed, double residual_transverse,
         bool include_excited, const std::string& path) {
        SpectrumConfig c = SpectrumConfig::from_profile(profile);
        c.freq_grid = freqs;
        c.field = MagneticField{b_mag, direction};
        if (power) c.optical_power = *power;
        c.noise_rms = noise_rms;
        c.seed = seed;
        c.residual_transverse = residual_transverse;
        c.include_excited = include_excited;
        if (path != "fast" && path != "full") throw std::invalid_argument("path must be 'fast' or 'full'");
        c.path = path == "full" ? SynthesisPath::full : SynthesisPath::fast;
        py::gil_scoped_release release;
        return synth_spectrum(profile, c);
      },
      py::arg("profile"), py::arg("freqs"), py::arg("b_mag") = 0.0,
      py::arg("direction") = UnitVector::from_components(1, 0, 0), py::arg("power") = py::none(),
      py::arg("noise_rms") = 0.0, py::arg("seed") = 0, py::arg("residual_transverse") = 0.0,
      py::arg("include_excited") = false, py::arg("path") = "fast");
  m.def("linewidth_model", &linewidth_model, py::arg("rabi"), py::arg("dephasing"), py::arg("pump_rate"),
        py::arg("saturation_rate") = py::none());

  // transport
  m.def(
      "iv_curve",
      [](const Profile& profile, const std::vector<double>& volts, double gap, std::optional<double> power) {
        TransportParams tp = profile.transport;
        tp.gap = gap;
        const auto g = optical_generation(profile, power.value_or(profile.reference_power));
        std::vector<std::pair<double, double>> out;
        for (const auto& pt : iv_curve(volts, g, tp)) out.emplace_back(pt.voltage, pt.current);
        return out;
      },
      py::arg("profile"), py::arg("voltages"), py::arg("gap") = 10e-6, py::arg("power") = py::none(),
      "List of (voltage, current) pairs");

  // inversion
  py::class_<DipEstimate>(m, "DipEstimate")
      .def(py::init([](double c, double w, double d) { return DipEstimate{c, w, d}; }), py::arg("center"),
           py::arg("fwhm") = 0.0, py::arg("depth") = 0.0)
      .def_readwrite("center", &DipEstimate::center)
      .def_readwrite("fwhm", &DipEstimate::fwhm)
      .def_readwrite("depth", &DipEstimate::depth)
      .def_readonly("center_ci", &DipEstimate::center_ci)
      .def_readonly("fwhm_ci", &DipEstimate::fwhm_ci)
      .def_readonly("depth_ci", &DipEstimate::depth_ci);
  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("covariance", &FitResult::covariance)
      .def_readonly("residual_norm", &FitResult::residual_norm)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("singular", &FitResult::singular);
  m.def(
      "least_squares",
      [](const std::function<double(double, const Eigen::VectorXd&)>& model, const std::vector<double>& x,
         const std::vector<double>& y, const Eigen::VectorXd& init) { return least_squares(model, x, y, init); },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("init"));
  m.def(
      "detect_peaks",
      [](const std::vector<double>& f, const std::vector<double>& y, double k) {
        PeakOptions o;
        o.k_sigma = k;
        return detect_peaks(f, y, o);
      },
      py::arg("freqs"), py::arg("current"), py::arg("k_sigma") = 3.0);
  m.def(
      "fit_lorentzians",
      [](const std::vector<double>& f, const std::vector<double>& y, int n) {
        const auto r = fit_lorentzians(f, y, n);
        return py::make_tuple(r.baseline, r.dips, r.fit);
      },
      py::arg("freqs"), py::arg("current"), py::arg("n_dips"), "(baseline, dips, fit)");
  m.def(
      "invert_aligned",
      [](double fm, double fp, double d, double gamma) {
        const auto r = invert_aligned(fm, fp, d, gamma);
        return py::make_tuple(r.b_par, r.inconsistent, r.beyond_gslac);
      },
      py::arg("f_minus"), py::arg("f_plus"), py::arg("d") = constants::kZeroFieldSplittingGs,
      py::arg("gamma") = constants::kGyromagneticRatio, "(b_par, inconsistent, beyond_gslac)");
  m.def(
      "invert_field",
      [](const std::vector<DipEstimate>& dips, const std::string& cls, const Profile& profile) {
        const auto r = invert_field(dips, parse_class(cls), InversionOptions::from_profile(profile));
        py::dict out;
        out["field"] = r.field;
        out["magnitude"] = r.field.magnitude;
        out["fit"] = r.fit;
        out["assignment"] = r.assignment;
        out["aligned_family"] = r.aligned_family;
        out["rms_residual"] = r.rms_residual;
        return out;
      },
      py::arg("dips"), py::arg("direction_class"), py::arg("profile") = default_profile());
  m.def(
      "refine_field",
      [](const Profile& profile, const std::vector<double>& f, const std::vector<double>& y, const std::string& cls,
         const MagneticField& initial, std::optional<double> power, double residual_transverse, bool include_excited) {
        SpectrumConfig c = SpectrumConfig::from_profile(profile);
        if (power) c.optical_power = *power;
        c.residual_transverse = residual_transverse;
        c.include_excited = include_excited;
        const auto r = refine_field(profile, c, f, y, parse_class(cls), initial);
        py::dict out;
        out["field"] = r.field;
        out["magnitude"] = r.field.magnitude;
        out["scale"] = r.scale;
        out["offset"] = r.offset;
        out["fit"] = r.fit;
        out["rms_residual"] = r.rms_residual;
        return out;
      },
      py::arg("profile"), py::arg("freqs"), py::arg("current"), py::arg("direction_class"), py::arg("initial"),
      py::arg("power") = py::none(), py::arg("residual_transverse") = 0.0, py::arg("include_excited") = false,
      "Forward-model fit of the field to a measured trace, seeded by an invert_field result");
  m.def(
      "fit_power_curve",
      [](const std::vector<double>& p, const std::vector<double>& i) {
        const auto r = fit_power_curve(p, i);
        py::dict out;
        out["alpha"] = r.params.alpha;
        out["beta"] = r.params.beta;
        out["alpha_ci"] = r.alpha_ci;
        out["beta_ci"] = r.beta_ci;
        out["r_squared"] = r.r_squared;
        out["wide_intervals"] = r.wide_intervals;
        out["fit"] = r.fit;
        return out;
      },
      py::arg("power"), py::arg("current"));

  // tables and CLI
  py::class_<DataTable>(m, "DataTable")
      .def_static("parse", [](const std::string& text) { return DataTable::parse(text); })
      .def("to_text", &DataTable::to_text)
      .def("column", &DataTable::column)
      .def("meta", &DataTable::meta)
      .def_property_readonly("column_names", [](const DataTable& t) {
        std::vector<std::string> out;
        for (const auto& c : t.columns()) out.push_back(c.name);
        return out;
      });
  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "pdmr");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command line in-process: (exit_code, stdout, stderr)");
}
