#include "pdmr/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pdmr {

namespace {

using cd = std::complex<double>;

bool is_diagonal(const Hamiltonian& h) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && h(i, j) != cd(0.0, 0.0)) return false;
  return true;
}

}  // namespace

void SpinSystem::validate() const {
  if (!(d_split > 0.0)) throw std::invalid_argument("zero-field splitting must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("gyromagnetic ratio must be positive");
  if (projection.b_par < 0.0 || projection.b_perp < 0.0) {
    throw std::invalid_argument("field projection components must be nonnegative");
  }
}

Hamiltonian hamiltonian(const SpinSystem& sys) {
  sys.validate();
  const double zp = sys.gamma * sys.projection.b_par;
  // <m|Sx|m+-1> = 1/sqrt(2) for spin 1.
  const double xp = sys.gamma * sys.projection.b_perp / std::sqrt(2.0);
  Hamiltonian h = Hamiltonian::Zero();
  h(kMsMinus, kMsMinus) = sys.d_split - zp;
  h(kMsZero, kMsZero) = 0.0;
  h(kMsPlus, kMsPlus) = sys.d_split + zp;
  h(kMsMinus, kMsZero) = h(kMsZero, kMsMinus) = xp;
  h(kMsPlus, kMsZero) = h(kMsZero, kMsPlus) = xp;
  return h;
}

EigenSystem eigensystem(const Hamiltonian& h) {
  const double scale = std::max(h.cwiseAbs().maxCoeff(), 1e-300);
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("eigensystem: matrix is not Hermitian");
  }

  EigenSystem out;
  if (is_diagonal(h)) {
    // Exact path; keeps degenerate eigenvectors on the m_s basis.
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return h(a, a).real() < h(b, b).real(); });
    out.states = Eigen::Matrix3cd::Zero();
    for (int i = 0; i < 3; ++i) {
      out.levels[i] = h(order[i], order[i]).real();
      out.states(order[i], i) = 1.0;
    }
    return out;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(h);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigensystem: diagonalization failed");
  }
  for (int i = 0; i < 3; ++i) out.levels[i] = solver.eigenvalues()(i);
  out.states = solver.eigenvectors();
  return out;
}

MixingMatrix mixing_matrix(const EigenSystem& es) {
  MixingMatrix m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = std::norm(es.states(j, i));
  return m;
}

MixingMatrix mixing_matrix(const SpinSystem& sys) {
  return mixing_matrix(eigensystem(hamiltonian(sys)));
}

StateLabels label_states(const MixingMatrix& mix) {
  StateLabels lab;
  // Ties on m_s=0 weight go to the lower-energy state (first in ascending order).
  lab.zero = 0;
  for (int i = 1; i < 3; ++i)
    if (mix(i, kMsZero) > mix(lab.zero, kMsZero)) lab.zero = i;

  std::array<int, 2> rest{};
  int n = 0;
  for (int i = 0; i < 3; ++i)
    if (i != lab.zero) rest[n++] = i;
  const int a = rest[0], b = rest[1];  // a has the lower energy

  const double pref_a = mix(a, kMsMinus) - mix(a, kMsPlus);
  const double pref_b = mix(b, kMsMinus) - mix(b, kMsPlus);
  if (pref_a > pref_b) {
    lab.minus = a;
    lab.plus = b;
  } else if (pref_b > pref_a) {
    lab.minus = b;
    lab.plus = a;
  } else {
    lab.minus = a;
    lab.plus = b;
  }
  return lab;
}

TransitionSet zeeman_aligned(const SpinSystem& sys) {
  sys.validate();
  const auto& p = sys.projection;
  if (p.b_perp > 1e-12 * std::max(p.b_par, 1e-3)) {
    throw std::invalid_argument("zeeman_aligned requires a field with no transverse component");
  }
  const double z = sys.gamma * p.b_par;
  return TransitionSet{std::abs(sys.d_split - z), std::abs(sys.d_split + z), sys.manifold};
}

SpinSolution solve_spin(const SpinSystem& sys) {
  SpinSolution s;
  s.eigen = eigensystem(hamiltonian(sys));
  s.mixing = mixing_matrix(s.eigen);
  s.labels = label_states(s.mixing);
  const double e0 = s.eigen.levels[s.labels.zero];
  s.transitions.f_minus = std::abs(s.eigen.levels[s.labels.minus] - e0);
  s.transitions.f_plus = std::abs(s.eigen.levels[s.labels.plus] - e0);
  s.transitions.manifold = sys.manifold;
  return s;
}

TransitionSet transition_frequencies(const SpinSystem& sys) { return solve_spin(sys).transitions; }

LacFields lac_fields(double d_gs, double d_es, double gamma) {
  if (!(d_gs > 0.0) || !(d_es > 0.0) || !(gamma > 0.0)) {
    throw std::invalid_argument("lac_fields: inputs must be positive");
  }
  return LacFields{d_gs / gamma, d_es / gamma};
}

}  // namespace pdmr
