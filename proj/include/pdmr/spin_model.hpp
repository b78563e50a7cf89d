#pragma once

#include <array>
#include <complex>

#include <Eigen/Dense>

#include "pdmr/constants.hpp"
#include "pdmr/geometry.hpp"

namespace pdmr {

enum class Manifold { ground, excited };

/// Spin-1 system for one NV family. Energies in Hz.
struct SpinSystem {
  double d_split = constants::kZeroFieldSplittingGs;  // Hz
  double gamma = constants::kGyromagneticRatio;       // Hz/T
  FieldProjection projection;
  Manifold manifold = Manifold::ground;

  void validate() const;
};

/// Basis ordering used everywhere: index 0 -> m_s=-1, 1 -> m_s=0, 2 -> m_s=+1.
inline constexpr int kMsMinus = 0;
inline constexpr int kMsZero = 1;
inline constexpr int kMsPlus = 2;

using Hamiltonian = Eigen::Matrix3cd;

struct EigenSystem {
  std::array<double, 3> levels{};  // ascending, Hz
  Eigen::Matrix3cd states;         // column i is eigenvector of levels[i] in the m_s basis
};

/// |<eigenstate_i | m_s = j>|^2, row i = eigenstate (in EigenSystem order), column j = m_s index.
using MixingMatrix = Eigen::Matrix3d;

struct TransitionSet {
  double f_minus = 0.0;  // Hz
  double f_plus = 0.0;   // Hz
  Manifold manifold = Manifold::ground;
};

/// Eigenstate indices (into EigenSystem::levels) carrying each m_s label.
struct StateLabels {
  int zero = 1;
  int minus = 0;
  int plus = 2;
};

/// H = D Sz^2 + gamma (B_par Sz + B_perp Sx).
Hamiltonian hamiltonian(const SpinSystem& sys);

/// Throws std::invalid_argument if H is not Hermitian to 1e-12 relative.
EigenSystem eigensystem(const Hamiltonian& h);

MixingMatrix mixing_matrix(const EigenSystem& es);
MixingMatrix mixing_matrix(const SpinSystem& sys);

/// Label eigenstates: zero = max m_s=0 weight; the remaining two by dominant +/-1 weight.
/// Exact ties resolve by energy order (rows are ascending), lower energy -> minus.
StateLabels label_states(const MixingMatrix& mix);

/// Closed form |D -/+ gamma B_par|. Requires b_perp == 0.
TransitionSet zeeman_aligned(const SpinSystem& sys);

TransitionSet transition_frequencies(const SpinSystem& sys);

struct LacFields {
  double b_gslac = 0.0;  // T
  double b_eslac = 0.0;  // T
};

LacFields lac_fields(double d_gs, double d_es, double gamma);

/// Everything the photodynamics needs for one family in one manifold.
struct SpinSolution {
  EigenSystem eigen;
  MixingMatrix mixing;
  StateLabels labels;
  TransitionSet transitions;
};

SpinSolution solve_spin(const SpinSystem& sys);

}  // namespace pdmr
