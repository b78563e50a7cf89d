#pragma once

namespace pdmr::constants {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C

// NV- ground-state zero-field splitting and electron gyromagnetic ratio.
inline constexpr double kZeroFieldSplittingGs = 2.87e9;  // Hz
inline constexpr double kGyromagneticRatio = 28.0e9;     // Hz/T

// Excited-state splitting placing the ESLAC at 51 mT.
inline constexpr double kEslacField = 51.0e-3;  // T
inline constexpr double kZeroFieldSplittingEs = kGyromagneticRatio * kEslacField;  // Hz

// Photon and band-offset energies (eV). Reference values only; not used by the dynamics.
inline constexpr double kPumpPhotonEnergy = 2.33;     // 532 nm
inline constexpr double kConductionBandOffset = 0.7;  // 3E -> CB
inline constexpr double kValenceBandOffset = 1.21;    // VB -> 2E
inline constexpr double kZplNvMinus = 1.945;          // 637 nm
inline constexpr double kZplNvZero = 2.15;            // 575 nm

// Device geometry.
inline constexpr double kContactResistance = 240e3;  // ohm
inline constexpr double kElectrodeLength = 100e-6;   // m
inline constexpr double kElectrodeWidth = 50e-6;     // m

}  // namespace pdmr::constants
