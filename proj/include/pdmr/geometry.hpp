#pragma once

#include <array>
#include <cstddef>

namespace pdmr {

/// Direction in the cubic crystal frame. Always normalized.
class UnitVector {
public:
  UnitVector() = default;

  /// Normalizes (x, y, z). Throws std::invalid_argument on a zero or non-finite vector.
  static UnitVector from_components(double x, double y, double z);

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  std::array<double, 3> as_array() const { return {x_, y_, z_}; }

  double dot(const UnitVector& other) const {
    return x_ * other.x_ + y_ * other.y_ + z_ * other.z_;
  }
  UnitVector operator-() const { return UnitVector(-x_, -y_, -z_); }

private:
  UnitVector(double x, double y, double z) : x_(x), y_(y), z_(z) {}

  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 1.0;
};

struct MagneticField {
  double magnitude = 0.0;  // tesla, >= 0
  UnitVector direction;

  /// Builds a field from a Cartesian vector in tesla. A zero vector yields magnitude 0 along z.
  static MagneticField from_vector(const std::array<double, 3>& b);
  std::array<double, 3> vector() const;
};

struct NVFamily {
  std::size_t index = 0;  // 0..3
  UnitVector axis;
};

/// Field components relative to one NV axis. b_par is unsigned.
struct FieldProjection {
  double b_par = 0.0;   // tesla
  double b_perp = 0.0;  // tesla
  double tilt = 0.0;    // radians, folded into [0, pi/2]
};

inline constexpr std::size_t kNumFamilies = 4;

/// The four tetrahedral NV axes: (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1), normalized.
/// Order is fixed so family indices are stable.
const std::array<UnitVector, kNumFamilies>& nv_axes();
const std::array<NVFamily, kNumFamilies>& nv_families();

UnitVector direction_from_miller(int h, int k, int l);

FieldProjection project_field(const MagneticField& field, const NVFamily& family);

std::array<double, kNumFamilies> family_angles(const UnitVector& direction);

/// Some unit vector orthogonal to `direction`; deterministic.
UnitVector orthogonal_to(const UnitVector& direction);

}  // namespace pdmr
