#include "pdmr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdmr {

UnitVector UnitVector::from_components(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw std::invalid_argument("direction vector must be finite and nonzero");
  }
  return UnitVector(x / n, y / n, z / n);
}

MagneticField MagneticField::from_vector(const std::array<double, 3>& b) {
  const double n = std::hypot(b[0], b[1], b[2]);
  if (n == 0.0) return MagneticField{};
  return MagneticField{n, UnitVector::from_components(b[0], b[1], b[2])};
}

std::array<double, 3> MagneticField::vector() const {
  return {magnitude * direction.x(), magnitude * direction.y(), magnitude * direction.z()};
}

const std::array<UnitVector, kNumFamilies>& nv_axes() {
  static const std::array<UnitVector, kNumFamilies> axes = {
      UnitVector::from_components(1, 1, 1),
      UnitVector::from_components(1, -1, -1),
      UnitVector::from_components(-1, 1, -1),
      UnitVector::from_components(-1, -1, 1),
  };
  return axes;
}

const std::array<NVFamily, kNumFamilies>& nv_families() {
  static const std::array<NVFamily, kNumFamilies> families = [] {
    std::array<NVFamily, kNumFamilies> out{};
    for (std::size_t i = 0; i < kNumFamilies; ++i) out[i] = NVFamily{i, nv_axes()[i]};
    return out;
  }();
  return families;
}

UnitVector direction_from_miller(int h, int k, int l) {
  if (h == 0 && k == 0 && l == 0) {
    throw std::invalid_argument("Miller indices (0,0,0) do not define a direction");
  }
  return UnitVector::from_components(h, k, l);
}

FieldProjection project_field(const MagneticField& field, const NVFamily& family) {
  const double c = std::clamp(std::abs(field.direction.dot(family.axis)), 0.0, 1.0);
  FieldProjection p;
  p.b_par = field.magnitude * c;
  // sqrt(1 - c^2) loses precision near c = 1; the cross product norm does not.
  const auto& u = field.direction;
  const auto& a = family.axis;
  const double sx = u.y() * a.z() - u.z() * a.y();
  const double sy = u.z() * a.x() - u.x() * a.z();
  const double sz = u.x() * a.y() - u.y() * a.x();
  const double s = std::min(1.0, std::sqrt(sx * sx + sy * sy + sz * sz));
  p.b_perp = field.magnitude * s;
  p.tilt = std::atan2(s, c);
  return p;
}

std::array<double, kNumFamilies> family_angles(const UnitVector& direction) {
  std::array<double, kNumFamilies> out{};
  const MagneticField unit{1.0, direction};
  for (std::size_t i = 0; i < kNumFamilies; ++i) {
    out[i] = project_field(unit, nv_families()[i]).tilt;
  }
  return out;
}

UnitVector orthogonal_to(const UnitVector& d) {
  // Cross with the coordinate axis least aligned with d.
  const double ax = std::abs(d.x()), ay = std::abs(d.y()), az = std::abs(d.z());
  double ex = 0, ey = 0, ez = 0;
  if (ax <= ay && ax <= az) ex = 1;
  else if (ay <= az) ey = 1;
  else ez = 1;
  return UnitVector::from_components(d.y() * ez - d.z() * ey, d.z() * ex - d.x() * ez,
                                     d.x() * ey - d.y() * ex);
}

}  // namespace pdmr
