#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gapkit {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised when a computed certificate contradicts an invariant that must hold.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kMaxDimension = 8;

/// A coordinate of the circle R/Z in units of 2^-128. Unsigned wrap-around
/// is exactly reduction mod 1, so integer matrices act as exact bijections.
using Fixed = unsigned __int128;
using SignedFixed = __int128;
using Quad = __float128;

inline constexpr double kFixedToUnit = 0x1p-128;
inline constexpr double kUnitToFixed = 0x1p128;

/// Reduce a real number into [0, 1).
inline double wrap01(double v) {
  double r = v - std::floor(v);
  return r >= 1.0 ? 0.0 : r;
}

/// Representative of a mod-1 difference in [-1/2, 1/2).
inline double lift(double delta) {
  return delta - std::floor(delta + 0.5);
}

inline double circle_distance(double a, double b) {
  double d = std::fabs(a - b);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

inline Fixed fixed_from_double(double v) {
  double r = v - std::floor(v);
  if (!(r < 1.0)) return 0;
  return static_cast<Fixed>(r * kUnitToFixed);
}

inline double fixed_to_double(Fixed q) { return static_cast<double>(q) * kFixedToUnit; }

/// Signed offset in [-1/2, 1/2) as a fixed-point displacement.
inline Fixed fixed_offset(double v) {
  double r = v - std::nearbyint(v);
  if (r >= 0.5) r -= 1.0;
  if (r < -0.5) r += 1.0;
  if (r == -0.5) return static_cast<Fixed>(1) << 127;
  return static_cast<Fixed>(static_cast<SignedFixed>(r * kUnitToFixed));
}

/// |q| of a lifted difference, saturating at 1/2.
inline Fixed fixed_abs(Fixed diff) {
  auto s = static_cast<SignedFixed>(diff);
  if (s >= 0) return diff;
  return static_cast<Fixed>(0) - diff;
}

/// A point of the d-torus, d <= kMaxDimension. Coordinates are stored as
/// exact 128-bit fractions and read back as doubles in [0,1).
class TorusPoint {
 public:
  TorusPoint() = default;

  explicit TorusPoint(std::span<const double> coords) : dim_(coords.size()) {
    check_dim(dim_);
    for (std::size_t i = 0; i < dim_; ++i) q_[i] = fixed_from_double(coords[i]);
  }
  TorusPoint(std::initializer_list<double> coords)
      : TorusPoint(std::span<const double>(coords.begin(), coords.size())) {}
  explicit TorusPoint(const std::vector<double>& coords)
      : TorusPoint(std::span<const double>(coords)) {}

  static TorusPoint from_fixed(std::span<const Fixed> q) {
    TorusPoint p;
    p.dim_ = q.size();
    check_dim(p.dim_);
    for (std::size_t i = 0; i < p.dim_; ++i) p.q_[i] = q[i];
    return p;
  }

  static TorusPoint origin(std::size_t dim) {
    TorusPoint p;
    p.dim_ = dim;
    check_dim(dim);
    return p;
  }

  std::size_t dim() const { return dim_; }
  double operator[](std::size_t i) const { return fixed_to_double(q_[i]); }
  Fixed fixed(std::size_t i) const { return q_[i]; }
  std::span<const Fixed> fixed_coords() const { return {q_.data(), dim_}; }
  std::vector<double> to_vector() const {
    std::vector<double> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = (*this)[i];
    return out;
  }

  /// Concatenation, the point (x, y) of a product torus.
  static TorusPoint concat(const TorusPoint& a, const TorusPoint& b) {
    TorusPoint p;
    p.dim_ = a.dim_ + b.dim_;
    check_dim(p.dim_);
    for (std::size_t i = 0; i < a.dim_; ++i) p.q_[i] = a.q_[i];
    for (std::size_t i = 0; i < b.dim_; ++i) p.q_[a.dim_ + i] = b.q_[i];
    return p;
  }
  TorusPoint slice(std::size_t offset, std::size_t count) const {
    if (offset + count > dim_) throw InvalidArgument("slice out of range");
    return from_fixed(fixed_coords().subspan(offset, count));
  }

  friend bool operator==(const TorusPoint& a, const TorusPoint& b) {
    if (a.dim_ != b.dim_) return false;
    for (std::size_t i = 0; i < a.dim_; ++i)
      if (a.q_[i] != b.q_[i]) return false;
    return true;
  }
  friend bool operator<(const TorusPoint& a, const TorusPoint& b) {
    for (std::size_t i = 0; i < std::min(a.dim_, b.dim_); ++i) {
      if (a.q_[i] != b.q_[i]) return a.q_[i] < b.q_[i];
    }
    return a.dim_ < b.dim_;
  }

 private:
  static void check_dim(std::size_t d) {
    if (d == 0 || d > kMaxDimension)
      throw InvalidArgument("torus dimension must be in [1, " + std::to_string(kMaxDimension) + "]");
  }

  std::array<Fixed, kMaxDimension> q_{};
  std::size_t dim_ = 0;
};

/// Sup over coordinates of the circle distance; balls are cubes.
inline double torus_distance(const TorusPoint& a, const TorusPoint& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("torus_distance: dimension mismatch");
  Fixed d = 0;
  for (std::size_t i = 0; i < a.dim(); ++i) d = std::max(d, fixed_abs(a.fixed(i) - b.fixed(i)));
  return fixed_to_double(d);
}

/// a - b with every coordinate lifted to [-1/2, 1/2).
inline std::vector<double> lifted_difference(const TorusPoint& a, const TorusPoint& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("lifted_difference: dimension mismatch");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i)
    out[i] = static_cast<double>(static_cast<SignedFixed>(a.fixed(i) - b.fixed(i))) * kFixedToUnit;
  return out;
}

/// p + v mod 1.
inline TorusPoint translate(const TorusPoint& p, std::span<const double> v) {
  if (p.dim() != v.size()) throw InvalidArgument("translate: dimension mismatch");
  std::array<Fixed, kMaxDimension> q{};
  for (std::size_t i = 0; i < p.dim(); ++i) q[i] = p.fixed(i) + fixed_offset(v[i]);
  return TorusPoint::from_fixed(std::span<const Fixed>(q.data(), p.dim()));
}

}  // namespace gapkit
