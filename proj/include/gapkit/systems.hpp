#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapkit/torus.hpp"

namespace gapkit {

using IntMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

enum class SystemKind { Linear, Slowdown, PerturbedLinear, External };

std::string to_string(SystemKind kind);
SystemKind parse_system_kind(const std::string& name);

/// Which eigenvalue of the base matrix the slowdown profile rescales at p.
enum class EigenTarget { Unstable, Center, Stable };

std::string to_string(EigenTarget target);
EigenTarget parse_eigen_target(const std::string& name);

/// Raised when an iterative direction estimate does not settle.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

/// Real spectral data of a matrix. Eigenvalues are sorted by decreasing
/// modulus; columns of `basis` are the matching unit eigenvectors.
struct LinearSpectrum {
  std::vector<double> eigenvalues;
  Eigen::MatrixXd basis;
  Eigen::MatrixXd basis_inverse;
  double condition_number = 1.0;
  bool hyperbolic = false;

  /// Throws InvalidArgument when an eigenvalue is not real.
  static LinearSpectrum of(const Eigen::MatrixXd& m);

  std::size_t index_of(EigenTarget target) const;
};

/// Radial profile psi: [0,1] -> [0,1] of the slowdown homeomorphism.
///
/// psi(t) = t * (a + (1 - a) S(t / knee)) for t < knee and psi(t) = t beyond,
/// with S the smootherstep 6s^5 - 15s^4 + 10s^3. So psi'(0) = a and psi is C^2
/// at the knee. Construction rejects a profile that is not strictly increasing.
class SlowdownProfile {
 public:
  SlowdownProfile(double center_scale, double knee);
  static SlowdownProfile identity() { return SlowdownProfile(1.0, 0.5); }

  double center_scale() const { return scale_; }
  double knee() const { return knee_; }
  bool is_identity() const { return scale_ == 1.0; }

  double value(double t) const;
  double derivative(double t) const;
  /// Solves value(t) = s for t in [0, 1].
  double inverse(double s) const;

  /// value(t) / t in extended precision, t in (0, knee).
  Quad ratio(Quad t) const;
  Quad inverse(Quad s) const;

 private:
  double scale_;
  double knee_;
};

/// User-facing profile parameters: target multiplier theta along an
/// eigendirection of the base matrix at the fixed point.
struct ProfileParams {
  double theta = 1.0;
  EigenTarget target = EigenTarget::Unstable;
  double knee = 0.5;
  bool identity = false;
};

/// An invertible map of the d-torus: a linear (or affine) automorphism, a
/// radial slowdown of one inside B(p, rho), or a product of such maps.
/// Evaluation is pure; instances may be shared across threads.
class DynSystem {
 public:
  static DynSystem linear(const IntMatrix& matrix, std::vector<double> offset = {});
  static DynSystem product(const DynSystem& first, const DynSystem& second);

  SystemKind kind() const { return kind_; }
  std::size_t dimension() const { return dim_; }
  const IntMatrix& matrix() const { return matrix_; }
  const std::vector<double>& offset() const { return offset_; }
  const TorusPoint& fixed_point() const { return fixed_point_; }
  double rho() const { return rho_; }
  const std::optional<ProfileParams>& profile_params() const { return params_; }
  const std::optional<SlowdownProfile>& profile() const { return profile_; }
  const std::vector<DynSystem>& factors() const { return factors_; }

  /// Spectrum of the (block-diagonal) base matrix.
  const LinearSpectrum& spectrum() const;

  /// The linear/affine model underlying this system; identical for linear kinds.
  DynSystem linear_base() const;

  std::uint64_t iteration_budget() const { return budget_; }
  void set_iteration_budget(std::uint64_t budget) { budget_ = budget; }

  TorusPoint forward(const TorusPoint& x) const;
  TorusPoint inverse(const TorusPoint& x) const;
  /// f^k(x); k < 0 composes the inverse.
  TorusPoint apply(const TorusPoint& x, long long k) const;
  /// x, f(x), ..., f^{n-1}(x).
  std::vector<TorusPoint> orbit(const TorusPoint& x, std::size_t n) const;

  /// A x + c mod 1 with the base matrix.
  TorusPoint apply_linear(const TorusPoint& x) const;
  TorusPoint apply_linear_inverse(const TorusPoint& x) const;

  Eigen::MatrixXd jacobian(const TorusPoint& x) const;
  Eigen::MatrixXd inverse_jacobian(const TorusPoint& x) const;

  /// Radial homeomorphism h of B(p, rho) with f = A o h; identity elsewhere.
  TorusPoint local_profile_map(const TorusPoint& x) const;
  TorusPoint local_profile_inverse(const TorusPoint& x) const;

 private:
  friend DynSystem make_slowdown_system(const DynSystem&, const TorusPoint&, double,
                                        const ProfileParams&, SystemKind);
  DynSystem() = default;

  SystemKind kind_ = SystemKind::Linear;
  std::size_t dim_ = 0;
  IntMatrix matrix_;
  IntMatrix inverse_matrix_;
  std::vector<long long> matrix_rm_;   // row-major copy of matrix_
  std::vector<long long> inverse_rm_;  // row-major copy of inverse_matrix_
  std::vector<double> offset_;
  std::vector<Fixed> offset_q_;
  Fixed inner_q_ = 0;  // knee * rho in fixed units
  Quad rho_q_ = 0;
  TorusPoint fixed_point_;
  double rho_ = 0.0;
  std::optional<ProfileParams> params_;
  std::optional<SlowdownProfile> profile_;
  std::vector<DynSystem> factors_;
  std::shared_ptr<const LinearSpectrum> spectrum_;
  std::uint64_t budget_ = 10'000'000;
};

/// Katok/Mañé-style local modification of a linear base inside B(p, rho).
/// The base must fix p and have no translation part; kind is Slowdown or
/// PerturbedLinear. Throws InvalidArgument for a non-injective profile.
DynSystem make_slowdown_system(const DynSystem& base, const TorusPoint& p, double rho,
                               const ProfileParams& params,
                               SystemKind kind = SystemKind::Slowdown);

/// Unit unstable direction at x, pushed forward along x_{-W}, ..., x.
Eigen::VectorXd unstable_direction(const DynSystem& system, const TorusPoint& x, int window = 30);
/// Unit stable direction at x, pulled back along x_W, ..., x.
Eigen::VectorXd stable_direction(const DynSystem& system, const TorusPoint& x, int window = 30);

/// -log of the expansion of Df along the unstable direction at x.
double geometric_potential(const DynSystem& system, const TorusPoint& x, int window = 30);

struct Potential {
  std::function<double(const TorusPoint&)> evaluator;
  std::optional<double> holder_exponent;
  std::string label;
  std::optional<double> constant_value;

  double operator()(const TorusPoint& x) const { return evaluator(x); }

  static Potential constant(double c);
  /// amplitude * cos(2 pi x_coord)
  static Potential cosine(std::size_t coord, double amplitude = 1.0);
  static Potential geometric(std::shared_ptr<const DynSystem> system, double scale = 1.0,
                             int window = 30);
  /// Phi(x, y) = phi(x) + phi(y) on a product of two copies of dimension `split`.
  static Potential product_sum(const Potential& phi, std::size_t split);
};

struct ZeroBall {
  TorusPoint center;
  double radius = 0.0;
};

/// Non-negative bounded lower semicontinuous lambda.
struct LambdaFunction {
  std::function<double(const TorusPoint&)> evaluator;
  double sup_bound = 1.0;
  std::optional<ZeroBall> zero_ball;
  std::string label;

  double operator()(const TorusPoint& x) const { return evaluator(x); }

  static LambdaFunction constant(double c);
  /// height on X minus the closed ball, 0 on it.
  static LambdaFunction ball_complement(const TorusPoint& center, double radius, double height = 1.0);
};

/// Schema violation in a JSON document; `pointer` names the offending field.
class SchemaError : public Error {
 public:
  SchemaError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// {kind, dimension, matrix, offset, fixedPoint, rho, profile:{theta,target,knee}, seed, factors}
DynSystem system_from_json(const nlohmann::json& doc);
nlohmann::json system_to_json(const DynSystem& system);

}  // namespace gapkit
