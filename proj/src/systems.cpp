#include "gapkit/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gapkit {

namespace {

constexpr double kFiniteDifferenceStep = 1e-6;

Eigen::MatrixXd to_double(const IntMatrix& m) { return m.cast<double>(); }

std::vector<long long> row_major(const IntMatrix& m) {
  std::vector<long long> out(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return out;
}

// Exact action of an integer matrix on fixed-point coordinates.
TorusPoint integer_map(const std::vector<long long>& a, std::size_t dim, const Fixed* q) {
  std::array<Fixed, kMaxDimension> y{};
  for (std::size_t i = 0; i < dim; ++i) {
    Fixed acc = 0;
    for (std::size_t j = 0; j < dim; ++j)
      acc += static_cast<Fixed>(static_cast<SignedFixed>(a[i * dim + j])) * q[j];
    y[i] = acc;
  }
  return TorusPoint::from_fixed(std::span<const Fixed>(y.data(), dim));
}

SignedFixed round_to_fixed(Quad v) {
  return static_cast<SignedFixed>(v >= 0 ? v + Quad(0.5) : v - Quad(0.5));
}

IntMatrix integer_inverse(const IntMatrix& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd md = to_double(m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(md);
  if (!lu.isInvertible()) throw InvalidArgument("matrix is singular");
  double det = lu.determinant();
  if (std::fabs(std::fabs(det) - 1.0) > 1e-9) {
    std::ostringstream os;
    os << "matrix must have |det| = 1 (got " << det << ")";
    throw InvalidArgument(os.str());
  }
  Eigen::MatrixXd inv = lu.inverse();
  IntMatrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = std::llround(inv(i, j));
  if (m * out != IntMatrix::Identity(n, n)) throw InvalidArgument("integer inverse check failed");
  return out;
}

IntMatrix block_diagonal(const IntMatrix& a, const IntMatrix& b) {
  IntMatrix out = IntMatrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

double spectral_condition(const Eigen::MatrixXd& basis) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

Eigen::VectorXd generic_vector(std::size_t dim, int variant) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    double k = static_cast<double>(i + 1);
    v(static_cast<Eigen::Index>(i)) =
        variant == 0 ? 1.0 / std::sqrt(k) + 0.1 * k : std::cos(2.3 * k + 0.7) + 0.05 * k;
  }
  return v.normalized();
}

Eigen::VectorXd canonical_sign(Eigen::VectorXd v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v(idx) < 0) v = -v;
  return v;
}

}  // namespace

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::Linear: return "linear";
    case SystemKind::Slowdown: return "slowdown";
    case SystemKind::PerturbedLinear: return "perturbed-linear";
    case SystemKind::External: return "external";
  }
  return "unknown";
}

SystemKind parse_system_kind(const std::string& name) {
  if (name == "linear") return SystemKind::Linear;
  if (name == "slowdown") return SystemKind::Slowdown;
  if (name == "perturbed-linear") return SystemKind::PerturbedLinear;
  if (name == "external") return SystemKind::External;
  throw InvalidArgument("unknown system kind '" + name + "'");
}

std::string to_string(EigenTarget target) {
  switch (target) {
    case EigenTarget::Unstable: return "unstable";
    case EigenTarget::Center: return "center";
    case EigenTarget::Stable: return "stable";
  }
  return "unknown";
}

EigenTarget parse_eigen_target(const std::string& name) {
  if (name == "unstable") return EigenTarget::Unstable;
  if (name == "center") return EigenTarget::Center;
  if (name == "stable") return EigenTarget::Stable;
  throw InvalidArgument("unknown eigen target '" + name + "'");
}

// ---------------------------------------------------------------------------
// LinearSpectrum

LinearSpectrum LinearSpectrum::of(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw InvalidArgument("eigen-decomposition failed");
  const auto values = solver.eigenvalues();
  const auto vectors = solver.eigenvectors();
  const Eigen::Index n = m.rows();
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::fabs(values(i).imag()) > 1e-10 * scale)
      throw InvalidArgument("matrix has a non-real eigenvalue; only real spectra are supported");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::fabs(values(a).real()) > std::fabs(values(b).real());
  });
  LinearSpectrum out;
  out.basis.resize(n, n);
  out.hyperbolic = true;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index i = order[static_cast<std::size_t>(k)];
    double mu = values(i).real();
    out.eigenvalues.push_back(mu);
    out.basis.col(k) = canonical_sign(vectors.col(i).real().normalized());
    if (std::fabs(std::fabs(mu) - 1.0) < 1e-9) out.hyperbolic = false;
  }
  out.basis_inverse = out.basis.inverse();
  out.condition_number = spectral_condition(out.basis);
  return out;
}

std::size_t LinearSpectrum::index_of(EigenTarget target) const {
  switch (target) {
    case EigenTarget::Unstable: return 0;
    case EigenTarget::Stable: return eigenvalues.size() - 1;
    case EigenTarget::Center:
      if (eigenvalues.size() < 3) throw InvalidArgument("a center direction needs dimension >= 3");
      return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// SlowdownProfile

SlowdownProfile::SlowdownProfile(double center_scale, double knee)
    : scale_(center_scale), knee_(knee) {
  if (!(center_scale > 0.0) || !std::isfinite(center_scale))
    throw InvalidArgument("profile center scale must be positive");
  if (!(knee > 0.0 && knee < 1.0)) throw InvalidArgument("profile knee must lie in (0,1)");
  constexpr int kSamples = 20000;
  double worst = INFINITY, where = 0.0;
  for (int i = 0; i <= kSamples; ++i) {
    double t = knee_ * i / kSamples;
    double d = derivative(t);
    if (d < worst) {
      worst = d;
      where = t;
    }
  }
  if (!(worst > 0.0)) {
    std::ostringstream os;
    os << "slowdown profile is not injective: psi'(" << where << ") = " << worst
       << " with center scale " << scale_ << " and knee " << knee_
       << "; lower theta or choose a different target eigenvalue";
    throw InvalidArgument(os.str());
  }
}

double SlowdownProfile::value(double t) const {
  if (t >= knee_ || scale_ == 1.0) return t;
  double s = t / knee_;
  double smooth = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
  return t * (scale_ + (1.0 - scale_) * smooth);
}

double SlowdownProfile::derivative(double t) const {
  if (t >= knee_) return 1.0;
  double s = t / knee_;
  double smooth = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
  double dsmooth = 30.0 * s * s * (1.0 - s) * (1.0 - s);
  return scale_ + (1.0 - scale_) * (smooth + s * dsmooth);
}

double SlowdownProfile::inverse(double target) const {
  if (target >= knee_ || scale_ == 1.0) return target;
  if (target <= 0.0) return 0.0;
  double lo = 0.0, hi = knee_;
  double t = std::clamp(target / scale_, lo, hi);
  for (int it = 0; it < 200; ++it) {
    double r = value(t) - target;
    if (r == 0.0) return t;
    if (r > 0) hi = t;
    else lo = t;
    double step = t - r / derivative(t);
    t = (step > lo && step < hi) ? step : 0.5 * (lo + hi);
    if (hi - lo <= 1e-17 * knee_) break;
  }
  return t;
}

Quad SlowdownProfile::ratio(Quad t) const {
  const Quad a = scale_;
  Quad s = t / Quad(knee_);
  Quad smooth = s * s * s * (Quad(10) - Quad(15) * s + Quad(6) * s * s);
  return a + (Quad(1) - a) * smooth;
}

Quad SlowdownProfile::inverse(Quad target) const {
  if (target >= Quad(knee_) || scale_ == 1.0) return target;
  if (target <= 0) return 0;
  const Quad knee = knee_;
  Quad lo = 0, hi = knee;
  Quad t = target / Quad(scale_);
  if (t > hi) t = hi;
  for (int it = 0; it < 400; ++it) {
    Quad r = t * ratio(t) - target;
    if (r == 0) return t;
    if (r > 0) hi = t;
    else lo = t;
    Quad s = t / knee;
    Quad smooth = s * s * s * (Quad(10) - Quad(15) * s + Quad(6) * s * s);
    Quad dsmooth = Quad(30) * s * s * (Quad(1) - s) * (Quad(1) - s);
    Quad d = Quad(scale_) + (Quad(1) - Quad(scale_)) * (smooth + s * dsmooth);
    Quad step = t - r / d;
    Quad next = (step > lo && step < hi) ? step : (lo + hi) / 2;
    if (next == t || hi - lo <= knee * Quad(1e-33)) return next;
    t = next;
  }
  return t;
}

// ---------------------------------------------------------------------------
// DynSystem

DynSystem DynSystem::linear(const IntMatrix& matrix, std::vector<double> offset) {
  if (matrix.rows() != matrix.cols()) throw InvalidArgument("matrix must be square");
  const auto d = static_cast<std::size_t>(matrix.rows());
  if (d == 0 || d > kMaxDimension) throw InvalidArgument("dimension out of range");
  if (offset.empty()) offset.assign(d, 0.0);
  if (offset.size() != d) throw InvalidArgument("offset dimension mismatch");

  DynSystem s;
  s.kind_ = SystemKind::Linear;
  s.dim_ = d;
  s.matrix_ = matrix;
  s.inverse_matrix_ = integer_inverse(matrix);
  s.matrix_rm_ = row_major(s.matrix_);
  s.inverse_rm_ = row_major(s.inverse_matrix_);
  s.offset_ = std::move(offset);
  for (double c : s.offset_) s.offset_q_.push_back(fixed_from_double(c));
  s.fixed_point_ = TorusPoint::origin(d);
  bool translated = std::any_of(s.offset_.begin(), s.offset_.end(), [](double c) { return c != 0.0; });
  if (translated) {
    // (A - I) p = -c, when solvable.
    Eigen::MatrixXd shifted = to_double(matrix) - Eigen::MatrixXd::Identity(matrix.rows(), matrix.cols());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(shifted);
    if (lu.isInvertible()) {
      Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(s.offset_.data(), matrix.rows());
      Eigen::VectorXd p = lu.solve(-c);
      s.fixed_point_ = TorusPoint(std::vector<double>(p.data(), p.data() + p.size()));
    }
  }
  try {
    s.spectrum_ = std::make_shared<LinearSpectrum>(LinearSpectrum::of(to_double(matrix)));
  } catch (const InvalidArgument&) {
    s.spectrum_.reset();
  }
  return s;
}

DynSystem DynSystem::product(const DynSystem& first, const DynSystem& second) {
  if (first.dim_ + second.dim_ > kMaxDimension) throw InvalidArgument("product dimension too large");
  DynSystem s;
  s.kind_ = SystemKind::External;
  s.dim_ = first.dim_ + second.dim_;
  s.matrix_ = block_diagonal(first.matrix_, second.matrix_);
  s.inverse_matrix_ = block_diagonal(first.inverse_matrix_, second.inverse_matrix_);
  s.matrix_rm_ = row_major(s.matrix_);
  s.inverse_rm_ = row_major(s.inverse_matrix_);
  s.offset_ = first.offset_;
  s.offset_.insert(s.offset_.end(), second.offset_.begin(), second.offset_.end());
  s.offset_q_ = first.offset_q_;
  s.offset_q_.insert(s.offset_q_.end(), second.offset_q_.begin(), second.offset_q_.end());
  s.fixed_point_ = TorusPoint::concat(first.fixed_point_, second.fixed_point_);
  s.rho_ = std::max(first.rho_, second.rho_);
  s.factors_ = {first, second};
  s.budget_ = std::min(first.budget_, second.budget_);
  if (first.spectrum_ && second.spectrum_) {
    // Combine blockwise; never re-diagonalise a block matrix with repeated eigenvalues.
    const auto& a = *first.spectrum_;
    const auto& b = *second.spectrum_;
    std::vector<std::pair<double, Eigen::VectorXd>> cols;
    for (std::size_t i = 0; i < a.eigenvalues.size(); ++i) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.dim_));
      v.head(static_cast<Eigen::Index>(first.dim_)) = a.basis.col(static_cast<Eigen::Index>(i));
      cols.emplace_back(a.eigenvalues[i], v);
    }
    for (std::size_t i = 0; i < b.eigenvalues.size(); ++i) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.dim_));
      v.tail(static_cast<Eigen::Index>(second.dim_)) = b.basis.col(static_cast<Eigen::Index>(i));
      cols.emplace_back(b.eigenvalues[i], v);
    }
    std::stable_sort(cols.begin(), cols.end(), [](const auto& x, const auto& y) {
      return std::fabs(x.first) > std::fabs(y.first);
    });
    LinearSpectrum spec;
    spec.basis.resize(static_cast<Eigen::Index>(s.dim_), static_cast<Eigen::Index>(s.dim_));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      spec.eigenvalues.push_back(cols[k].first);
      spec.basis.col(static_cast<Eigen::Index>(k)) = cols[k].second;
    }
    spec.basis_inverse = spec.basis.inverse();
    spec.condition_number = spectral_condition(spec.basis);
    spec.hyperbolic = a.hyperbolic && b.hyperbolic;
    s.spectrum_ = std::make_shared<LinearSpectrum>(std::move(spec));
  }
  return s;
}

const LinearSpectrum& DynSystem::spectrum() const {
  if (!spectrum_) throw InvalidArgument("base matrix has no real spectral decomposition");
  return *spectrum_;
}

DynSystem DynSystem::linear_base() const {
  switch (kind_) {
    case SystemKind::Linear: return *this;
    case SystemKind::Slowdown:
    case SystemKind::PerturbedLinear: {
      DynSystem base = linear(matrix_, offset_);
      base.budget_ = budget_;
      return base;
    }
    case SystemKind::External: return product(factors_[0].linear_base(), factors_[1].linear_base());
  }
  return *this;
}

TorusPoint DynSystem::apply_linear(const TorusPoint& x) const {
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  TorusPoint y = integer_map(matrix_rm_, dim_, x.fixed_coords().data());
  std::array<Fixed, kMaxDimension> q{};
  for (std::size_t i = 0; i < dim_; ++i) q[i] = y.fixed(i) + offset_q_[i];
  return TorusPoint::from_fixed(std::span<const Fixed>(q.data(), dim_));
}

TorusPoint DynSystem::apply_linear_inverse(const TorusPoint& x) const {
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  std::array<Fixed, kMaxDimension> shifted{};
  for (std::size_t i = 0; i < dim_; ++i) shifted[i] = x.fixed(i) - offset_q_[i];
  return integer_map(inverse_rm_, dim_, shifted.data());
}

namespace {

// Radial rescaling of the lifted displacement from p; `scale(r)` maps the
// sup-norm radius r (fixed units) to the multiplier applied to every coordinate.
template <class Scale>
TorusPoint radial_rescale(const TorusPoint& x, const TorusPoint& p, Fixed inner, Scale&& scale) {
  const std::size_t d = x.dim();
  std::array<SignedFixed, kMaxDimension> u{};
  Fixed r = 0;
  for (std::size_t i = 0; i < d; ++i) {
    Fixed diff = x.fixed(i) - p.fixed(i);
    u[i] = static_cast<SignedFixed>(diff);
    r = std::max(r, fixed_abs(diff));
  }
  if (r >= inner) return x;
  if (r == 0) return p;
  Quad factor = scale(static_cast<Quad>(r));
  std::array<Fixed, kMaxDimension> q{};
  for (std::size_t i = 0; i < d; ++i)
    q[i] = p.fixed(i) + static_cast<Fixed>(round_to_fixed(static_cast<Quad>(u[i]) * factor));
  return TorusPoint::from_fixed(std::span<const Fixed>(q.data(), d));
}

}  // namespace

TorusPoint DynSystem::local_profile_map(const TorusPoint& x) const {
  if (!profile_ || profile_->is_identity()) return x;
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  return radial_rescale(x, fixed_point_, inner_q_,
                        [this](Quad r) { return profile_->ratio(r / rho_q_); });
}

TorusPoint DynSystem::local_profile_inverse(const TorusPoint& x) const {
  if (!profile_ || profile_->is_identity()) return x;
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  return radial_rescale(x, fixed_point_, inner_q_, [this](Quad s) {
    Quad target = s / rho_q_;
    return profile_->inverse(target) / target;
  });
}

TorusPoint DynSystem::forward(const TorusPoint& x) const {
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  switch (kind_) {
    case SystemKind::Linear: return apply_linear(x);
    case SystemKind::Slowdown:
    case SystemKind::PerturbedLinear: return apply_linear(local_profile_map(x));
    case SystemKind::External: {
      const std::size_t d1 = factors_[0].dim_;
      return TorusPoint::concat(factors_[0].forward(x.slice(0, d1)),
                                factors_[1].forward(x.slice(d1, dim_ - d1)));
    }
  }
  return x;
}

TorusPoint DynSystem::inverse(const TorusPoint& x) const {
  if (x.dim() != dim_) throw InvalidArgument("point dimension does not match system");
  switch (kind_) {
    case SystemKind::Linear: return apply_linear_inverse(x);
    case SystemKind::Slowdown:
    case SystemKind::PerturbedLinear: return local_profile_inverse(apply_linear_inverse(x));
    case SystemKind::External: {
      const std::size_t d1 = factors_[0].dim_;
      return TorusPoint::concat(factors_[0].inverse(x.slice(0, d1)),
                                factors_[1].inverse(x.slice(d1, dim_ - d1)));
    }
  }
  return x;
}

TorusPoint DynSystem::apply(const TorusPoint& x, long long k) const {
  const auto steps = static_cast<std::uint64_t>(k < 0 ? -k : k);
  if (steps > budget_) throw InvalidArgument("iteration count exceeds the configured budget");
  TorusPoint y = x;
  if (k >= 0) {
    for (std::uint64_t i = 0; i < steps; ++i) y = forward(y);
  } else {
    for (std::uint64_t i = 0; i < steps; ++i) y = inverse(y);
  }
  return y;
}

std::vector<TorusPoint> DynSystem::orbit(const TorusPoint& x, std::size_t n) const {
  std::vector<TorusPoint> out;
  out.reserve(n);
  TorusPoint y = x;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(y);
    if (i + 1 < n) y = forward(y);
  }
  return out;
}

namespace {

template <class Map>
Eigen::MatrixXd finite_difference(std::size_t dim, const TorusPoint& x, Map&& map) {
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd jac(n, n);
  TorusPoint fx = map(x);
  for (std::size_t j = 0; j < dim; ++j) {
    std::vector<double> shifted = x.to_vector();
    shifted[j] += kFiniteDifferenceStep;
    std::vector<double> diff = lifted_difference(map(TorusPoint(shifted)), fx);
    for (std::size_t i = 0; i < dim; ++i)
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = diff[i] / kFiniteDifferenceStep;
  }
  return jac;
}

}  // namespace

Eigen::MatrixXd DynSystem::jacobian(const TorusPoint& x) const {
  switch (kind_) {
    case SystemKind::Linear: return to_double(matrix_);
    case SystemKind::Slowdown:
    case SystemKind::PerturbedLinear:
      return finite_difference(dim_, x, [this](const TorusPoint& p) { return forward(p); });
    case SystemKind::External: {
      const std::size_t d1 = factors_[0].dim_;
      return block_diagonal(factors_[0].jacobian(x.slice(0, d1)),
                            factors_[1].jacobian(x.slice(d1, dim_ - d1)));
    }
  }
  return {};
}

Eigen::MatrixXd DynSystem::inverse_jacobian(const TorusPoint& x) const {
  switch (kind_) {
    case SystemKind::Linear: return to_double(inverse_matrix_);
    case SystemKind::Slowdown:
    case SystemKind::PerturbedLinear:
      return finite_difference(dim_, x, [this](const TorusPoint& p) { return inverse(p); });
    case SystemKind::External: {
      const std::size_t d1 = factors_[0].dim_;
      return block_diagonal(factors_[0].inverse_jacobian(x.slice(0, d1)),
                            factors_[1].inverse_jacobian(x.slice(d1, dim_ - d1)));
    }
  }
  return {};
}

DynSystem make_slowdown_system(const DynSystem& base, const TorusPoint& p, double rho,
                               const ProfileParams& params, SystemKind kind) {
  if (base.kind() != SystemKind::Linear) throw InvalidArgument("slowdown base must be a linear system");
  if (kind != SystemKind::Slowdown && kind != SystemKind::PerturbedLinear)
    throw InvalidArgument("slowdown kind must be slowdown or perturbed-linear");
  if (std::any_of(base.offset().begin(), base.offset().end(), [](double c) { return c != 0.0; }))
    throw InvalidArgument("slowdown base must not carry a translation");
  if (p.dim() != base.dimension()) throw InvalidArgument("fixed point dimension mismatch");
  if (torus_distance(base.forward(p), p) > 1e-12) throw InvalidArgument("p is not a fixed point of the base");
  if (!(rho > 0.0 && rho < 0.5)) throw InvalidArgument("rho must lie in (0, 1/2)");

  double scale = 1.0;
  if (!params.identity) {
    if (!(params.theta > 0.0)) throw InvalidArgument("profile theta must be positive");
    const auto& spec = base.spectrum();
    double mu = std::fabs(spec.eigenvalues[spec.index_of(params.target)]);
    scale = params.theta / mu;
  }

  DynSystem s = base;
  s.kind_ = kind;
  s.fixed_point_ = p;
  s.rho_ = rho;
  s.params_ = params;
  s.profile_ = SlowdownProfile(scale, params.knee);
  s.rho_q_ = static_cast<Quad>(rho) * static_cast<Quad>(kUnitToFixed);
  s.inner_q_ = static_cast<Fixed>(s.rho_q_ * static_cast<Quad>(params.knee));
  return s;
}

// ---------------------------------------------------------------------------
// Directions and the geometric potential

Eigen::VectorXd unstable_direction(const DynSystem& system, const TorusPoint& x, int window) {
  if (window < 1) throw InvalidArgument("window must be positive");
  std::vector<TorusPoint> past(static_cast<std::size_t>(window) + 1);
  past[static_cast<std::size_t>(window)] = x;
  for (int i = window; i > 0; --i) past[static_cast<std::size_t>(i - 1)] = system.inverse(past[static_cast<std::size_t>(i)]);

  std::vector<Eigen::MatrixXd> jacs;
  jacs.reserve(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) jacs.push_back(system.jacobian(past[static_cast<std::size_t>(i)]));

  auto push = [&](Eigen::VectorXd v) {
    for (const auto& j : jacs) v = (j * v).normalized();
    return canonical_sign(v);
  };
  Eigen::VectorXd a = push(generic_vector(system.dimension(), 0));
  Eigen::VectorXd b = push(generic_vector(system.dimension(), 1));
  if (std::fabs(a.dot(b)) < 1.0 - 1e-12)
    throw ConvergenceError("unstable cone iteration did not converge within the window", a);
  return a;
}

Eigen::VectorXd stable_direction(const DynSystem& system, const TorusPoint& x, int window) {
  if (window < 1) throw InvalidArgument("window must be positive");
  std::vector<TorusPoint> future = system.orbit(x, static_cast<std::size_t>(window) + 1);
  std::vector<Eigen::MatrixXd> jacs;
  jacs.reserve(static_cast<std::size_t>(window));
  for (int i = window; i > 0; --i) jacs.push_back(system.inverse_jacobian(future[static_cast<std::size_t>(i)]));

  auto pull = [&](Eigen::VectorXd v) {
    for (const auto& j : jacs) v = (j * v).normalized();
    return canonical_sign(v);
  };
  Eigen::VectorXd a = pull(generic_vector(system.dimension(), 0));
  Eigen::VectorXd b = pull(generic_vector(system.dimension(), 1));
  if (std::fabs(a.dot(b)) < 1.0 - 1e-12)
    throw ConvergenceError("stable cone iteration did not converge within the window", a);
  return a;
}

double geometric_potential(const DynSystem& system, const TorusPoint& x, int window) {
  if (system.kind() == SystemKind::External) {
    const auto& f = system.factors();
    const std::size_t d1 = f[0].dimension();
    return geometric_potential(f[0], x.slice(0, d1), window) +
           geometric_potential(f[1], x.slice(d1, system.dimension() - d1), window);
  }
  Eigen::VectorXd v = unstable_direction(system, x, window);
  return -std::log((system.jacobian(x) * v).norm());
}

// ---------------------------------------------------------------------------
// Potentials and lambda functions

Potential Potential::constant(double c) {
  Potential p;
  p.evaluator = [c](const TorusPoint&) { return c; };
  p.holder_exponent = 1.0;
  p.label = c == 0.0 ? "zero" : "constant";
  p.constant_value = c;
  return p;
}

Potential Potential::cosine(std::size_t coord, double amplitude) {
  Potential p;
  p.evaluator = [coord, amplitude](const TorusPoint& x) {
    return amplitude * std::cos(2.0 * M_PI * x[coord]);
  };
  p.holder_exponent = 1.0;
  p.label = "cos";
  return p;
}

Potential Potential::geometric(std::shared_ptr<const DynSystem> system, double scale, int window) {
  Potential p;
  p.evaluator = [system = std::move(system), scale, window](const TorusPoint& x) {
    return scale * geometric_potential(*system, x, window);
  };
  p.label = "geometric";
  return p;
}

Potential Potential::product_sum(const Potential& phi, std::size_t split) {
  Potential p;
  auto f = phi.evaluator;
  p.evaluator = [f, split](const TorusPoint& z) {
    return f(z.slice(0, split)) + f(z.slice(split, z.dim() - split));
  };
  p.holder_exponent = phi.holder_exponent;
  p.label = phi.label + "+" + phi.label;
  if (phi.constant_value) p.constant_value = 2.0 * *phi.constant_value;
  return p;
}

LambdaFunction LambdaFunction::constant(double c) {
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("lambda must be non-negative and finite");
  LambdaFunction l;
  l.evaluator = [c](const TorusPoint&) { return c; };
  l.sup_bound = c;
  l.label = "constant";
  return l;
}

LambdaFunction LambdaFunction::ball_complement(const TorusPoint& center, double radius, double height) {
  if (!(radius >= 0.0)) throw InvalidArgument("zero-ball radius must be non-negative");
  if (!(height > 0.0)) throw InvalidArgument("lambda height must be positive");
  LambdaFunction l;
  l.evaluator = [center, radius, height](const TorusPoint& x) {
    return torus_distance(x, center) <= radius ? 0.0 : height;
  };
  l.sup_bound = height;
  l.zero_ball = ZeroBall{center, radius};
  l.label = "ball-complement";
  return l;
}

// ---------------------------------------------------------------------------
// JSON descriptors

namespace {

const nlohmann::json& require(const nlohmann::json& doc, const std::string& key, const std::string& at) {
  if (!doc.contains(key)) throw SchemaError(at + "/" + key, "required field is missing");
  return doc.at(key);
}

double read_number(const nlohmann::json& v, const std::string& at) {
  if (!v.is_number()) throw SchemaError(at, "expected a number");
  return v.get<double>();
}

std::vector<double> read_vector(const nlohmann::json& v, const std::string& at) {
  if (!v.is_array()) throw SchemaError(at, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(read_number(v[i], at + "/" + std::to_string(i)));
  return out;
}

IntMatrix read_matrix(const nlohmann::json& v, const std::string& at) {
  if (!v.is_array() || v.empty()) throw SchemaError(at, "expected a non-empty array of rows");
  const std::size_t n = v.size();
  IntMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string row_at = at + "/" + std::to_string(i);
    if (!v[i].is_array() || v[i].size() != n) throw SchemaError(row_at, "matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      if (!v[i][j].is_number_integer()) throw SchemaError(row_at + "/" + std::to_string(j), "expected an integer");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<long long>();
    }
  }
  return m;
}

DynSystem parse_system(const nlohmann::json& doc, const std::string& at) {
  if (!doc.is_object()) throw SchemaError(at.empty() ? "/" : at, "system descriptor must be an object");
  const auto& kind_v = require(doc, "kind", at);
  if (!kind_v.is_string()) throw SchemaError(at + "/kind", "expected a string");
  SystemKind kind;
  try {
    kind = parse_system_kind(kind_v.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw SchemaError(at + "/kind", e.what());
  }

  if (kind == SystemKind::External) {
    const auto& factors = require(doc, "factors", at);
    if (!factors.is_array() || factors.size() != 2) throw SchemaError(at + "/factors", "expected two factor systems");
    DynSystem s = DynSystem::product(parse_system(factors[0], at + "/factors/0"),
                                     parse_system(factors[1], at + "/factors/1"));
    if (doc.contains("dimension") && doc["dimension"] != s.dimension())
      throw SchemaError(at + "/dimension", "does not match the factors");
    return s;
  }

  IntMatrix m = read_matrix(require(doc, "matrix", at), at + "/matrix");
  if (doc.contains("dimension")) {
    const auto& d = doc["dimension"];
    if (!d.is_number_integer() || d.get<long long>() != m.rows())
      throw SchemaError(at + "/dimension", "does not match the matrix size");
  }
  std::vector<double> offset;
  if (doc.contains("offset")) {
    offset = read_vector(doc["offset"], at + "/offset");
    if (offset.size() != static_cast<std::size_t>(m.rows())) throw SchemaError(at + "/offset", "dimension mismatch");
  }
  DynSystem base = [&] {
    try {
      return DynSystem::linear(m, offset);
    } catch (const InvalidArgument& e) {
      throw SchemaError(at + "/matrix", e.what());
    }
  }();
  if (kind == SystemKind::Linear) return base;

  TorusPoint p = TorusPoint::origin(base.dimension());
  if (doc.contains("fixedPoint")) {
    auto c = read_vector(doc["fixedPoint"], at + "/fixedPoint");
    if (c.size() != base.dimension()) throw SchemaError(at + "/fixedPoint", "dimension mismatch");
    p = TorusPoint(c);
  }
  double rho = read_number(require(doc, "rho", at), at + "/rho");
  ProfileParams params;
  params.target = (kind == SystemKind::PerturbedLinear && base.dimension() >= 3) ? EigenTarget::Center
                                                                                 : EigenTarget::Unstable;
  const auto& prof = require(doc, "profile", at);
  const std::string pat = at + "/profile";
  if (!prof.is_object()) throw SchemaError(pat, "expected an object");
  if (prof.contains("identity")) {
    if (!prof["identity"].is_boolean()) throw SchemaError(pat + "/identity", "expected a boolean");
    params.identity = prof["identity"].get<bool>();
  }
  if (!params.identity) params.theta = read_number(require(prof, "theta", pat), pat + "/theta");
  if (prof.contains("target")) {
    if (!prof["target"].is_string()) throw SchemaError(pat + "/target", "expected a string");
    try {
      params.target = parse_eigen_target(prof["target"].get<std::string>());
    } catch (const InvalidArgument& e) {
      throw SchemaError(pat + "/target", e.what());
    }
  }
  if (prof.contains("knee")) params.knee = read_number(prof["knee"], pat + "/knee");
  try {
    return make_slowdown_system(base, p, rho, params, kind);
  } catch (const InvalidArgument& e) {
    throw SchemaError(pat, e.what());
  }
}

}  // namespace

DynSystem system_from_json(const nlohmann::json& doc) { return parse_system(doc, ""); }

nlohmann::json system_to_json(const DynSystem& system) {
  nlohmann::json j;
  j["kind"] = to_string(system.kind());
  j["dimension"] = system.dimension();
  if (system.kind() == SystemKind::External) {
    j["factors"] = nlohmann::json::array({system_to_json(system.factors()[0]), system_to_json(system.factors()[1])});
    return j;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < system.matrix().rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < system.matrix().cols(); ++k) row.push_back(system.matrix()(i, k));
    rows.push_back(row);
  }
  j["matrix"] = rows;
  if (std::any_of(system.offset().begin(), system.offset().end(), [](double c) { return c != 0.0; }))
    j["offset"] = system.offset();
  if (system.kind() == SystemKind::Linear) return j;
  j["fixedPoint"] = system.fixed_point().to_vector();
  j["rho"] = system.rho();
  const auto& p = *system.profile_params();
  nlohmann::json prof;
  if (p.identity) prof["identity"] = true;
  else prof["theta"] = p.theta;
  prof["target"] = to_string(p.target);
  prof["knee"] = p.knee;
  j["profile"] = prof;
  return j;
}

}  // namespace gapkit
