#pragma once

#include <memory>

#include "gapkit/systems.hpp"

namespace gapkit::testing {

inline IntMatrix cat_matrix() {
  IntMatrix a(2, 2);
  a << 2, 1, 1, 1;
  return a;
}

inline IntMatrix mane3d_matrix() {
  IntMatrix a(3, 3);
  a << 1, -2, -1, -1, 3, 2, -1, 3, 3;
  return a;
}

inline DynSystem cat_map() { return DynSystem::linear(cat_matrix()); }

/// Cat map perturbed in B(0, rho): unstable eigenvalue rescaled to theta at 0.
inline DynSystem mane2d(double rho = 0.05, double theta = 1.2) {
  ProfileParams params;
  params.theta = theta;
  params.target = EigenTarget::Unstable;
  return make_slowdown_system(cat_map(), TorusPoint::origin(2), rho, params, SystemKind::PerturbedLinear);
}

/// Katok-style slowdown of the cat map near the origin.
inline DynSystem katok2d(double rho = 0.05, double theta = 1.5) {
  ProfileParams params;
  params.theta = theta;
  params.target = EigenTarget::Unstable;
  return make_slowdown_system(cat_map(), TorusPoint::origin(2), rho, params, SystemKind::Slowdown);
}

/// 3-D base with the center eigenvalue pushed past 1 at the origin.
inline DynSystem mane3d(double rho = 0.05, double theta = 1.2) {
  ProfileParams params;
  params.theta = theta;
  params.target = EigenTarget::Center;
  return make_slowdown_system(DynSystem::linear(mane3d_matrix()), TorusPoint::origin(3), rho, params,
                              SystemKind::PerturbedLinear);
}

}  // namespace gapkit::testing
