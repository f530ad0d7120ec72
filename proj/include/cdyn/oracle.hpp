#pragma once

// Reference configuration-space dynamics (Lagrange-d'Alembert with the
// Chetaev force rule) and the closed-form rolling-sphere motion.

#include "cdyn/model.hpp"

namespace cdyn {

struct OracleRhs {
  VectorXd qdd;
  VectorXd mu;            // constraint-force multipliers
  double residual{0.0};   // of the assembled linear system
};

/// Solves
///   M q_ddot + sum_k s_k a_k mu_k = dL/dq - D_v(dL/dq_dot)
///   a_k q_ddot = -(remaining terms of the differentiated constraint)
/// with a_k = dg_k/dq_dot and s_k = -1 for velocity constraints, and
/// a_k = dg_k/dq and s_k = +1 (differentiated twice) for holonomic ones.
/// Throws SingularMass or SingularConstraintBlock.
OracleRhs lda_rhs(const System& sys, const ConfigState& cs);

struct RollingSphereParams {
  double g_e{9.8};
  double alpha{0.5235987755982988};  // pi/6
  double omega_z0{2.5};
};

struct RollingSphereMotion {
  double x{0.0};
  double xdot{0.0};
  double omega_z{0.0};
};

/// Uniform sphere rolling from rest down the incline:
/// x = (5/14) g_e sin(alpha) t^2, omega_z constant.
RollingSphereMotion rolling_sphere_analytic(double t, const RollingSphereParams& params = {});

}  // namespace cdyn
