#pragma once

#include "flowguide/chunk.hpp"

namespace flowguide::so3 {

Mat3 hat(const Vec3& w);

/// Rodrigues exponential map, axis-angle -> rotation matrix.
/// Switches to the series expansion below 1e-6 rad.
Mat3 exp_map(const Vec3& w);

/// Left Jacobian J_l of SO(3): exp((w + dw)^) ~= exp((J_l(w) dw)^) exp(w^).
/// Used to pull energy gradients back through the exponential map.
Mat3 left_jacobian(const Vec3& w);

/// vee(M - M^T): adjoint helper mapping a matrix cotangent on exp(w^) to
/// the axis-angle cotangent, via w_bar = J_l(w)^T * unskew(Qbar Q^T).
Vec3 unskew_twice(const Mat3& m);

}  // namespace flowguide::so3
