// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/geom.hpp"

#include "occ/error.hpp"

namespace occ {

Quat Quat::from_axis_angle(const Vec3& axis, double angle) {
    const double n = occ::norm(axis);
    require(n > 0.0, "axis must be nonzero");
    const double s = std::sin(0.5 * angle) / n;
    return {std::cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s};
}

Quat Quat::normalized() const {
    const double n = norm();
    require(n > 0.0, "cannot normalize a zero quaternion");
    return {w / n, x / n, y / n, z / n};
}

Quat operator*(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 quat_to_rot(const Quat& q) {
    const Quat u = q.normalized();
    const double w = u.w, x = u.x, y = u.y, z = u.z;
    return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
             {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
             {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

std::array<double, 4> quat_to_rot_vjp(const Quat& q, const Mat3& g) {
    const double n = q.norm();
    require(n > 0.0, "cannot differentiate a zero quaternion");
    const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
    // Gradient w.r.t. the unit quaternion components.
    const double dw = 2 * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    const double dx = 2 * (y * g[0][1] + z * g[0][2] + y * g[1][0] - 2 * x * g[1][1] - w * g[1][2] + z * g[2][0] +
                           w * g[2][1] - 2 * x * g[2][2]);
    const double dy = 2 * (-2 * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2] - w * g[2][0] +
                           z * g[2][1] - 2 * y * g[2][2]);
    const double dz = 2 * (-2 * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - 2 * z * g[1][1] + y * g[1][2] +
                           x * g[2][0] + y * g[2][1]);
    // Project through u = q / |q|: dq = (du - u (u . du)) / |q|.
    const double proj = w * dw + x * dx + y * dy + z * dz;
    return {(dw - w * proj) / n, (dx - x * proj) / n, (dy - y * proj) / n, (dz - z * proj) / n};
}

Pose Pose::inverse() const {
    const Quat inv = rotation.normalized().conjugate();
    const Vec3 t = mat_vec(quat_to_rot(inv), translation);
    return {inv, {-t[0], -t[1], -t[2]}};
}

Pose Pose::compose(const Pose& inner) const {
    return {rotation.normalized() * inner.rotation.normalized(), apply(inner.translation)};
}

} // namespace occ
