// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

namespace occ {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double dist2(const Vec3& a, const Vec3& b) {
    const Vec3 d = a - b;
    return dot(d, d);
}

inline Vec3 mat_vec(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Vec3 mat_t_vec(const Mat3& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2], m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

inline Mat3 transpose(const Mat3& a) {
    Mat3 t{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
    return t;
}

/// (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat from_axis_angle(const Vec3& axis, double angle);
    static Quat yaw(double angle) { return from_axis_angle({0, 0, 1}, angle); }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
    Quat normalized() const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
};

Quat operator*(const Quat& a, const Quat& b);

/// Rotation matrix of q / |q|. Throws ContractError for a zero quaternion.
Mat3 quat_to_rot(const Quat& q);
/// Back-propagates dL/dR of quat_to_rot into dL/dq, including the renormalization.
std::array<double, 4> quat_to_rot_vjp(const Quat& q, const Mat3& d_rot);

/// Rigid transform mapping local coordinates to the parent frame: x' = R x + t.
struct Pose {
    Quat rotation;
    Vec3 translation{0.0, 0.0, 0.0};

    Vec3 apply(const Vec3& p) const { return mat_vec(quat_to_rot(rotation), p) + translation; }
    Pose inverse() const;
    Pose compose(const Pose& inner) const;
};

} // namespace occ
