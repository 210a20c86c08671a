//! Rotation parameterizations.
//!
//! Euler angles follow the intrinsic Z-Y-X convention: a triple
//! `(roll, pitch, yaw)` maps to `Rz(yaw) * Ry(pitch) * Rx(roll)`.

use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Pitch magnitudes closer than this to ±π/2 are treated as gimbal lock.
pub const GIMBAL_MARGIN: f64 = 1e-3;

/// Result of decomposing a rotation matrix into Euler angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerAngles<S> {
    /// `(roll, pitch, yaw)` in radians.
    pub angles: Vec3<S>,
    /// Set when |pitch| is within [`GIMBAL_MARGIN`] of π/2; roll is then forced
    /// to zero and yaw absorbs the remaining rotation.
    pub gimbal_locked: bool,
}

/// Wraps an angle into `(-π, π]`. Values already in range are returned as is.
pub fn wrap_angle<S: Real>(x: S) -> S {
    let pi = S::PI();
    if x > -pi && x <= pi {
        return x;
    }
    let two_pi = pi + pi;
    let mut y = x - two_pi * ((x + pi) / two_pi).floor();
    if y <= -pi {
        y += two_pi;
    }
    if y > pi {
        y -= two_pi;
    }
    y
}

pub fn rot_x<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = a.sin_cos();
    let (o, z) = (S::one(), S::zero());
    Mat3([[o, z, z], [z, c, -s], [z, s, c]])
}

pub fn rot_y<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = a.sin_cos();
    let (o, z) = (S::one(), S::zero());
    Mat3([[c, z, s], [z, o, z], [-s, z, c]])
}

pub fn rot_z<S: Real>(a: S) -> Mat3<S> {
    let (s, c) = a.sin_cos();
    let (o, z) = (S::one(), S::zero());
    Mat3([[c, -s, z], [s, c, z], [z, z, o]])
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)` written out in closed form.
pub fn euler_to_matrix<S: Real>(r: Vec3<S>) -> Mat3<S> {
    let (sr, cr) = r[0].sin_cos();
    let (sp, cp) = r[1].sin_cos();
    let (sy, cy) = r[2].sin_cos();
    Mat3([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])
}

pub fn matrix_to_euler<S: Real>(m: &Mat3<S>) -> EulerAngles<S> {
    let r = &m.0;
    let cos_pitch = (r[0][0] * r[0][0] + r[1][0] * r[1][0]).sqrt();
    let pitch = (-r[2][0]).atan2(cos_pitch);
    let gimbal_locked = cos_pitch < S::lit(GIMBAL_MARGIN.sin());
    let (roll, yaw) = if gimbal_locked {
        // roll = 0 branch: R[0][1] = -sin(yaw), R[1][1] = cos(yaw).
        (S::zero(), (-r[0][1]).atan2(r[1][1]))
    } else {
        (r[2][1].atan2(r[2][2]), r[1][0].atan2(r[0][0]))
    };
    EulerAngles {
        angles: Vec3([wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)]),
        gimbal_locked,
    }
}

/// Axis-angle vector from `R - Rᵀ`.
fn vee_antisymmetric<S: Real>(m: &Mat3<S>) -> Vec3<S> {
    let r = &m.0;
    let half = S::lit(0.5);
    Vec3([
        (r[2][1] - r[1][2]) * half,
        (r[0][2] - r[2][0]) * half,
        (r[1][0] - r[0][1]) * half,
    ])
}

/// Geodesic rotation angle in `[0, π]`.
pub fn rotation_angle<S: Real>(m: &Mat3<S>) -> S {
    let s = vee_antisymmetric(m).norm();
    let c = (m.trace() - S::one()) * S::lit(0.5);
    s.atan2(c)
}

/// Exponential map from an axis-angle vector to a rotation matrix.
pub fn so3_exp<S: Real>(w: Vec3<S>) -> Mat3<S> {
    let theta2 = w.norm_squared();
    let k = Mat3::skew(&w);
    let k2 = k * k;
    let (a, b) = if theta2 < S::lit(1e-16) {
        (S::one() - theta2 / S::lit(6.0), S::lit(0.5) - theta2 / S::lit(24.0))
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (S::one() - theta.cos()) / theta2)
    };
    Mat3::identity() + k.scale(a) + k2.scale(b)
}

/// Logarithm map; inverse of [`so3_exp`] for angles in `[0, π]`.
pub fn so3_log<S: Real>(m: &Mat3<S>) -> Vec3<S> {
    let v = vee_antisymmetric(m);
    let s = v.norm();
    let c = (m.trace() - S::one()) * S::lit(0.5);
    let theta = s.atan2(c);
    if s > S::lit(1e-7) {
        return v * (theta / s);
    }
    if c > S::zero() {
        return v;
    }
    // Near π: R ≈ 2 a aᵀ - I.
    let r = &m.0;
    let diag = [r[0][0], r[1][1], r[2][2]];
    let k = (0..3)
        .max_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap())
        .unwrap();
    let mut axis = Vec3::zeros();
    let ak = ((diag[k] + S::one()) * S::lit(0.5)).max(S::zero()).sqrt();
    axis[k] = ak;
    for j in 0..3 {
        if j != k {
            axis[j] = (r[k][j] + r[j][k]) * S::lit(0.25) / ak;
        }
    }
    if axis.dot(&v) < S::zero() {
        axis = -axis;
    }
    axis * theta
}

/// Checks `R Rᵀ = I` and `det R = 1` within `tol`.
pub fn is_rotation<S: Real>(m: &Mat3<S>, tol: S) -> bool {
    (*m * m.transpose()).max_abs_diff(&Mat3::identity()) <= tol
        && (m.determinant() - S::one()).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_angles_give_identity() {
        let m = euler_to_matrix(Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(m, Mat3::identity());
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let m = euler_to_matrix(Vec3::new(0.0, 0.0, FRAC_PI_2));
        let y = m * Vec3::new(1.0, 0.0, 0.0);
        assert!((y - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn closed_form_matches_elementary_product() {
        let r = Vec3::new(0.1, 0.2, 0.3);
        let m = euler_to_matrix(r);
        let oracle = rot_z(0.3) * rot_y(0.2) * rot_x(0.1);
        assert!(m.max_abs_diff(&oracle) < 1e-15);
        assert!((m.transpose() * m).max_abs_diff(&Mat3::identity()) < 1e-15);
    }

    #[test]
    fn identity_decomposes_to_zero() {
        let e = matrix_to_euler(&Mat3::<f64>::identity());
        assert_eq!(e.angles, Vec3::new(0.0, 0.0, 0.0));
        assert!(!e.gimbal_locked);
    }

    #[test]
    fn euler_round_trip() {
        let r = Vec3::new(0.1, 0.2, 0.3);
        let back = matrix_to_euler(&euler_to_matrix(r)).angles;
        assert!((back - r).norm() < 1e-9);
    }

    #[test]
    fn gimbal_lock_is_flagged_with_zero_roll() {
        let m = euler_to_matrix(Vec3::new(0.4, FRAC_PI_2, 0.9));
        let e = matrix_to_euler(&m);
        assert!(e.gimbal_locked);
        assert_eq!(e.angles[0], 0.0);
        // Still the same rotation.
        assert!(euler_to_matrix(e.angles).max_abs_diff(&m) < 1e-9);
    }

    #[test]
    fn many_random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lim = FRAC_PI_2 - 0.05;
        for _ in 0..10_000 {
            let r = Vec3::new(
                rng.random_range(-PI..PI),
                rng.random_range(-lim..lim),
                rng.random_range(-PI..PI),
            );
            let back = matrix_to_euler(&euler_to_matrix(r)).angles;
            for k in 0..3 {
                assert!(wrap_angle(back[k] - r[k]).abs() < 1e-9, "{r:?} vs {back:?}");
            }
        }
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 4.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip_including_near_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..500 {
            let axis = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalized()
            .unwrap();
            let angle = if i % 10 == 0 { PI - 1e-9 } else { rng.random_range(0.0..PI) };
            let w = axis * angle;
            let m = so3_exp(w);
            assert!(is_rotation(&m, 1e-12));
            let back = so3_log(&m);
            assert!((so3_exp(back).max_abs_diff(&m)) < 1e-9);
            assert!((rotation_angle(&m) - angle).abs() < 1e-9);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let r = Vec3::new(0.1f32, -0.4, 1.3);
        let back = matrix_to_euler(&euler_to_matrix(r)).angles;
        assert!((back - r).norm() < 1e-5);
    }
}
