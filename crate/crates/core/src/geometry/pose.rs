use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

use super::rotation::{euler_to_matrix, matrix_to_euler, rotation_angle, wrap_angle};

/// 6-DoF pose: translation in meters and Z-Y-X Euler angles `(roll, pitch, yaw)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose<S> {
    pub translation: Vec3<S>,
    pub rotation: Vec3<S>,
}

/// A pose obtained by decomposing a rotation matrix, with the gimbal-lock flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposed<S> {
    pub pose: Pose<S>,
    pub gimbal_locked: bool,
}

impl<S: Real> Pose<S> {
    /// Builds a pose, wrapping the Euler components into `(-π, π]`.
    pub fn new(translation: Vec3<S>, rotation: Vec3<S>) -> Self {
        Pose {
            translation,
            rotation: rotation.map(wrap_angle),
        }
    }

    pub fn identity() -> Self {
        Pose {
            translation: Vec3::zeros(),
            rotation: Vec3::zeros(),
        }
    }

    /// `[tx, ty, tz, roll, pitch, yaw]`.
    pub fn from_array(v: [S; 6]) -> Self {
        Pose::new(Vec3([v[0], v[1], v[2]]), Vec3([v[3], v[4], v[5]]))
    }

    pub fn to_array(&self) -> [S; 6] {
        let (t, r) = (self.translation, self.rotation);
        [t[0], t[1], t[2], r[0], r[1], r[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.is_finite()
    }

    pub fn to_transform(&self) -> RigidTransform<S> {
        RigidTransform {
            rotation: euler_to_matrix(self.rotation),
            translation: self.translation,
        }
    }

    /// `self ∘ delta`, dropping the gimbal-lock flag.
    pub fn then(&self, delta: &Pose<S>) -> Pose<S> {
        self.to_transform()
            .compose(&delta.to_transform())
            .to_pose()
            .pose
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<S> {
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

impl<S: Real> Default for RigidTransform<S> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<S: Real> RigidTransform<S> {
    pub fn new(rotation: Mat3<S>, translation: Vec3<S>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3<S>) -> Vec3<S> {
        self.rotation * *p + self.translation
    }

    pub fn to_homogeneous(&self) -> [[S; 4]; 4] {
        let r = &self.rotation.0;
        let t = &self.translation;
        let (z, o) = (S::zero(), S::one());
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [z, z, z, o],
        ]
    }

    pub fn to_pose(&self) -> Decomposed<S> {
        let e = matrix_to_euler(&self.rotation);
        Decomposed {
            pose: Pose {
                translation: self.translation,
                rotation: e.angles,
            },
            gimbal_locked: e.gimbal_locked,
        }
    }
}

/// `a ∘ b` (applies `b` first).
pub fn compose<S: Real>(a: &RigidTransform<S>, b: &RigidTransform<S>) -> RigidTransform<S> {
    a.compose(b)
}

/// Pose of `b` expressed in the frame of `a`, i.e. `a⁻¹ ∘ b`.
pub fn relative_pose<S: Real>(a: &Pose<S>, b: &Pose<S>) -> Decomposed<S> {
    a.to_transform()
        .inverse()
        .compose(&b.to_transform())
        .to_pose()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseError<S> {
    /// Euclidean distance between translations, meters.
    pub translation: S,
    /// Geodesic angle of `R_gtᵀ R_est`, radians.
    pub rotation: S,
}

pub fn pose_error<S: Real>(est: &Pose<S>, gt: &Pose<S>) -> PoseError<S> {
    let r_est = euler_to_matrix(est.rotation);
    let r_gt = euler_to_matrix(gt.rotation);
    PoseError {
        translation: (est.translation - gt.translation).norm(),
        rotation: rotation_angle(&(r_gt.transpose() * r_est)),
    }
}
