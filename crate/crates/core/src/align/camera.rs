use crate::error::{Error, Result};
use crate::Vec3;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        // 1 px per mm at the default 5 cm working distance.
        Intrinsics { fx: 50.0, fy: 50.0, cx: 31.5, cy: 23.5 }
    }
}

impl Intrinsics {
    /// Viewing ray with unit camera-frame depth through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// `∂(u, v)/∂p` at a camera-frame point in front of the camera.
    pub fn projection_jacobian(&self, p: &Vec3) -> [[f64; 3]; 2] {
        let iz = 1.0 / p.z();
        [
            [self.fx * iz, 0.0, -self.fx * p.x() * iz * iz],
            [0.0, self.fy * iz, -self.fy * p.y() * iz * iz],
        ]
    }
}

/// Perspective projection `u = fx·x/z + cx`, `v = fy·y/z + cy`.
pub fn project(p: &Vec3, k: &Intrinsics) -> Result<[f64; 2]> {
    if !(p.z() > 0.0) {
        return Err(Error::BehindCamera { z: p.z() });
    }
    Ok([k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy])
}

/// Camera-frame point at `depth` along the ray through `pixel`.
pub fn unproject(pixel: [f64; 2], depth: f64, k: &Intrinsics) -> Result<Vec3> {
    if !(depth > 0.0) {
        return Err(Error::BehindCamera { z: depth });
    }
    Ok(k.ray(pixel[0], pixel[1]) * depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_projections() {
        let k = Intrinsics { fx: 100.0, fy: 100.0, cx: 64.0, cy: 64.0 };
        assert_eq!(project(&Vec3::new(0.0, 0.0, 1.0), &k).unwrap(), [64.0, 64.0]);
        assert_eq!(project(&Vec3::new(0.1, 0.0, 1.0), &k).unwrap()[0], 74.0);
        assert!(matches!(project(&Vec3::new(0.0, 0.0, -1.0), &k), Err(Error::BehindCamera { .. })));
        assert!(project(&Vec3::new(0.0, 0.0, 0.0), &k).is_err());
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = Intrinsics::default();
        for _ in 0..1000 {
            let p = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.01..0.2));
            let back = unproject(project(&p, &k).unwrap(), p.z(), &k).unwrap();
            assert!((back - p).norm() < 1e-12);
        }
    }
}
