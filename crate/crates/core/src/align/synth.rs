use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

use super::camera::{project, Intrinsics};
use super::energy::{window_pairs, Correspondence, CorrespondenceSet};
use super::frame::{Frame, Scene};

pub const FRAME_WIDTH: usize = 64;
pub const FRAME_HEIGHT: usize = 48;
const SCENE_DEPTH: f64 = 0.05;
const SCENE_RELIEF: f64 = 0.004;

/// Default textured height field rendered at the default resolution.
pub fn render_synthetic_scene(seed: u64, camera: &RigidTransform<f64>, intrinsics: &Intrinsics) -> Frame {
    Scene::new(seed, SCENE_DEPTH, SCENE_RELIEF).render(camera, intrinsics, FRAME_WIDTH, FRAME_HEIGHT)
}

/// `count` matched points per window pair, drawn from pixels of frame `i`
/// that are visible in frame `j`, with iid Gaussian noise on both ends.
pub fn synthetic_correspondences<R: Rng + ?Sized>(
    frames: &[Frame],
    cameras: &[RigidTransform<f64>],
    max_gap: usize,
    count: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<CorrespondenceSet> {
    let noise = Normal::new(0.0, noise_sd).map_err(|_| Error::Config(format!("invalid noise {noise_sd}")))?;
    let mut pairs = Vec::new();
    for (i, j) in window_pairs(frames.len(), max_gap) {
        let (fi, fj) = (&frames[i], &frames[j]);
        let to_j = cameras[j].inverse().compose(&cameras[i]);
        let mut found = 0;
        let mut attempts = 0;
        while found < count {
            attempts += 1;
            if attempts > 100 * count {
                return Err(Error::DegenerateInput(format!("frames {i} and {j} barely overlap")));
            }
            let (u, v) = (rng.random_range(0..fi.width), rng.random_range(0..fi.height));
            let Some(p_i) = fi.point(u, v) else { continue };
            let p_j = to_j.apply(&p_i);
            let Ok(px) = project(&p_j, &fj.intrinsics) else { continue };
            if !(px[0] >= 0.0 && px[1] >= 0.0 && px[0] <= (fj.width - 1) as f64 && px[1] <= (fj.height - 1) as f64) {
                continue;
            }
            let mut jitter = || if noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
            let p_i = p_i + crate::Vec3::new(jitter(), jitter(), jitter());
            let p_j = p_j + crate::Vec3::new(jitter(), jitter(), jitter());
            pairs.push(Correspondence { i, j, p_i, p_j });
            found += 1;
        }
    }
    Ok(CorrespondenceSet { pairs })
}

/// Frames and correspondences for a known set of camera poses.
#[derive(Clone, Debug)]
pub struct SyntheticWindow {
    pub cameras: Vec<RigidTransform<f64>>,
    pub frames: Vec<Frame>,
    pub correspondences: CorrespondenceSet,
}

impl SyntheticWindow {
    pub fn new<R: Rng + ?Sized>(
        scene: &Scene,
        cameras: Vec<RigidTransform<f64>>,
        intrinsics: &Intrinsics,
        max_gap: usize,
        count: usize,
        noise_sd: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let frames: Vec<Frame> = cameras
            .iter()
            .map(|c| scene.render(c, intrinsics, FRAME_WIDTH, FRAME_HEIGHT))
            .collect();
        let correspondences = synthetic_correspondences(&frames, &cameras, max_gap, count, noise_sd, rng)?;
        Ok(SyntheticWindow { cameras, frames, correspondences })
    }
}
