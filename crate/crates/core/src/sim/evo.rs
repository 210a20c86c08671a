use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, Pose, TimedPose};
use crate::Trajectory;
use crate::Vec3;

use super::SimConfig;

/// Frame-to-frame motion reported by visual odometry, expressed in the
/// previous camera frame. The first measurement of a stream carries the
/// identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisMeasurement {
    pub timestamp: f64,
    pub delta: Pose<f64>,
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z = rng.random_range(-1.0..1.0);
    let phi = rng.random_range(0.0..TAU);
    let s = (1.0f64 - z * z).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Emulated visual odometry at `k / vis_rate` over the span of `gt`.
///
/// Each delta is the true relative pose plus Gaussian noise on all six
/// components and a translation bias of `vis_drift_rate · |true step|` along
/// a unit direction that rotates at `drift_wander` rad/s in the camera frame.
pub fn emulate_evo_stream<R: Rng + ?Sized>(
    gt: &Trajectory,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<Vec<VisMeasurement>> {
    let trans = Normal::new(0.0, cfg.vis_trans_noise_sd)
        .map_err(|_| Error::Config("invalid visual translation noise".into()))?;
    let rot = Normal::new(0.0, cfg.vis_rot_noise_sd)
        .map_err(|_| Error::Config("invalid visual rotation noise".into()))?;
    let u = random_unit(rng);
    let v = u.cross(&random_unit(rng)).normalized().unwrap_or_else(|| {
        let alt = if u.x().abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        u.cross(&alt).normalized().expect("non-parallel")
    });
    let phase = rng.random_range(0.0..TAU);
    let first = (gt.start_time() * cfg.vis_rate).ceil() as i64;
    let mut out: Vec<VisMeasurement> = Vec::new();
    let mut prev: Option<Pose<f64>> = None;
    let mut k = first;
    loop {
        let t = k as f64 / cfg.vis_rate;
        if t > gt.end_time() {
            break;
        }
        let pose = gt.interpolate(t)?;
        let delta = match prev {
            None => Pose::identity(),
            Some(p) => {
                let truth = relative_pose(&p, &pose).pose;
                let angle = cfg.drift_wander * t + phase;
                let bias = (u * angle.cos() + v * angle.sin())
                    * (cfg.vis_drift_rate * truth.translation.norm());
                let mut noisy = truth.translation + bias;
                let mut r = truth.rotation;
                if cfg.vis_trans_noise_sd > 0.0 {
                    for i in 0..3 {
                        noisy[i] += trans.sample(rng);
                    }
                }
                if cfg.vis_rot_noise_sd > 0.0 {
                    for i in 0..3 {
                        r[i] += rot.sample(rng);
                    }
                }
                Pose::new(noisy, r)
            }
        };
        out.push(VisMeasurement { timestamp: t, delta });
        prev = Some(pose);
        k += 1;
    }
    Ok(out)
}

/// Chains deltas onto `initial`; one output sample per measurement.
pub fn integrate_deltas(initial: &Pose<f64>, vis: &[VisMeasurement]) -> Result<Trajectory> {
    let mut pose = *initial;
    let mut samples = Vec::with_capacity(vis.len());
    for (k, m) in vis.iter().enumerate() {
        if k > 0 {
            pose = pose.then(&m.delta);
        }
        samples.push(TimedPose { time: m.timestamp, pose });
    }
    Trajectory::new(samples)
}
