use std::f64::consts::TAU;

use rand::Rng;

use crate::geometry::{Pose, TimedPose};
use crate::Trajectory;
use crate::Vec3;

use super::{stream_rng, SimConfig};

/// `amplitude · sin(2π · frequency · t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Harmonic {
    fn value(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }

    fn rate(&self, t: f64) -> f64 {
        self.amplitude * TAU * self.frequency * (TAU * self.frequency * t + self.phase).cos()
    }

    fn peak_rate(&self) -> f64 {
        (self.amplitude * TAU * self.frequency).abs()
    }
}

/// Smooth six-DoF motion: each coordinate is an offset plus a sum of harmonics.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionModel {
    pub centers: [f64; 6],
    pub harmonics: [Vec<Harmonic>; 6],
}

impl MotionModel {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let mut rng = stream_rng(cfg.seed, 0);
        let profile = cfg.motion_profile;
        let (f_lo, f_hi) = profile.frequency_band();
        let h = cfg.workspace_half_extent;
        let angles = profile.angle_amplitudes();
        // Peak excursion per axis; the harmonic amplitudes sum to it.
        let reach = [0.9 * h, 0.9 * h, 0.9 * 0.4 * h, angles[0], angles[1], angles[2]];
        let mut harmonics: [Vec<Harmonic>; 6] = Default::default();
        for (dof, slot) in harmonics.iter_mut().enumerate() {
            let weights: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
            let total: f64 = weights.iter().sum();
            *slot = weights
                .iter()
                .map(|w| Harmonic {
                    amplitude: reach[dof] * w / total,
                    frequency: rng.random_range(f_lo..f_hi),
                    phase: rng.random_range(0.0..TAU),
                })
                .collect();
        }
        let yaw_center = rng.random_range(-0.5..0.5);
        let mut model = MotionModel {
            centers: [0.0, 0.0, -cfg.standoff, 0.0, 0.0, yaw_center],
            harmonics,
        };
        let bound = model.speed_bound();
        let cap = cfg.speed_cap();
        if bound > cap {
            // Slowing every DoF together keeps the rotational and
            // translational content of the profile in proportion.
            let k = cap / bound;
            for h in model.harmonics.iter_mut().flatten() {
                h.frequency *= k;
            }
        }
        model
    }

    pub fn pose_at(&self, t: f64) -> Pose<f64> {
        let v: [f64; 6] =
            std::array::from_fn(|d| self.centers[d] + self.harmonics[d].iter().map(|h| h.value(t)).sum::<f64>());
        Pose::from_array(v)
    }

    pub fn velocity_at(&self, t: f64) -> Vec3 {
        Vec3::from(std::array::from_fn(|d| self.harmonics[d].iter().map(|h| h.rate(t)).sum()))
    }

    /// Upper bound on translational speed over all time.
    pub fn speed_bound(&self) -> f64 {
        (0..3)
            .map(|d| self.harmonics[d].iter().map(Harmonic::peak_rate).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Ground truth sampled at `k / mag_rate`, `k = 0 .. duration · mag_rate`.
pub fn generate_trajectory(cfg: &SimConfig) -> Trajectory {
    let model = MotionModel::from_config(cfg);
    let n = (cfg.duration * cfg.mag_rate).round() as usize;
    let samples = (0..n.max(1))
        .map(|k| {
            let time = k as f64 / cfg.mag_rate;
            TimedPose { time, pose: model.pose_at(time) }
        })
        .collect();
    Trajectory::new(samples).expect("harmonic motion is finite and time-ordered")
}
