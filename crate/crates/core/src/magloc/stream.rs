use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sim::{ActuatorFieldModel, DipoleParams, HallArrayReading};

use super::invert::{estimate_from_grid, predicted_reading};
use super::{
    directional_second_difference, estimate_pose_5dof, subtract_actuator_field, InversionSettings,
    MagMeasurement5DoF,
};

/// A frame is gated when its differentiated residual exceeds this multiple
/// of the running median.
pub const OUTLIER_FACTOR: f64 = 5.0;
const MEDIAN_WINDOW: usize = 50;
const MEDIAN_WARMUP: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamEstimate {
    pub measurement: MagMeasurement5DoF,
    pub iterations: usize,
    /// Sum of squared cell residuals, T².
    pub residual: f64,
    /// Norm of the second-differenced residual grid, T/m².
    pub curvature_residual: f64,
    pub converged: bool,
    /// Rejected by the outlier gate; the previous estimate was carried forward.
    pub gated: bool,
}

impl StreamEstimate {
    pub fn accepted(&self) -> bool {
        self.converged && !self.gated
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn curvature_norm(
    reading: &HallArrayReading,
    actuator: &ActuatorFieldModel,
    dipole: &DipoleParams,
    estimate: &MagMeasurement5DoF,
) -> Result<f64> {
    let mut diff = subtract_actuator_field(reading, actuator);
    let model = predicted_reading(estimate, dipole)?;
    for (row, m) in diff.values.iter_mut().zip(model.values.iter()) {
        for (v, p) in row.iter_mut().zip(m.iter()) {
            *v -= p;
        }
    }
    Ok(directional_second_difference(&diff)
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt())
}

/// Localizes every frame, warm-starting each from the previous estimate.
///
/// Frame 0 (and any frame without an accepted predecessor) starts from the
/// grid search. Frames that diverge or fail the outlier gate are flagged and
/// carry the last accepted estimate forward.
pub fn localize_stream(
    readings: &[HallArrayReading],
    actuator: &ActuatorFieldModel,
    dipole: &DipoleParams,
    settings: &InversionSettings,
) -> Result<Vec<StreamEstimate>> {
    settings.validate()?;
    let mut out: Vec<StreamEstimate> = Vec::with_capacity(readings.len());
    let mut last: Option<MagMeasurement5DoF> = None;
    let mut history: Vec<f64> = Vec::new();
    for reading in readings {
        let attempt = match &last {
            Some(prev) => estimate_pose_5dof(reading, actuator, dipole, prev, settings),
            None => estimate_from_grid(reading, actuator, dipole, settings),
        };
        let entry = match attempt {
            Ok(inv) => {
                let curvature = curvature_norm(reading, actuator, dipole, &inv.estimate)?;
                let recent = &history[history.len().saturating_sub(MEDIAN_WINDOW)..];
                let gated = last.is_some()
                    && recent.len() >= MEDIAN_WARMUP
                    && curvature > OUTLIER_FACTOR * median(recent);
                let measurement = match (&last, gated) {
                    (Some(prev), true) => MagMeasurement5DoF { timestamp: reading.timestamp, ..*prev },
                    _ => inv.estimate,
                };
                if !gated {
                    history.push(curvature);
                    last = Some(inv.estimate);
                }
                StreamEstimate {
                    measurement,
                    iterations: inv.iterations,
                    residual: inv.residual,
                    curvature_residual: curvature,
                    converged: true,
                    gated,
                }
            }
            Err(Error::Divergence { iterations, residual, best_position, best_heading }) => {
                let fallback = MagMeasurement5DoF {
                    timestamp: reading.timestamp,
                    position: best_position.into(),
                    heading: best_heading.into(),
                };
                let measurement = match &last {
                    Some(prev) => MagMeasurement5DoF { timestamp: reading.timestamp, ..*prev },
                    None => fallback,
                };
                StreamEstimate {
                    measurement,
                    iterations,
                    residual,
                    curvature_residual: f64::NAN,
                    converged: false,
                    gated: false,
                }
            }
            Err(e) => return Err(e),
        };
        out.push(entry);
    }
    Ok(out)
}

/// One `t x y z hx hy hz iterations residual curvature converged gated`
/// record per frame.
pub fn diagnostics_text(estimates: &[StreamEstimate]) -> String {
    let mut out = String::new();
    for e in estimates {
        let m = &e.measurement;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            m.timestamp,
            m.position[0],
            m.position[1],
            m.position[2],
            m.heading[0],
            m.heading[1],
            m.heading[2],
            e.iterations,
            e.residual,
            e.curvature_residual,
            u8::from(e.converged),
            u8::from(e.gated)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::sim::{sample_hall_array, simulate, MotionProfile, SimConfig};
    use crate::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_stream() {
        let out = localize_stream(&[], &ActuatorFieldModel::default(), &DipoleParams::default(), &InversionSettings::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn constant_pose_converges_quickly_after_frame_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DipoleParams::default();
        let act = ActuatorFieldModel::default();
        let pose = Pose::new(Vec3::new(0.012, -0.02, -0.058), Vec3::new(0.1, 0.3, 0.9));
        let readings: Vec<_> = (0..10)
            .map(|k| sample_hall_array(&pose, &d, &act, k as f64 * 0.02, 0.0, &mut rng).unwrap())
            .collect();
        let s = InversionSettings::default();
        let out = localize_stream(&readings, &act, &d, &s).unwrap();
        assert_eq!(out.len(), 10);
        for e in &out {
            assert!(e.accepted());
            assert!((e.measurement.position - out[0].measurement.position).norm() < 1e-12);
            assert!((e.measurement.position - pose.translation).norm() < 1e-9);
        }
        for e in &out[1..] {
            assert!(e.iterations <= 3, "{}", e.iterations);
        }
        let single = localize_stream(&readings[..1], &act, &d, &s).unwrap();
        let direct = estimate_from_grid(&readings[0], &act, &d, &s).unwrap();
        assert_eq!(single[0].measurement, direct.estimate);
    }

    #[test]
    fn noisy_stream_tracks_ground_truth() {
        let cfg = SimConfig {
            duration: 20.0,
            seed: 12,
            motion_profile: MotionProfile::FastComplex,
            ..SimConfig::default()
        };
        let ds = simulate(&cfg).unwrap();
        let out = localize_stream(&ds.mag, &cfg.actuator, &cfg.dipole, &InversionSettings::default()).unwrap();
        let mut worst: f64 = 0.0;
        for (e, s) in out.iter().zip(ds.gt.samples()) {
            worst = worst.max((e.measurement.position - s.pose.translation).norm());
        }
        assert!(worst < 2e-3, "{worst}");
        assert!(out.iter().filter(|e| e.gated).count() < out.len() / 100 + 1);
        assert_eq!(diagnostics_text(&out).lines().count(), out.len());
    }
}
