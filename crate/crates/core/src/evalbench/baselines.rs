use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::magloc::MagMeasurement5DoF;
use crate::sim::{integrate_deltas, VisMeasurement};
use crate::{Pose, TimedPose, Trajectory, Vec3};

/// How the magnetic baseline fills the rotation about the dipole axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RollRule {
    /// Roll of the initial pose, held throughout.
    #[default]
    HoldInitial,
    Zero,
    /// True roll at each timestamp; an oracle for ablations.
    GroundTruth,
}

impl fmt::Display for RollRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RollRule::HoldInitial => "hold_initial",
            RollRule::Zero => "zero",
            RollRule::GroundTruth => "ground_truth",
        })
    }
}

impl FromStr for RollRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hold_initial" => Ok(RollRule::HoldInitial),
            "zero" => Ok(RollRule::Zero),
            "ground_truth" => Ok(RollRule::GroundTruth),
            _ => Err(Error::Config(format!("unknown roll rule {s:?}"))),
        }
    }
}

/// Visual deltas chained from `initial`.
pub fn evo_only_baseline(vis: &[VisMeasurement], initial: &Pose) -> Result<Trajectory> {
    if vis.is_empty() {
        return Err(Error::DegenerateInput("empty visual stream".into()));
    }
    integrate_deltas(initial, vis)
}

/// Absolute magnetic estimates with the roll filled by `rule`. `gt` is only
/// read by [`RollRule::GroundTruth`].
pub fn magnetic_only_baseline(
    mag: &[MagMeasurement5DoF],
    rule: RollRule,
    initial: &Pose,
    gt: Option<&Trajectory>,
) -> Result<Trajectory> {
    if mag.is_empty() {
        return Err(Error::DegenerateInput("empty magnetic stream".into()));
    }
    let samples = mag
        .iter()
        .map(|m| {
            let (pitch, yaw) = m.heading_angles();
            let roll = match rule {
                RollRule::HoldInitial => initial.rotation[0],
                RollRule::Zero => 0.0,
                RollRule::GroundTruth => {
                    let gt = gt.ok_or_else(|| Error::Config("ground_truth roll rule needs ground truth".into()))?;
                    gt.interpolate(m.timestamp)?.rotation[0]
                }
            };
            Ok(TimedPose { time: m.timestamp, pose: Pose::new(m.position, Vec3::new(roll, pitch, yaw)) })
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(samples)
}
