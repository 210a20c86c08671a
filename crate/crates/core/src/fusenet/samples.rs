use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, wrap_angle};
use crate::magloc::MagMeasurement5DoF;
use crate::sim::VisMeasurement;
use crate::{Pose, Trajectory, Vec3};

pub const MAG_INPUTS: usize = 5;
pub const VIS_INPUTS: usize = 6;
pub const OUTPUTS: usize = 6;

/// Encoding of a frame-to-frame motion as `[tx, ty, tz, roll, pitch, yaw]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeltaKind {
    /// `a⁻¹ ∘ b`, chained by composition.
    Relative,
    /// World-frame translation difference and wrapped Euler-angle
    /// difference, chained by addition.
    #[default]
    Difference,
}

impl DeltaKind {
    pub fn between(self, a: &Pose, b: &Pose) -> [f64; 6] {
        match self {
            DeltaKind::Relative => relative_pose(a, b).pose.to_array(),
            DeltaKind::Difference => {
                let t = b.translation - a.translation;
                let r = (b.rotation - a.rotation).map(wrap_angle);
                [t[0], t[1], t[2], r[0], r[1], r[2]]
            }
        }
    }

    /// Inverse of [`DeltaKind::between`]: `apply(a, between(a, b)) = b`.
    pub fn apply(self, pose: &Pose, delta: &[f64; 6]) -> Pose {
        match self {
            DeltaKind::Relative => pose.then(&Pose::from_array(*delta)),
            DeltaKind::Difference => Pose::new(
                pose.translation + Vec3::new(delta[0], delta[1], delta[2]),
                pose.rotation + Vec3::new(delta[3], delta[4], delta[5]),
            ),
        }
    }
}

impl fmt::Display for DeltaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeltaKind::Relative => "relative",
            DeltaKind::Difference => "difference",
        })
    }
}

impl FromStr for DeltaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(DeltaKind::Relative),
            "difference" => Ok(DeltaKind::Difference),
            _ => Err(Error::Config(format!("unknown delta kind {s:?}"))),
        }
    }
}

/// How each magnetic estimate is presented to the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MagEncoding {
    /// Position and heading as estimated.
    Absolute,
    /// Change since the previous magnetic estimate (zero for the first one),
    /// heading changes wrapped to (−π, π].
    #[default]
    Increment,
}

impl fmt::Display for MagEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MagEncoding::Absolute => "absolute",
            MagEncoding::Increment => "increment",
        })
    }
}

impl FromStr for MagEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(MagEncoding::Absolute),
            "increment" => Ok(MagEncoding::Increment),
            _ => Err(Error::Config(format!("unknown magnetic encoding {s:?}"))),
        }
    }
}

/// One fusion step: the magnetic samples that arrived since the previous
/// visual frame, the visual motion of this frame, and optionally the true
/// motion.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedSample {
    pub timestamp: f64,
    /// Start of the interval, i.e. the previous visual timestamp.
    pub previous_timestamp: f64,
    pub mag_inputs: Vec<[f64; MAG_INPUTS]>,
    pub vis_input: [f64; VIS_INPUTS],
    pub target: Option<[f64; OUTPUTS]>,
}

/// Position followed by heading `(pitch, yaw)`.
pub fn mag_features(m: &MagMeasurement5DoF) -> [f64; MAG_INPUTS] {
    let (pitch, yaw) = m.heading_angles();
    let p = m.position;
    [p[0], p[1], p[2], pitch, yaw]
}

fn mag_input(mag: &[MagMeasurement5DoF], i: usize, encoding: MagEncoding) -> [f64; MAG_INPUTS] {
    let f = mag_features(&mag[i]);
    if encoding == MagEncoding::Absolute {
        return f;
    }
    if i == 0 {
        return [0.0; MAG_INPUTS];
    }
    let p = mag_features(&mag[i - 1]);
    [f[0] - p[0], f[1] - p[1], f[2] - p[2], wrap_angle(f[3] - p[3]), wrap_angle(f[4] - p[4])]
}

fn check_ordered(name: &str, times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for t in times {
        if !t.is_finite() || t <= prev {
            return Err(Error::Alignment(format!("{name} timestamps are not strictly increasing at {t}")));
        }
        prev = t;
    }
    Ok(())
}

/// Buckets the magnetic stream by visual arrival interval.
///
/// A sample is emitted for visual frame `k ≥ 1` when exactly `rate_ratio`
/// magnetic measurements fall in `(t_{k−1}, t_k]`. Visual inputs are encoded
/// with `kind`; for [`DeltaKind::Difference`] the visual deltas are first
/// chained from `origin`, the pose assigned to the first visual frame.
/// Magnetic inputs use `encoding`. Targets come from `gt` when given.
pub fn align_streams(
    mag: &[MagMeasurement5DoF],
    vis: &[VisMeasurement],
    gt: Option<&Trajectory>,
    rate_ratio: usize,
    kind: DeltaKind,
    encoding: MagEncoding,
    origin: &Pose,
) -> Result<Vec<FusedSample>> {
    if rate_ratio == 0 {
        return Err(Error::Config("rate ratio must be at least 1".into()));
    }
    if mag.is_empty() || vis.is_empty() {
        return Err(Error::Alignment("empty input stream".into()));
    }
    check_ordered("magnetic", mag.iter().map(|m| m.timestamp))?;
    check_ordered("visual", vis.iter().map(|v| v.timestamp))?;

    let mut out = Vec::new();
    let mut chained = *origin;
    let mut next = 0;
    for k in 1..vis.len() {
        let (t0, t1) = (vis[k - 1].timestamp, vis[k].timestamp);
        let vis_input = match kind {
            DeltaKind::Relative => vis[k].delta.to_array(),
            DeltaKind::Difference => {
                let moved = chained.then(&vis[k].delta);
                let d = kind.between(&chained, &moved);
                chained = moved;
                d
            }
        };
        while next < mag.len() && mag[next].timestamp <= t0 {
            next += 1;
        }
        let start = next;
        while next < mag.len() && mag[next].timestamp <= t1 {
            next += 1;
        }
        if next - start != rate_ratio {
            continue;
        }
        let target = match gt {
            Some(gt) => Some(kind.between(&gt.interpolate(t0)?, &gt.interpolate(t1)?)),
            None => None,
        };
        out.push(FusedSample {
            timestamp: t1,
            previous_timestamp: t0,
            mag_inputs: (start..next).map(|i| mag_input(mag, i, encoding)).collect(),
            vis_input,
            target,
        });
    }
    if out.is_empty() {
        return Err(Error::Alignment("magnetic and visual streams do not overlap".into()));
    }
    Ok(out)
}

/// Chains deltas onto `initial`, one pose per delta.
pub fn integrate(initial: &Pose, deltas: &[[f64; OUTPUTS]], kind: DeltaKind) -> Vec<Pose> {
    let mut pose = *initial;
    deltas
        .iter()
        .map(|d| {
            pose = kind.apply(&pose, d);
            pose
        })
        .collect()
}
