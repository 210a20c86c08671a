use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fusenet::{align_streams, predict_trajectory, Checkpoint, DeltaKind, FusedSample, MagEncoding};
use crate::geometry::format_timed_pose;
use crate::magloc::{localize_stream, InversionSettings, MagMeasurement5DoF, StreamEstimate};
use crate::sim::{Dataset, SimConfig, VisMeasurement};
use crate::{Pose, Trajectory};

use super::baselines::{evo_only_baseline, magnetic_only_baseline, RollRule};
use super::rmse::{check_buckets, segment_errors, BucketStats, SegmentErrors};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Fusion,
    EvoOnly,
    MagneticOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fusion, Method::EvoOnly, Method::MagneticOnly];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fusion => "fusion",
            Method::EvoOnly => "evo_only",
            Method::MagneticOnly => "magnetic_only",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    pub method: Method,
    pub buckets: Vec<BucketStats>,
}

impl RmseReport {
    pub fn bucket(&self, length: f64) -> Option<&BucketStats> {
        self.buckets.iter().find(|b| b.length == length)
    }
}

/// A dataset whose magnetic stream has been localized frame by frame.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub config: SimConfig,
    pub gt: Trajectory,
    pub mag: Vec<MagMeasurement5DoF>,
    pub vis: Vec<VisMeasurement>,
    pub stream: Vec<StreamEstimate>,
}

impl PreparedDataset {
    pub fn from_dataset(ds: &Dataset, settings: &InversionSettings) -> Result<Self> {
        let config = ds.sim_config()?;
        let stream = localize_stream(&ds.mag, &config.actuator, &config.dipole, settings)?;
        Ok(PreparedDataset {
            mag: stream.iter().map(|s| s.measurement).collect(),
            config,
            gt: ds.gt.clone(),
            vis: ds.vis.clone(),
            stream,
        })
    }

    /// True pose at the first visual timestamp, where every method starts.
    pub fn origin(&self) -> Result<Pose> {
        let first = self.vis.first().ok_or_else(|| Error::DegenerateInput("empty visual stream".into()))?;
        self.gt.interpolate(first.timestamp)
    }

    /// Aligned samples with targets, for training.
    pub fn fused_samples(
        &self,
        rate_ratio: usize,
        kind: DeltaKind,
        encoding: MagEncoding,
    ) -> Result<Vec<FusedSample>> {
        align_streams(&self.mag, &self.vis, Some(&self.gt), rate_ratio, kind, encoding, &self.origin()?)
    }
}

/// Per-method reports plus the trajectories they were computed from, one
/// list per dataset.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub reports: Vec<RmseReport>,
    pub trajectories: Vec<Vec<(Method, Trajectory)>>,
}

/// Pools segment errors across datasets for each method and bucket, so the
/// aggregate is the RMSE of all segments rather than a mean of per-dataset
/// RMSEs.
pub fn compare_trajectories(
    runs: &[(Vec<(Method, Trajectory)>, &Trajectory)],
    lengths: &[f64],
) -> Result<Vec<RmseReport>> {
    check_buckets(lengths)?;
    if runs.is_empty() {
        return Err(Error::DegenerateInput("no datasets to evaluate".into()));
    }
    let mut methods: Vec<Method> = runs.iter().flat_map(|(m, _)| m.iter().map(|(k, _)| *k)).collect();
    methods.sort();
    methods.dedup();
    let mut reports = Vec::new();
    for method in methods {
        let mut pooled: Vec<SegmentErrors> = lengths.iter().map(|&l| SegmentErrors::empty(l)).collect();
        for (trajectories, gt) in runs {
            for (_, est) in trajectories.iter().filter(|(m, _)| *m == method) {
                for (acc, seg) in pooled.iter_mut().zip(segment_errors(est, gt, lengths)?) {
                    acc.extend(&seg);
                }
            }
        }
        reports.push(RmseReport { method, buckets: pooled.iter().map(SegmentErrors::stats).collect() });
    }
    Ok(reports)
}

/// Runs fusion, visual-only and magnetic-only on every dataset.
pub fn compare_methods(
    datasets: &[PreparedDataset],
    ckpt: &Checkpoint,
    lengths: &[f64],
    rule: RollRule,
) -> Result<Comparison> {
    if datasets.is_empty() {
        return Err(Error::DegenerateInput("no datasets to evaluate".into()));
    }
    let mut trajectories = Vec::with_capacity(datasets.len());
    for d in datasets {
        let origin = d.origin()?;
        trajectories.push(vec![
            (Method::Fusion, predict_trajectory(ckpt, &d.mag, &d.vis, &origin)?),
            (Method::EvoOnly, evo_only_baseline(&d.vis, &origin)?),
            (Method::MagneticOnly, magnetic_only_baseline(&d.mag, rule, &origin, Some(&d.gt))?),
        ]);
    }
    let runs: Vec<_> = trajectories.iter().cloned().zip(datasets.iter().map(|d| &d.gt)).collect();
    let reports = compare_trajectories(&runs, lengths)?;
    Ok(Comparison { reports, trajectories })
}

pub const PROTOCOL: &str = "start-aligned relative pose error at the first estimate sample whose \
ground-truth arc length from the segment start reaches the bucket length";

/// `bucket_length method trans_rmse rot_rmse n` lines; empty buckets print `-`.
pub fn plot_data_text(reports: &[RmseReport]) -> String {
    let mut out = format!("# protocol: {PROTOCOL}\n# bucket_length method trans_rmse rot_rmse n\n");
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:e}"));
    let lengths: Vec<f64> = reports.first().map(|r| r.buckets.iter().map(|b| b.length).collect()).unwrap_or_default();
    for length in lengths {
        for r in reports {
            if let Some(b) = r.bucket(length) {
                writeln!(out, "{} {} {} {} {}", length, r.method, fmt(b.trans_rmse), fmt(b.rot_rmse), b.segments).unwrap();
            }
        }
    }
    out
}

/// Trajectory text records with the method appended to each line.
pub fn overlay_text(trajectories: &[(Method, Trajectory)], gt: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz roll pitch yaw method\n");
    let mut emit = |tag: &str, t: &Trajectory| {
        for s in t.samples() {
            format_timed_pose(&mut out, s);
            writeln!(out, " {tag}").unwrap();
        }
    };
    emit("ground_truth", gt);
    for (m, t) in trajectories {
        emit(&m.to_string(), t);
    }
    out
}
