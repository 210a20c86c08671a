use crate::error::{Error, Result};
use crate::geometry::pose_error;
use crate::Trajectory;

/// Default segment lengths, meters.
pub const DEFAULT_BUCKETS: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];

/// End-of-segment errors for every segment of one length.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentErrors {
    pub length: f64,
    pub trans: Vec<f64>,
    pub rot: Vec<f64>,
}

/// RMSE over the segments of one length; `None` when no segment reached it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BucketStats {
    pub length: f64,
    pub trans_rmse: Option<f64>,
    pub rot_rmse: Option<f64>,
    pub segments: usize,
}

fn rms(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt())
}

impl SegmentErrors {
    pub fn empty(length: f64) -> Self {
        SegmentErrors { length, trans: Vec::new(), rot: Vec::new() }
    }

    pub fn extend(&mut self, other: &SegmentErrors) {
        self.trans.extend_from_slice(&other.trans);
        self.rot.extend_from_slice(&other.rot);
    }

    pub fn stats(&self) -> BucketStats {
        BucketStats { length: self.length, trans_rmse: rms(&self.trans), rot_rmse: rms(&self.rot), segments: self.trans.len() }
    }
}

pub fn check_buckets(lengths: &[f64]) -> Result<()> {
    if lengths.is_empty() {
        return Err(Error::Config("no bucket lengths".into()));
    }
    let increasing = lengths.windows(2).all(|w| w[1] > w[0]);
    if !increasing || lengths[0] <= 0.0 || !lengths.iter().all(|l| l.is_finite()) {
        return Err(Error::Config("bucket lengths must be positive and strictly increasing".into()));
    }
    Ok(())
}

/// Ground-truth arc length at arbitrary times within its span.
fn arc_length_at(gt: &Trajectory, times: &[f64]) -> Result<Vec<f64>> {
    let gt_times = gt.times();
    let cum = gt.path_lengths();
    times
        .iter()
        .map(|&t| {
            if t < gt.start_time() || t > gt.end_time() {
                return Err(Error::OutOfRange { time: t, start: gt.start_time(), end: gt.end_time() });
            }
            let k = gt_times.partition_point(|&x| x <= t);
            if k == 0 {
                return Ok(cum[0]);
            }
            if k == gt_times.len() {
                return Ok(cum[k - 1]);
            }
            let (t0, t1) = (gt_times[k - 1], gt_times[k]);
            Ok(cum[k - 1] + (cum[k] - cum[k - 1]) * (t - t0) / (t1 - t0))
        })
        .collect()
}

/// Start-aligned relative errors over ground-truth arc-length segments.
///
/// For each bucket length `L` and each estimate sample `i`, the segment ends
/// at the first estimate sample `j` whose ground-truth arc length from `i`
/// reaches `L`. The estimated motion `est_i⁻¹ ∘ est_j` is composed onto the
/// true start pose and compared with the true end pose.
pub fn segment_errors(est: &Trajectory, gt: &Trajectory, lengths: &[f64]) -> Result<Vec<SegmentErrors>> {
    check_buckets(lengths)?;
    let times = est.times();
    let arc = arc_length_at(gt, &times)?;
    let est_poses = est.poses();
    let gt_poses: Vec<_> = times.iter().map(|&t| gt.interpolate(t)).collect::<Result<_>>()?;
    let mut out: Vec<SegmentErrors> = lengths.iter().map(|&l| SegmentErrors::empty(l)).collect();
    for i in 0..times.len() {
        let start = est_poses[i].to_transform().inverse();
        let true_start = gt_poses[i].to_transform();
        for bucket in out.iter_mut() {
            let j = arc.partition_point(|&a| a < arc[i] + bucket.length);
            if j >= times.len() {
                continue;
            }
            let moved = start.compose(&est_poses[j].to_transform());
            let aligned = true_start.compose(&moved).to_pose().pose;
            let e = pose_error(&aligned, &gt_poses[j]);
            bucket.trans.push(e.translation);
            bucket.rot.push(e.rotation);
        }
    }
    Ok(out)
}

/// Translational and rotational RMSE per bucket length.
pub fn rmse_by_length(est: &Trajectory, gt: &Trajectory, lengths: &[f64]) -> Result<Vec<BucketStats>> {
    Ok(segment_errors(est, gt, lengths)?.iter().map(SegmentErrors::stats).collect())
}
