use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

use super::pose::Pose;
use super::rotation::wrap_angle;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPose<S> {
    pub time: S,
    pub pose: Pose<S>,
}

/// Non-empty, strictly time-ordered sequence of poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S> {
    samples: Vec<TimedPose<S>>,
}

impl<S: Real> Trajectory<S> {
    pub fn new(samples: Vec<TimedPose<S>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidTrajectory("no samples".into()));
        }
        for (k, s) in samples.iter().enumerate() {
            if !s.time.is_finite() || !s.pose.is_finite() {
                return Err(Error::InvalidTrajectory(format!("non-finite sample {k}")));
            }
            if k > 0 && !(s.time > samples[k - 1].time) {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamps not strictly increasing at sample {k}"
                )));
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn from_parts(times: &[S], poses: &[Pose<S>]) -> Result<Self> {
        if times.len() != poses.len() {
            return Err(Error::DimensionMismatch {
                context: "trajectory",
                expected: times.len(),
                found: poses.len(),
            });
        }
        Self::new(
            times
                .iter()
                .zip(poses)
                .map(|(&time, &pose)| TimedPose { time, pose })
                .collect(),
        )
    }

    pub fn samples(&self) -> &[TimedPose<S>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> S {
        self.samples[0].time
    }

    pub fn end_time(&self) -> S {
        self.samples[self.samples.len() - 1].time
    }

    pub fn times(&self) -> Vec<S> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn poses(&self) -> Vec<Pose<S>> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    /// Pose at `t`: linear in translation, shortest-arc per Euler component.
    pub fn interpolate(&self, t: S) -> Result<Pose<S>> {
        let (start, end) = (self.start_time(), self.end_time());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange {
                time: t.as_f64(),
                start: start.as_f64(),
                end: end.as_f64(),
            });
        }
        // First index with time > t.
        let hi = self.samples.partition_point(|s| s.time <= t);
        if hi == 0 {
            return Ok(self.samples[0].pose);
        }
        let a = &self.samples[hi - 1];
        if a.time == t || hi == self.samples.len() {
            return Ok(a.pose);
        }
        let b = &self.samples[hi];
        let alpha = (t - a.time) / (b.time - a.time);
        let lerp = |x: S, y: S| x + (y - x) * alpha;
        let translation = Vec3([
            lerp(a.pose.translation[0], b.pose.translation[0]),
            lerp(a.pose.translation[1], b.pose.translation[1]),
            lerp(a.pose.translation[2], b.pose.translation[2]),
        ]);
        let mut rotation = Vec3::zeros();
        for k in 0..3 {
            let from = a.pose.rotation[k];
            rotation[k] = wrap_angle(from + wrap_angle(b.pose.rotation[k] - from) * alpha);
        }
        Ok(Pose {
            translation,
            rotation,
        })
    }

    pub fn resample(&self, times: &[S]) -> Result<Self> {
        let samples = times
            .iter()
            .map(|&time| Ok(TimedPose { time, pose: self.interpolate(time)? }))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(samples)
    }

    /// Cumulative translational arc length at each sample, starting at zero.
    pub fn path_lengths(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.samples.len());
        let mut acc = S::zero();
        out.push(acc);
        for w in self.samples.windows(2) {
            acc += (w[1].pose.translation - w[0].pose.translation).norm();
            out.push(acc);
        }
        out
    }
}

/// Appends `timestamp tx ty tz roll pitch yaw` for one sample.
pub fn format_timed_pose<S: Real>(out: &mut String, s: &TimedPose<S>) {
    let a = s.pose.to_array();
    let _ = write!(
        out,
        "{} {} {} {} {} {} {}",
        s.time, a[0], a[1], a[2], a[3], a[4], a[5]
    );
}

/// Parses seven whitespace-separated fields into a sample.
pub fn parse_timed_pose<'a, S: Real + FromStr>(
    fields: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<TimedPose<S>> {
    let values = parse_floats::<S>(fields, 7, line)?;
    Ok(TimedPose {
        time: values[0],
        pose: Pose {
            translation: Vec3([values[1], values[2], values[3]]),
            rotation: Vec3([values[4], values[5], values[6]]),
        },
    })
}

pub(crate) fn parse_floats<'a, S: FromStr>(
    fields: impl Iterator<Item = &'a str>,
    expected: usize,
    line: usize,
) -> Result<Vec<S>> {
    let values = fields
        .map(|f| {
            f.parse::<S>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid number {f:?}"),
            })
        })
        .collect::<Result<Vec<S>>>()?;
    if values.len() != expected {
        return Err(Error::Parse {
            line,
            message: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

impl<S: Real + FromStr> Trajectory<S> {
    /// Line-delimited `timestamp tx ty tz roll pitch yaw`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            format_timed_pose(&mut out, s);
            out.push('\n');
        }
        out
    }

    /// Parses the text format; blank and `#` lines are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            samples.push(parse_timed_pose(line.split_whitespace(), idx + 1)?);
        }
        Trajectory::new(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn traj(points: &[(f64, [f64; 6])]) -> Trajectory<f64> {
        Trajectory::new(
            points
                .iter()
                .map(|&(time, a)| TimedPose { time, pose: Pose::from_array(a) })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert!(Trajectory::<f64>::new(vec![]).is_err());
        let p = Pose::identity();
        let bad = vec![TimedPose { time: 1.0, pose: p }, TimedPose { time: 1.0, pose: p }];
        assert!(Trajectory::new(bad).is_err());
    }

    #[test]
    fn exact_at_knots() {
        let t = traj(&[(0.0, [0.0, 0.0, 0.0, 0.1, 0.2, 0.3]), (1.0, [1.0, 2.0, 3.0, 0.2, 0.1, -0.3])]);
        assert_eq!(t.interpolate(1.0).unwrap(), t.samples()[1].pose);
        assert_eq!(t.interpolate(0.0).unwrap(), t.samples()[0].pose);
    }

    #[test]
    fn linear_midpoint() {
        let t = traj(&[(0.0, [0.0; 6]), (1.0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])]);
        let mid = t.interpolate(0.5).unwrap();
        assert_eq!(mid.translation, Vec3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn yaw_takes_shortest_arc_across_seam() {
        let t = traj(&[(0.0, [0.0, 0.0, 0.0, 0.0, 0.0, 3.1]), (1.0, [0.0, 0.0, 0.0, 0.0, 0.0, -3.1])]);
        let yaw = t.interpolate(0.5).unwrap().rotation[2];
        assert!((yaw.abs() - PI).abs() < 1e-12, "{yaw}");
    }

    #[test]
    fn out_of_range_is_an_error() {
        let t = traj(&[(0.0, [0.0; 6]), (1.0, [0.0; 6])]);
        assert!(matches!(t.interpolate(1.5), Err(Error::OutOfRange { .. })));
        assert!(t.resample(&[-0.1]).is_err());
    }

    #[test]
    fn resampled_translation_stays_between_knots() {
        let t = traj(&[
            (0.0, [0.0, 1.0, -1.0, 0.0, 0.0, 0.0]),
            (0.3, [0.5, -1.0, 2.0, 0.0, 0.0, 0.0]),
            (1.0, [0.2, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ]);
        let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let r = t.resample(&times).unwrap();
        for s in r.samples() {
            let hi = t.samples().partition_point(|k| k.time <= s.time).min(2).max(1);
            let (a, b) = (&t.samples()[hi - 1].pose, &t.samples()[hi].pose);
            for k in 0..3 {
                let (lo, up) = (a.translation[k].min(b.translation[k]), a.translation[k].max(b.translation[k]));
                assert!(s.pose.translation[k] >= lo - 1e-15 && s.pose.translation[k] <= up + 1e-15);
            }
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = traj(&[
            (0.0, [0.1, 0.2, 0.3, 0.01, 0.02, 0.03]),
            (0.02, [1.0 / 3.0, -2.0 / 7.0, 1e-9, -3.0, 1.1, 3.141592653589793]),
        ]);
        let text = format!("# comment\n{}", t.to_text());
        let back = Trajectory::<f64>::from_text(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), t.to_text());
    }

    #[test]
    fn parse_error_names_line() {
        let text = "0 0 0 0 0 0 0\n0.1 0 0 0 0 0\n";
        match Trajectory::<f64>::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
