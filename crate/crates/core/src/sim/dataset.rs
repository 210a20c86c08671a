use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{format_timed_pose, parse_floats, parse_timed_pose, Pose};
use crate::Trajectory;

use super::{HallArrayReading, SimConfig, VisMeasurement, ARRAY_SIZE};

pub const DATASET_MAGIC: &str = "#capfuse-dataset";
const VERSION: &str = "v1";

/// Ground truth plus both sensor streams, with the generating configuration
/// echoed as `key=value` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: Vec<(String, String)>,
    pub gt: Trajectory,
    pub mag: Vec<HallArrayReading>,
    pub vis: Vec<VisMeasurement>,
}

impl Dataset {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Rebuilds the generating configuration from the `seed` and `sim.`
    /// header entries.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for (k, v) in &self.header {
            if k == "seed" {
                cfg.set("seed", v)?;
            } else if let Some(key) = k.strip_prefix("sim.") {
                if !cfg.set(key, v)? {
                    return Err(Error::Config(format!("unknown dataset header key {k}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(DATASET_MAGIC);
        out.push(' ');
        out.push_str(VERSION);
        for (k, v) in &self.header {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        for s in self.gt.samples() {
            out.push_str("GT ");
            format_timed_pose(&mut out, s);
            out.push('\n');
        }
        for m in &self.mag {
            let _ = write!(out, "MAG {}", m.timestamp);
            for v in m.flat() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        for m in &self.vis {
            let a = m.delta.to_array();
            let _ = writeln!(
                out,
                "VIS {} {} {} {} {} {} {}",
                m.timestamp, a[0], a[1], a[2], a[3], a[4], a[5]
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, first)) => parse_header(first)?,
            None => {
                return Err(Error::Parse { line: 1, message: "empty dataset file".into() });
            }
        };
        let mut gt = Vec::new();
        let mut mag = Vec::new();
        let mut vis = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields = raw.split_whitespace();
            match fields.next() {
                Some("GT") => gt.push(parse_timed_pose(fields, line)?),
                Some("MAG") => {
                    let v = parse_floats::<f64>(fields, 1 + ARRAY_SIZE * ARRAY_SIZE, line)?;
                    let mut reading = HallArrayReading::zeros(v[0]);
                    for (k, value) in v[1..].iter().enumerate() {
                        reading.values[k / ARRAY_SIZE][k % ARRAY_SIZE] = *value;
                    }
                    mag.push(reading);
                }
                Some("VIS") => {
                    let v = parse_floats::<f64>(fields, 7, line)?;
                    let delta = Pose::from_array([v[1], v[2], v[3], v[4], v[5], v[6]]);
                    vis.push(VisMeasurement { timestamp: v[0], delta });
                }
                Some(other) => {
                    return Err(Error::Parse { line, message: format!("unknown record {other:?}") });
                }
                None => unreachable!(),
            }
        }
        let gt = Trajectory::new(gt)?;
        Ok(Dataset { header, gt, mag, vis })
    }
}

/// Parses `#capfuse-<kind> v1 key=value ...` header lines shared by all
/// output files. Returns the pairs in file order.
pub(crate) fn parse_header_with(line: &str, magic: &str) -> Result<Vec<(String, String)>> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some(magic) {
        return Err(Error::Parse { line: 1, message: format!("missing {magic} header") });
    }
    match fields.next() {
        Some(VERSION) => {}
        found => {
            return Err(Error::Version {
                found: found.unwrap_or("").to_string(),
                expected: VERSION.to_string(),
            })
        }
    }
    fields
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse { line: 1, message: format!("malformed header entry {f:?}") })
        })
        .collect()
}

fn parse_header(line: &str) -> Result<Vec<(String, String)>> {
    parse_header_with(line, DATASET_MAGIC)
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    fs::write(path, dataset.to_text())?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_text(&fs::read_to_string(path)?)
}
