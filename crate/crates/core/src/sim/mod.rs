//! Seeded synthetic ground truth plus the two asynchronous sensor streams:
//! Hall-array readings at the magnetic rate and emulated visual-odometry
//! deltas at the visual rate.

mod dataset;
mod evo;
mod magnetic;
mod motion;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Trajectory;
use crate::Vec3;

pub use dataset::{read_dataset, write_dataset, Dataset, DATASET_MAGIC};
pub use evo::{emulate_evo_stream, integrate_deltas, VisMeasurement};
pub use magnetic::{
    dipole_field, dipole_field_at, sample_hall_array, sensor_positions, ActuatorFieldModel,
    DipoleParams, HallArrayReading, ARRAY_PITCH, ARRAY_SIZE, EXCLUSION_RADIUS, MIN_DEPTH,
};
pub use motion::{generate_trajectory, Harmonic, MotionModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionProfile {
    SlowIncremental,
    ComprehensiveScan,
    FastComplex,
}

impl MotionProfile {
    /// Default translational speed cap in m/s.
    pub fn speed_cap(self) -> f64 {
        match self {
            MotionProfile::SlowIncremental => 0.005,
            MotionProfile::ComprehensiveScan => 0.015,
            MotionProfile::FastComplex => 0.03,
        }
    }

    /// Frequency band of the per-axis harmonics, Hz.
    pub fn frequency_band(self) -> (f64, f64) {
        match self {
            MotionProfile::SlowIncremental => (0.005, 0.03),
            MotionProfile::ComprehensiveScan => (0.01, 0.06),
            MotionProfile::FastComplex => (0.03, 0.15),
        }
    }

    /// Peak excursion of roll, pitch and yaw, radians.
    pub fn angle_amplitudes(self) -> [f64; 3] {
        match self {
            MotionProfile::SlowIncremental => [0.2, 0.2, 0.4],
            MotionProfile::ComprehensiveScan => [0.5, 0.4, 0.8],
            MotionProfile::FastComplex => [0.8, 0.6, 1.2],
        }
    }
}

impl fmt::Display for MotionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionProfile::SlowIncremental => "slow_incremental",
            MotionProfile::ComprehensiveScan => "comprehensive_scan",
            MotionProfile::FastComplex => "fast_complex",
        })
    }
}

impl FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slow_incremental" => Ok(MotionProfile::SlowIncremental),
            "comprehensive_scan" => Ok(MotionProfile::ComprehensiveScan),
            "fast_complex" => Ok(MotionProfile::FastComplex),
            other => Err(Error::Config(format!("unknown motion profile {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Seconds of ground truth to generate.
    pub duration: f64,
    pub seed: u64,
    pub motion_profile: MotionProfile,
    /// Half width of the lateral workspace box, meters.
    pub workspace_half_extent: f64,
    /// Depth of the workspace center below the sensor plane, meters.
    pub standoff: f64,
    /// Overrides the profile's speed cap when set, m/s.
    pub max_speed: Option<f64>,
    pub mag_rate: f64,
    pub vis_rate: f64,
    pub mag_noise_sd: f64,
    pub vis_trans_noise_sd: f64,
    pub vis_rot_noise_sd: f64,
    /// Visual translation bias per meter traveled.
    pub vis_drift_rate: f64,
    /// Angular rate at which the drift direction wanders, rad/s.
    pub drift_wander: f64,
    pub dipole: DipoleParams,
    pub actuator: ActuatorFieldModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 60.0,
            seed: 0,
            motion_profile: MotionProfile::ComprehensiveScan,
            workspace_half_extent: 0.05,
            standoff: 0.06,
            max_speed: None,
            mag_rate: 50.0,
            vis_rate: 25.0,
            mag_noise_sd: 5e-7,
            vis_trans_noise_sd: 2e-4,
            vis_rot_noise_sd: 2e-3,
            vis_drift_rate: 0.02,
            drift_wander: 0.01,
            dipole: DipoleParams::default(),
            actuator: ActuatorFieldModel::default(),
        }
    }
}

impl SimConfig {
    pub fn speed_cap(&self) -> f64 {
        self.max_speed.unwrap_or_else(|| self.motion_profile.speed_cap())
    }

    /// Magnetic samples per visual interval.
    pub fn rate_ratio(&self) -> usize {
        (self.mag_rate / self.vis_rate).round() as usize
    }

    pub fn without_noise(mut self) -> Self {
        self.mag_noise_sd = 0.0;
        self.vis_trans_noise_sd = 0.0;
        self.vis_rot_noise_sd = 0.0;
        self.vis_drift_rate = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.duration > 0.0) {
            return bad("sim.duration must be positive");
        }
        if !(self.mag_rate > 0.0 && self.vis_rate > 0.0) {
            return bad("sampling rates must be positive");
        }
        let ratio = self.mag_rate / self.vis_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return bad("sim.mag_rate must be an integer multiple of sim.vis_rate");
        }
        if !(self.workspace_half_extent > 0.0) {
            return bad("sim.workspace_half_extent must be positive");
        }
        if self.standoff - 0.4 * self.workspace_half_extent < MIN_DEPTH {
            return bad("workspace reaches within 10 mm of the sensor plane");
        }
        if self.speed_cap() <= 0.0 {
            return bad("sim.max_speed must be positive");
        }
        let noises = [
            self.mag_noise_sd,
            self.vis_trans_noise_sd,
            self.vis_rot_noise_sd,
            self.vis_drift_rate,
        ];
        if noises.iter().any(|n| !(*n >= 0.0)) {
            return bad("noise levels must be nonnegative");
        }
        self.dipole.validate()
    }

    /// Flat `key, value` listing; values print with full precision.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("duration".to_string(), self.duration.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("motion_profile".into(), self.motion_profile.to_string()),
            ("workspace_half_extent".into(), self.workspace_half_extent.to_string()),
            ("standoff".into(), self.standoff.to_string()),
            (
                "max_speed".into(),
                self.max_speed.map_or("profile".to_string(), |v| v.to_string()),
            ),
            ("mag_rate".into(), self.mag_rate.to_string()),
            ("vis_rate".into(), self.vis_rate.to_string()),
            ("mag_noise_sd".into(), self.mag_noise_sd.to_string()),
            ("vis_trans_noise_sd".into(), self.vis_trans_noise_sd.to_string()),
            ("vis_rot_noise_sd".into(), self.vis_rot_noise_sd.to_string()),
            ("vis_drift_rate".into(), self.vis_drift_rate.to_string()),
            ("drift_wander".into(), self.drift_wander.to_string()),
            ("moment_magnitude".into(), self.dipole.moment_magnitude.to_string()),
            ("moment_axis".into(), join(&self.dipole.moment_axis.0)),
            ("actuator_uniform".into(), join(&self.actuator.uniform.0)),
        ];
        let g = &self.actuator.gradient.0;
        out.push(("actuator_gradient".into(), join(&[g[0], g[1], g[2]].concat())));
        out
    }

    /// Sets one key from [`SimConfig::entries`]. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "duration" => self.duration = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "motion_profile" => self.motion_profile = value.parse()?,
            "workspace_half_extent" => self.workspace_half_extent = parse(key, value)?,
            "standoff" => self.standoff = parse(key, value)?,
            "max_speed" => {
                self.max_speed = match value {
                    "profile" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "mag_rate" => self.mag_rate = parse(key, value)?,
            "vis_rate" => self.vis_rate = parse(key, value)?,
            "mag_noise_sd" => self.mag_noise_sd = parse(key, value)?,
            "vis_trans_noise_sd" => self.vis_trans_noise_sd = parse(key, value)?,
            "vis_rot_noise_sd" => self.vis_rot_noise_sd = parse(key, value)?,
            "vis_drift_rate" => self.vis_drift_rate = parse(key, value)?,
            "drift_wander" => self.drift_wander = parse(key, value)?,
            "moment_magnitude" => self.dipole.moment_magnitude = parse(key, value)?,
            "moment_axis" => self.dipole.moment_axis = Vec3::from(parse_list::<3>(key, value)?),
            "actuator_uniform" => self.actuator.uniform = Vec3::from(parse_list::<3>(key, value)?),
            "actuator_gradient" => {
                let v = parse_list::<9>(key, value)?;
                self.actuator.gradient =
                    crate::Mat3::from_rows([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

pub(crate) fn parse_list<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let values = value
        .split(',')
        .map(|v| parse::<f64>(key, v.trim()))
        .collect::<Result<Vec<_>>>()?;
    values
        .try_into()
        .map_err(|_| Error::Config(format!("key {key} expects {N} comma-separated values")))
}

pub(crate) fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Independent random streams derived from one root seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground truth plus both sensor streams for one configuration.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let gt = generate_trajectory(cfg);
    let mut mag_rng = stream_rng(cfg.seed, 1);
    let mag = gt
        .samples()
        .iter()
        .map(|s| {
            sample_hall_array(
                &s.pose,
                &cfg.dipole,
                &cfg.actuator,
                s.time,
                cfg.mag_noise_sd,
                &mut mag_rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut vis_rng = stream_rng(cfg.seed, 2);
    let vis = emulate_evo_stream(&gt, cfg, &mut vis_rng)?;
    let header = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| if k == "seed" { (k, v) } else { (format!("sim.{k}"), v) })
        .collect();
    Ok(Dataset { header, gt, mag, vis })
}

/// Ground truth only, sampled at the magnetic rate.
pub fn ground_truth(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    Ok(generate_trajectory(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip_through_set() {
        let mut cfg = SimConfig {
            seed: 42,
            max_speed: Some(0.007),
            motion_profile: MotionProfile::FastComplex,
            ..SimConfig::default()
        };
        cfg.actuator.uniform = Vec3::new(1e-5, 3.25e-4, -7e-6);
        let mut back = SimConfig::default();
        for (k, v) in cfg.entries() {
            assert!(back.set(&k, &v).unwrap(), "{k}");
        }
        assert_eq!(back, cfg);
        assert!(!back.set("nonsense", "1").unwrap());
        assert!(back.set("duration", "abc").is_err());
    }

    #[test]
    fn rate_contract_is_validated() {
        let cfg = SimConfig { mag_rate: 40.0, vis_rate: 30.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = SimConfig { duration: 0.0, ..SimConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(SimConfig::default().validate().is_ok());
        assert_eq!(SimConfig::default().rate_ratio(), 2);
    }

    #[test]
    fn simulate_counts_and_determinism() {
        let cfg = SimConfig { duration: 10.0, seed: 7, ..SimConfig::default() };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gt.len(), 500);
        assert_eq!(a.mag.len(), 500);
        assert_eq!(a.vis.len(), 250);
        let other = simulate(&SimConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.gt, other.gt);
    }

    #[test]
    fn every_visual_interval_holds_ratio_magnetic_samples() {
        let cfg = SimConfig { duration: 7.0, seed: 3, ..SimConfig::default() };
        let ds = simulate(&cfg).unwrap();
        for w in ds.vis.windows(2) {
            let n = ds
                .mag
                .iter()
                .filter(|m| m.timestamp > w[0].timestamp && m.timestamp <= w[1].timestamp)
                .count();
            assert_eq!(n, cfg.rate_ratio());
        }
    }
}
