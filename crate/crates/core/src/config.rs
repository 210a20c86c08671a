//! Flat `key = value` run configuration shared by every command.
//!
//! Keys are `seed`, `profile` and `n_datasets` plus prefixed sections:
//! `sim.` (simulator), `train.` (training schedule and hyperparameters),
//! `mag.` (magnetic inversion), `align.` (visual alignment demo) and `eval.`
//! (evaluation). `#` starts a comment. Unknown or repeated keys are errors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::align::{AlignmentSettings, AlignmentWeights};
use crate::error::{Error, Result};
use crate::evalbench::{check_buckets, RollRule, DEFAULT_BUCKETS};
use crate::fusenet::TrainingConfig;
use crate::magloc::InversionSettings;
use crate::neural::Hyperparams;
use crate::sim::SimConfig;
use crate::Vec3;

pub const FORMAT_VERSION: &str = "v1";

/// Hyperparameter preset applied before any configured key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// Hidden size 16 and 30 epochs; trains in about a minute.
    #[default]
    Desk,
    /// Hidden size 200 and up to 200 epochs.
    Paper,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected desk or paper)"))),
        }
    }
}

impl Profile {
    pub fn training(self) -> (TrainingConfig, Hyperparams) {
        match self {
            Profile::Desk => (TrainingConfig::desk(), Hyperparams { hidden_size: 16, ..Hyperparams::default() }),
            Profile::Paper => (TrainingConfig::default(), Hyperparams::default()),
        }
    }
}

/// Synthetic window rendered by the alignment demo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignDemoConfig {
    pub frames: usize,
    /// Feature matches per frame pair.
    pub correspondences: usize,
    /// Feature position noise, meters.
    pub noise_sd: f64,
    /// Height variation of the rendered surface, meters.
    pub relief: f64,
    /// Rotation angle of each camera step, radians.
    pub step_angle: f64,
    /// Translation scale of each camera step, meters.
    pub step_shift: f64,
}

impl Default for AlignDemoConfig {
    fn default() -> Self {
        AlignDemoConfig { frames: 3, correspondences: 20, noise_sd: 0.0, relief: 0.004, step_angle: 0.01, step_shift: 8e-4 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Root seed. Dataset `i` of a simulation uses `seed + i`; training uses
    /// `seed` directly.
    pub seed: u64,
    pub profile: Profile,
    pub n_datasets: usize,
    /// `sim.seed` is ignored; see [`RunConfig::sim_for`].
    pub sim: SimConfig,
    pub train: TrainingConfig,
    pub hyper: Hyperparams,
    pub inversion: InversionSettings,
    pub align_weights: AlignmentWeights,
    pub align: AlignmentSettings,
    pub align_demo: AlignDemoConfig,
    pub buckets: Vec<f64>,
    pub roll_rule: RollRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::with_profile(Profile::default())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for key {key}")))
}

fn parse_floats(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3> {
    let v = parse_floats(key, value)?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(Error::Config(format!("key {key} expects 3 comma-separated values"))),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn with_profile(profile: Profile) -> Self {
        let (train, hyper) = profile.training();
        RunConfig {
            seed: 0,
            profile,
            n_datasets: 1,
            sim: SimConfig::default(),
            train,
            hyper,
            inversion: InversionSettings::default(),
            align_weights: AlignmentWeights::default(),
            align: AlignmentSettings::default(),
            align_demo: AlignDemoConfig::default(),
            buckets: DEFAULT_BUCKETS.to_vec(),
            roll_rule: RollRule::default(),
        }
    }

    /// Simulator settings for dataset `index`.
    pub fn sim_for(&self, index: usize) -> SimConfig {
        SimConfig { seed: self.seed + index as u64, ..self.sim.clone() }
    }

    /// Every key in canonical order with its effective value.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("profile".into(), self.profile.to_string()),
            ("n_datasets".into(), self.n_datasets.to_string()),
        ];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        for (k, v) in self.sim.entries() {
            if k != "seed" {
                push(&format!("sim.{k}"), v);
            }
        }
        let t = &self.train;
        push("train.max_epochs", t.max_epochs.to_string());
        push("train.window_length", t.window_length.to_string());
        push("train.early_stop_patience", t.early_stop_patience.to_string());
        push("train.validation_fraction", t.validation_fraction.to_string());
        push("train.warmup_epochs", t.warmup_epochs.to_string());
        push("train.calibrate_beta", t.calibrate_beta.to_string());
        push("train.delta", t.delta.to_string());
        push("train.mag_encoding", t.mag_encoding.to_string());
        push("train.readout", t.readout.to_string());
        push("train.loss_span", t.loss_span.to_string());
        push("train.skip_prior", t.skip_prior.to_string());
        let h = &self.hyper;
        push("train.alpha", h.alpha.to_string());
        push("train.beta1", h.beta1.to_string());
        push("train.beta2", h.beta2.to_string());
        push("train.epsilon", h.epsilon.to_string());
        push("train.beta_loss", h.beta_loss.to_string());
        push("train.dropout_rate", h.dropout_rate.to_string());
        push("train.hidden_size", h.hidden_size.to_string());
        let m = &self.inversion;
        push("mag.max_iterations", m.max_iterations.to_string());
        push("mag.convergence_tol", m.convergence_tol.to_string());
        push("mag.initial_damping", m.initial_damping.to_string());
        push("mag.restart_count", m.restart_count.to_string());
        push("mag.grid_center", join(&m.grid.center.0));
        push("mag.grid_half_extent", join(&m.grid.half_extent.0));
        let w = &self.align_weights;
        push("align.w_sparse", w.sparse.to_string());
        push("align.w_dense", w.dense.to_string());
        push("align.w_photo", w.photo.to_string());
        push("align.w_geo", w.geo.to_string());
        let a = &self.align;
        push("align.max_iterations", a.max_iterations.to_string());
        push("align.step_tol", a.step_tol.to_string());
        push("align.initial_damping", a.initial_damping.to_string());
        push("align.max_pair_gap", a.max_pair_gap.to_string());
        let d = &self.align_demo;
        push("align.frames", d.frames.to_string());
        push("align.correspondences", d.correspondences.to_string());
        push("align.noise_sd", d.noise_sd.to_string());
        push("align.relief", d.relief.to_string());
        push("align.step_angle", d.step_angle.to_string());
        push("align.step_shift", d.step_shift.to_string());
        push("eval.buckets", join(&self.buckets));
        push("eval.roll_rule", self.roll_rule.to_string());
        out
    }

    /// Sets one key. `profile` resets the training section to the preset.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::Config(format!("unknown config key {key:?}"));
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n_datasets" => self.n_datasets = parse(key, value)?,
            "profile" => {
                self.profile = value.parse()?;
                (self.train, self.hyper) = self.profile.training();
            }
            "sim.seed" => return Err(unknown()),
            _ if key.starts_with("sim.") => {
                if !self.sim.set(&key[4..], value)? {
                    return Err(unknown());
                }
            }
            "train.max_epochs" => self.train.max_epochs = parse(key, value)?,
            "train.window_length" => self.train.window_length = parse(key, value)?,
            "train.early_stop_patience" => self.train.early_stop_patience = parse(key, value)?,
            "train.validation_fraction" => self.train.validation_fraction = parse(key, value)?,
            "train.warmup_epochs" => self.train.warmup_epochs = parse(key, value)?,
            "train.calibrate_beta" => self.train.calibrate_beta = parse(key, value)?,
            "train.delta" => self.train.delta = value.parse()?,
            "train.mag_encoding" => self.train.mag_encoding = value.parse()?,
            "train.readout" => self.train.readout = value.parse()?,
            "train.loss_span" => self.train.loss_span = value.parse()?,
            "train.skip_prior" => self.train.skip_prior = parse(key, value)?,
            "train.alpha" => self.hyper.alpha = parse(key, value)?,
            "train.beta1" => self.hyper.beta1 = parse(key, value)?,
            "train.beta2" => self.hyper.beta2 = parse(key, value)?,
            "train.epsilon" => self.hyper.epsilon = parse(key, value)?,
            "train.beta_loss" => self.hyper.beta_loss = parse(key, value)?,
            "train.dropout_rate" => self.hyper.dropout_rate = parse(key, value)?,
            "train.hidden_size" => self.hyper.hidden_size = parse(key, value)?,
            "mag.max_iterations" => self.inversion.max_iterations = parse(key, value)?,
            "mag.convergence_tol" => self.inversion.convergence_tol = parse(key, value)?,
            "mag.initial_damping" => self.inversion.initial_damping = parse(key, value)?,
            "mag.restart_count" => self.inversion.restart_count = parse(key, value)?,
            "mag.grid_center" => self.inversion.grid.center = parse_vec3(key, value)?,
            "mag.grid_half_extent" => self.inversion.grid.half_extent = parse_vec3(key, value)?,
            "align.w_sparse" => self.align_weights.sparse = parse(key, value)?,
            "align.w_dense" => self.align_weights.dense = parse(key, value)?,
            "align.w_photo" => self.align_weights.photo = parse(key, value)?,
            "align.w_geo" => self.align_weights.geo = parse(key, value)?,
            "align.max_iterations" => self.align.max_iterations = parse(key, value)?,
            "align.step_tol" => self.align.step_tol = parse(key, value)?,
            "align.initial_damping" => self.align.initial_damping = parse(key, value)?,
            "align.max_pair_gap" => self.align.max_pair_gap = parse(key, value)?,
            "align.frames" => self.align_demo.frames = parse(key, value)?,
            "align.correspondences" => self.align_demo.correspondences = parse(key, value)?,
            "align.noise_sd" => self.align_demo.noise_sd = parse(key, value)?,
            "align.relief" => self.align_demo.relief = parse(key, value)?,
            "align.step_angle" => self.align_demo.step_angle = parse(key, value)?,
            "align.step_shift" => self.align_demo.step_shift = parse(key, value)?,
            "eval.buckets" => self.buckets = parse_floats(key, value)?,
            "eval.roll_rule" => self.roll_rule = value.parse()?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Builds a config from pairs. A `profile` pair (or `profile` when
    /// given) is applied first, so its position does not matter.
    pub fn from_pairs(pairs: &[(String, String)], profile: Option<Profile>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (k, _) in pairs {
            if !seen.insert(k.as_str()) {
                return Err(Error::Config(format!("duplicate config key {k:?}")));
            }
        }
        let listed = pairs.iter().find(|(k, _)| k == "profile").map(|(_, v)| v.parse()).transpose()?;
        let mut cfg = RunConfig::with_profile(profile.or(listed).unwrap_or_default());
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `key = value` lines with `#` comments.
    pub fn parse(text: &str, profile: Option<Profile>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected key = value, found {line:?}"),
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        RunConfig::from_pairs(&pairs, profile)
    }

    pub fn load(path: impl AsRef<Path>, profile: Option<Profile>) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?, profile)
    }

    /// Config file text that reproduces this configuration.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// `#capfuse-<kind> v1 key=value ...`, the first line of every output file.
    pub fn header_line(&self, kind: &str) -> String {
        let mut out = format!("#capfuse-{kind} {FORMAT_VERSION}");
        for (k, v) in self.entries() {
            out.push(' ');
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
        }
        out
    }

    /// Recovers the configuration echoed by [`RunConfig::header_line`].
    pub fn from_header_line(line: &str) -> Result<Self> {
        let mut fields = line.split_whitespace();
        if !fields.next().is_some_and(|m| m.starts_with("#capfuse-")) {
            return Err(Error::Parse { line: 1, message: "missing capfuse header".into() });
        }
        match fields.next() {
            Some(FORMAT_VERSION) => {}
            found => {
                return Err(Error::Version { found: found.unwrap_or("").into(), expected: FORMAT_VERSION.into() })
            }
        }
        let pairs = fields
            .map(|f| {
                f.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Parse { line: 1, message: format!("malformed header entry {f:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        RunConfig::from_pairs(&pairs, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_datasets == 0 {
            return Err(Error::Config("n_datasets must be at least 1".into()));
        }
        self.sim.validate()?;
        self.train.validate()?;
        self.hyper.validate()?;
        self.inversion.validate()?;
        self.align_weights.validate()?;
        check_buckets(&self.buckets)?;
        let d = &self.align_demo;
        if d.frames < 2 || d.correspondences == 0 || !(d.noise_sd >= 0.0) || !(d.relief >= 0.0) {
            return Err(Error::Config("align demo needs ≥ 2 frames, ≥ 1 correspondence and non-negative noise".into()));
        }
        Ok(())
    }
}
