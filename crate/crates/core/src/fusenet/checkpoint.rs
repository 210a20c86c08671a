use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magloc::MagMeasurement5DoF;
use crate::neural::{Hyperparams, ParameterSet};
use crate::sim::VisMeasurement;
use crate::{Pose, TimedPose, Trajectory};

use super::network::{FusionNetwork, Readout};
use super::normalize::Normalization;
use super::samples::{align_streams, integrate, DeltaKind, FusedSample, MagEncoding, OUTPUTS};

pub const CHECKPOINT_FORMAT: &str = "capfuse-checkpoint";
pub const CHECKPOINT_VERSION: &str = "1";

/// A trained model with everything needed to run it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: FusionNetwork,
    /// `beta_loss` holds the β the network was finally trained with.
    pub hyperparams: Hyperparams,
    pub normalization: Normalization,
    pub delta: DeltaKind,
    pub mag_encoding: MagEncoding,
    pub readout: Readout,
}

#[derive(Serialize, Deserialize)]
struct HyperparamsFile {
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    beta_loss: f64,
    dropout_rate: f64,
    hidden_size: usize,
}

#[derive(Serialize, Deserialize)]
struct WeightArray {
    name: String,
    dims: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: String,
    rate_ratio: usize,
    delta: String,
    mag_encoding: String,
    readout: String,
    hyperparams: HyperparamsFile,
    normalization: Normalization,
    weights: Vec<WeightArray>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let hp = &self.hyperparams;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION.into(),
            rate_ratio: self.network.rate_ratio,
            delta: self.delta.to_string(),
            mag_encoding: self.mag_encoding.to_string(),
            readout: self.readout.to_string(),
            hyperparams: HyperparamsFile {
                alpha: hp.alpha,
                beta1: hp.beta1,
                beta2: hp.beta2,
                epsilon: hp.epsilon,
                beta_loss: hp.beta_loss,
                dropout_rate: hp.dropout_rate,
                hidden_size: hp.hidden_size,
            },
            normalization: self.normalization.clone(),
            weights: self
                .network
                .named_arrays()
                .into_iter()
                .map(|(name, (r, c), v)| WeightArray { name, dims: [r, c], values: v.to_vec() })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let field = |k: &str| value.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
        if field("format") != CHECKPOINT_FORMAT {
            return Err(Error::Parse { line: 1, message: "not a capfuse checkpoint".into() });
        }
        let version = field("version");
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, expected: CHECKPOINT_VERSION.into() });
        }
        let file: CheckpointFile = serde_json::from_value(value)?;
        let h = file.hyperparams;
        let hyperparams = Hyperparams {
            alpha: h.alpha,
            beta1: h.beta1,
            beta2: h.beta2,
            epsilon: h.epsilon,
            beta_loss: h.beta_loss,
            dropout_rate: h.dropout_rate,
            hidden_size: h.hidden_size,
        };
        let mut network = FusionNetwork::zeros(h.hidden_size, file.rate_ratio);
        let expected: Vec<(String, (usize, usize))> =
            network.named_arrays().into_iter().map(|(n, d, _)| (n, d)).collect();
        if expected.len() != file.weights.len() {
            return Err(Error::Parse { line: 1, message: "checkpoint weight list has the wrong length".into() });
        }
        let mut flat = Vec::with_capacity(network.num_params());
        for ((name, (r, c)), w) in expected.iter().zip(&file.weights) {
            if *name != w.name || [*r, *c] != w.dims || w.values.len() != r * c {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("checkpoint array {} does not match {name} {r}x{c}", w.name),
                });
            }
            flat.extend_from_slice(&w.values);
        }
        network.assign(&flat);
        let ckpt = Checkpoint {
            network,
            hyperparams,
            normalization: file.normalization,
            delta: file.delta.parse()?,
            mag_encoding: file.mag_encoding.parse()?,
            readout: file.readout.parse()?,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.hyperparams.validate()?;
        self.normalization.validate()?;
        if self.network.hidden_size() != self.hyperparams.hidden_size {
            return Err(Error::DimensionMismatch {
                context: "checkpoint hidden size",
                expected: self.hyperparams.hidden_size,
                found: self.network.hidden_size(),
            });
        }
        Ok(())
    }

    /// Physical deltas for raw aligned samples, run statefully from the zero
    /// state.
    pub fn predict_deltas(&self, samples: &[FusedSample]) -> Result<Vec<[f64; OUTPUTS]>> {
        let normalized: Vec<FusedSample> = samples.iter().map(|s| self.normalization.apply(s)).collect();
        let y = self.network.predict_from_zero(&normalized, self.readout)?;
        Ok(y.iter().map(|y| self.normalization.output(y)).collect())
    }
}

/// Writes the JSON checkpoint, preceded by `header` lines when given. Each
/// header line must start with `#`.
pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint, header: Option<&str>) -> Result<()> {
    let mut text = String::new();
    if let Some(h) = header {
        if h.lines().any(|l| !l.starts_with('#')) {
            return Err(Error::Config("checkpoint header lines must start with '#'".into()));
        }
        text.push_str(h);
        text.push('\n');
    }
    text.push_str(&ckpt.to_json()?);
    fs::write(path, text)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`], skipping leading `#`
/// lines.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let body: String = text.lines().skip_while(|l| l.starts_with('#')).collect::<Vec<_>>().join("\n");
    Checkpoint::from_json(&body)
}

/// Fused trajectory: one pose per aligned step, chained from `initial`, the
/// pose at the first visual timestamp.
pub fn predict_trajectory(
    ckpt: &Checkpoint,
    mag: &[MagMeasurement5DoF],
    vis: &[VisMeasurement],
    initial: &Pose,
) -> Result<Trajectory> {
    let samples = align_streams(mag, vis, None, ckpt.network.rate_ratio, ckpt.delta, ckpt.mag_encoding, initial)?;
    let deltas = ckpt.predict_deltas(&samples)?;
    let poses = integrate(initial, &deltas, ckpt.delta);
    Trajectory::new(
        samples.iter().zip(poses).map(|(s, pose)| TimedPose { time: s.timestamp, pose }).collect(),
    )
}
