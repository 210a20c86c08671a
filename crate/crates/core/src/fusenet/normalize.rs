use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::samples::{FusedSample, MAG_INPUTS, OUTPUTS, VIS_INPUTS};

/// Per-channel z-scoring `z = (x − mean) / sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(n: usize) -> Self {
        ChannelStats { mean: vec![0.0; n], sd: vec![1.0; n] }
    }

    /// Sample mean and standard deviation; channels with no spread keep
    /// unit scale.
    pub fn fit<'a>(n: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::Config("cannot fit normalization to no data".into()));
        }
        let count = rows.len() as f64;
        let mut mean = vec![0.0; n];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / count;
            }
        }
        let mut var = vec![0.0; n];
        for r in &rows {
            for k in 0..n {
                var[k] += (r[k] - mean[k]).powi(2) / count;
            }
        }
        let sd = var.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(ChannelStats { mean, sd })
    }

    /// Zero mean and root-mean-square scale, so that negation commutes with
    /// normalization.
    pub fn fit_scale<'a>(n: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::Config("cannot fit normalization to no data".into()));
        }
        let mut ms = vec![0.0; n];
        for r in &rows {
            for (m, v) in ms.iter_mut().zip(r.iter()) {
                *m += v * v / rows.len() as f64;
            }
        }
        let sd = ms.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(ChannelStats { mean: vec![0.0; n], sd })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| v * s + m).collect()
    }

    fn check(&self, name: &str, n: usize) -> Result<()> {
        let ok = self.mean.len() == n
            && self.sd.len() == n
            && self.mean.iter().all(|v| v.is_finite())
            && self.sd.iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid {name} normalization statistics")))
        }
    }
}

/// Statistics for the magnetic inputs, visual inputs and target deltas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mag: ChannelStats,
    pub vis: ChannelStats,
    pub target: ChannelStats,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            mag: ChannelStats::identity(MAG_INPUTS),
            vis: ChannelStats::identity(VIS_INPUTS),
            target: ChannelStats::identity(OUTPUTS),
        }
    }

    /// Fits all three groups; every sample must carry a target.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a FusedSample> + Clone) -> Result<Self> {
        Self::fit_with(samples, false)
    }

    /// Like [`Normalization::fit`]; with `scale_only` every channel keeps a
    /// zero mean (see [`ChannelStats::fit_scale`]).
    pub fn fit_with<'a>(
        samples: impl IntoIterator<Item = &'a FusedSample> + Clone,
        scale_only: bool,
    ) -> Result<Self> {
        let stats = |n: usize, rows: Vec<&[f64]>| {
            if scale_only {
                ChannelStats::fit_scale(n, rows)
            } else {
                ChannelStats::fit(n, rows)
            }
        };
        let mut targets = Vec::new();
        for s in samples.clone() {
            targets.push(s.target.ok_or_else(|| Error::Config("training sample without target".into()))?);
        }
        Ok(Normalization {
            mag: stats(
                MAG_INPUTS,
                samples.clone().into_iter().flat_map(|s| s.mag_inputs.iter().map(|m| m.as_slice())).collect(),
            )?,
            vis: stats(VIS_INPUTS, samples.into_iter().map(|s| s.vis_input.as_slice()).collect())?,
            target: stats(OUTPUTS, targets.iter().map(|t| t.as_slice()).collect())?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.mag.check("magnetic", MAG_INPUTS)?;
        self.vis.check("visual", VIS_INPUTS)?;
        self.target.check("target", OUTPUTS)
    }

    /// Normalizes the inputs; the target is left in physical units.
    pub fn apply(&self, s: &FusedSample) -> FusedSample {
        FusedSample {
            mag_inputs: s.mag_inputs.iter().map(|m| to_array(&self.mag.normalize(m))).collect(),
            vis_input: to_array(&self.vis.normalize(&s.vis_input)),
            ..s.clone()
        }
    }

    /// Maps a network output to a physical delta.
    pub fn output(&self, y: &[f64; OUTPUTS]) -> [f64; OUTPUTS] {
        to_array(&self.target.denormalize(y))
    }
}

fn to_array<const N: usize>(v: &[f64]) -> [f64; N] {
    std::array::from_fn(|k| v[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_and_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.random_range(-1.0..1.0) * 1e-3, 5.0 + rng.random_range(0.0..2.0), 7.0])
            .collect();
        let stats = ChannelStats::fit(3, rows.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(stats.sd[2], 1.0);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| stats.normalize(r)).collect();
        for k in 0..2 {
            let mean = z.iter().map(|r| r[k]).sum::<f64>() / 500.0;
            let var = z.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / 500.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        for (r, zr) in rows.iter().zip(&z) {
            for (a, b) in r.iter().zip(stats.denormalize(zr)) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fitting_needs_data_and_targets() {
        assert!(ChannelStats::fit(3, std::iter::empty()).is_err());
        let s = FusedSample {
            timestamp: 0.04,
            previous_timestamp: 0.0,
            mag_inputs: vec![[0.0; 5]; 2],
            vis_input: [0.0; 6],
            target: None,
        };
        assert!(Normalization::fit(std::slice::from_ref(&s)).is_err());
        let mut bad = Normalization::identity();
        bad.vis.sd[0] = 0.0;
        assert!(bad.validate().is_err());
    }
}
