//! End-to-end steps behind each command, driven by a [`RunConfig`].

use std::fmt::Write as _;

use rand::Rng;

use crate::align::{minimize_alignment, AlignmentResult, Intrinsics, Scene, SyntheticWindow};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evalbench::{compare_methods, Comparison, PreparedDataset};
use crate::fusenet::{train, Checkpoint, TrainingLog};
use crate::geometry::{rotation_angle, so3_exp};
use crate::magloc::{localize_stream, StreamEstimate};
use crate::sim::{simulate, stream_rng, Dataset};
use crate::{RigidTransform, Vec3};

/// `n_datasets` datasets with seeds `seed, seed + 1, …`. Each header echoes
/// the full configuration with its own seed, so re-running with that header
/// as the config reproduces the dataset as the first output.
pub fn simulate_datasets(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    (0..cfg.n_datasets)
        .map(|i| {
            let own = RunConfig { seed: cfg.seed + i as u64, ..cfg.clone() };
            let ds = simulate(&own.sim_for(0))?;
            Ok(Dataset { header: own.entries(), ..ds })
        })
        .collect()
}

/// Frame-by-frame magnetic localization of one dataset, using the dataset's
/// own dipole and actuator parameters.
pub fn localize(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<StreamEstimate>> {
    let sim = ds.sim_config()?;
    localize_stream(&ds.mag, &sim.actuator, &sim.dipole, &cfg.inversion)
}

pub fn prepare_datasets(datasets: &[Dataset], cfg: &RunConfig) -> Result<Vec<PreparedDataset>> {
    datasets.iter().map(|d| PreparedDataset::from_dataset(d, &cfg.inversion)).collect()
}

fn common_rate_ratio(prepared: &[PreparedDataset]) -> Result<usize> {
    let first = prepared.first().ok_or_else(|| Error::DegenerateInput("no datasets".into()))?;
    let ratio = first.config.rate_ratio();
    if prepared.iter().any(|p| p.config.rate_ratio() != ratio) {
        return Err(Error::Config("datasets disagree on the magnetic/visual rate ratio".into()));
    }
    Ok(ratio)
}

/// Trains on the aligned streams of every dataset, seeded by `cfg.seed`.
pub fn train_on(prepared: &[PreparedDataset], cfg: &RunConfig) -> Result<(Checkpoint, TrainingLog)> {
    let rate_ratio = common_rate_ratio(prepared)?;
    let tc = crate::fusenet::TrainingConfig { seed: cfg.seed, rate_ratio, ..cfg.train.clone() };
    let sequences = prepared
        .iter()
        .map(|p| p.fused_samples(rate_ratio, tc.delta, tc.mag_encoding))
        .collect::<Result<Vec<_>>>()?;
    train(&sequences, &tc, &cfg.hyper)
}

pub fn evaluate(prepared: &[PreparedDataset], ckpt: &Checkpoint, cfg: &RunConfig) -> Result<Comparison> {
    let ratio = common_rate_ratio(prepared)?;
    if ratio != ckpt.network.rate_ratio {
        return Err(Error::Config(format!(
            "checkpoint expects rate ratio {}, datasets have {ratio}",
            ckpt.network.rate_ratio
        )));
    }
    compare_methods(prepared, ckpt, &cfg.buckets, cfg.roll_rule)
}

/// Known camera path, rendered frames and the recovered alignment.
#[derive(Clone, Debug)]
pub struct AlignDemo {
    pub truth: Vec<RigidTransform>,
    pub result: AlignmentResult,
}

impl AlignDemo {
    /// Translation and rotation error of each recovered camera.
    pub fn errors(&self) -> Vec<(f64, f64)> {
        self.truth
            .iter()
            .zip(&self.result.state.transforms)
            .map(|(t, r)| {
                ((t.translation - r.translation).norm(), rotation_angle(&(t.rotation.transpose() * r.rotation)))
            })
            .collect()
    }

    pub fn max_error(&self) -> (f64, f64) {
        self.errors().iter().fold((0.0, 0.0), |(a, b), &(t, r)| (a.max(t), b.max(r)))
    }

    /// `frame true(tx ty tz) recovered(tx ty tz) trans_err rot_err` lines plus
    /// a summary comment.
    pub fn to_text(&self) -> String {
        let r = &self.result;
        let mut out = format!(
            "# energy {:e} sparse_stage_energy {:e} converged {} accepted_steps {}\n",
            r.energy,
            r.sparse_stage_energy,
            r.converged,
            r.trace.len()
        );
        out.push_str("# frame true_tx true_ty true_tz est_tx est_ty est_tz trans_err rot_err\n");
        for (k, ((t, e), (dt, dr))) in self.truth.iter().zip(&r.state.transforms).zip(self.errors()).enumerate() {
            let (a, b) = (t.translation, e.translation);
            writeln!(out, "{k} {} {} {} {} {} {} {dt:e} {dr:e}", a[0], a[1], a[2], b[0], b[1], b[2]).unwrap();
        }
        out
    }
}

/// Renders a seeded camera path over a synthetic surface and aligns it.
pub fn align_demo(cfg: &RunConfig) -> Result<AlignDemo> {
    cfg.validate()?;
    let d = &cfg.align_demo;
    let mut rng = stream_rng(cfg.seed, 3);
    let mut truth = vec![RigidTransform::identity()];
    for _ in 1..d.frames {
        let mut unit = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let axis = unit().normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        let step = RigidTransform::new(so3_exp(axis * d.step_angle), unit() * d.step_shift);
        truth.push(truth.last().unwrap().compose(&step));
    }
    let scene = Scene::new(cfg.seed, 0.05, d.relief);
    let window = SyntheticWindow::new(
        &scene,
        truth.clone(),
        &Intrinsics::default(),
        cfg.align.max_pair_gap.max(1),
        d.correspondences,
        d.noise_sd,
        &mut rng,
    )?;
    let result = minimize_alignment(&window.frames, &window.correspondences, &cfg.align_weights, &cfg.align)?;
    Ok(AlignDemo { truth, result })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut cfg = RunConfig { seed: 5, n_datasets: 2, ..RunConfig::default() };
        cfg.sim.duration = 3.0;
        cfg
    }

    #[test]
    fn simulated_headers_reproduce_each_dataset() {
        let cfg = small();
        let sets = simulate_datasets(&cfg).unwrap();
        assert_eq!(sets.len(), 2);
        assert_ne!(sets[0].gt, sets[1].gt);
        for ds in &sets {
            let first = ds.to_text().lines().next().unwrap().to_string();
            let echoed = RunConfig::from_header_line(&first).unwrap();
            assert_eq!(simulate_datasets(&echoed).unwrap()[0], *ds);
            assert_eq!(ds.sim_config().unwrap().seed, echoed.seed);
        }
        assert_eq!(sets, simulate_datasets(&cfg).unwrap());
    }

    #[test]
    fn noiseless_localization_recovers_the_embedded_truth() {
        let mut cfg = small();
        cfg.n_datasets = 1;
        cfg.sim = cfg.sim.clone().without_noise();
        let ds = &simulate_datasets(&cfg).unwrap()[0];
        let est = localize(ds, &cfg).unwrap();
        assert_eq!(est.len(), ds.gt.len());
        for (e, s) in est.iter().zip(ds.gt.samples()) {
            assert!((e.measurement.position - s.pose.translation).norm() < 1e-6);
        }
    }

    #[test]
    fn noiseless_align_demo_recovers_the_path() {
        let demo = align_demo(&RunConfig::default()).unwrap();
        let (dt, dr) = demo.max_error();
        assert!(dt < 1e-6 && dr < 1e-6, "{dt:e} {dr:e}");
        assert_eq!(demo.to_text().lines().count(), 2 + demo.truth.len());
    }

    #[test]
    fn mismatched_rate_ratios_are_rejected() {
        let mut cfg = small();
        cfg.n_datasets = 1;
        let a = prepare_datasets(&simulate_datasets(&cfg).unwrap(), &cfg).unwrap();
        cfg.sim.mag_rate = 75.0;
        let b = prepare_datasets(&simulate_datasets(&cfg).unwrap(), &cfg).unwrap();
        let both = [a[0].clone(), b[0].clone()];
        assert!(train_on(&both, &cfg).is_err());
        assert!(train_on(&[], &cfg).is_err());
    }
}
