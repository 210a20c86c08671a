use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::neural::{adam_step, pose_loss, AdamState, Hyperparams, ParameterSet};
use crate::sim::stream_rng;

use super::checkpoint::Checkpoint;
use super::network::{FusionNetwork, Readout, SKIP_INPUTS};
use super::normalize::Normalization;
use super::samples::{DeltaKind, FusedSample, MagEncoding, MAG_INPUTS, OUTPUTS};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    /// Fused steps per training sequence.
    pub window_length: usize,
    pub early_stop_patience: usize,
    /// Share of trajectories held out for validation. With a single
    /// trajectory, the trailing share of its samples is held out instead.
    pub validation_fraction: f64,
    /// Epochs trained with the initial β before it is calibrated and frozen.
    pub warmup_epochs: usize,
    pub calibrate_beta: bool,
    pub seed: u64,
    pub delta: DeltaKind,
    /// Encoding the magnetic inputs were built with; recorded in the
    /// checkpoint and used by the skip prior.
    pub mag_encoding: MagEncoding,
    pub readout: Readout,
    pub loss_span: LossSpan,
    /// Start the skip path from [`dof_prior`] with a zero head.
    pub skip_prior: bool,
    pub rate_ratio: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            max_epochs: 200,
            window_length: 128,
            early_stop_patience: 10,
            validation_fraction: 0.2,
            warmup_epochs: 10,
            calibrate_beta: true,
            seed: 0,
            delta: DeltaKind::default(),
            mag_encoding: MagEncoding::default(),
            readout: Readout::default(),
            loss_span: LossSpan::default(),
            skip_prior: true,
            rate_ratio: 2,
        }
    }
}

impl TrainingConfig {
    /// Small settings that train in seconds.
    pub fn desk() -> Self {
        TrainingConfig { max_epochs: 30, window_length: 128, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.max_epochs >= 1, "max_epochs must be at least 1"),
            (self.window_length >= 2, "window_length must be at least 2"),
            (self.early_stop_patience >= 1, "early_stop_patience must be at least 1"),
            (
                self.validation_fraction > 0.0 && self.validation_fraction < 1.0,
                "validation_fraction must be in (0, 1)",
            ),
            (self.rate_ratio >= 1, "rate_ratio must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}

/// What the loss compares at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossSpan {
    /// The step's delta.
    Step,
    /// The motion accumulated from the window start up to the step.
    #[default]
    Window,
}

impl std::fmt::Display for LossSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossSpan::Step => "step",
            LossSpan::Window => "window",
        })
    }
}

impl std::str::FromStr for LossSpan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(LossSpan::Step),
            "window" => Ok(LossSpan::Window),
            _ => Err(Error::Config(format!("unknown loss span {s:?}"))),
        }
    }
}

/// Skip-path map in physical units assigning each output degree of freedom
/// to the sensor that observes it directly: with difference deltas and
/// magnetic increments, translation, pitch and yaw follow the magnetic
/// increments and roll follows the visual delta. Otherwise every output
/// follows the visual delta.
pub fn dof_prior(kind: DeltaKind, encoding: MagEncoding) -> [[f64; SKIP_INPUTS]; OUTPUTS] {
    let mut map = [[0.0; SKIP_INPUTS]; OUTPUTS];
    if kind == DeltaKind::Difference && encoding == MagEncoding::Increment {
        for (out, input) in [(0, 0), (1, 1), (2, 2), (3, MAG_INPUTS + 3), (4, 3), (5, 4)] {
            map[out][input] = 1.0;
        }
    } else {
        for (k, row) in map.iter_mut().enumerate() {
            row[MAG_INPUTS + k] = 1.0;
        }
    }
    map
}

pub const BETA_MIN: f64 = 1.0;
pub const BETA_MAX: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaCalibration {
    pub beta: f64,
    /// Set when the rotational residual vanished and β was clamped.
    pub flagged: bool,
}

/// `β = mean translational norm / mean rotational norm`, clamped to
/// `[BETA_MIN, BETA_MAX]`.
pub fn beta_from_residuals(trans: &[f64], rot: &[f64]) -> BetaCalibration {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (t, r) = (mean(trans), mean(rot));
    if r <= 0.0 || !r.is_finite() {
        return BetaCalibration { beta: BETA_MAX, flagged: true };
    }
    BetaCalibration { beta: (t / r).clamp(BETA_MIN, BETA_MAX), flagged: false }
}

fn residual_norms(pred: &[f64; OUTPUTS], target: &[f64; OUTPUTS]) -> (f64, f64) {
    let norm = |k: usize| (k..k + 3).map(|i| (pred[i] - target[i]).powi(2)).sum::<f64>().sqrt();
    (norm(0), norm(3))
}

/// Calibrates β from the network's residuals, in the units of the loss, on
/// normalized `windows`, each run from the zero state.
pub fn calibrate_beta(
    net: &FusionNetwork,
    readout: Readout,
    norm: &Normalization,
    windows: &[Vec<FusedSample>],
    span: LossSpan,
) -> Result<BetaCalibration> {
    let mut trans = Vec::new();
    let mut rot = Vec::new();
    for w in windows {
        let y = net.predict_from_zero(w, readout)?;
        for (pred, truth) in scaled_pairs(&y, w, norm, span)? {
            let (t, r) = residual_norms(&pred, &truth);
            trans.push(t);
            rot.push(r);
        }
    }
    Ok(beta_from_residuals(&trans, &rot))
}

/// Stops after `patience` consecutive epochs without a new best.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: None, stale: 0 }
    }

    /// Records an epoch's validation loss; returns `true` when training
    /// should stop.
    pub fn update(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == Some(epoch)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-step loss over the epoch's training windows.
    pub train_loss: f64,
    pub val_loss: f64,
    pub beta: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean per-step training loss of the initial weights, without dropout.
    pub initial_loss: f64,
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub beta_flagged: bool,
    pub diverged_at: Option<usize>,
}

impl TrainingLog {
    /// `epoch train_loss val_loss beta lr` lines.
    pub fn records_text(&self) -> String {
        let mut out = String::from("# epoch train_loss val_loss beta lr\n");
        writeln!(out, "# initial_loss {:e}", self.initial_loss).unwrap();
        for r in &self.records {
            writeln!(out, "{} {:e} {:e} {} {}", r.epoch, r.train_loss, r.val_loss, r.beta, r.lr).unwrap();
        }
        out
    }
}

/// Sum of per-step pose losses over one window and the gradient with
/// respect to the normalized network outputs.
/// Predicted and true motion per step in target-scaled units
/// (`delta / target sd`), either per step or accumulated from the window
/// start.
fn scaled_pairs(
    outputs: &[[f64; OUTPUTS]],
    window: &[FusedSample],
    norm: &Normalization,
    span: LossSpan,
) -> Result<Vec<([f64; OUTPUTS], [f64; OUTPUTS])>> {
    let sd = &norm.target.sd;
    let mut acc = ([0.0; OUTPUTS], [0.0; OUTPUTS]);
    let mut out = Vec::with_capacity(outputs.len());
    for (y, s) in outputs.iter().zip(window) {
        let target = s.target.ok_or_else(|| Error::Config("sample without target".into()))?;
        let o = norm.output(y);
        let pred: [f64; OUTPUTS] = std::array::from_fn(|k| o[k] / sd[k]);
        let truth: [f64; OUTPUTS] = std::array::from_fn(|k| target[k] / sd[k]);
        match span {
            LossSpan::Step => out.push((pred, truth)),
            LossSpan::Window => {
                for k in 0..OUTPUTS {
                    acc.0[k] += pred[k];
                    acc.1[k] += truth[k];
                }
                out.push(acc);
            }
        }
    }
    Ok(out)
}

/// Summed pose loss over a window and its gradient with respect to each
/// normalized output.
pub fn window_loss(
    outputs: &[[f64; OUTPUTS]],
    window: &[FusedSample],
    norm: &Normalization,
    beta: f64,
    span: LossSpan,
) -> Result<(f64, Vec<[f64; OUTPUTS]>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(outputs.len());
    for (pred, truth) in scaled_pairs(outputs, window, norm, span)? {
        let (loss, g) = pose_loss(&pred, &truth, beta);
        total += loss;
        grads.push(std::array::from_fn(|k| g[k]));
    }
    if span == LossSpan::Window {
        // Output t enters every accumulated term from t on.
        for t in (0..grads.len().saturating_sub(1)).rev() {
            for k in 0..OUTPUTS {
                grads[t][k] += grads[t + 1][k];
            }
        }
    }
    Ok((total, grads))
}

fn mean_loss(
    net: &FusionNetwork,
    readout: Readout,
    span: LossSpan,
    windows: &[Vec<FusedSample>],
    norm: &Normalization,
    beta: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut steps = 0;
    for w in windows {
        let y = net.predict_from_zero(w, readout)?;
        total += window_loss(&y, w, norm, beta, span)?.0;
        steps += w.len();
    }
    Ok(total / steps as f64)
}

/// Consecutive windows of `len` steps; a shorter tail is kept when it has at
/// least two steps.
pub fn cut_windows(sequence: &[FusedSample], len: usize) -> Vec<Vec<FusedSample>> {
    sequence.chunks(len).filter(|c| c.len() >= 2).map(|c| c.to_vec()).collect()
}

fn split<'a>(
    sequences: &'a [Vec<FusedSample>],
    cfg: &TrainingConfig,
) -> Result<(Vec<&'a [FusedSample]>, Vec<&'a [FusedSample]>)> {
    match sequences.len() {
        0 => Err(Error::Config("no training data".into())),
        1 => {
            let s = &sequences[0];
            let held = ((s.len() as f64) * cfg.validation_fraction).ceil() as usize;
            let cut = s.len().saturating_sub(held);
            Ok((vec![&s[..cut]], vec![&s[cut..]]))
        }
        n => {
            let held = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
            let (t, v) = sequences.split_at(n - held);
            Ok((t.iter().map(|s| s.as_slice()).collect(), v.iter().map(|s| s.as_slice()).collect()))
        }
    }
}

/// Trains a network on aligned sequences carrying targets.
///
/// All randomness derives from `cfg.seed`: stream 0 initializes weights,
/// stream 1 shuffles windows, stream 2 draws dropout masks. Returns the
/// weights with the best validation loss seen after the warm-up (or the last
/// weights if training ends inside it). A non-finite loss ends training with
/// `diverged_at` set and the last finite weights.
pub fn train(
    sequences: &[Vec<FusedSample>],
    cfg: &TrainingConfig,
    hp: &Hyperparams,
) -> Result<(Checkpoint, TrainingLog)> {
    cfg.validate()?;
    hp.validate()?;
    let (train_seqs, val_seqs) = split(sequences, cfg)?;
    let norm = Normalization::fit_with(train_seqs.iter().flat_map(|s| s.iter()), cfg.readout == Readout::Odd)?;
    let prepare = |seqs: &[&[FusedSample]]| -> Vec<Vec<FusedSample>> {
        seqs.iter()
            .flat_map(|s| {
                let n: Vec<FusedSample> = s.iter().map(|x| norm.apply(x)).collect();
                cut_windows(&n, cfg.window_length)
            })
            .collect()
    };
    let train_windows = prepare(&train_seqs);
    let val_windows = prepare(&val_seqs);
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::Config("training or validation split has no complete window".into()));
    }

    let mut net = FusionNetwork::random(hp.hidden_size, cfg.rate_ratio, &mut stream_rng(cfg.seed, 0));
    if cfg.skip_prior {
        net.set_skip_prior(&dof_prior(cfg.delta, cfg.mag_encoding), &norm);
    }
    let mut order_rng = stream_rng(cfg.seed, 1);
    let mut dropout_rng = stream_rng(cfg.seed, 2);
    let mut adam = AdamState::new(net.num_params());
    let mut params = net.flatten();
    let mut beta = hp.beta_loss;
    let mut log = TrainingLog { initial_loss: mean_loss(&net, cfg.readout, cfg.loss_span, &train_windows, &norm, beta)?, ..Default::default() };
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best: Option<(FusionNetwork, f64)> = None;
    let mut last_finite = (net.clone(), beta);
    let monitor_from = if cfg.calibrate_beta { cfg.warmup_epochs + 1 } else { 1 };
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut steps = 0;
        for &k in &order {
            let w = &train_windows[k];
            let (y, cache) = net.forward_readout(w, cfg.readout, hp.dropout_rate, &mut dropout_rng)?;
            let (loss, d) = window_loss(&y, w, &norm, beta, cfg.loss_span)?;
            if !loss.is_finite() {
                log.diverged_at = Some(epoch);
                break 'epochs;
            }
            let grads = net.backward_readout(&cache, &d)?;
            adam_step(&mut params, &grads, &mut adam, hp)?;
            if params.iter().any(|p| !p.is_finite()) {
                log.diverged_at = Some(epoch);
                break 'epochs;
            }
            net.assign(&params);
            total += loss;
            steps += w.len();
        }
        if cfg.calibrate_beta && epoch == cfg.warmup_epochs {
            let c = calibrate_beta(&net, cfg.readout, &norm, &val_windows, cfg.loss_span)?;
            beta = c.beta;
            log.beta_flagged = c.flagged;
        }
        let val_loss = mean_loss(&net, cfg.readout, cfg.loss_span, &val_windows, &norm, beta)?;
        if !val_loss.is_finite() {
            log.diverged_at = Some(epoch);
            break;
        }
        last_finite = (net.clone(), beta);
        log.records.push(EpochRecord { epoch, train_loss: total / steps as f64, val_loss, beta, lr: hp.alpha });
        if epoch >= monitor_from {
            let stop = stopper.update(epoch, val_loss);
            if stopper.improved_at(epoch) {
                best = Some((net.clone(), beta));
                log.best_epoch = Some(epoch);
            }
            if stop {
                log.stopped_early = true;
                break;
            }
        }
    }

    let (network, beta) = best.unwrap_or(last_finite);
    let checkpoint = Checkpoint {
        network,
        hyperparams: Hyperparams { beta_loss: beta, ..hp.clone() },
        normalization: norm,
        delta: cfg.delta,
        mag_encoding: cfg.mag_encoding,
        readout: cfg.readout,
    };
    Ok((checkpoint, log))
}
