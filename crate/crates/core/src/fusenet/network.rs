use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neural::{
    dropout, dropout_backward, lstm_backward, lstm_sequence_forward, Linear, ParameterSet,
    SequenceCache,
};
use crate::{LstmState, LstmWeights};

use super::samples::{FusedSample, MAG_INPUTS, OUTPUTS, VIS_INPUTS};

/// How network outputs become deltas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Readout {
    /// The head output as is.
    Direct,
    /// `½ (N(x) − N(−x))`: the network is run a second time on sign-flipped
    /// inputs, so the delta is an odd function of the inputs and even-order
    /// terms cannot leave a mean offset.
    #[default]
    Odd,
}

impl std::fmt::Display for Readout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Readout::Direct => "direct",
            Readout::Odd => "odd",
        })
    }
}

impl std::str::FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Readout::Direct),
            "odd" => Ok(Readout::Odd),
            _ => Err(Error::Config(format!("unknown readout {s:?}"))),
        }
    }
}

/// Inputs with every component negated; the target is negated too.
pub fn negated(s: &FusedSample) -> FusedSample {
    FusedSample {
        mag_inputs: s.mag_inputs.iter().map(|m| m.map(|v| -v)).collect(),
        vis_input: s.vis_input.map(|v| -v),
        target: s.target.map(|t| t.map(|v| -v)),
        ..s.clone()
    }
}

/// Two branch LSTMs at their native rates, a core LSTM over the
/// concatenated branch outputs, and a linear head emitting one delta per
/// fused step. A linear skip from the step's inputs (the sum of its magnetic
/// inputs and the visual input) is added to the head output.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionNetwork {
    pub mag_lstm: LstmWeights,
    pub vis_lstm: LstmWeights,
    pub core_lstm: LstmWeights,
    pub head: Linear<f64>,
    pub skip: Linear<f64>,
    /// Magnetic ticks per fused step.
    pub rate_ratio: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub mag: LstmState,
    pub vis: LstmState,
    pub core: LstmState,
}

/// Everything [`FusionNetwork::backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mag: SequenceCache<f64>,
    vis: SequenceCache<f64>,
    core: SequenceCache<f64>,
    core_h: Vec<Vec<f64>>,
    skip_x: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    dropout_rate: f64,
}

/// Inputs of the skip path: the step's magnetic inputs summed, then the
/// visual input.
pub const SKIP_INPUTS: usize = MAG_INPUTS + VIS_INPUTS;

fn skip_input(s: &FusedSample) -> Vec<f64> {
    let mut x = vec![0.0; SKIP_INPUTS];
    for m in &s.mag_inputs {
        for (a, b) in x.iter_mut().zip(m) {
            *a += b;
        }
    }
    x[MAG_INPUTS..].copy_from_slice(&s.vis_input);
    x
}

fn accumulate(into: &mut Linear<f64>, weight: &crate::Matrix, bias: &[f64]) {
    for (a, b) in into.weight.as_mut_slice().iter_mut().zip(weight.as_slice()) {
        *a += b;
    }
    for (a, b) in into.bias.iter_mut().zip(bias) {
        *a += b;
    }
}

/// Forward caches for one or both passes of a readout.
#[derive(Clone, Debug)]
pub struct ReadoutCache {
    direct: ForwardCache,
    mirrored: Option<ForwardCache>,
}

impl FusionNetwork {
    pub fn zeros(hidden: usize, rate_ratio: usize) -> Self {
        FusionNetwork {
            mag_lstm: LstmWeights::zeros(MAG_INPUTS, hidden),
            vis_lstm: LstmWeights::zeros(VIS_INPUTS, hidden),
            core_lstm: LstmWeights::zeros(2 * hidden, hidden),
            head: Linear::zeros(hidden, OUTPUTS),
            skip: Linear::zeros(SKIP_INPUTS, OUTPUTS),
            rate_ratio,
        }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, rate_ratio: usize, rng: &mut R) -> Self {
        FusionNetwork {
            mag_lstm: LstmWeights::random(MAG_INPUTS, hidden, rng),
            vis_lstm: LstmWeights::random(VIS_INPUTS, hidden, rng),
            core_lstm: LstmWeights::random(2 * hidden, hidden, rng),
            head: Linear::random(hidden, OUTPUTS, rng),
            skip: Linear::random(SKIP_INPUTS, OUTPUTS, rng),
            rate_ratio,
        }
    }

    /// Sets the skip path to `map` (rows: outputs; columns: skip inputs, in
    /// physical units) expressed for `norm`, and zeroes the head, so the
    /// untrained network outputs `map · x` exactly.
    pub fn set_skip_prior(&mut self, map: &[[f64; SKIP_INPUTS]; OUTPUTS], norm: &super::Normalization) {
        let in_sd: Vec<f64> = norm.mag.sd.iter().chain(&norm.vis.sd).copied().collect();
        let in_mean: Vec<f64> = norm
            .mag
            .mean
            .iter()
            .map(|m| m * self.rate_ratio as f64)
            .chain(norm.vis.mean.iter().copied())
            .collect();
        for k in 0..OUTPUTS {
            let mut bias = -norm.target.mean[k];
            for j in 0..SKIP_INPUTS {
                self.skip.weight.set(k, j, map[k][j] * in_sd[j] / norm.target.sd[k]);
                bias += map[k][j] * in_mean[j];
            }
            self.skip.bias[k] = bias / norm.target.sd[k];
        }
        self.head = Linear::zeros(self.hidden_size(), OUTPUTS);
    }

    pub fn hidden_size(&self) -> usize {
        self.core_lstm.hidden_size()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        let dims = [
            ("magnetic lstm input", MAG_INPUTS, self.mag_lstm.input_size()),
            ("visual lstm input", VIS_INPUTS, self.vis_lstm.input_size()),
            ("magnetic lstm hidden", h, self.mag_lstm.hidden_size()),
            ("visual lstm hidden", h, self.vis_lstm.hidden_size()),
            ("core lstm input", 2 * h, self.core_lstm.input_size()),
            ("head input", h, self.head.input_size()),
            ("head output", OUTPUTS, self.head.output_size()),
            ("head bias", OUTPUTS, self.head.bias.len()),
            ("skip input", SKIP_INPUTS, self.skip.input_size()),
            ("skip output", OUTPUTS, self.skip.output_size()),
            ("skip bias", OUTPUTS, self.skip.bias.len()),
        ];
        for (context, expected, found) in dims {
            if expected != found {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        for w in [&self.mag_lstm, &self.vis_lstm, &self.core_lstm] {
            w.validate()?;
        }
        if self.rate_ratio == 0 {
            return Err(Error::Config("rate ratio must be at least 1".into()));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> NetworkState {
        let h = self.hidden_size();
        NetworkState { mag: LstmState::zeros(h), vis: LstmState::zeros(h), core: LstmState::zeros(h) }
    }

    /// Runs `samples` (normalized inputs) from `init`. Dropout is applied to
    /// the concatenated branch outputs only when `training`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        samples: &[FusedSample],
        init: &NetworkState,
        dropout_rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(Vec<[f64; OUTPUTS]>, NetworkState, ForwardCache)> {
        if samples.is_empty() {
            return Err(Error::DimensionMismatch { context: "fused sequence length", expected: 1, found: 0 });
        }
        let r = self.rate_ratio;
        let h = self.hidden_size();
        let mut mag_xs = Vec::with_capacity(samples.len() * r);
        for s in samples {
            if s.mag_inputs.len() != r {
                return Err(Error::DimensionMismatch {
                    context: "magnetic inputs per fused step",
                    expected: r,
                    found: s.mag_inputs.len(),
                });
            }
            mag_xs.extend(s.mag_inputs.iter().map(|m| m.to_vec()));
        }
        let vis_xs: Vec<Vec<f64>> = samples.iter().map(|s| s.vis_input.to_vec()).collect();
        let (mag_states, mag_cache) = lstm_sequence_forward(&mag_xs, &init.mag, &self.mag_lstm)?;
        let (vis_states, vis_cache) = lstm_sequence_forward(&vis_xs, &init.vis, &self.vis_lstm)?;

        let rate = if training { dropout_rate } else { 0.0 };
        let mut core_xs = Vec::with_capacity(samples.len());
        let mut masks = Vec::with_capacity(samples.len());
        for (t, vis_state) in vis_states.iter().enumerate() {
            let mut joined = Vec::with_capacity(2 * h);
            joined.extend_from_slice(&mag_states[r * t + r - 1].h);
            joined.extend_from_slice(&vis_state.h);
            let (x, mask) = dropout(&joined, rate, rng, training);
            core_xs.push(x);
            masks.push(mask);
        }
        let (core_states, core_cache) = lstm_sequence_forward(&core_xs, &init.core, &self.core_lstm)?;
        let skip_x: Vec<Vec<f64>> = samples.iter().map(skip_input).collect();
        let mut outputs = Vec::with_capacity(samples.len());
        for (s, x) in core_states.iter().zip(&skip_x) {
            let y = self.head.forward(&s.h)?;
            let z = self.skip.forward(x)?;
            outputs.push(std::array::from_fn(|k| y[k] + z[k]));
        }
        let last = NetworkState {
            mag: mag_states.last().expect("nonempty").clone(),
            vis: vis_states.last().expect("nonempty").clone(),
            core: core_states.last().expect("nonempty").clone(),
        };
        let cache = ForwardCache {
            mag: mag_cache,
            vis: vis_cache,
            core: core_cache,
            core_h: core_states.into_iter().map(|s| s.h).collect(),
            skip_x,
            masks,
            dropout_rate: rate,
        };
        Ok((outputs, last, cache))
    }

    /// Gradients of `Σ_t d_outputs[t] · y_t` with respect to every weight,
    /// laid out as a network of the same shape. The initial state is treated
    /// as a constant.
    pub fn backward(&self, cache: &ForwardCache, d_outputs: &[[f64; OUTPUTS]]) -> Result<FusionNetwork> {
        let steps = cache.core_h.len();
        if d_outputs.len() != steps {
            return Err(Error::DimensionMismatch { context: "output gradients", expected: steps, found: d_outputs.len() });
        }
        let h = self.hidden_size();
        let r = self.rate_ratio;
        let mut head = Linear::zeros(h, OUTPUTS);
        let mut skip = Linear::zeros(SKIP_INPUTS, OUTPUTS);
        let mut dh_core = Vec::with_capacity(steps);
        for ((x, sx), dy) in cache.core_h.iter().zip(&cache.skip_x).zip(d_outputs) {
            let g = self.head.backward(x, dy)?;
            accumulate(&mut head, &g.weight, &g.bias);
            let g_skip = self.skip.backward(sx, dy)?;
            accumulate(&mut skip, &g_skip.weight, &g_skip.bias);
            dh_core.push(g.input);
        }
        let core = lstm_backward(&cache.core, &self.core_lstm, &dh_core, &vec![0.0; h])?;
        let mut dh_mag = vec![vec![0.0; h]; steps * r];
        let mut dh_vis = Vec::with_capacity(steps);
        for (t, (dx, mask)) in core.d_inputs.iter().zip(&cache.masks).enumerate() {
            let d = dropout_backward(dx, mask, cache.dropout_rate);
            dh_mag[r * t + r - 1].copy_from_slice(&d[..h]);
            dh_vis.push(d[h..].to_vec());
        }
        let mag = lstm_backward(&cache.mag, &self.mag_lstm, &dh_mag, &vec![0.0; h])?;
        let vis = lstm_backward(&cache.vis, &self.vis_lstm, &dh_vis, &vec![0.0; h])?;
        Ok(FusionNetwork {
            mag_lstm: mag.weights,
            vis_lstm: vis.weights,
            core_lstm: core.weights,
            head,
            skip,
            rate_ratio: r,
        })
    }

    /// Inference over `samples`, carrying `state` forward.
    pub fn predict(&self, samples: &[FusedSample], state: &mut NetworkState) -> Result<Vec<[f64; OUTPUTS]>> {
        // Inference never draws from the generator.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (y, last, _) = self.forward(samples, state, 0.0, false, &mut unused)?;
        *state = last;
        Ok(y)
    }

    /// Inference over `samples` from the zero state with the given readout.
    pub fn predict_from_zero(&self, samples: &[FusedSample], readout: Readout) -> Result<Vec<[f64; OUTPUTS]>> {
        let y = self.predict(samples, &mut self.initial_state())?;
        match readout {
            Readout::Direct => Ok(y),
            Readout::Odd => {
                let flipped: Vec<FusedSample> = samples.iter().map(negated).collect();
                let z = self.predict(&flipped, &mut self.initial_state())?;
                Ok(y.iter().zip(&z).map(|(a, b)| std::array::from_fn(|k| 0.5 * (a[k] - b[k]))).collect())
            }
        }
    }

    /// Training pass from the zero state: outputs under `readout` and a
    /// cache for the matching backward pass.
    pub fn forward_readout<R: Rng + ?Sized>(
        &self,
        samples: &[FusedSample],
        readout: Readout,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<(Vec<[f64; OUTPUTS]>, ReadoutCache)> {
        let (y, _, direct) = self.forward(samples, &self.initial_state(), dropout_rate, true, rng)?;
        match readout {
            Readout::Direct => Ok((y, ReadoutCache { direct, mirrored: None })),
            Readout::Odd => {
                let flipped: Vec<FusedSample> = samples.iter().map(negated).collect();
                let (z, _, mirrored) = self.forward(&flipped, &self.initial_state(), dropout_rate, true, rng)?;
                let out = y.iter().zip(&z).map(|(a, b)| std::array::from_fn(|k| 0.5 * (a[k] - b[k]))).collect();
                Ok((out, ReadoutCache { direct, mirrored: Some(mirrored) }))
            }
        }
    }

    /// Flat gradient matching [`FusionNetwork::forward_readout`].
    pub fn backward_readout(&self, cache: &ReadoutCache, d_outputs: &[[f64; OUTPUTS]]) -> Result<Vec<f64>> {
        match &cache.mirrored {
            None => Ok(self.backward(&cache.direct, d_outputs)?.flatten()),
            Some(mirrored) => {
                let half: Vec<[f64; OUTPUTS]> = d_outputs.iter().map(|d| d.map(|v| 0.5 * v)).collect();
                let a = self.backward(&cache.direct, &half)?.flatten();
                let b = self.backward(mirrored, &half)?.flatten();
                Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
            }
        }
    }

    /// Named parameter arrays with their `(rows, cols)` shapes, in
    /// [`ParameterSet`] order.
    pub fn named_arrays(&self) -> Vec<(String, (usize, usize), &[f64])> {
        let mut out = Vec::new();
        for (prefix, w) in [("mag_lstm", &self.mag_lstm), ("vis_lstm", &self.vis_lstm), ("core_lstm", &self.core_lstm)] {
            for (name, m) in LstmWeights::NAMES.iter().zip(w.matrices()) {
                out.push((format!("{prefix}.{name}"), (m.rows(), m.cols()), m.as_slice()));
            }
        }
        let w = &self.head.weight;
        out.push(("head.weight".to_string(), (w.rows(), w.cols()), w.as_slice()));
        out.push(("head.bias".to_string(), (self.head.bias.len(), 1), self.head.bias.as_slice()));
        let w = &self.skip.weight;
        out.push(("skip.weight".to_string(), (w.rows(), w.cols()), w.as_slice()));
        out.push(("skip.bias".to_string(), (self.skip.bias.len(), 1), self.skip.bias.as_slice()));
        out
    }
}

impl ParameterSet<f64> for FusionNetwork {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.mag_lstm.slices();
        v.extend(self.vis_lstm.slices());
        v.extend(self.core_lstm.slices());
        v.extend(self.head.slices());
        v.extend(self.skip.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.mag_lstm.slices_mut();
        v.extend(self.vis_lstm.slices_mut());
        v.extend(self.core_lstm.slices_mut());
        v.extend(self.head.slices_mut());
        v.extend(self.skip.slices_mut());
        v
    }
}
