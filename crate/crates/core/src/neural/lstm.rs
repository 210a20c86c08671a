//! Bias-free LSTM cell, sequence unrolling and backpropagation through time.
//!
//! Gates:
//! ```text
//! i = σ(W_ix x + W_ih h₋)    f = σ(W_fx x + W_fh h₋)
//! g = tanh(W_gx x + W_gh h₋) o = σ(W_ox x + W_oh h₋)
//! c = f ⊙ c₋ + i ⊙ g         h = o ⊙ tanh(c)
//! ```

use rand::Rng;

use crate::error::Result;
use crate::scalar::Real;

use super::matrix::{check_len, Matrix};
use super::ParameterSet;

#[inline]
pub fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// The eight gate matrices; input matrices are `hidden × input`, recurrent
/// ones `hidden × hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights<S> {
    pub w_ix: Matrix<S>,
    pub w_ih: Matrix<S>,
    pub w_fx: Matrix<S>,
    pub w_fh: Matrix<S>,
    pub w_gx: Matrix<S>,
    pub w_gh: Matrix<S>,
    pub w_ox: Matrix<S>,
    pub w_oh: Matrix<S>,
}

impl<S: Real> LstmWeights<S> {
    pub const NAMES: [&'static str; 8] =
        ["w_ix", "w_ih", "w_fx", "w_fh", "w_gx", "w_gh", "w_ox", "w_oh"];

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let x = || Matrix::zeros(hidden, input);
        let h = || Matrix::zeros(hidden, hidden);
        LstmWeights {
            w_ix: x(),
            w_ih: h(),
            w_fx: x(),
            w_fh: h(),
            w_gx: x(),
            w_gh: h(),
            w_ox: x(),
            w_oh: h(),
        }
    }

    /// Uniform in ±1/√fan-in for each matrix.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bx = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        LstmWeights {
            w_ix: Matrix::uniform(hidden, input, bx, rng),
            w_ih: Matrix::uniform(hidden, hidden, bh, rng),
            w_fx: Matrix::uniform(hidden, input, bx, rng),
            w_fh: Matrix::uniform(hidden, hidden, bh, rng),
            w_gx: Matrix::uniform(hidden, input, bx, rng),
            w_gh: Matrix::uniform(hidden, hidden, bh, rng),
            w_ox: Matrix::uniform(hidden, input, bx, rng),
            w_oh: Matrix::uniform(hidden, hidden, bh, rng),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ix.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_ix.rows()
    }

    pub fn matrices(&self) -> [&Matrix<S>; 8] {
        [
            &self.w_ix, &self.w_ih, &self.w_fx, &self.w_fh, &self.w_gx, &self.w_gh, &self.w_ox,
            &self.w_oh,
        ]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix<S>; 8] {
        [
            &mut self.w_ix,
            &mut self.w_ih,
            &mut self.w_fx,
            &mut self.w_fh,
            &mut self.w_gx,
            &mut self.w_gh,
            &mut self.w_ox,
            &mut self.w_oh,
        ]
    }

    /// Checks that all eight matrices agree on input and hidden sizes.
    pub fn validate(&self) -> Result<()> {
        let (n, h) = (self.input_size(), self.hidden_size());
        for (k, m) in self.matrices().iter().enumerate() {
            let cols = if k % 2 == 0 { n } else { h };
            check_len("lstm weight rows", h, m.rows())?;
            check_len("lstm weight cols", cols, m.cols())?;
        }
        Ok(())
    }
}

impl<S: Real> ParameterSet<S> for LstmWeights<S> {
    fn slices(&self) -> Vec<&[S]> {
        self.matrices().into_iter().map(|m| m.as_slice()).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [S]> {
        self.matrices_mut()
            .into_iter()
            .map(|m| m.as_mut_slice())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<S> {
    pub h: Vec<S>,
    pub c: Vec<S>,
}

impl<S: Real> LstmState<S> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![S::zero(); hidden],
            c: vec![S::zero(); hidden],
        }
    }
}

/// Activations retained from one cell step for the backward pass.
#[derive(Clone, Debug)]
pub struct CellCache<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub g: Vec<S>,
    pub o: Vec<S>,
    pub tanh_c: Vec<S>,
}

pub fn lstm_cell_forward<S: Real>(
    x: &[S],
    prev: &LstmState<S>,
    w: &LstmWeights<S>,
) -> Result<(LstmState<S>, CellCache<S>)> {
    let hidden = w.hidden_size();
    check_len("lstm input", w.input_size(), x.len())?;
    check_len("lstm hidden state", hidden, prev.h.len())?;
    check_len("lstm cell state", hidden, prev.c.len())?;
    Ok(cell_forward_unchecked(x, prev, w))
}

fn cell_forward_unchecked<S: Real>(
    x: &[S],
    prev: &LstmState<S>,
    w: &LstmWeights<S>,
) -> (LstmState<S>, CellCache<S>) {
    let hidden = w.hidden_size();
    let pre = |wx: &Matrix<S>, wh: &Matrix<S>| {
        let mut a = vec![S::zero(); hidden];
        wx.matvec_acc(x, &mut a);
        wh.matvec_acc(&prev.h, &mut a);
        a
    };
    let i: Vec<S> = pre(&w.w_ix, &w.w_ih).into_iter().map(sigmoid).collect();
    let f: Vec<S> = pre(&w.w_fx, &w.w_fh).into_iter().map(sigmoid).collect();
    let g: Vec<S> = pre(&w.w_gx, &w.w_gh).into_iter().map(|v| v.tanh()).collect();
    let o: Vec<S> = pre(&w.w_ox, &w.w_oh).into_iter().map(sigmoid).collect();
    let c: Vec<S> = (0..hidden).map(|k| f[k] * prev.c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<S> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<S> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        i,
        f,
        g,
        o,
        tanh_c,
    };
    (LstmState { h, c }, cache)
}

#[derive(Clone, Debug, Default)]
pub struct SequenceCache<S> {
    pub steps: Vec<CellCache<S>>,
}

impl<S> SequenceCache<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs the cell over `xs`, returning the state after every step.
pub fn lstm_sequence_forward<S: Real>(
    xs: &[Vec<S>],
    init: &LstmState<S>,
    w: &LstmWeights<S>,
) -> Result<(Vec<LstmState<S>>, SequenceCache<S>)> {
    if xs.is_empty() {
        return Err(crate::Error::DimensionMismatch {
            context: "lstm sequence length",
            expected: 1,
            found: 0,
        });
    }
    let mut states = Vec::with_capacity(xs.len());
    let mut steps = Vec::with_capacity(xs.len());
    let mut state = init.clone();
    for x in xs {
        let (next, cache) = lstm_cell_forward(x, &state, w)?;
        states.push(next.clone());
        steps.push(cache);
        state = next;
    }
    Ok((states, SequenceCache { steps }))
}

#[derive(Clone, Debug)]
pub struct LstmGradients<S> {
    pub weights: LstmWeights<S>,
    pub d_init: LstmState<S>,
    pub d_inputs: Vec<Vec<S>>,
}

/// Reverse-mode gradients of an unrolled sequence.
///
/// `dh[t]` is the upstream gradient on the hidden output of step `t`;
/// `dc_final` the gradient on the last cell state.
pub fn lstm_backward<S: Real>(
    cache: &SequenceCache<S>,
    w: &LstmWeights<S>,
    dh: &[Vec<S>],
    dc_final: &[S],
) -> Result<LstmGradients<S>> {
    let hidden = w.hidden_size();
    let input = w.input_size();
    check_len("lstm upstream gradients", cache.len(), dh.len())?;
    check_len("lstm final cell gradient", hidden, dc_final.len())?;
    for g in dh {
        check_len("lstm hidden gradient", hidden, g.len())?;
    }

    let mut grads = LstmWeights::zeros(input, hidden);
    let mut d_inputs = vec![vec![S::zero(); input]; cache.len()];
    let mut dh_next = vec![S::zero(); hidden];
    let mut dc_next = dc_final.to_vec();

    let mut da_i = vec![S::zero(); hidden];
    let mut da_f = vec![S::zero(); hidden];
    let mut da_g = vec![S::zero(); hidden];
    let mut da_o = vec![S::zero(); hidden];

    for t in (0..cache.len()).rev() {
        let s = &cache.steps[t];
        for k in 0..hidden {
            let dh_k = dh[t][k] + dh_next[k];
            let d_o = dh_k * s.tanh_c[k];
            let dc = dc_next[k] + dh_k * s.o[k] * (S::one() - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dc * s.g[k];
            let d_g = dc * s.i[k];
            let d_f = dc * s.c_prev[k];
            dc_next[k] = dc * s.f[k];
            da_i[k] = d_i * s.i[k] * (S::one() - s.i[k]);
            da_f[k] = d_f * s.f[k] * (S::one() - s.f[k]);
            da_g[k] = d_g * (S::one() - s.g[k] * s.g[k]);
            da_o[k] = d_o * s.o[k] * (S::one() - s.o[k]);
        }
        grads.w_ix.add_outer(&da_i, &s.x);
        grads.w_ih.add_outer(&da_i, &s.h_prev);
        grads.w_fx.add_outer(&da_f, &s.x);
        grads.w_fh.add_outer(&da_f, &s.h_prev);
        grads.w_gx.add_outer(&da_g, &s.x);
        grads.w_gh.add_outer(&da_g, &s.h_prev);
        grads.w_ox.add_outer(&da_o, &s.x);
        grads.w_oh.add_outer(&da_o, &s.h_prev);

        let dx = &mut d_inputs[t];
        w.w_ix.t_matvec_acc(&da_i, dx);
        w.w_fx.t_matvec_acc(&da_f, dx);
        w.w_gx.t_matvec_acc(&da_g, dx);
        w.w_ox.t_matvec_acc(&da_o, dx);

        dh_next.iter_mut().for_each(|v| *v = S::zero());
        w.w_ih.t_matvec_acc(&da_i, &mut dh_next);
        w.w_fh.t_matvec_acc(&da_f, &mut dh_next);
        w.w_gh.t_matvec_acc(&da_g, &mut dh_next);
        w.w_oh.t_matvec_acc(&da_o, &mut dh_next);
    }

    Ok(LstmGradients {
        weights: grads,
        d_init: LstmState {
            h: dh_next,
            c: dc_next,
        },
        d_inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{finite_difference_gradient, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_weights(v: [f64; 8]) -> LstmWeights<f64> {
        let m = |x: f64| Matrix::from_vec(1, 1, vec![x]).unwrap();
        LstmWeights {
            w_ix: m(v[0]),
            w_ih: m(v[1]),
            w_fx: m(v[2]),
            w_fh: m(v[3]),
            w_gx: m(v[4]),
            w_gh: m(v[5]),
            w_ox: m(v[6]),
            w_oh: m(v[7]),
        }
    }

    #[test]
    fn zero_weights_zero_state() {
        let w = LstmWeights::<f64>::zeros(3, 2);
        let (s, cache) = lstm_cell_forward(&[1.0, -2.0, 5.0], &LstmState::zeros(2), &w).unwrap();
        assert_eq!(s.h, vec![0.0, 0.0]);
        assert_eq!(s.c, vec![0.0, 0.0]);
        assert_eq!(cache.i, vec![0.5, 0.5]);
        assert_eq!(cache.f, vec![0.5, 0.5]);
        assert_eq!(cache.o, vec![0.5, 0.5]);
        assert_eq!(cache.g, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_weights_with_cell_memory() {
        let w = LstmWeights::<f64>::zeros(1, 1);
        let prev = LstmState { h: vec![0.0], c: vec![2.0] };
        let (s, _) = lstm_cell_forward(&[0.7], &prev, &w).unwrap();
        assert_eq!(s.c, vec![1.0]);
        assert!((s.h[0] - 0.380797).abs() < 1e-6);
        assert_eq!(s.h[0], 0.5 * 1f64.tanh());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let w = LstmWeights::<f64>::zeros(3, 2);
        assert!(lstm_cell_forward(&[1.0], &LstmState::zeros(2), &w).is_err());
        assert!(lstm_cell_forward(&[1.0, 2.0, 3.0], &LstmState::zeros(3), &w).is_err());
    }

    #[test]
    fn sequence_of_one_equals_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = LstmWeights::<f64>::random(2, 3, &mut rng);
        let init = LstmState { h: vec![0.1, -0.2, 0.3], c: vec![0.5, 0.0, -1.0] };
        let x = vec![0.4, -0.9];
        let (states, _) = lstm_sequence_forward(&[x.clone()], &init, &w).unwrap();
        let (cell, _) = lstm_cell_forward(&x, &init, &w).unwrap();
        assert_eq!(states[0], cell);
    }

    #[test]
    fn split_sequence_chains_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = LstmWeights::<f64>::random(2, 4, &mut rng);
        let xs: Vec<Vec<f64>> = (0..9).map(|k| vec![(k as f64).sin(), (k as f64 * 0.3).cos()]).collect();
        let init = LstmState::zeros(4);
        let (whole, _) = lstm_sequence_forward(&xs, &init, &w).unwrap();
        let (a, _) = lstm_sequence_forward(&xs[..4], &init, &w).unwrap();
        let (b, _) = lstm_sequence_forward(&xs[4..], a.last().unwrap(), &w).unwrap();
        let chained: Vec<_> = a.into_iter().chain(b).collect();
        assert_eq!(whole, chained);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = LstmWeights::<f64>::random(2, 3, &mut rng);
        let xs = vec![vec![0.3, 0.1], vec![-0.2, 0.8]];
        let (_, cache) = lstm_sequence_forward(&xs, &LstmState::zeros(3), &w).unwrap();
        let g = lstm_backward(&cache, &w, &[vec![0.0; 3], vec![0.0; 3]], &[0.0; 3]).unwrap();
        assert!(g.weights.flatten().iter().all(|v| *v == 0.0));
        assert!(g.d_inputs.iter().flatten().all(|v| *v == 0.0));
    }

    /// Scalar network over two steps, loss = h₂, differentiated by hand.
    #[test]
    fn scalar_two_step_hand_derivation() {
        let v = [0.3, -0.2, 0.5, 0.1, -0.4, 0.6, 0.2, -0.3];
        let w = scalar_weights(v);
        let xs = [0.7, -1.1];
        let (states, cache) =
            lstm_sequence_forward(&[vec![xs[0]], vec![xs[1]]], &LstmState::zeros(1), &w).unwrap();
        let g = lstm_backward(&cache, &w, &[vec![0.0], vec![1.0]], &[0.0]).unwrap();

        // Forward, written out.
        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let (h0, c0) = (0.0, 0.0);
        let i1 = sig(v[0] * xs[0] + v[1] * h0);
        let f1 = sig(v[2] * xs[0] + v[3] * h0);
        let g1 = (v[4] * xs[0] + v[5] * h0).tanh();
        let o1 = sig(v[6] * xs[0] + v[7] * h0);
        let c1 = f1 * c0 + i1 * g1;
        let h1 = o1 * c1.tanh();
        let i2 = sig(v[0] * xs[1] + v[1] * h1);
        let f2 = sig(v[2] * xs[1] + v[3] * h1);
        let g2 = (v[4] * xs[1] + v[5] * h1).tanh();
        let o2 = sig(v[6] * xs[1] + v[7] * h1);
        let c2 = f2 * c1 + i2 * g2;
        let h2 = o2 * c2.tanh();
        assert!((states[1].h[0] - h2).abs() < 1e-15);

        // dh2/dW_ox = o2(1-o2) tanh(c2) x2 (direct) + contribution through h1.
        // dh2/dh1 via all four gates, then dh1/dW_ox = o1(1-o1) tanh(c1) x1.
        let t2 = c2.tanh();
        let dc2 = o2 * (1.0 - t2 * t2);
        let dh2_dh1 = o2 * (1.0 - o2) * t2 * v[7]
            + dc2
                * (c1 * f2 * (1.0 - f2) * v[3]
                    + g2 * i2 * (1.0 - i2) * v[1]
                    + i2 * (1.0 - g2 * g2) * v[5]);
        let dh2_dc1 = dc2 * f2;
        let t1 = c1.tanh();
        let d_wox = o2 * (1.0 - o2) * t2 * xs[1] + dh2_dh1 * o1 * (1.0 - o1) * t1 * xs[0];
        assert!((g.weights.w_ox.get(0, 0) - d_wox).abs() < 1e-14);

        // dh2/dW_gx: direct (dc2 i2 (1-g2²) x2) + via h1 and c1.
        let dh1_dc1 = o1 * (1.0 - t1 * t1);
        let dc1_total = dh2_dc1 + dh2_dh1 * dh1_dc1;
        let d_wgx = dc2 * i2 * (1.0 - g2 * g2) * xs[1] + dc1_total * i1 * (1.0 - g1 * g1) * xs[0];
        assert!((g.weights.w_gx.get(0, 0) - d_wgx).abs() < 1e-14);

        // dh2/dx1 through h1 and c1 only.
        let dc1_dx1 = f1 * (1.0 - f1) * v[2] * c0 + g1 * i1 * (1.0 - i1) * v[0] + i1 * (1.0 - g1 * g1) * v[4];
        let dh1_dx1 = o1 * (1.0 - o1) * v[6] * t1 + dh1_dc1 * dc1_dx1;
        let d_x1 = dh2_dh1 * dh1_dx1 + dh2_dc1 * dc1_dx1;
        assert!((g.d_inputs[0][0] - d_x1).abs() < 1e-14);
    }

    fn sequence_loss(w: &LstmWeights<f64>, xs: &[Vec<f64>], init: &LstmState<f64>, proj: &[Vec<f64>], cproj: &[f64]) -> f64 {
        let (states, _) = lstm_sequence_forward(xs, init, w).unwrap();
        let mut loss = 0.0;
        for (s, p) in states.iter().zip(proj) {
            loss += s.h.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
        }
        loss + states.last().unwrap().c.iter().zip(cproj).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let (n_in, hidden, len) = (3, 8, 5);
            let w = LstmWeights::<f64>::random(n_in, hidden, &mut rng);
            let uni = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let xs: Vec<Vec<f64>> = (0..len).map(|_| uni(&mut rng, n_in)).collect();
            let init = LstmState { h: uni(&mut rng, hidden), c: uni(&mut rng, hidden) };
            let proj: Vec<Vec<f64>> = (0..len).map(|_| uni(&mut rng, hidden)).collect();
            let cproj = uni(&mut rng, hidden);

            let (_, cache) = lstm_sequence_forward(&xs, &init, &w).unwrap();
            let g = lstm_backward(&cache, &w, &proj, &cproj).unwrap();

            let flat = w.flatten();
            let fd = finite_difference_gradient(
                |p: &[f64]| {
                    let mut w2 = w.clone();
                    w2.assign(p);
                    sequence_loss(&w2, &xs, &init, &proj, &cproj)
                },
                &flat,
                1e-6,
            );
            assert!(relative_error(&g.weights.flatten(), &fd) < 1e-5);

            let flat_x: Vec<f64> = xs.concat();
            let fd_x = finite_difference_gradient(
                |p: &[f64]| {
                    let xs2: Vec<Vec<f64>> = p.chunks(n_in).map(|c| c.to_vec()).collect();
                    sequence_loss(&w, &xs2, &init, &proj, &cproj)
                },
                &flat_x,
                1e-6,
            );
            assert!(relative_error(&g.d_inputs.concat(), &fd_x) < 1e-5);

            let flat_init: Vec<f64> = [init.h.clone(), init.c.clone()].concat();
            let fd_init = finite_difference_gradient(
                |p: &[f64]| {
                    let s = LstmState { h: p[..hidden].to_vec(), c: p[hidden..].to_vec() };
                    sequence_loss(&w, &xs, &s, &proj, &cproj)
                },
                &flat_init,
                1e-6,
            );
            let analytic_init = [g.d_init.h.clone(), g.d_init.c.clone()].concat();
            assert!(relative_error(&analytic_init, &fd_init) < 1e-5);
        }
    }

    #[test]
    fn cell_state_growth_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = LstmWeights::<f64>::random(2, 6, &mut rng);
        let init = LstmState { h: vec![0.0; 6], c: vec![0.3, -0.2, 1.0, 0.0, -2.0, 0.5] };
        let xs: Vec<Vec<f64>> = (0..50).map(|k| vec![(k as f64).cos() * 3.0, 2.0]).collect();
        let (states, _) = lstm_sequence_forward(&xs, &init, &w).unwrap();
        for (t, s) in states.iter().enumerate() {
            for k in 0..6 {
                assert!(s.c[k].abs() <= init.c[k].abs() + (t + 1) as f64);
            }
        }
    }

    #[test]
    fn single_precision_forward() {
        let w = LstmWeights::<f32>::zeros(1, 1);
        let prev = LstmState { h: vec![0.0f32], c: vec![2.0] };
        let (s, _) = lstm_cell_forward(&[0.0], &prev, &w).unwrap();
        assert!((s.h[0] - 0.380797).abs() < 1e-6);
    }

    use rand::Rng;
}
