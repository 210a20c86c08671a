use crate::error::Result;
use crate::scalar::Real;

use super::matrix::check_len;

/// Optimizer and model hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Learning rate α.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rotation weight β of the pose loss.
    pub beta_loss: f64,
    pub dropout_rate: f64,
    pub hidden_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            beta_loss: 1.0,
            dropout_rate: 0.25,
            hidden_size: 200,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.dropout_rate)
            && self.hidden_size > 0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid hyperparameters {self:?}")))
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![S::zero(); n],
            v: vec![S::zero(); n],
            t: 0,
        }
    }
}

/// One Adam update, in place:
///
/// ```text
/// m ← β₁ m + (1 − β₁) g
/// v ← β₂ v + (1 − β₂) g²
/// W ← W − α · √(1 − β₂ᵗ) / (1 − β₁ᵗ) · m / √(v + ε)
/// ```
///
/// ε sits inside the square root.
pub fn adam_step<S: Real>(
    params: &mut [S],
    grads: &[S],
    state: &mut AdamState<S>,
    hp: &Hyperparams,
) -> Result<()> {
    check_len("adam gradients", params.len(), grads.len())?;
    check_len("adam first moment", params.len(), state.m.len())?;
    check_len("adam second moment", params.len(), state.v.len())?;
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (S::lit(hp.beta1), S::lit(hp.beta2));
    let eps = S::lit(hp.epsilon);
    let step = S::lit(hp.alpha * (1.0 - hp.beta2.powi(t)).sqrt() / (1.0 - hp.beta1.powi(t)));
    for (((w, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (S::one() - b1) * g;
        *v = b2 * *v + (S::one() - b2) * g * g;
        *w -= step * *m / (*v + eps).sqrt();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let hp = Hyperparams::default();
        let mut p = vec![1.0, -2.0, 3.5];
        let mut st = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p, &[0.0; 3], &mut st, &hp).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn scalar_hand_computed_step() {
        let hp = Hyperparams::default();
        let mut w = vec![1.0];
        let mut st = AdamState::new(1);
        adam_step(&mut w, &[2.0], &mut st, &hp).unwrap();
        let expected =
            1.0 - 0.001 * (0.001f64.sqrt() / 0.1) * (0.2 / (0.004f64 + 1e-8).sqrt());
        assert!((w[0] - expected).abs() < 1e-15);
        assert_eq!(format!("{:.6}", w[0]), "0.999000");
    }

    #[test]
    fn first_step_is_about_alpha() {
        let hp = Hyperparams::default();
        // ε inside the root damps steps for gradients below about 0.1.
        for scale in [1e-1f64, 1.0, 10.0, 1e2, 1e3, -0.5, -5.0] {
            let mut w = vec![0.0f64];
            let mut st = AdamState::new(1);
            adam_step(&mut w, &[scale], &mut st, &hp).unwrap();
            let rel = (w[0].abs() - hp.alpha).abs() / hp.alpha;
            assert!(rel < 0.01, "scale {scale}: step {}", w[0]);
            assert_eq!(w[0].signum(), -scale.signum());
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let hp = Hyperparams::default();
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut [0.0, 0.0], &[1.0], &mut st, &hp).is_err());
        assert!(adam_step(&mut [0.0], &[1.0], &mut st, &hp).is_err());
    }
}
