//! From-scratch differentiable building blocks: LSTM, linear layer, dropout,
//! pose loss, Adam and a finite-difference gradient oracle.

mod adam;
mod dropout;
pub mod gradcheck;
mod linear;
mod loss;
mod lstm;
mod matrix;

pub use adam::{adam_step, AdamState, Hyperparams};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use linear::{linear_backward, linear_forward, Linear, LinearGradients};
pub use loss::pose_loss;
pub use lstm::{
    lstm_backward, lstm_cell_forward, lstm_sequence_forward, sigmoid, CellCache, LstmGradients,
    LstmState, LstmWeights, SequenceCache,
};
pub use matrix::Matrix;

use crate::scalar::Real;

/// A collection of parameter arrays visited in a fixed order, so that
/// parameters and gradients of the same shape flatten identically.
pub trait ParameterSet<S: Real> {
    fn slices(&self) -> Vec<&[S]>;
    fn slices_mut(&mut self) -> Vec<&mut [S]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flatten(&self) -> Vec<S> {
        self.slices().concat()
    }

    /// Overwrites every parameter from a flat vector produced by `flatten`.
    fn assign(&mut self, flat: &[S]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
    }
}
