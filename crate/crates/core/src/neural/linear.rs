use rand::Rng;

use crate::error::Result;
use crate::scalar::Real;

use super::matrix::{check_len, Matrix};
use super::ParameterSet;

/// Fully connected layer `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    pub weight: Matrix<S>,
    pub bias: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGradients<S> {
    pub weight: Matrix<S>,
    pub bias: Vec<S>,
    pub input: Vec<S>,
}

impl<S: Real> Linear<S> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(output, input),
            bias: vec![S::zero(); output],
        }
    }

    /// Weights uniform in ±1/√input, zero bias.
    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: Matrix::uniform(output, input, 1.0 / (input as f64).sqrt(), rng),
            bias: vec![S::zero(); output],
        }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[S]) -> Result<Vec<S>> {
        linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&self, x: &[S], dy: &[S]) -> Result<LinearGradients<S>> {
        linear_backward(x, &self.weight, dy)
    }
}

impl<S: Real> ParameterSet<S> for Linear<S> {
    fn slices(&self) -> Vec<&[S]> {
        vec![self.weight.as_slice(), &self.bias]
    }

    fn slices_mut(&mut self) -> Vec<&mut [S]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

pub fn linear_forward<S: Real>(x: &[S], w: &Matrix<S>, b: &[S]) -> Result<Vec<S>> {
    check_len("linear bias", w.rows(), b.len())?;
    check_len("linear input", w.cols(), x.len())?;
    let mut y = b.to_vec();
    w.matvec_acc(x, &mut y);
    Ok(y)
}

pub fn linear_backward<S: Real>(x: &[S], w: &Matrix<S>, dy: &[S]) -> Result<LinearGradients<S>> {
    check_len("linear input", w.cols(), x.len())?;
    check_len("linear output gradient", w.rows(), dy.len())?;
    let mut weight = Matrix::zeros(w.rows(), w.cols());
    weight.add_outer(dy, x);
    let mut input = vec![S::zero(); w.cols()];
    w.t_matvec_acc(dy, &mut input);
    Ok(LinearGradients {
        weight,
        bias: dy.to_vec(),
        input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{finite_difference_gradient, relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_bias_cases() {
        let w = Matrix::<f64>::identity(3);
        assert_eq!(linear_forward(&[1.0, 2.0, 3.0], &w, &[0.0; 3]).unwrap(), vec![1.0, 2.0, 3.0]);
        let b = vec![0.5, -1.0, 2.0];
        assert_eq!(linear_forward(&[0.0; 3], &w, &b).unwrap(), b);
        assert!(linear_forward(&[0.0; 2], &w, &b).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let layer = Linear::<f64>::random(5, 4, &mut rng);
            let layer = Linear { bias: vec![0.1, -0.3, 0.2, 0.7], ..layer };
            let x: Vec<f64> = (0..5).map(|k| (k as f64 * 0.7).sin()).collect();
            let proj = [0.3, -1.2, 0.8, 0.05];
            let loss = |l: &Linear<f64>, x: &[f64]| -> f64 {
                l.forward(x).unwrap().iter().zip(&proj).map(|(a, b)| a * b).sum()
            };
            let g = layer.backward(&x, &proj).unwrap();
            let fd = finite_difference_gradient(
                |p: &[f64]| {
                    let mut l = layer.clone();
                    l.assign(p);
                    loss(&l, &x)
                },
                &layer.flatten(),
                1e-6,
            );
            let analytic = [g.weight.as_slice(), &g.bias[..]].concat();
            assert!(relative_error(&analytic, &fd) < 1e-7);
            let fd_x = finite_difference_gradient(|p: &[f64]| loss(&layer, p), &x, 1e-6);
            assert!(relative_error(&g.input, &fd_x) < 1e-7);
        }
    }
}
