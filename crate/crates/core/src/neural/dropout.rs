use rand::Rng;

use crate::scalar::Real;

/// Inverted dropout. Returns the output and the keep mask (1 kept, 0 dropped);
/// survivors are scaled by `1 / (1 - rate)`. Identity outside training.
pub fn dropout<S: Real, R: Rng + ?Sized>(
    x: &[S],
    rate: f64,
    rng: &mut R,
    training: bool,
) -> (Vec<S>, Vec<S>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if !training || rate == 0.0 {
        return (x.to_vec(), vec![S::one(); x.len()]);
    }
    let scale = S::lit(1.0 / (1.0 - rate));
    let mask: Vec<S> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { S::zero() } else { S::one() })
        .collect();
    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m * scale).collect();
    (out, mask)
}

/// Gradient of [`dropout`] with respect to its input.
pub fn dropout_backward<S: Real>(dy: &[S], mask: &[S], rate: f64) -> Vec<S> {
    let scale = S::lit(1.0 / (1.0 - rate));
    dy.iter().zip(mask).map(|(&d, &m)| d * m * scale).collect()
}
