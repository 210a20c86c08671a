//! Central-difference gradient oracle used to verify every backward pass.

use crate::scalar::Real;

/// `∂f/∂pᵢ ≈ (f(p + h eᵢ) − f(p − h eᵢ)) / 2h` for every parameter.
pub fn finite_difference_gradient<S: Real>(
    mut f: impl FnMut(&[S]) -> S,
    params: &[S],
    step: S,
) -> Vec<S> {
    let mut p = params.to_vec();
    let two_h = step + step;
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = f(&p);
            p[i] = orig - step;
            let down = f(&p);
            p[i] = orig;
            (up - down) / two_h
        })
        .collect()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn relative_error<S: Real>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = S>| v.map(|x| x * x).sum::<S>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| *x - *y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == S::zero() {
        S::zero()
    } else {
        diff / scale
    }
}
