use crate::scalar::Real;

/// Weighted pose loss `‖x̂ − x‖₂ + β ‖q̂ − q‖₂` over `[tx, ty, tz, r, p, y]`.
///
/// Norms are unsquared. At an exactly zero residual block the zero
/// subgradient is returned for that block.
pub fn pose_loss<S: Real>(pred: &[S; 6], target: &[S; 6], beta: S) -> (S, [S; 6]) {
    let mut grad = [S::zero(); 6];
    let mut loss = S::zero();
    for (block, weight) in [(0usize, S::one()), (3usize, beta)] {
        let r = [
            pred[block] - target[block],
            pred[block + 1] - target[block + 1],
            pred[block + 2] - target[block + 2],
        ];
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        loss += weight * norm;
        if norm > S::zero() {
            for k in 0..3 {
                grad[block + k] = weight * r[k] / norm;
            }
        }
    }
    (loss, grad)
}
