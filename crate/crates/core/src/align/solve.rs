use crate::error::{Error, Result};
use crate::geometry::{so3_exp, RigidTransform};
use crate::linalg::solve_dense;
use crate::Vec3;

use super::energy::{
    dense_rows, e_align, sparse_rows, window_pairs, AlignmentState, AlignmentWeights,
    CorrespondenceSet, DenseKind, ResidualRow,
};
use super::frame::Frame;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentSettings {
    pub max_iterations: usize,
    /// Stop when the update norm falls below this.
    pub step_tol: f64,
    pub initial_damping: f64,
    /// Pairs `(i, j)` with `j − i` up to this gap enter the dense terms.
    pub max_pair_gap: usize,
}

impl Default for AlignmentSettings {
    fn default() -> Self {
        AlignmentSettings {
            max_iterations: 50,
            step_tol: 1e-12,
            initial_damping: 1e-6,
            max_pair_gap: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentResult {
    pub state: AlignmentState,
    /// Full alignment energy at the returned state.
    pub energy: f64,
    /// Full alignment energy at the end of the sparse stage.
    pub sparse_stage_energy: f64,
    pub converged: bool,
    /// Alignment energy after every accepted step, both stages.
    pub trace: Vec<f64>,
}

/// Applies `τ ← τ ∘ (R exp(φ), t + Rρ)` to every non-reference frame.
pub fn apply_update(state: &AlignmentState, delta: &[f64]) -> AlignmentState {
    let mut out = state.clone();
    for (k, t) in out.transforms.iter_mut().enumerate().skip(1) {
        let d = &delta[6 * (k - 1)..6 * k];
        let rho = Vec3::new(d[0], d[1], d[2]);
        let phi = Vec3::new(d[3], d[4], d[5]);
        *t = RigidTransform::new(t.rotation * so3_exp(phi), t.translation + t.rotation * rho);
    }
    out
}

struct Problem<'a> {
    frames: &'a [Frame],
    corr: &'a CorrespondenceSet,
    pairs: Vec<(usize, usize)>,
    weights: AlignmentWeights,
}

impl Problem<'_> {
    fn energy(&self, state: &AlignmentState) -> Result<f64> {
        e_align(state, self.frames, &self.pairs, self.corr, &self.weights)
    }

    /// Weighted rows: every residual is scaled by the square root of its weight.
    fn rows(&self, state: &AlignmentState) -> Result<Vec<(f64, ResidualRow)>> {
        let w = &self.weights;
        let mut out: Vec<(f64, ResidualRow)> = Vec::new();
        if w.sparse > 0.0 {
            out.extend(sparse_rows(state, self.corr)?.into_iter().map(|r| (w.sparse, r)));
        }
        if w.dense > 0.0 && w.photo > 0.0 {
            let (rows, _) = dense_rows(state, self.frames, &self.pairs, DenseKind::Photometric)?;
            out.extend(rows.into_iter().map(|r| (w.dense * w.photo, r)));
        }
        if w.dense > 0.0 && w.geo > 0.0 {
            let (rows, _) = dense_rows(state, self.frames, &self.pairs, DenseKind::Geometric)?;
            out.extend(rows.into_iter().map(|r| (w.dense * w.geo, r)));
        }
        Ok(out)
    }

    fn normal_equations(&self, state: &AlignmentState) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = 6 * (state.len() - 1);
        let mut h = vec![0.0; n * n];
        let mut g = vec![0.0; n];
        for (weight, row) in self.rows(state)? {
            let mut entries: Vec<(usize, f64)> = Vec::with_capacity(12);
            for (frame, d) in [(row.i, &row.d_i), (row.j, &row.d_j)] {
                if frame == 0 {
                    continue;
                }
                for k in 0..6 {
                    entries.push((6 * (frame - 1) + k, d[k]));
                }
            }
            for &(a, ja) in &entries {
                g[a] += weight * ja * row.value;
                for &(b, jb) in &entries {
                    h[a * n + b] += weight * ja * jb;
                }
            }
        }
        Ok((h, g))
    }
}

/// Damped Gauss-Newton; only steps that lower the energy are taken.
fn optimize(
    problem: &Problem<'_>,
    mut state: AlignmentState,
    settings: &AlignmentSettings,
    trace: &mut Vec<f64>,
) -> Result<(AlignmentState, f64, bool)> {
    let n = 6 * (state.len() - 1);
    let mut energy = problem.energy(&state)?;
    let mut lambda = settings.initial_damping;
    for _ in 0..settings.max_iterations {
        if energy == 0.0 {
            return Ok((state, energy, true));
        }
        let (h, g) = problem.normal_equations(&state)?;
        loop {
            let mut a = h.clone();
            for d in 0..n {
                a[d * n + d] += lambda * h[d * n + d].max(1e-12);
            }
            let step = solve_dense(a, g.iter().map(|v| -v).collect(), n);
            let Some(step) = step else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    return Ok((state, energy, false));
                }
                continue;
            };
            let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let candidate = apply_update(&state, &step);
            let e = problem.energy(&candidate)?;
            if e < energy {
                state = candidate;
                energy = e;
                trace.push(e);
                lambda = (lambda / 10.0).max(1e-15);
                if norm < settings.step_tol {
                    return Ok((state, energy, true));
                }
                break;
            }
            if norm < settings.step_tol {
                return Ok((state, energy, true));
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                return Ok((state, energy, true));
            }
        }
    }
    Ok((state, energy, false))
}

fn non_collinear(points: &[Vec3]) -> bool {
    let Some(first) = points.first() else { return false };
    let Some(far) = points.iter().max_by(|a, b| (**a - *first).norm().total_cmp(&(**b - *first).norm())) else {
        return false;
    };
    let axis = *far - *first;
    if axis.norm() < 1e-9 {
        return false;
    }
    points.iter().any(|p| axis.cross(&(*p - *first)).norm() > 1e-9 * axis.norm())
}

fn check_correspondences(frames: usize, corr: &CorrespondenceSet) -> Result<()> {
    let mut linked = vec![false; frames];
    linked[0] = true;
    let mut pairs: Vec<(usize, usize)> = corr.pairs.iter().map(|c| (c.i.min(c.j), c.i.max(c.j))).collect();
    pairs.sort_unstable();
    pairs.dedup();
    for &(i, j) in &pairs {
        if j >= frames || i == j {
            return Err(Error::DegenerateInput(format!("invalid correspondence pair ({i}, {j})")));
        }
        let points: Vec<Vec3> = corr
            .pairs
            .iter()
            .filter(|c| (c.i.min(c.j), c.i.max(c.j)) == (i, j))
            .map(|c| c.p_i)
            .collect();
        if points.len() < 3 || !non_collinear(&points) {
            return Err(Error::DegenerateInput(format!(
                "pair ({i}, {j}) needs at least 3 non-collinear correspondences"
            )));
        }
    }
    // Every frame must connect to the reference through correspondences.
    let mut changed = true;
    while changed {
        changed = false;
        for &(i, j) in &pairs {
            if linked[i] != linked[j] {
                linked[i] = true;
                linked[j] = true;
                changed = true;
            }
        }
    }
    if let Some(k) = linked.iter().position(|l| !l) {
        return Err(Error::DegenerateInput(format!("frame {k} has no correspondence path to frame 0")));
    }
    Ok(())
}

/// Sparse alignment from identity, then joint sparse + dense refinement.
pub fn minimize_alignment(
    frames: &[Frame],
    corr: &CorrespondenceSet,
    weights: &AlignmentWeights,
    settings: &AlignmentSettings,
) -> Result<AlignmentResult> {
    if frames.len() < 2 {
        return Err(Error::DegenerateInput("alignment needs at least two frames".into()));
    }
    weights.validate()?;
    check_correspondences(frames.len(), corr)?;
    let pairs = window_pairs(frames.len(), settings.max_pair_gap);
    let mut trace = Vec::new();
    let sparse_only = Problem {
        frames,
        corr,
        pairs: pairs.clone(),
        weights: AlignmentWeights { sparse: 1.0, dense: 0.0, ..*weights },
    };
    let (state, _, sparse_converged) =
        optimize(&sparse_only, AlignmentState::identity(frames.len()), settings, &mut Vec::new())?;
    let full = Problem { frames, corr, pairs, weights: *weights };
    let sparse_stage_energy = full.energy(&state)?;
    trace.push(sparse_stage_energy);
    let (state, energy, converged) = optimize(&full, state, settings, &mut trace)?;
    Ok(AlignmentResult {
        state,
        energy,
        sparse_stage_energy,
        converged: converged && sparse_converged,
        trace,
    })
}
