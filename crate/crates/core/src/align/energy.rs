use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::{Mat3, Vec3};

use super::camera::project;
use super::frame::Frame;

/// Camera-to-world transform per frame; frame 0 is the reference.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentState {
    pub transforms: Vec<RigidTransform<f64>>,
}

impl AlignmentState {
    pub fn identity(frames: usize) -> Self {
        AlignmentState { transforms: vec![RigidTransform::identity(); frames] }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// One matched point pair: `p_i` in camera `i`, `p_j` in camera `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub i: usize,
    pub j: usize,
    pub p_i: Vec3,
    pub p_j: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentWeights {
    pub sparse: f64,
    pub dense: f64,
    pub photo: f64,
    pub geo: f64,
}

/// Defaults are inverse variances: 10 um feature noise, unit intensity
/// scale, 1 cm point-to-plane scale.
impl Default for AlignmentWeights {
    fn default() -> Self {
        AlignmentWeights { sparse: 1e10, dense: 1.0, photo: 1.0, geo: 1e4 }
    }
}

impl AlignmentWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.sparse, self.dense, self.photo, self.geo];
        if w.iter().any(|v| !(*v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("alignment weights must be nonnegative and not all zero".into()));
        }
        Ok(())
    }
}

/// All ordered frame pairs `(i, j)` with `1 ≤ j − i ≤ max_gap`.
pub fn window_pairs(frames: usize, max_gap: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..frames {
        for j in i + 1..frames.min(i + max_gap + 1) {
            out.push((i, j));
        }
    }
    out
}

/// Sum of squared dense residuals plus how many samples contributed.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DenseEnergy {
    pub value: f64,
    pub valid: usize,
    pub total: usize,
}

impl DenseEnergy {
    pub fn validity_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.valid as f64 / self.total as f64
        }
    }
}

/// A scalar residual with its derivative with respect to the right
/// perturbations `(ρ, φ)` of two frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRow {
    pub value: f64,
    pub i: usize,
    pub j: usize,
    pub d_i: [f64; 6],
    pub d_j: [f64; 6],
    /// Source pixel `(u, v)` in frame `i` for dense rows.
    pub pixel: Option<(usize, usize)>,
    /// Interpolation cell the residual read from, if any.
    pub cell: Option<(usize, usize)>,
}

type Jac3x6 = [[f64; 6]; 3];

/// `∂(τ p)/∂(ρ, φ) = R [I, −[p]×]` for the perturbation `τ ∘ exp(ρ, φ)`.
fn d_apply(r: &Mat3, p: &Vec3) -> Jac3x6 {
    let minus_skew = Mat3::skew(p).scale(-1.0);
    let mut out = [[0.0; 6]; 3];
    for row in 0..3 {
        for k in 0..3 {
            out[row][k] = r.0[row][k];
            out[row][3 + k] = (0..3).map(|m| r.0[row][m] * minus_skew.0[m][k]).sum();
        }
    }
    out
}

/// `∂(τ⁻¹ y)/∂(ρ, φ) = [−I, [w]×]` with `w = τ⁻¹ y`.
fn d_apply_inverse(w: &Vec3) -> Jac3x6 {
    let s = Mat3::skew(w);
    let mut out = [[0.0; 6]; 3];
    for row in 0..3 {
        out[row][row] = -1.0;
        for k in 0..3 {
            out[row][3 + k] = s.0[row][k];
        }
    }
    out
}

fn premultiply(m: &Mat3, j: &Jac3x6) -> Jac3x6 {
    std::array::from_fn(|r| std::array::from_fn(|c| (0..3).map(|k| m.0[r][k] * j[k][c]).sum()))
}

fn row_times(v: &[f64; 3], j: &Jac3x6) -> [f64; 6] {
    std::array::from_fn(|c| v[0] * j[0][c] + v[1] * j[1][c] + v[2] * j[2][c])
}

fn add6(a: [f64; 6], b: [f64; 6]) -> [f64; 6] {
    std::array::from_fn(|k| a[k] + b[k])
}

fn check_indices(state: &AlignmentState, i: usize, j: usize) -> Result<()> {
    if i >= state.len() || j >= state.len() {
        return Err(Error::DegenerateInput(format!(
            "frame index ({i}, {j}) outside window of {}",
            state.len()
        )));
    }
    Ok(())
}

/// Residual vectors `τ_i p_i − τ_j p_j` with their Jacobian rows.
pub fn sparse_rows(state: &AlignmentState, corr: &CorrespondenceSet) -> Result<Vec<ResidualRow>> {
    let mut rows = Vec::with_capacity(3 * corr.pairs.len());
    for c in &corr.pairs {
        check_indices(state, c.i, c.j)?;
        let (ti, tj) = (&state.transforms[c.i], &state.transforms[c.j]);
        let e = ti.apply(&c.p_i) - tj.apply(&c.p_j);
        let (ji, jj) = (d_apply(&ti.rotation, &c.p_i), d_apply(&tj.rotation, &c.p_j));
        for k in 0..3 {
            rows.push(ResidualRow {
                value: e[k],
                i: c.i,
                j: c.j,
                d_i: ji[k],
                d_j: jj[k].map(|v| -v),
                pixel: None,
                cell: None,
            });
        }
    }
    Ok(rows)
}

/// `Σ ‖τ_i p_i − τ_j p_j‖²` over all correspondences.
pub fn e_sparse(state: &AlignmentState, corr: &CorrespondenceSet) -> Result<f64> {
    let mut total = 0.0;
    for c in &corr.pairs {
        check_indices(state, c.i, c.j)?;
        let e = state.transforms[c.i].apply(&c.p_i) - state.transforms[c.j].apply(&c.p_j);
        total += e.norm_squared();
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenseKind {
    Photometric,
    Geometric,
}

/// Dense residual rows over every valid pixel of frame `i` for each pair.
///
/// Photometric: `I_i(k) − I_j(π(τ_j⁻¹ τ_i d_k))`. Geometric: point-to-plane
/// `n_kᵀ (d_k − τ_i⁻¹ τ_j π⁻¹(u, D_j(u)))` with `u = π(τ_j⁻¹ τ_i d_k)`.
/// Returns the rows and the number of pixels examined.
pub fn dense_rows(
    state: &AlignmentState,
    frames: &[Frame],
    pairs: &[(usize, usize)],
    kind: DenseKind,
) -> Result<(Vec<ResidualRow>, usize)> {
    if frames.len() != state.len() {
        return Err(Error::DimensionMismatch {
            context: "alignment frames",
            expected: state.len(),
            found: frames.len(),
        });
    }
    let mut rows = Vec::new();
    let mut total = 0;
    for &(i, j) in pairs {
        check_indices(state, i, j)?;
        let (fi, fj) = (&frames[i], &frames[j]);
        let (ti, tj) = (&state.transforms[i], &state.transforms[j]);
        let k = &fj.intrinsics;
        // q = M d + b with M = R_jᵀ R_i, b = R_jᵀ (t_i − t_j).
        let rjt = tj.rotation.transpose();
        let m = rjt * ti.rotation;
        let b = rjt * (ti.translation - tj.translation);
        let rit = ti.rotation.transpose();
        let m_ji = rit * tj.rotation;
        for v in 0..fi.height {
            for u in 0..fi.width {
                total += 1;
                let Some(d) = fi.point(u, v) else { continue };
                let q = m * d + b;
                let Ok(px) = project(&q, k) else { continue };
                let jp = k.projection_jacobian(&q);
                let dq_di = premultiply(&m, &d_apply(&Mat3::identity(), &d));
                let dq_dj = d_apply_inverse(&q);
                match kind {
                    DenseKind::Photometric => {
                        let Some(s) = fj.sample_intensity(px[0], px[1]) else { continue };
                        let value = fi.intensity[v * fi.width + u] - s.value;
                        let gq: [f64; 3] = std::array::from_fn(|c| -(s.gradient[0] * jp[0][c] + s.gradient[1] * jp[1][c]));
                        rows.push(ResidualRow {
                            value,
                            i,
                            j,
                            d_i: row_times(&gq, &dq_di),
                            d_j: row_times(&gq, &dq_dj),
                            pixel: Some((u, v)),
                            cell: Some(s.cell),
                        });
                    }
                    DenseKind::Geometric => {
                        let n = fi.normals[v * fi.width + u];
                        if !n.is_finite() {
                            continue;
                        }
                        let Some(s) = fj.sample_depth(px[0], px[1]) else { continue };
                        let ray = k.ray(px[0], px[1]);
                        let p_j = ray * s.value;
                        let w = m_ji * p_j + rit * (tj.translation - ti.translation);
                        let value = n.dot(&(d - w));
                        // ∂p_j/∂u: ray ⊗ ∇D + D · ∂ray/∂u.
                        let dp_du = [
                            [ray.x() * s.gradient[0] + s.value / k.fx, ray.x() * s.gradient[1]],
                            [ray.y() * s.gradient[0], ray.y() * s.gradient[1] + s.value / k.fy],
                            [s.gradient[0], s.gradient[1]],
                        ];
                        // −nᵀ M_ji ∂p/∂u ∂u/∂q
                        let nm: [f64; 3] = std::array::from_fn(|c| -(0..3).map(|r| n[r] * m_ji.0[r][c]).sum::<f64>());
                        let nmp: [f64; 2] = std::array::from_fn(|c| (0..3).map(|r| nm[r] * dp_du[r][c]).sum());
                        let a: [f64; 3] = std::array::from_fn(|c| nmp[0] * jp[0][c] + nmp[1] * jp[1][c]);
                        let neg_n = [-n.x(), -n.y(), -n.z()];
                        let explicit_i = row_times(&neg_n, &d_apply_inverse(&w));
                        let explicit_j = row_times(&neg_n, &premultiply(&m_ji, &d_apply(&Mat3::identity(), &p_j)));
                        rows.push(ResidualRow {
                            value,
                            i,
                            j,
                            d_i: add6(explicit_i, row_times(&a, &dq_di)),
                            d_j: add6(explicit_j, row_times(&a, &dq_dj)),
                            pixel: Some((u, v)),
                            cell: Some(s.cell),
                        });
                    }
                }
            }
        }
    }
    Ok((rows, total))
}

fn dense_energy(state: &AlignmentState, frames: &[Frame], pairs: &[(usize, usize)], kind: DenseKind) -> Result<DenseEnergy> {
    let (rows, total) = dense_rows(state, frames, pairs, kind)?;
    Ok(DenseEnergy {
        value: rows.iter().map(|r| r.value * r.value).sum(),
        valid: rows.len(),
        total,
    })
}

pub fn e_photo(state: &AlignmentState, frames: &[Frame], pairs: &[(usize, usize)]) -> Result<DenseEnergy> {
    dense_energy(state, frames, pairs, DenseKind::Photometric)
}

pub fn e_geo(state: &AlignmentState, frames: &[Frame], pairs: &[(usize, usize)]) -> Result<DenseEnergy> {
    dense_energy(state, frames, pairs, DenseKind::Geometric)
}

/// `w_sparse · E_sparse + w_dense · (w_photo · E_photo + w_geo · E_geo)`.
pub fn e_align(
    state: &AlignmentState,
    frames: &[Frame],
    pairs: &[(usize, usize)],
    corr: &CorrespondenceSet,
    weights: &AlignmentWeights,
) -> Result<f64> {
    let mut total = weights.sparse * e_sparse(state, corr)?;
    if weights.dense != 0.0 {
        let dense = weights.photo * e_photo(state, frames, pairs)?.value
            + weights.geo * e_geo(state, frames, pairs)?.value;
        total += weights.dense * dense;
    }
    Ok(total)
}
