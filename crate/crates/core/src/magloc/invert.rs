use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::sim::{
    sensor_positions, ActuatorFieldModel, DipoleParams, HallArrayReading, ARRAY_SIZE,
    EXCLUSION_RADIUS,
};
use crate::Vec3;

use super::{subtract_actuator_field, MagMeasurement5DoF};

const CELLS: usize = ARRAY_SIZE * ARRAY_SIZE;
const PARAMS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchGrid {
    pub center: Vec3,
    pub half_extent: Vec3,
}

impl Default for SearchGrid {
    fn default() -> Self {
        SearchGrid {
            center: Vec3::new(0.0, 0.0, -0.06),
            half_extent: Vec3::new(0.05, 0.05, 0.02),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionSettings {
    pub max_iterations: usize,
    /// Stop once `|step| ≤ tol · (|params| + tol)`.
    pub convergence_tol: f64,
    pub initial_damping: f64,
    /// Extra attempts from alternative starting points before giving up.
    pub restart_count: usize,
    /// Region covered by the frame-0 grid search.
    pub grid: SearchGrid,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            max_iterations: 100,
            convergence_tol: 1e-10,
            initial_damping: 1e-3,
            restart_count: 2,
            grid: SearchGrid::default(),
        }
    }
}

impl InversionSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.convergence_tol > 0.0) || !(self.initial_damping > 0.0) {
            return Err(Error::Config("inversion tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    pub estimate: MagMeasurement5DoF,
    /// Sum of squared cell residuals at the estimate, T².
    pub residual: f64,
    /// Sum of squared cell residuals at the starting point, T².
    pub initial_residual: f64,
    pub iterations: usize,
}

fn heading(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn to_params(m: &MagMeasurement5DoF) -> [f64; PARAMS] {
    let h = m.heading.normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
    let theta = h.z().clamp(-1.0, 1.0).acos();
    let phi = h.y().atan2(h.x());
    [m.position[0], m.position[1], m.position[2], theta, phi]
}

fn from_params(timestamp: f64, p: &[f64; PARAMS]) -> MagMeasurement5DoF {
    MagMeasurement5DoF {
        timestamp,
        position: Vec3::new(p[0], p[1], p[2]),
        heading: heading(p[3], p[4]),
    }
}

/// Normal field of a dipole at `p` with parameters `[x, y, z, θ, φ]`.
fn cell_model(sensor: &Vec3, p: &[f64; PARAMS], magnitude: f64) -> Result<f64> {
    let r = *sensor - Vec3::new(p[0], p[1], p[2]);
    let rho = r.norm();
    if !(rho > EXCLUSION_RADIUS) {
        return Err(Error::Singularity { distance: rho });
    }
    let h = heading(p[3], p[4]);
    let c = 1e-7 * magnitude;
    Ok(c * (3.0 * h.dot(&r) * r.z() / rho.powi(5) - h.z() / rho.powi(3)))
}

/// Model cells for a candidate estimate, row-major.
pub fn predicted_reading(m: &MagMeasurement5DoF, dipole: &DipoleParams) -> Result<HallArrayReading> {
    let p = to_params(m);
    let grid = sensor_positions();
    let mut out = HallArrayReading::zeros(m.timestamp);
    for (row, cells) in grid.iter().enumerate() {
        for (col, s) in cells.iter().enumerate() {
            out.values[row][col] = cell_model(s, &p, dipole.moment_magnitude)?;
        }
    }
    Ok(out)
}

/// Residuals `model − measured` and their analytic Jacobian (64 × 5,
/// row-major) with respect to `[x, y, z, θ, φ]`.
pub fn residual_jacobian(
    measured: &[f64; CELLS],
    p: &[f64; PARAMS],
    magnitude: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = heading(p[3], p[4]);
    let dh_dtheta = Vec3::new(p[3].cos() * p[4].cos(), p[3].cos() * p[4].sin(), -p[3].sin());
    let dh_dphi = Vec3::new(-p[3].sin() * p[4].sin(), p[3].sin() * p[4].cos(), 0.0);
    let c = 1e-7 * magnitude;
    let mut res = Vec::with_capacity(CELLS);
    let mut jac = Vec::with_capacity(CELLS * PARAMS);
    for (k, s) in sensor_positions().iter().flatten().enumerate() {
        let r = *s - Vec3::new(p[0], p[1], p[2]);
        let rho = r.norm();
        if !(rho > EXCLUSION_RADIUS) {
            return Err(Error::Singularity { distance: rho });
        }
        let (r3, r5) = (rho.powi(3), rho.powi(5));
        let r7 = r5 * rho * rho;
        let hr = h.dot(&r);
        res.push(c * (3.0 * hr * r.z() / r5 - h.z() / r3) - measured[k]);
        // d/dr_j of the normal component; the position derivative is its negative.
        for j in 0..3 {
            let dz = if j == 2 { 1.0 } else { 0.0 };
            let d_r = 3.0 * (h[j] * r.z() + hr * dz) / r5 - 15.0 * hr * r.z() * r[j] / r7
                + 3.0 * h.z() * r[j] / r5;
            jac.push(-c * d_r);
        }
        // d/dh_j = c (3 r_j r_z / ρ⁵ − δ_jz / ρ³)
        let d_h = Vec3::new(
            3.0 * r.x() * r.z() / r5,
            3.0 * r.y() * r.z() / r5,
            3.0 * r.z() * r.z() / r5 - 1.0 / r3,
        ) * c;
        jac.push(d_h.dot(&dh_dtheta));
        jac.push(d_h.dot(&dh_dphi));
    }
    Ok((res, jac))
}

fn cost(measured: &[f64; CELLS], p: &[f64; PARAMS], magnitude: f64) -> Option<f64> {
    let mut total = 0.0;
    for (k, s) in sensor_positions().iter().flatten().enumerate() {
        let v = cell_model(s, p, magnitude).ok()?;
        total += (v - measured[k]).powi(2);
    }
    Some(total)
}

fn flatten(reading: &HallArrayReading) -> [f64; CELLS] {
    let mut out = [0.0; CELLS];
    for (o, v) in out.iter_mut().zip(reading.flat()) {
        *o = v;
    }
    out
}

struct LmOutcome {
    params: [f64; PARAMS],
    cost: f64,
    initial_cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(
    measured: &[f64; CELLS],
    start: [f64; PARAMS],
    magnitude: f64,
    settings: &InversionSettings,
) -> Result<LmOutcome> {
    let mut p = start;
    let initial_cost = cost(measured, &p, magnitude)
        .ok_or(Error::Singularity { distance: 0.0 })?;
    let mut current = initial_cost;
    let mut lambda = settings.initial_damping;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        if current == 0.0 {
            return Ok(LmOutcome { params: p, cost: current, initial_cost, iterations, converged: true });
        }
        iterations += 1;
        let (res, jac) = residual_jacobian(measured, &p, magnitude)?;
        let mut jtj = [0.0; PARAMS * PARAMS];
        let mut jtr = [0.0; PARAMS];
        for k in 0..CELLS {
            let row = &jac[k * PARAMS..(k + 1) * PARAMS];
            for a in 0..PARAMS {
                jtr[a] += row[a] * res[k];
                for b in 0..PARAMS {
                    jtj[a * PARAMS + b] += row[a] * row[b];
                }
            }
        }
        // Retry with heavier damping until a step lowers the cost.
        loop {
            let mut a = jtj.to_vec();
            for d in 0..PARAMS {
                let diag = jtj[d * PARAMS + d];
                a[d * PARAMS + d] = diag + lambda * diag.max(f64::MIN_POSITIVE);
            }
            let b: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let step = solve_dense(a, b, PARAMS);
            let Some(step) = step else {
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Ok(LmOutcome { params: p, cost: current, initial_cost, iterations, converged: true });
                }
                continue;
            };
            let candidate: [f64; PARAMS] = std::array::from_fn(|i| p[i] + step[i]);
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            let param_norm = p.iter().map(|s| s * s).sum::<f64>().sqrt();
            let small = step_norm <= settings.convergence_tol * (param_norm + settings.convergence_tol);
            match cost(measured, &candidate, magnitude) {
                Some(c) if c < current => {
                    p = candidate;
                    current = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    if small {
                        return Ok(LmOutcome { params: p, cost: current, initial_cost, iterations, converged: true });
                    }
                    break;
                }
                _ => {
                    if small {
                        return Ok(LmOutcome { params: p, cost: current, initial_cost, iterations, converged: true });
                    }
                    lambda *= 10.0;
                }
            }
        }
    }
    Ok(LmOutcome { params: p, cost: current, initial_cost, iterations, converged: false })
}

/// Fits the dipole to an actuator-subtracted reading, starting from `init`.
///
/// If the first attempt does not converge the solver restarts from the best
/// point found so far with the damping reset, up to `restart_count` times.
pub fn estimate_pose_5dof(
    reading: &HallArrayReading,
    actuator: &ActuatorFieldModel,
    dipole: &DipoleParams,
    init: &MagMeasurement5DoF,
    settings: &InversionSettings,
) -> Result<Inversion> {
    let measured = flatten(&subtract_actuator_field(reading, actuator));
    invert_from(&measured, reading.timestamp, dipole, &[to_params(init)], settings)
}

fn invert_from(
    measured: &[f64; CELLS],
    timestamp: f64,
    dipole: &DipoleParams,
    starts: &[[f64; PARAMS]],
    settings: &InversionSettings,
) -> Result<Inversion> {
    let mut best: Option<LmOutcome> = None;
    let mut total_iterations = 0;
    let mut initial_cost = None;
    let mut any_converged = false;
    for attempt in 0..=settings.restart_count {
        let start = match (starts.get(attempt), &best) {
            (Some(s), _) => *s,
            (None, Some(b)) => b.params,
            (None, None) => break,
        };
        let outcome = levenberg_marquardt(measured, start, dipole.moment_magnitude, settings)?;
        total_iterations += outcome.iterations;
        initial_cost.get_or_insert(outcome.initial_cost);
        let converged = outcome.converged;
        any_converged |= converged;
        if best.as_ref().is_none_or(|b| outcome.cost < b.cost) {
            best = Some(outcome);
        }
        if converged {
            break;
        }
    }
    let b = best.ok_or(Error::DegenerateInput("no inversion attempt ran".into()))?;
    let estimate = from_params(timestamp, &b.params);
    if !any_converged {
        return Err(Error::Divergence {
            iterations: total_iterations,
            residual: b.cost,
            best_position: estimate.position.0,
            best_heading: estimate.heading.0,
        });
    }
    Ok(Inversion {
        estimate,
        residual: b.cost,
        initial_residual: initial_cost.unwrap_or(b.cost),
        iterations: total_iterations,
    })
}

/// Coarse search over a 5 × 5 × 3 position lattice and 26 headings; returns
/// candidates ordered by residual, best first.
pub fn grid_search(
    reading: &HallArrayReading,
    actuator: &ActuatorFieldModel,
    dipole: &DipoleParams,
    grid: &SearchGrid,
) -> Vec<(f64, MagMeasurement5DoF)> {
    let measured = flatten(&subtract_actuator_field(reading, actuator));
    let axis = |n: usize, k: usize, c: f64, h: f64| {
        if n == 1 { c } else { c - h + 2.0 * h * k as f64 / (n - 1) as f64 }
    };
    let mut headings = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    headings.push(Vec3::new(i as f64, j as f64, k as f64).normalized().expect("nonzero"));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(5 * 5 * 3 * headings.len());
    for ix in 0..5 {
        for iy in 0..5 {
            for iz in 0..3 {
                let position = Vec3::new(
                    axis(5, ix, grid.center.x(), grid.half_extent.x()),
                    axis(5, iy, grid.center.y(), grid.half_extent.y()),
                    axis(3, iz, grid.center.z(), grid.half_extent.z()),
                );
                for h in &headings {
                    let m = MagMeasurement5DoF { timestamp: reading.timestamp, position, heading: *h };
                    if let Some(c) = cost(&measured, &to_params(&m), dipole.moment_magnitude) {
                        out.push((c, m));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Grid candidates refined when there is no previous estimate.
pub const GRID_STARTS: usize = 8;

/// Grid search, then refinement from each of the best [`GRID_STARTS`]
/// candidates; the lowest-residual converged fit wins.
pub(crate) fn estimate_from_grid(
    reading: &HallArrayReading,
    actuator: &ActuatorFieldModel,
    dipole: &DipoleParams,
    settings: &InversionSettings,
) -> Result<Inversion> {
    let candidates = grid_search(reading, actuator, dipole, &settings.grid);
    if candidates.is_empty() {
        return Err(Error::DegenerateInput("grid search found no admissible start".into()));
    }
    let measured = flatten(&subtract_actuator_field(reading, actuator));
    let mut best: Option<Inversion> = None;
    let mut last_err = None;
    for (_, m) in candidates.iter().take(GRID_STARTS) {
        match invert_from(&measured, reading.timestamp, dipole, &[to_params(m)], settings) {
            Ok(inv) if best.as_ref().is_none_or(|b| inv.residual < b.residual) => best = Some(inv),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::DegenerateInput("no inversion attempt ran".into())),
    }
}
