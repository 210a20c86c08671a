//! Five-DoF magnetic localization: remove the known actuator field and fit a
//! point dipole (position plus moment direction) to the Hall-array reading by
//! Levenberg-Marquardt.

mod invert;
mod stream;

use crate::sim::{ActuatorFieldModel, HallArrayReading, ARRAY_PITCH, ARRAY_SIZE};
use crate::Vec3;

pub use invert::{
    estimate_pose_5dof, grid_search, predicted_reading, residual_jacobian, Inversion,
    InversionSettings, SearchGrid,
};
pub use stream::{diagnostics_text, localize_stream, StreamEstimate, OUTLIER_FACTOR};

pub type Grid = [[f64; ARRAY_SIZE]; ARRAY_SIZE];

/// Absolute capsule position and dipole direction; rotation about the dipole
/// axis is unobservable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagMeasurement5DoF {
    pub timestamp: f64,
    pub position: Vec3,
    /// Unit dipole direction in the world frame.
    pub heading: Vec3,
}

impl MagMeasurement5DoF {
    /// Pitch and yaw of a body x-axis pointing along the heading.
    pub fn heading_angles(&self) -> (f64, f64) {
        let h = self.heading;
        ((-h.z()).clamp(-1.0, 1.0).asin(), h.y().atan2(h.x()))
    }

    pub fn from_angles(timestamp: f64, position: Vec3, pitch: f64, yaw: f64) -> Self {
        let heading = Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), -pitch.sin());
        MagMeasurement5DoF { timestamp, position, heading }
    }
}

pub fn subtract_actuator_field(reading: &HallArrayReading, actuator: &ActuatorFieldModel) -> HallArrayReading {
    let positions = reading.sensor_positions();
    let mut out = reading.clone();
    for (row, cells) in out.values.iter_mut().enumerate() {
        for (col, v) in cells.iter_mut().enumerate() {
            *v -= actuator.field(&positions[row][col]).z();
        }
    }
    out
}

/// Sum of the second differences along rows and columns divided by
/// `pitch²`. Interior cells use the centered stencil, edge cells the
/// one-sided stencil `v₀ − 2v₁ + v₂`, so any affine grid maps to zero.
pub fn second_difference_grid(values: &Grid, pitch: f64) -> Grid {
    let n = ARRAY_SIZE;
    let along = |k: usize| -> [usize; 3] {
        match k {
            0 => [0, 1, 2],
            k if k == n - 1 => [n - 3, n - 2, n - 1],
            k => [k - 1, k, k + 1],
        }
    };
    let mut out = [[0.0; ARRAY_SIZE]; ARRAY_SIZE];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let [a, b, c] = along(i);
            let d_rows = values[a][j] - 2.0 * values[b][j] + values[c][j];
            let [a, b, c] = along(j);
            let d_cols = values[i][a] - 2.0 * values[i][b] + values[i][c];
            *cell = (d_rows + d_cols) / (pitch * pitch);
        }
    }
    out
}

pub fn directional_second_difference(reading: &HallArrayReading) -> Grid {
    second_difference_grid(&reading.values, ARRAY_PITCH)
}
