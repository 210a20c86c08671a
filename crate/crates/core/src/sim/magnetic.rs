use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{euler_to_matrix, Pose};
use crate::{Mat3, Vec3};

/// Sensors per side of the square Hall array.
pub const ARRAY_SIZE: usize = 8;
/// Sensor spacing, meters.
pub const ARRAY_PITCH: f64 = 0.02;
/// Field queries closer than this to the dipole are rejected, meters.
pub const EXCLUSION_RADIUS: f64 = 1e-3;
/// Minimum depth of the capsule below the sensor plane, meters.
pub const MIN_DEPTH: f64 = 0.01;

const MU0_OVER_4PI: f64 = 1e-7;

/// Permanent magnet carried by the capsule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleParams {
    /// A·m². Zero removes the magnet.
    pub moment_magnitude: f64,
    /// Unit moment direction in the capsule body frame.
    pub moment_axis: Vec3,
}

impl Default for DipoleParams {
    fn default() -> Self {
        DipoleParams {
            moment_magnitude: 0.05,
            moment_axis: Vec3::new(1.0, 0.0, 0.0),
        }
    }
}

impl DipoleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.moment_magnitude >= 0.0) {
            return Err(Error::Config("moment magnitude must be nonnegative".into()));
        }
        if (self.moment_axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("moment axis must be a unit vector".into()));
        }
        Ok(())
    }

    /// World-frame moment vector for a capsule at `pose`.
    pub fn moment(&self, pose: &Pose<f64>) -> Vec3 {
        euler_to_matrix(pose.rotation) * self.moment_axis * self.moment_magnitude
    }
}

/// Known field of the external actuator: `B(p) = uniform + gradient · p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuatorFieldModel {
    pub uniform: Vec3,
    pub gradient: Mat3,
}

impl Default for ActuatorFieldModel {
    fn default() -> Self {
        // Symmetric and traceless, so the field is curl and divergence free.
        ActuatorFieldModel {
            uniform: Vec3::new(2e-4, -1e-4, 5e-4),
            gradient: Mat3::from_rows([[5e-3, 1e-3, 0.0], [1e-3, -2e-3, 0.0], [0.0, 0.0, -3e-3]]),
        }
    }
}

impl ActuatorFieldModel {
    pub fn zero() -> Self {
        ActuatorFieldModel {
            uniform: Vec3::zeros(),
            gradient: Mat3::zeros(),
        }
    }

    pub fn field(&self, p: &Vec3) -> Vec3 {
        self.uniform + self.gradient * *p
    }
}

/// One frame of the 8×8 mono-axial array; each cell is the field component
/// normal to the array plane, tesla. Row-major, row index along y.
#[derive(Clone, Debug, PartialEq)]
pub struct HallArrayReading {
    pub timestamp: f64,
    pub values: [[f64; ARRAY_SIZE]; ARRAY_SIZE],
}

impl HallArrayReading {
    pub fn zeros(timestamp: f64) -> Self {
        HallArrayReading {
            timestamp,
            values: [[0.0; ARRAY_SIZE]; ARRAY_SIZE],
        }
    }

    pub fn sensor_positions(&self) -> [[Vec3; ARRAY_SIZE]; ARRAY_SIZE] {
        sensor_positions()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// Sensor locations in the `z = 0` plane, centered on the origin.
pub fn sensor_positions() -> [[Vec3; ARRAY_SIZE]; ARRAY_SIZE] {
    let offset = (ARRAY_SIZE as f64 - 1.0) / 2.0;
    std::array::from_fn(|row| {
        std::array::from_fn(|col| {
            Vec3::new(
                (col as f64 - offset) * ARRAY_PITCH,
                (row as f64 - offset) * ARRAY_PITCH,
                0.0,
            )
        })
    })
}

/// Point-dipole field of world moment `m` located at `source`, evaluated at `query`.
pub fn dipole_field_at(source: &Vec3, m: &Vec3, query: &Vec3) -> Result<Vec3> {
    let r = *query - *source;
    let dist = r.norm();
    if !(dist > EXCLUSION_RADIUS) {
        return Err(Error::Singularity { distance: dist });
    }
    let r_hat = r * (1.0 / dist);
    let scale = MU0_OVER_4PI / (dist * dist * dist);
    Ok((r_hat * (3.0 * m.dot(&r_hat)) - *m) * scale)
}

/// Field of the capsule magnet at `query`.
pub fn dipole_field(pose: &Pose<f64>, dipole: &DipoleParams, query: &Vec3) -> Result<Vec3> {
    dipole_field_at(&pose.translation, &dipole.moment(pose), query)
}

pub fn sample_hall_array<R: Rng + ?Sized>(
    pose: &Pose<f64>,
    dipole: &DipoleParams,
    actuator: &ActuatorFieldModel,
    t: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Result<HallArrayReading> {
    let z = pose.translation.z();
    if !(z <= -MIN_DEPTH) {
        return Err(Error::BelowArrayViolation { z });
    }
    let noise = Normal::new(0.0, noise_sd)
        .map_err(|_| Error::Config(format!("invalid noise level {noise_sd}")))?;
    let positions = sensor_positions();
    let m = dipole.moment(pose);
    let mut reading = HallArrayReading::zeros(t);
    for (row, cells) in positions.iter().enumerate() {
        for (col, p) in cells.iter().enumerate() {
            let b = dipole_field_at(&pose.translation, &m, p)? + actuator.field(p);
            let n = if noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
            reading.values[row][col] = b.z() + n;
        }
    }
    Ok(reading)
}
