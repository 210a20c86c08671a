use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::Vec3;

use super::camera::Intrinsics;

pub const FRAME_MAGIC: &[u8; 8] = b"CFFRAME1";

/// RGB-D frame reduced to luminance. Pixel `(u, v)` lives at index
/// `v · width + u`; depth ≤ 0 or non-finite marks an invalid pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    pub depth: Vec<f64>,
    pub intrinsics: Intrinsics,
    /// Camera-frame unit normals from depth; NaN where undefined.
    pub normals: Vec<Vec3>,
}

/// Bilinear lookup result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub value: f64,
    /// `(∂/∂u, ∂/∂v)` of the bilinear interpolant.
    pub gradient: [f64; 2],
    /// Top-left corner of the interpolation cell.
    pub cell: (usize, usize),
}

impl Frame {
    pub fn new(width: usize, height: usize, intensity: Vec<f64>, depth: Vec<f64>, intrinsics: Intrinsics) -> Result<Self> {
        let n = width * height;
        if width < 3 || height < 3 {
            return Err(Error::DegenerateInput("frames need at least 3 x 3 pixels".into()));
        }
        for (name, len) in [("intensity", intensity.len()), ("depth", depth.len())] {
            if len != n {
                return Err(Error::DimensionMismatch { context: name_context(name), expected: n, found: len });
            }
        }
        let mut f = Frame { width, height, intensity, depth, intrinsics, normals: Vec::new() };
        f.normals = f.compute_normals();
        Ok(f)
    }

    pub fn valid_depth(&self, idx: usize) -> bool {
        let d = self.depth[idx];
        d.is_finite() && d > 0.0
    }

    pub fn point(&self, u: usize, v: usize) -> Option<Vec3> {
        let idx = v * self.width + u;
        self.valid_depth(idx)
            .then(|| self.intrinsics.ray(u as f64, v as f64) * self.depth[idx])
    }

    /// Central differences of back-projected depth (one-sided at borders),
    /// oriented toward the camera.
    fn compute_normals(&self) -> Vec<Vec3> {
        let nan = Vec3::new(f64::NAN, f64::NAN, f64::NAN);
        let mut out = vec![nan; self.width * self.height];
        for v in 0..self.height {
            for u in 0..self.width {
                let (u0, u1) = (u.saturating_sub(1), (u + 1).min(self.width - 1));
                let (v0, v1) = (v.saturating_sub(1), (v + 1).min(self.height - 1));
                let (Some(c), Some(a), Some(b), Some(d), Some(e)) = (
                    self.point(u, v),
                    self.point(u0, v),
                    self.point(u1, v),
                    self.point(u, v0),
                    self.point(u, v1),
                ) else {
                    continue;
                };
                let n = (b - a).cross(&(e - d));
                if let Some(n) = n.normalized() {
                    out[v * self.width + u] = if n.dot(&c) > 0.0 { -n } else { n };
                }
            }
        }
        out
    }

    fn bilinear(&self, data: &[f64], u: f64, v: f64, need_valid: bool) -> Option<Sample> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        // Sample points on the last row/column use the cell before them.
        let x0 = if x0 == self.width - 1 && u == x0 as f64 { x0 - 1 } else { x0 };
        let y0 = if y0 == self.height - 1 && v == y0 as f64 { y0 - 1 } else { y0 };
        if x0 + 1 >= self.width || y0 + 1 >= self.height {
            return None;
        }
        let idx = |x: usize, y: usize| y * self.width + x;
        let corners = [idx(x0, y0), idx(x0 + 1, y0), idx(x0, y0 + 1), idx(x0 + 1, y0 + 1)];
        if need_valid && corners.iter().any(|&i| !self.valid_depth(i)) {
            return None;
        }
        let [a, b, c, d] = corners.map(|i| data[i]);
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        Some(Sample {
            value: top + (bottom - top) * fy,
            gradient: [(b - a) * (1.0 - fy) + (d - c) * fy, bottom - top],
            cell: (x0, y0),
        })
    }

    pub fn sample_intensity(&self, u: f64, v: f64) -> Option<Sample> {
        self.bilinear(&self.intensity, u, v, false)
    }

    /// Bilinear depth; `None` when any corner is invalid.
    pub fn sample_depth(&self, u: f64, v: f64) -> Option<Sample> {
        self.bilinear(&self.depth, u, v, true)
    }

    /// `CFFRAME1`, width and height as little-endian u32, four f64
    /// intrinsics, then intensity and depth as little-endian f64 grids.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(FRAME_MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let k = &self.intrinsics;
        for v in [k.fx, k.fy, k.cx, k.cy].iter().chain(&self.intensity).chain(&self.depth) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FRAME_MAGIC {
            return Err(Error::Version {
                found: String::from_utf8_lossy(&magic).into_owned(),
                expected: String::from_utf8_lossy(FRAME_MAGIC).into_owned(),
            });
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        let mut read_f64 = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let intrinsics = Intrinsics { fx: read_f64()?, fy: read_f64()?, cx: read_f64()?, cy: read_f64()? };
        let n = width * height;
        let intensity = (0..n).map(|_| read_f64()).collect::<Result<Vec<_>>>()?;
        let depth = (0..n).map(|_| read_f64()).collect::<Result<Vec<_>>>()?;
        Frame::new(width, height, intensity, depth, intrinsics)
    }
}

fn name_context(name: &str) -> &'static str {
    if name == "intensity" { "frame intensity" } else { "frame depth" }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amplitude: f64,
}

impl Wave {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (self.kx * x + self.ky * y + self.phase).sin()
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let c = self.amplitude * (self.kx * x + self.ky * y + self.phase).cos();
        [c * self.kx, c * self.ky]
    }
}

/// Textured height field `z = base_depth + h(x, y)` seen from cameras
/// looking along world +z.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub base_depth: f64,
    texture: Vec<Wave>,
    relief: Vec<Wave>,
}

impl Scene {
    /// Seeded scene; `relief` is the peak height deviation in meters.
    pub fn new(seed: u64, base_depth: f64, relief: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut waves = |n: usize, total: f64, wavelength: (f64, f64)| -> Vec<Wave> {
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
            let sum: f64 = weights.iter().sum();
            weights
                .iter()
                .map(|w| {
                    let k = TAU / rng.random_range(wavelength.0..wavelength.1);
                    let dir = rng.random_range(0.0..TAU);
                    Wave {
                        kx: k * dir.cos(),
                        ky: k * dir.sin(),
                        phase: rng.random_range(0.0..TAU),
                        amplitude: total * w / sum,
                    }
                })
                .collect()
        };
        let texture = waves(4, 0.45, (0.015, 0.03));
        let relief = waves(3, relief, (0.02, 0.04));
        Scene { base_depth, texture, relief }
    }

    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        0.5 + self.texture.iter().map(|w| w.value(x, y)).sum::<f64>()
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.base_depth + self.relief.iter().map(|w| w.value(x, y)).sum::<f64>()
    }

    fn height_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        self.relief.iter().fold([0.0, 0.0], |acc, w| {
            let g = w.gradient(x, y);
            [acc[0] + g[0], acc[1] + g[1]]
        })
    }

    /// Ray parameter of the first surface hit along `origin + s · dir`.
    fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        if !(dir.z() > 0.0) {
            return None;
        }
        let mut s = (self.base_depth - origin.z()) / dir.z();
        for _ in 0..50 {
            let p = *origin + *dir * s;
            let f = p.z() - self.height(p.x(), p.y());
            let g = self.height_gradient(p.x(), p.y());
            let df = dir.z() - g[0] * dir.x() - g[1] * dir.y();
            let step = f / df;
            s -= step;
            if step.abs() <= 1e-16 * s.abs() {
                break;
            }
        }
        (s > 0.0 && s.is_finite()).then_some(s)
    }

    /// Renders a `width × height` frame from `camera` (camera-to-world).
    pub fn render(&self, camera: &RigidTransform<f64>, intrinsics: &Intrinsics, width: usize, height: usize) -> Frame {
        let mut intensity = vec![0.0; width * height];
        let mut depth = vec![f64::NAN; width * height];
        for v in 0..height {
            for u in 0..width {
                let ray = intrinsics.ray(u as f64, v as f64);
                let dir = camera.rotation * ray;
                if let Some(s) = self.intersect(&camera.translation, &dir) {
                    let p = camera.translation + dir * s;
                    // The ray has unit camera-frame depth, so `s` is the depth.
                    depth[v * width + u] = s;
                    intensity[v * width + u] = self.intensity(p.x(), p.y());
                }
            }
        }
        Frame::new(width, height, intensity, depth, *intrinsics).expect("consistent buffer sizes")
    }
}
