//! Uniform periodic grids on `[-L, L)^N`, sampled fields, dilations and
//! quadrature.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::CubeFft;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension {0} outside 1..=3")]
    BadDimension(usize),
    #[error("points per axis {0} must be a power of two >= 8")]
    BadPoints(usize),
    #[error("half length must be positive and finite, got {0}")]
    BadHalfLength(f64),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid profile: {0}")]
    BadProfile(String),
    #[error("profile too wide for the box: estimated tail mass fraction {0:.3e}")]
    ProfileTooWide(f64),
    #[error("dilation factor must be positive, got {0}")]
    BadDilation(f64),
}

/// Periodic box discretization of `R^N` with `M` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub points: usize,
    pub half_length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, half_length: f64) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(GridError::BadPoints(points));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(GridError::BadHalfLength(half_length));
        }
        Ok(Self {
            dim,
            points,
            half_length,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Per-axis wavenumbers `pi j / L` in FFT order; the Nyquist entry is
    /// reported with negative sign.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points as i64;
        (0..m)
            .map(|j| {
                let jj = if j < m / 2 { j } else { j - m };
                PI * jj as f64 / self.half_length
            })
            .collect()
    }

    /// Per-axis sample positions `-L + j dx`.
    pub fn coordinates(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points)
            .map(|j| -self.half_length + j as f64 * dx)
            .collect()
    }

    /// The same lattice viewed after the exact dilation `x -> x / s`.
    pub fn rescaled(&self, s: f64) -> Self {
        Self {
            half_length: self.half_length / s,
            ..*self
        }
    }

    /// Stable short identifier for keying cached records by resolution.
    pub fn fingerprint(&self) -> String {
        // FNV-1a so the value is stable across builds and platforms.
        let mut hasher = Fnv1a::default();
        (self.dim as u64).hash(&mut hasher);
        (self.points as u64).hash(&mut hasher);
        self.half_length.to_bits().hash(&mut hasher);
        format!(
            "n{}m{}l{}-{:016x}",
            self.dim,
            self.points,
            self.half_length,
            hasher.finish()
        )
    }

    /// Multi-index of a flat row-major position.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for d in (0..self.dim).rev() {
            idx[d] = flat % self.points;
            flat /= self.points;
        }
        idx
    }
}

struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

pub fn make_grid(dim: usize, points: usize, half_length: f64) -> Result<GridSpec, GridError> {
    GridSpec::new(dim, points, half_length)
}

/// A complex function sampled on a grid, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_real(grid: GridSpec, values: &[f64]) -> Result<Self, GridError> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|z| z * a).collect(),
        }
    }

    /// Rescales to the requested mass; a zero field is returned unchanged.
    pub fn normalized_to(&self, c: f64) -> Self {
        let m = mass(self);
        if m == 0.0 {
            return self.clone();
        }
        self.scaled((c / m).sqrt())
    }

    /// Reinterprets the samples as the exact dilation `s^{N/2} u(s x)` on the
    /// rescaled grid. No interpolation is involved.
    pub fn rescaled_exact(&self, s: f64) -> Self {
        let amp = s.powf(self.grid.dim as f64 / 2.0);
        Self {
            grid: self.grid.rescaled(s),
            values: self.values.iter().map(|z| z * amp).collect(),
        }
    }

    pub fn densities(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }
}

pub fn inner_product(f: &Field, g: &Field) -> Result<Complex64, GridError> {
    if f.grid != g.grid {
        return Err(GridError::GridMismatch);
    }
    let sum: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a.conj() * b).sum();
    Ok(sum * f.grid.cell_volume())
}

pub fn mass(f: &Field) -> f64 {
    f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.cell_volume()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProfileKind {
    /// Unit-mass Gaussian `(pi sigma^2)^{-N/4} exp(-|x - center|^2 / 2 sigma^2)`.
    Gaussian { sigma: f64, center: Vec<f64> },
    Dilated { base: Box<ProfileKind>, s: f64 },
    Sum { parts: Vec<ProfileKind> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    #[serde(default)]
    pub mass: Option<f64>,
}

impl ProfileSpec {
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            kind: ProfileKind::Gaussian {
                sigma,
                center: Vec::new(),
            },
            mass: None,
        }
    }

    pub fn with_mass(mut self, c: f64) -> Self {
        self.mass = Some(c);
        self
    }
}

impl ProfileKind {
    fn validate(&self, dim: usize) -> Result<(), GridError> {
        match self {
            ProfileKind::Gaussian { sigma, center } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(GridError::BadProfile(format!("sigma must be positive, got {sigma}")));
                }
                if !center.is_empty() && center.len() != dim {
                    return Err(GridError::BadProfile(format!(
                        "center has {} components for a {dim}-dimensional grid",
                        center.len()
                    )));
                }
                Ok(())
            }
            ProfileKind::Dilated { base, s } => {
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(GridError::BadProfile(format!("dilation must be positive, got {s}")));
                }
                base.validate(dim)
            }
            ProfileKind::Sum { parts } => {
                if parts.is_empty() {
                    return Err(GridError::BadProfile("empty sum".into()));
                }
                parts.iter().try_for_each(|p| p.validate(dim))
            }
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ProfileKind::Gaussian { sigma, center } => {
                let n = x.len() as f64;
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(d, xi)| {
                        let c = center.get(d).copied().unwrap_or(0.0);
                        (xi - c).powi(2)
                    })
                    .sum();
                (PI * sigma * sigma).powf(-n / 4.0) * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            ProfileKind::Dilated { base, s } => {
                let y: Vec<f64> = x.iter().map(|v| v * s).collect();
                s.powf(x.len() as f64 / 2.0) * base.eval(&y)
            }
            ProfileKind::Sum { parts } => parts.iter().map(|p| p.eval(x)).sum(),
        }
    }

    /// Worst-case fraction of mass outside the box, from the Gaussian tails.
    fn tail_fraction(&self, half_length: f64, scale: f64, dim: usize) -> f64 {
        match self {
            ProfileKind::Gaussian { sigma, center } => {
                // In the dilated frame the Gaussian has width sigma/scale and
                // center c/scale.
                let sig = sigma / scale;
                (0..dim)
                    .map(|d| {
                        let c = center.get(d).copied().unwrap_or(0.0) / scale;
                        let dist = (half_length - c.abs()).max(0.0);
                        // density ~ exp(-x^2/sigma^2): one-sided tail is erfc(d/sigma)/2
                        0.5 * libm::erfc(dist / sig)
                    })
                    .sum()
            }
            ProfileKind::Dilated { base, s } => base.tail_fraction(half_length, scale * s, dim),
            ProfileKind::Sum { parts } => parts
                .iter()
                .map(|p| p.tail_fraction(half_length, scale, dim))
                .fold(0.0, f64::max),
        }
    }
}

pub const TAIL_MASS_LIMIT: f64 = 1e-8;

pub fn sample_profile(grid: &GridSpec, profile: &ProfileSpec) -> Result<Field, GridError> {
    profile.kind.validate(grid.dim)?;
    if let Some(c) = profile.mass {
        if !(c > 0.0 && c.is_finite()) {
            return Err(GridError::BadProfile(format!("mass target must be positive, got {c}")));
        }
    }
    let tail = profile.kind.tail_fraction(grid.half_length, 1.0, grid.dim);
    if tail > TAIL_MASS_LIMIT {
        return Err(GridError::ProfileTooWide(tail));
    }
    let xs = grid.coordinates();
    let mut point = vec![0.0; grid.dim];
    let values = (0..grid.len())
        .map(|flat| {
            let idx = grid.unravel(flat);
            for d in 0..grid.dim {
                point[d] = xs[idx[d]];
            }
            Complex64::new(profile.kind.eval(&point), 0.0)
        })
        .collect();
    let field = Field::new(*grid, values)?;
    Ok(match profile.mass {
        Some(c) => field.normalized_to(c),
        None => field,
    })
}

/// Recommended dilation range; outside it the result carries a warning.
pub const DILATION_SAFE_RANGE: (f64, f64) = (0.25, 4.0);

#[derive(Debug, Clone)]
pub struct Dilated {
    pub field: Field,
    /// Set when `s` lies outside [`DILATION_SAFE_RANGE`].
    pub under_resolved: bool,
}

/// `s^{N/2} u(s x)` on the same grid, by evaluating the trigonometric
/// interpolant of `u` at the scaled sample points. Points with `|s x| > L`
/// map outside the box and are set to zero.
pub fn dilate_field(field: &Field, s: f64) -> Result<Dilated, GridError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(GridError::BadDilation(s));
    }
    let grid = field.grid;
    let under_resolved = s < DILATION_SAFE_RANGE.0 || s > DILATION_SAFE_RANGE.1;
    if s == 1.0 {
        return Ok(Dilated {
            field: field.clone(),
            under_resolved,
        });
    }
    let matrix = interpolation_matrix(&grid, s);
    let mut values = field.values.clone();
    for axis in 0..grid.dim {
        values = apply_along_axis(&values, &grid, axis, &matrix);
    }
    let amp = s.powf(grid.dim as f64 / 2.0);
    values.iter_mut().for_each(|z| *z *= amp);
    Ok(Dilated {
        field: Field { grid, values },
        under_resolved,
    })
}

/// Row `i` holds the weights that evaluate the periodic interpolant at
/// `s x_i` from the samples at `x_j`.
fn interpolation_matrix(grid: &GridSpec, s: f64) -> Vec<f64> {
    let m = grid.points;
    let l = grid.half_length;
    let xs = grid.coordinates();
    let mut out = vec![0.0; m * m];
    for (i, xi) in xs.iter().enumerate() {
        let y = s * xi;
        if y.abs() > l {
            continue;
        }
        for (j, xj) in xs.iter().enumerate() {
            out[i * m + j] = dirichlet(y - xj, m, l);
        }
    }
    out
}

/// Periodic interpolation kernel on `M` points, Nyquist mode split evenly.
fn dirichlet(t: f64, m: usize, l: f64) -> f64 {
    let theta = PI * t / l;
    let half = m / 2;
    let mut acc = 1.0 + (half as f64 * theta).cos();
    for k in 1..half {
        acc += 2.0 * (k as f64 * theta).cos();
    }
    acc / m as f64
}

fn apply_along_axis(values: &[Complex64], grid: &GridSpec, axis: usize, matrix: &[f64]) -> Vec<Complex64> {
    let m = grid.points;
    let stride = m.pow((grid.dim - 1 - axis) as u32);
    let outer = values.len() / (m * stride);
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * m * stride + inner;
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = values[base + j * stride];
            }
            for i in 0..m {
                let row = &matrix[i * m..(i + 1) * m];
                let acc: Complex64 = row.iter().zip(&line).map(|(w, v)| v * *w).sum();
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

/// Cached transform plan and `|k|^2` table for spectral derivatives.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub grid: GridSpec,
    fft: CubeFft,
    k2: Vec<f64>,
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let k = grid.wavenumbers();
        let k2 = (0..grid.len())
            .map(|flat| {
                let idx = grid.unravel(flat);
                (0..grid.dim).map(|d| k[idx[d]] * k[idx[d]]).sum()
            })
            .collect();
        Self {
            grid,
            fft: CubeFft::new(grid.dim, grid.points),
            k2,
        }
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut data = values.to_vec();
        self.fft.forward(&mut data);
        data
    }

    /// Normalized inverse of [`Spectral::forward`].
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut data = spectrum.to_vec();
        self.fft.inverse(&mut data);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
        data
    }

    /// `A(u) = int |grad u|^2`, evaluated exactly on the trigonometric interpolant.
    pub fn kinetic(&self, field: &Field) -> f64 {
        let hat = self.forward(&field.values);
        self.kinetic_from_spectrum(&hat)
    }

    pub fn kinetic_from_spectrum(&self, hat: &[Complex64]) -> f64 {
        let sum: f64 = hat.iter().zip(&self.k2).map(|(z, k2)| k2 * z.norm_sqr()).sum();
        sum * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// Applies the Fourier multiplier `f(|k|^2)`.
    pub fn apply_multiplier(&self, values: &[Complex64], f: impl Fn(f64) -> f64) -> Vec<Complex64> {
        let mut hat = self.forward(values);
        hat.iter_mut().zip(&self.k2).for_each(|(z, k2)| *z *= f(*k2));
        self.inverse(&hat)
    }

    /// `-Laplacian u`.
    pub fn neg_laplacian(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.apply_multiplier(values, |k2| k2)
    }

    /// `Im int conj(psi) d_a psi` for each axis; Nyquist modes are dropped
    /// because the odd derivative is undefined there.
    pub fn momentum(&self, field: &Field) -> Vec<f64> {
        let hat = self.forward(&field.values);
        let k = self.grid.wavenumbers();
        let nyq = self.grid.points / 2;
        let mut out = vec![0.0; self.grid.dim];
        for (flat, z) in hat.iter().enumerate() {
            let idx = self.grid.unravel(flat);
            for (d, slot) in out.iter_mut().enumerate() {
                if idx[d] != nyq {
                    *slot += k[idx[d]] * z.norm_sqr();
                }
            }
        }
        let scale = self.grid.cell_volume() / self.grid.len() as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// `||u||_{H^1}^2 = mass + A`.
    pub fn h1_norm_sqr(&self, field: &Field) -> f64 {
        mass(field) + self.kinetic(field)
    }
}
