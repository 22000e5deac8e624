//! Riesz potentials `|x|^{-gamma} * |u|^2` and the quartic functionals
//! `B_gamma(u)` by zero-padded (2M per axis) free-space FFT convolution.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::{crop_from_padded, embed_in_padded, CubeFft};
use crate::grid::{Field, GridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RieszError {
    #[error("exponent {gamma} outside (0, {dim}) for a {dim}-dimensional grid")]
    BadExponent { gamma: f64, dim: usize },
    #[error("field grid does not match the kernel grid")]
    GridMismatch,
}

/// How the kernel is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelRule {
    /// Exact transform of `|x|^{-gamma}` truncated at the padded-box diameter,
    /// sampled on an oversampled frequency lattice. Spectrally accurate for
    /// band-limited densities.
    #[default]
    TruncatedSpectral,
    /// Point samples of `|x|^{-gamma}` off the origin, cell average at the origin.
    CellAverage,
}

/// Real, even kernel spectrum on the `(2M)^N` padded lattice.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    pub grid: GridSpec,
    pub gamma: f64,
    pub rule: KernelRule,
    spectrum: Vec<f64>,
}

impl RieszKernel {
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// Kernel values on the padded lattice, offsets in FFT order
    /// (`0..M` then `-M..-1` per axis).
    pub fn real_space(&self) -> Vec<f64> {
        let n = 2 * self.grid.points;
        let fft = CubeFft::new(self.grid.dim, n);
        let mut data: Vec<Complex64> = self.spectrum.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.inverse(&mut data);
        let scale = 1.0 / (fft.len() as f64 * self.grid.cell_volume());
        data.iter().map(|z| z.re * scale).collect()
    }

    /// The kernel for the same lattice after the dilation `x -> x / s`.
    /// Both rules are covariant under this map, so no rebuild is needed.
    pub fn rescaled(&self, s: f64) -> Self {
        let factor = s.powf(self.gamma - self.grid.dim as f64);
        Self {
            grid: self.grid.rescaled(s),
            gamma: self.gamma,
            rule: self.rule,
            spectrum: self.spectrum.iter().map(|v| v * factor).collect(),
        }
    }
}

pub fn build_kernel(grid: &GridSpec, gamma: f64) -> Result<RieszKernel, RieszError> {
    build_kernel_with(grid, gamma, KernelRule::default())
}

pub fn build_kernel_with(grid: &GridSpec, gamma: f64, rule: KernelRule) -> Result<RieszKernel, RieszError> {
    let dim = grid.dim;
    if !(gamma > 0.0 && gamma < dim as f64 && gamma < 4.0) {
        return Err(RieszError::BadExponent { gamma, dim });
    }
    let real = match rule {
        KernelRule::CellAverage => cell_average_table(grid, gamma),
        KernelRule::TruncatedSpectral => truncated_table(grid, gamma),
    };
    let n = 2 * grid.points;
    let fft = CubeFft::new(dim, n);
    let mut data: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut data);
    let dv = grid.cell_volume();
    let spectrum = data.iter().map(|z| z.re * dv).collect();
    Ok(RieszKernel {
        grid: *grid,
        gamma,
        rule,
        spectrum,
    })
}

/// Signed offset of padded index `p` (FFT order on `2m` points).
#[inline]
fn offset(p: usize, m: usize) -> i64 {
    if p < m {
        p as i64
    } else {
        p as i64 - 2 * m as i64
    }
}

fn padded_len(grid: &GridSpec) -> usize {
    (2 * grid.points).pow(grid.dim as u32)
}

fn unravel_padded(mut flat: usize, dim: usize, n: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    for d in (0..dim).rev() {
        idx[d] = flat % n;
        flat /= n;
    }
    idx
}

fn cell_average_table(grid: &GridSpec, gamma: f64) -> Vec<f64> {
    let m = grid.points;
    let dim = grid.dim;
    let dx = grid.spacing();
    let mut out = vec![0.0; padded_len(grid)];
    for (flat, slot) in out.iter_mut().enumerate() {
        let idx = unravel_padded(flat, dim, 2 * m);
        let r2: f64 = (0..dim).map(|d| (offset(idx[d], m) as f64 * dx).powi(2)).sum();
        if r2 > 0.0 {
            *slot = r2.powf(-gamma / 2.0);
        }
    }
    out[0] = origin_cell_average(dim, dx, gamma);
    out
}

/// `dx^{-N} int_{[-dx/2, dx/2]^N} |x|^{-gamma} dx`.
///
/// The cube splits into `2N` pyramids with apex at the origin; on each the
/// radial integral is explicit, leaving a smooth integral over a face at
/// distance `h = dx/2`.
pub fn origin_cell_average(dim: usize, dx: f64, gamma: f64) -> f64 {
    let h = 0.5 * dx;
    let n = dim as f64;
    let integral = match dim {
        1 => 2.0 * h.powf(1.0 - gamma) / (1.0 - gamma),
        _ => {
            let gl = GaussLegendre::new(NonZeroUsize::new(48).unwrap());
            let pairs = gl.as_node_weight_pairs();
            let face = match dim {
                2 => pairs
                    .iter()
                    .map(|&(z, w)| w * h * (h * h + (h * z).powi(2)).powf(-gamma / 2.0))
                    .sum::<f64>(),
                _ => {
                    let mut acc = 0.0;
                    for &(z1, w1) in pairs {
                        for &(z2, w2) in pairs {
                            let r2 = h * h + (h * z1).powi(2) + (h * z2).powi(2);
                            acc += w1 * w2 * r2.powf(-gamma / 2.0);
                        }
                    }
                    acc * h * h
                }
            };
            2.0 * n * h / (n - gamma) * face
        }
    };
    integral / dx.powi(dim as i32)
}

/// Oversampling factor for the truncated-kernel construction; must exceed
/// `1 + sqrt(N)` so that periodic images of the truncated kernel do not
/// reach the `2M` target window.
const OVERSAMPLE: usize = 3;

fn truncated_table(grid: &GridSpec, gamma: f64) -> Vec<f64> {
    let dim = grid.dim;
    let m = grid.points;
    let dx = grid.spacing();
    let nf = OVERSAMPLE * m;
    let half = nf / 2;
    let dk = 2.0 * PI / (nf as f64 * dx);
    let radius = 2.0 * (dim as f64).sqrt() * grid.half_length;

    // Radial transform at every distinct |i|^2 on the nonnegative octant.
    let qmax = dim * half * half;
    let mut needed = vec![false; qmax + 1];
    let octant = (half + 1).pow(dim as u32);
    let q_of = |flat: usize| -> usize {
        let idx = unravel_padded(flat, dim, half + 1);
        (0..dim).map(|d| idx[d] * idx[d]).sum()
    };
    for flat in 0..octant {
        needed[q_of(flat)] = true;
    }
    let gl = GaussLegendre::new(NonZeroUsize::new(16).unwrap());
    let nodes = gl.as_node_weight_pairs();
    let mut table = vec![0.0; qmax + 1];
    for (q, slot) in table.iter_mut().enumerate() {
        if needed[q] {
            *slot = radial_transform(dk * (q as f64).sqrt(), gamma, dim, radius, nodes);
        }
    }
    let mut coeffs: Vec<f64> = (0..octant).map(|flat| table[q_of(flat)]).collect();

    // Even-symmetric inverse DFT, one axis at a time: only offsets 0..=M matter.
    let weight = |i: usize| if i == 0 || i == half { 1.0 } else { 2.0 };
    let cos_matrix: Vec<f64> = (0..=m)
        .flat_map(|j| {
            (0..=half).map(move |i| weight(i) * (2.0 * PI * (i * j % nf) as f64 / nf as f64).cos())
        })
        .collect();
    let mut extents = vec![half + 1; dim];
    for axis in 0..dim {
        coeffs = contract_axis(&coeffs, &extents, axis, &cos_matrix, half + 1, m + 1);
        extents[axis] = m + 1;
    }
    let norm = (nf as f64 * dx).powi(-(dim as i32));

    let mut out = vec![0.0; padded_len(grid)];
    for (flat, slot) in out.iter_mut().enumerate() {
        let idx = unravel_padded(flat, dim, 2 * m);
        let mut src = 0;
        for d in 0..dim {
            src = src * (m + 1) + offset(idx[d], m).unsigned_abs() as usize;
        }
        *slot = coeffs[src] * norm;
    }
    out
}

/// Contracts `axis` of a row-major array with `matrix[j][i]` (`rows x cols`).
fn contract_axis(data: &[f64], extents: &[usize], axis: usize, matrix: &[f64], cols: usize, rows: usize) -> Vec<f64> {
    debug_assert_eq!(extents[axis], cols);
    let inner: usize = extents[axis + 1..].iter().product();
    let outer: usize = extents[..axis].iter().product();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for j in 0..rows {
            let row = &matrix[j * cols..(j + 1) * cols];
            let dst = &mut out[(o * rows + j) * inner..(o * rows + j + 1) * inner];
            for (i, &w) in row.iter().enumerate() {
                let src = &data[(o * cols + i) * inner..(o * cols + i + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

/// `int_{|x| < R} |x|^{-gamma} e^{-i k.x} dx` as a function of `|k|`.
fn radial_transform(k: f64, gamma: f64, dim: usize, radius: f64, gl: &[(f64, f64)]) -> f64 {
    let a = dim as f64 - gamma;
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    if k == 0.0 {
        return surface * radius.powf(a) / a;
    }
    let bessel = |t: f64| match dim {
        1 => t.cos(),
        2 => libm::j0(t),
        _ => t.sin() / t,
    };
    // Power series on [0, r0] with k r0 <= 1, where the integrand is singular.
    let r0 = radius.min(1.0 / k);
    let mut total = 0.0;
    let mut coef = 1.0;
    let kr2 = (k * r0).powi(2);
    let mut pow = 1.0;
    for n in 0..40 {
        let e = a + 2.0 * n as f64;
        let term = coef * pow * r0.powf(a) / e;
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
        let nn = n as f64 + 1.0;
        coef *= -match dim {
            1 => 1.0 / ((2.0 * nn - 1.0) * (2.0 * nn)),
            2 => 1.0 / (4.0 * nn * nn),
            _ => 1.0 / ((2.0 * nn) * (2.0 * nn + 1.0)),
        };
        pow *= kr2;
    }
    // Composite Gauss-Legendre on the oscillatory remainder, ~1/3 period per panel.
    if r0 < radius {
        let panels = (((radius - r0) * k / 2.0).ceil() as usize).max(1);
        let width = (radius - r0) / panels as f64;
        for p in 0..panels {
            let lo = r0 + p as f64 * width;
            let mid = lo + 0.5 * width;
            let mut acc = 0.0;
            for &(z, w) in gl {
                let r = mid + 0.5 * width * z;
                acc += w * r.powf(a - 1.0) * bessel(k * r);
            }
            total += 0.5 * width * acc;
        }
    }
    surface * total
}

/// Reusable transform plan for convolutions on one grid.
#[derive(Debug, Clone)]
pub struct Convolver {
    pub grid: GridSpec,
    fft: CubeFft,
}

impl Convolver {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            fft: CubeFft::new(grid.dim, 2 * grid.points),
        }
    }

    fn check(&self, kernel: &RieszKernel) -> Result<(), RieszError> {
        if kernel.grid != self.grid {
            return Err(RieszError::GridMismatch);
        }
        Ok(())
    }

    fn transform_density(&self, rho: &[f64]) -> Vec<Complex64> {
        let m = self.grid.points;
        let src: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        let mut padded = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        embed_in_padded(&src, &mut padded, self.grid.dim, m);
        self.fft.forward_pruned(&mut padded, m);
        padded
    }

    fn back_to_grid(&self, mut padded: Vec<Complex64>) -> Vec<Complex64> {
        let m = self.grid.points;
        self.fft.inverse_pruned(&mut padded, m);
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        crop_from_padded(&padded, &mut out, self.grid.dim, m);
        let scale = 1.0 / self.fft.len() as f64;
        out.iter_mut().for_each(|z| *z *= scale);
        out
    }

    /// `|x|^{-gamma} * rho` on the grid.
    pub fn potential(&self, kernel: &RieszKernel, rho: &[f64]) -> Result<Vec<f64>, RieszError> {
        self.check(kernel)?;
        let mut hat = self.transform_density(rho);
        hat.iter_mut().zip(kernel.spectrum()).for_each(|(z, k)| *z *= k);
        Ok(self.back_to_grid(hat).iter().map(|z| z.re).collect())
    }

    /// Both potentials from one forward and one inverse transform: with real
    /// even kernels the two results come back as real and imaginary parts.
    pub fn potential_pair(
        &self,
        first: &RieszKernel,
        second: &RieszKernel,
        rho: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), RieszError> {
        self.check(first)?;
        self.check(second)?;
        let mut hat = self.transform_density(rho);
        hat.iter_mut()
            .zip(first.spectrum().iter().zip(second.spectrum()))
            .for_each(|(z, (a, b))| *z *= Complex64::new(*a, *b));
        let out = self.back_to_grid(hat);
        Ok((out.iter().map(|z| z.re).collect(), out.iter().map(|z| z.im).collect()))
    }

    /// Potential of the combined kernel `a K_1 + b K_2`.
    pub fn combined_potential(
        &self,
        first: &RieszKernel,
        a: f64,
        second: &RieszKernel,
        b: f64,
        rho: &[f64],
    ) -> Result<Vec<f64>, RieszError> {
        self.check(first)?;
        self.check(second)?;
        let mut hat = self.transform_density(rho);
        hat.iter_mut()
            .zip(first.spectrum().iter().zip(second.spectrum()))
            .for_each(|(z, (k1, k2))| *z *= a * k1 + b * k2);
        Ok(self.back_to_grid(hat).iter().map(|z| z.re).collect())
    }
}

/// `<rho, v>` with the grid quadrature.
pub fn pairing(grid: &GridSpec, rho: &[f64], v: &[f64]) -> f64 {
    rho.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume()
}

pub fn apply_potential(kernel: &RieszKernel, u: &Field) -> Result<Field, RieszError> {
    if u.grid != kernel.grid {
        return Err(RieszError::GridMismatch);
    }
    let v = Convolver::new(u.grid).potential(kernel, &u.densities())?;
    Ok(Field {
        grid: u.grid,
        values: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
    })
}

/// `B_gamma(u) = int (|x|^{-gamma} * |u|^2) |u|^2`.
pub fn b_value(kernel: &RieszKernel, u: &Field) -> Result<f64, RieszError> {
    if u.grid != kernel.grid {
        return Err(RieszError::GridMismatch);
    }
    let rho = u.densities();
    let v = Convolver::new(u.grid).potential(kernel, &rho)?;
    Ok(pairing(&u.grid, &rho, &v))
}
