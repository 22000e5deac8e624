//! Axis-by-axis N-dimensional FFTs on cubic row-major arrays, with pruned
//! variants for zero-padded (2M per axis) free-space convolution.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse plans for an `n^dim` cube. The inverse is unnormalized.
#[derive(Clone)]
pub struct CubeFft {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CubeFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CubeFft")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl CubeFft {
    pub fn new(dim: usize, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        let full = vec![self.n; self.dim];
        for axis in (0..self.dim).rev() {
            self.transform_axis(data, axis, &full, Direction::Forward);
        }
    }

    /// Unnormalized inverse transform (multiply by `1/len()` to invert `forward`).
    pub fn inverse(&self, data: &mut [Complex64]) {
        let full = vec![self.n; self.dim];
        for axis in 0..self.dim {
            self.transform_axis(data, axis, &full, Direction::Inverse);
        }
    }

    /// Forward transform of data that is nonzero only in the leading
    /// `active^dim` corner. Lines that are identically zero are skipped.
    pub fn forward_pruned(&self, data: &mut [Complex64], active: usize) {
        // Transform the last axis first; afterwards that axis is fully populated.
        let mut limits = vec![active; self.dim];
        for axis in (0..self.dim).rev() {
            self.transform_axis(data, axis, &limits, Direction::Forward);
            limits[axis] = self.n;
        }
    }

    /// Inverse transform where only the leading `active^dim` corner of the
    /// output is needed. Unnormalized.
    pub fn inverse_pruned(&self, data: &mut [Complex64], active: usize) {
        let mut limits = vec![self.n; self.dim];
        for axis in 0..self.dim {
            self.transform_axis(data, axis, &limits, Direction::Inverse);
            limits[axis] = active;
        }
    }

    /// Transforms every line along `axis` whose indices on the other axes
    /// lie below `limits`.
    fn transform_axis(&self, data: &mut [Complex64], axis: usize, limits: &[usize], dir: Direction) {
        let n = self.n;
        let dim = self.dim;
        debug_assert_eq!(data.len(), self.len());
        let plan = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let stride = n.pow((dim - 1 - axis) as u32);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];

        if axis == dim - 1 {
            // Contiguous lines.
            let mut other = vec![0usize; dim - 1];
            loop {
                let mut base = 0;
                for &idx in other.iter() {
                    base = base * n + idx;
                }
                let start = base * n;
                plan.process_with_scratch(&mut data[start..start + n], &mut scratch);
                if !advance(&mut other, &limits[..dim - 1]) {
                    break;
                }
            }
            return;
        }

        let mut line = vec![Complex64::new(0.0, 0.0); n];
        // indices over all axes except `axis`
        let other_limits: Vec<usize> = (0..dim).filter(|&a| a != axis).map(|a| limits[a]).collect();
        let mut other = vec![0usize; dim - 1];
        loop {
            let mut offset = 0;
            let mut k = 0;
            for a in 0..dim {
                let idx = if a == axis {
                    0
                } else {
                    let v = other[k];
                    k += 1;
                    v
                };
                offset = offset * n + idx;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = data[offset + i * stride];
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (i, value) in line.iter().enumerate() {
                data[offset + i * stride] = *value;
            }
            if !advance(&mut other, &other_limits) {
                break;
            }
        }
    }
}

/// Odometer increment of `idx` with per-digit exclusive `limits`
/// (last digit fastest). Returns false after the final combination.
fn advance(idx: &mut [usize], limits: &[usize]) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < limits[d] {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// Copies an `m^dim` array into the leading corner of a zeroed `(2m)^dim` array.
pub(crate) fn embed_in_padded(src: &[Complex64], dst: &mut [Complex64], dim: usize, m: usize) {
    dst.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
    let pm = 2 * m;
    for (flat, value) in src.iter().enumerate() {
        dst[padded_index(flat, dim, m, pm)] = *value;
    }
}

/// Reads the leading `m^dim` corner of a `(2m)^dim` array.
pub(crate) fn crop_from_padded(src: &[Complex64], dst: &mut [Complex64], dim: usize, m: usize) {
    let pm = 2 * m;
    for (flat, value) in dst.iter_mut().enumerate() {
        *value = src[padded_index(flat, dim, m, pm)];
    }
}

#[inline]
fn padded_index(flat: usize, dim: usize, m: usize, pm: usize) -> usize {
    let mut rem = flat;
    let mut out = 0;
    let mut scale = 1;
    for _ in 0..dim {
        let idx = rem % m;
        rem /= m;
        out += idx * scale;
        scale *= pm;
    }
    out
}
