//! Periodic fields on the torus [0, 2π)² and their spectral calculus.
//!
//! Fields are stored as real samples on a uniform `n × n` grid, row-major,
//! with row index `i` along `y` and column index `j` along `x`:
//! `values[i * n + j] = f(j h, i h)` with `h = 2π / n`.
//!
//! All derivative-type operations act on the trigonometric interpolant of the
//! samples. The zero (mean) mode of every dynamical field is pinned to 0 and
//! the Nyquist row/column is dropped by the projection operators, so a field
//! leaving [`leray_project`] or [`biot_savart`] is divergence-free and
//! mean-zero to roundoff.

mod field;
mod interp;
mod snapshot;
pub(crate) mod spectral;

pub use field::{inner_product, Field, ScalarField, TensorField, VectorField};
pub use interp::{
    interpolate, interpolate_vector, Interpolation, ScalarInterpolant, VectorInterpolant,
};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use spectral::{
    biot_savart, curl2d, dealias, divergence, gradient, jacobian, laplacian, leray_project,
};

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Uniform grid on [0, 2π)². Cloning is cheap; FFT plans are shared.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    h: f64,
    plan: Arc<FftPlan>,
}

struct FftPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::config("n", "n must be at least 8"));
        }
        if !n.is_power_of_two() {
            return Err(Error::config("n", "n must be a power of two"));
        }
        let mut planner = FftPlanner::new();
        let plan = FftPlan {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(TorusGrid {
            n,
            h: TWO_PI / n as f64,
            plan: Arc::new(plan),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid spacing `2π / n`.
    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinates `(x, y)` of node `k` (row-major index).
    #[inline]
    pub fn node(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k / self.n, k % self.n);
        [j as f64 * self.h, i as f64 * self.h]
    }

    /// Iterator over node coordinates in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }

    /// Signed integer wavenumber for FFT index `m`; the Nyquist index maps to
    /// `-n/2`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        if m <= self.n / 2 - 1 {
            m as f64
        } else {
            m as f64 - self.n as f64
        }
    }

    /// Wavenumber used for differentiation: identical to [`wavenumber`] except
    /// the Nyquist index, whose odd derivative is set to zero.
    ///
    /// [`wavenumber`]: TorusGrid::wavenumber
    #[inline]
    pub fn deriv_wavenumber(&self, m: usize) -> f64 {
        if m == self.n / 2 {
            0.0
        } else {
            self.wavenumber(m)
        }
    }

    #[inline]
    pub(crate) fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// Unnormalized forward 2D DFT of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, true);
        buf
    }

    /// Forward transforms of two real fields with one complex FFT.
    pub fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        self.fft2(&mut buf, true);
        let mut fa = vec![Complex64::default(); n * n];
        let mut fb = vec![Complex64::default(); n * n];
        for i in 0..n {
            let ni = (n - i) % n;
            for j in 0..n {
                let nj = (n - j) % n;
                let c = buf[i * n + j];
                let cm = buf[ni * n + nj].conj();
                fa[i * n + j] = (c + cm) * 0.5;
                fb[i * n + j] = (c - cm) * Complex64::new(0.0, -0.5);
            }
        }
        (fa, fb)
    }

    /// Normalized inverse transform, keeping the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut spec, false);
        let scale = 1.0 / (self.len() as f64);
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// Inverse transforms of two Hermitian spectra with one complex FFT.
    pub fn inverse_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x + Complex64::new(-y.im, y.re))
            .collect();
        self.fft2(&mut buf, false);
        let scale = 1.0 / (self.len() as f64);
        let ra = buf.iter().map(|c| c.re * scale).collect();
        let rb = buf.iter().map(|c| c.im * scale).collect();
        (ra, rb)
    }

    fn fft2(&self, buf: &mut [Complex64], forward: bool) {
        let n = self.n;
        let fft = if forward {
            &self.plan.forward
        } else {
            &self.plan.inverse
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, n);
        fft.process_with_scratch(buf, &mut scratch);
        transpose_square(buf, n);
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("h", &self.h)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Wrap a coordinate into [0, 2π).
#[inline]
pub fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(TWO_PI);
    // rem_euclid can return exactly 2π for tiny negative inputs
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

/// Shortest signed periodic difference `a - b`, in (-π, π].
#[inline]
pub fn periodic_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TWO_PI);
    if d > PI {
        d - TWO_PI
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::new(4).is_err());
        let err = TorusGrid::new(48).unwrap_err().to_string();
        assert!(err.contains("n must be a power of two"), "{err}");
        assert!(TorusGrid::new(64).is_ok());
    }

    #[test]
    fn spacing_covers_domain() {
        let g = TorusGrid::new(32).unwrap();
        assert!((g.h() * 32.0 - TWO_PI).abs() < 1e-14);
        assert_eq!(g.node(33), [g.h(), g.h()]);
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = TorusGrid::new(16).unwrap();
        let a: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..g.len())
            .map(|k| (k as f64 * 0.11).cos() + 0.3)
            .collect();
        let (fa, fb) = g.forward_pair(&a, &b);
        let fa1 = g.forward(&a);
        let fb1 = g.forward(&b);
        for k in 0..g.len() {
            assert!((fa[k] - fa1[k]).norm() < 1e-10);
            assert!((fb[k] - fb1[k]).norm() < 1e-10);
        }
        let (ra, rb) = g.inverse_pair(&fa, &fb);
        for k in 0..g.len() {
            assert!((ra[k] - a[k]).abs() < 1e-12);
            assert!((rb[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_and_diff() {
        assert_eq!(wrap(-1e-18), 0.0);
        assert!((wrap(-0.5) - (TWO_PI - 0.5)).abs() < 1e-15);
        assert!((periodic_diff(0.1, TWO_PI - 0.1) - 0.2).abs() < 1e-14);
    }
}
