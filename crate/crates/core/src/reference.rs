//! Pseudo-spectral Navier-Stokes in vorticity form.
//!
//! `∂ₜω + u·∇ω = νΔω` with `u = biot_savart(ω)`, advanced by an
//! integrating-factor RK4 step: the viscous term is integrated exactly and the
//! 2/3-dealiased advection term by classical RK4 in the rotated variable.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::torus::spectral::{biot_savart_spectrum, d_dx, d_dy, dealias_spectrum};
use crate::torus::{biot_savart, Field, ScalarField, TorusGrid};

/// Stepper with precomputed integrating factors for fixed `ν` and `dt`.
#[derive(Clone, Debug)]
pub struct NsSolver {
    grid: TorusGrid,
    nu: f64,
    dt: f64,
    full: Vec<f64>,
    half: Vec<f64>,
}

impl NsSolver {
    pub fn new(grid: &TorusGrid, nu: f64, dt: f64) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::config("nu", "nu must be finite and non-negative"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", "dt must be positive"));
        }
        let n = grid.n();
        let mut full = Vec::with_capacity(n * n);
        let mut half = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let k2 = grid.wavenumber(i).powi(2) + grid.wavenumber(j).powi(2);
                full.push((-nu * k2 * dt).exp());
                half.push((-nu * k2 * dt * 0.5).exp());
            }
        }
        Ok(NsSolver {
            grid: grid.clone(),
            nu,
            dt,
            full,
            half,
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `−(u·∇ω)^` with 2/3 truncation.
    fn advection(&self, w: &[Complex64]) -> Vec<Complex64> {
        let g = &self.grid;
        let (ux, uy) = biot_savart_spectrum(g, w);
        let (ux, uy) = g.inverse_pair(&ux, &uy);
        let (wx, wy) = g.inverse_pair(&d_dx(g, w), &d_dy(g, w));
        let prod: Vec<f64> = (0..ux.len())
            .map(|k| -(ux[k] * wx[k] + uy[k] * wy[k]))
            .collect();
        let mut spec = g.forward(&prod);
        dealias_spectrum(g, &mut spec);
        spec[0] = Complex64::default();
        spec
    }

    fn step_spectrum(&self, w: &[Complex64]) -> Vec<Complex64> {
        let dt = self.dt;
        let (e, e2) = (&self.full, &self.half);
        let comb = |f: &dyn Fn(usize) -> Complex64| (0..w.len()).map(f).collect::<Vec<_>>();
        let a = self.advection(w);
        let b = self.advection(&comb(&|k| e2[k] * (w[k] + 0.5 * dt * a[k])));
        let c = self.advection(&comb(&|k| e2[k] * w[k] + 0.5 * dt * b[k]));
        let d = self.advection(&comb(&|k| e[k] * w[k] + dt * e2[k] * c[k]));
        comb(&|k| e[k] * w[k] + dt / 6.0 * (e[k] * a[k] + 2.0 * e2[k] * (b[k] + c[k]) + d[k]))
    }

    /// One time step of size `dt`.
    pub fn step(&self, omega: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(omega.grid())?;
        let mut w = self.grid.forward(omega.values());
        dealias_spectrum(&self.grid, &mut w);
        w[0] = Complex64::default();
        let out = ScalarField::from_raw(&self.grid, self.grid.inverse_real(self.step_spectrum(&w)));
        if !out.is_finite() {
            return Err(Error::NonFinite("reference vorticity"));
        }
        Ok(out)
    }

    /// Vorticity after `steps` steps, with every `record_every`-th state kept
    /// (the initial and final states are always kept).
    pub fn trajectory(
        &self,
        omega0: &ScalarField,
        steps: u64,
        record_every: u64,
    ) -> Result<Vec<(f64, ScalarField)>> {
        let every = record_every.max(1);
        let mut w = omega0.clone();
        let mut out = vec![(0.0, w.clone())];
        for s in 1..=steps {
            w = self.step(&w)?;
            if s % every == 0 || s == steps {
                out.push((s as f64 * self.dt, w.clone()));
            }
        }
        Ok(out)
    }
}

/// Single step, for callers that do not keep a solver around.
pub fn ns_step(omega: &ScalarField, nu: f64, dt: f64) -> Result<ScalarField> {
    NsSolver::new(omega.grid(), nu, dt)?.step(omega)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyPoint {
    pub t: f64,
    /// `‖u‖₂²`.
    pub energy: f64,
    /// `‖∇u‖₂² = ‖ω‖₂²`.
    pub enstrophy: f64,
    /// Trapezoid residual of `d‖u‖²/dt = −2ν‖∇u‖²` over the interval ending
    /// here, relative to the dissipation (or to the energy when `ν = 0`).
    pub residual: f64,
}

/// Energy, enstrophy and balance residual along a trajectory of vorticities.
pub fn ns_energy_decay(trajectory: &[(f64, ScalarField)], nu: f64) -> Vec<EnergyPoint> {
    let mut out: Vec<EnergyPoint> = Vec::with_capacity(trajectory.len());
    for (t, w) in trajectory {
        let u = biot_savart(w);
        let energy = u.inner(&u);
        let enstrophy = w.inner(w);
        let residual = match out.last() {
            None => 0.0,
            Some(p) => {
                let dt = t - p.t;
                let r = (energy - p.energy) / dt + nu * (enstrophy + p.enstrophy);
                let scale = if nu > 0.0 {
                    nu * (enstrophy + p.enstrophy)
                } else {
                    energy.max(f64::MIN_POSITIVE)
                };
                r / scale
            }
        };
        out.push(EnergyPoint {
            t: *t,
            energy,
            enstrophy,
            residual,
        });
    }
    out
}
