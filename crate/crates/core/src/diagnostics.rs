//! Energy bookkeeping, decay bounds and comparison against a reference.

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleState, ResetLog};
use crate::error::{Error, Result};
use crate::torus::{curl2d, Field, ScalarField, VectorField};

/// `‖u‖₂²`.
pub fn energy(u: &VectorField) -> f64 {
    u.inner(u)
}

/// `‖∇u‖₂² = ‖ω‖₂²` for divergence-free `u`.
pub fn enstrophy(u: &VectorField) -> f64 {
    let w = curl2d(u);
    w.inner(&w)
}

/// Sample mean and its standard error (zero for a single sample).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row of `diagnostics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub replica: usize,
    pub step: u64,
    pub t: f64,
    pub m: usize,
    /// `‖u_t‖₂²` of the ensemble mean.
    pub energy: f64,
    /// `‖∇u^i_t‖₂²` per copy.
    pub enstrophies: Vec<f64>,
    /// Off-diagonal Gram sum.
    pub s: f64,
    /// One-sided `Δ‖u‖²/Δt + 2ν S/N²` since the previous row.
    pub rate_residual: f64,
    /// `‖u_t‖² e^{c(t − t_m)} − ‖u_{t_m}‖²`; non-positive when the bound holds.
    pub gronwall_margin: f64,
}

impl DiagnosticsRecord {
    pub fn csv_header(copies: usize) -> String {
        let mut h = String::from("replica,step,t,m,energy,S,rate_residual,gronwall_margin");
        for i in 0..copies {
            h.push_str(&format!(",enstrophy_{i}"));
        }
        h
    }

    pub fn csv_row(&self) -> String {
        let mut r = format!(
            "{},{},{:e},{},{:e},{:e},{:e},{:e}",
            self.replica,
            self.step,
            self.t,
            self.m,
            self.energy,
            self.s,
            self.rate_residual,
            self.gronwall_margin
        );
        for e in &self.enstrophies {
            r.push_str(&format!(",{e:e}"));
        }
        r
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::Checkpoint(format!("bad diagnostics row ({what}): {line}"));
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() < 8 {
            return Err(bad("too few columns"));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad("float"));
        Ok(DiagnosticsRecord {
            replica: cols[0].parse().map_err(|_| bad("replica"))?,
            step: cols[1].parse().map_err(|_| bad("step"))?,
            t: f(2)?,
            m: cols[3].parse().map_err(|_| bad("m"))?,
            energy: f(4)?,
            s: f(5)?,
            rate_residual: f(6)?,
            gronwall_margin: f(7)?,
            enstrophies: (8..cols.len()).map(f).collect::<Result<_>>()?,
        })
    }
}

/// Replica estimate of `∂ₜ E‖u‖² + 2ν E[S]/N²` between two states one
/// interval apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateResidual {
    /// Replica mean of `Δ‖u‖²/Δt`.
    pub lhs: f64,
    /// `−2ν E[S]/N²`, evaluated at the earlier state.
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
}

pub fn energy_rate_residual(before: &EnsembleState, after: &EnsembleState) -> RateResidual {
    let n = before.copies() as f64;
    let nu = before.config.nu;
    let dt = after.t - before.t;
    let pairs = before.replicas.iter().zip(&after.replicas);
    let (mut lhs, mut rhs, mut res) = (Vec::new(), Vec::new(), Vec::new());
    for (a, b) in pairs {
        let de = (energy(&b.u_mean) - energy(&a.u_mean)) / dt;
        let s = crate::ensemble::reset_statistic(&a.gram);
        let r = -2.0 * nu * s / (n * n);
        lhs.push(de);
        rhs.push(r);
        res.push(de - r);
    }
    let (residual, stderr) = mean_stderr(&res);
    RateResidual {
        lhs: mean_stderr(&lhs).0,
        rhs: mean_stderr(&rhs).0,
        residual,
        stderr,
    }
}

/// Exponent `c = 2ν(1 − ε)(N − 1)/N`.
pub fn gronwall_rate(nu: f64, epsilon: f64, copies: usize) -> f64 {
    let n = copies as f64;
    2.0 * nu * (1.0 - epsilon) * (n - 1.0) / n
}

/// `E_t e^{c(t − t_m)} − E_{t_m}` for each `(t, E_t)` in the interval that
/// starts at `(t_m, E_{t_m})`.
pub fn gronwall_margin(series: &[(f64, f64)], t_m: f64, e_m: f64, c: f64) -> Vec<f64> {
    series
        .iter()
        .map(|&(t, e)| e * (c * (t - t_m)).exp() - e_m)
        .collect()
}

/// Per-reset contraction factor against `1 − ε + ε/N`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub m: usize,
    pub factor: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn contraction_bound(epsilon: f64, copies: usize) -> f64 {
    1.0 - epsilon + epsilon / copies as f64
}

pub fn contraction_check(
    log: &ResetLog,
    epsilon: f64,
    copies: usize,
    tol: f64,
) -> Vec<ContractionCheck> {
    let bound = contraction_bound(epsilon, copies);
    log.events
        .iter()
        .map(|e| ContractionCheck {
            m: e.m,
            factor: e.contraction,
            bound,
            pass: e.contraction <= bound + tol,
        })
        .collect()
}

/// Relative residual of `‖ω_{t_m}‖² = (1/N)·mean_i G_ii + S/N²` per reset.
pub fn reset_identity_residuals(log: &ResetLog, copies: usize) -> Vec<f64> {
    let n = copies as f64;
    log.events
        .iter()
        .map(|e| {
            let rhs = e.energy_before / n + e.s_trigger / (n * n);
            (e.energy_after - rhs).abs() / e.energy_after.abs().max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// `‖curl u − ω_ref‖₂ / ‖ω_ref‖₂`.
pub fn oracle_error(u: &VectorField, omega_ref: &ScalarField) -> f64 {
    let d = curl2d(u).sub(omega_ref);
    d.inner(&d).sqrt() / omega_ref.inner(omega_ref).sqrt()
}

/// Least-squares fit of `ln E(t) = a − r t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `ln E`.
    pub rms: f64,
}

pub fn fit_decay(series: &[(f64, f64)]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| p.1 > 0.0)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(DecayFit {
        rate: -slope,
        intercept,
        rms,
    })
}

/// Replica-averaged energy series `(t, mean, stderr)` from diagnostics rows.
pub fn energy_series(records: &[DiagnosticsRecord]) -> Vec<(f64, f64, f64)> {
    let mut steps: Vec<u64> = records.iter().map(|r| r.step).collect();
    steps.sort_unstable();
    steps.dedup();
    steps
        .into_iter()
        .map(|s| {
            let rows: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.step == s).collect();
            let es: Vec<f64> = rows.iter().map(|r| r.energy).collect();
            let (m, se) = mean_stderr(&es);
            (rows[0].t, m, se)
        })
        .collect()
}
