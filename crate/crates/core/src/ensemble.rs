//! The N-copy particle system with resetting.
//!
//! State is held per outer replica: each replica owns its reset data
//! `u_{t_m}`, its N flow maps with their Brownian drivers, the copy velocities
//! `u^i`, their mean `u`, and the gradient Gram matrix
//! `G_ij = ⟨∇u^i, ∇u^j⟩`. Replicas share the clock and the reset schedule: the
//! reset criterion is evaluated on the replica-averaged Gram sum, which is the
//! estimator of the expectation in the criterion when `replicas > 1`.
//!
//! For divergence-free, mean-zero periodic fields `⟨∇u, ∇v⟩ = ⟨ω_u, ω_v⟩`
//! exactly (also for the discrete spectral operators), so the Gram matrix is
//! assembled from copy vorticities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{initial_velocity, SimConfig};
use crate::diagnostics::{energy, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::flow::{
    em_step, init_flow, invert_map, BrownianState, FlowMap, InverseMap, InversionOptions,
};
use crate::torus::{
    curl2d, dealias, leray_project, Field, ScalarField, TorusGrid, VectorField, VectorInterpolant,
};
use crate::weber::{ensemble_mean, weber_velocity};

/// Below this reset enstrophy the run is declared exhausted.
pub const ENERGY_EXHAUSTED: f64 = 1e-14;

/// Symmetric N×N matrix of copy inner products.
#[derive(Clone, Debug, PartialEq)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn from_fields(fields: &[ScalarField]) -> Self {
        let n = fields.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = fields[i].inner(&fields[j]);
                data[i * n + j] = g;
                data[j * n + i] = g;
            }
        }
        Gram { n, data }
    }

    pub fn from_matrix(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Gram { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Entry-wise mean of several Gram matrices of equal size.
    pub fn average(grams: &[&Gram]) -> Self {
        let n = grams[0].n;
        let mut data = vec![0.0; n * n];
        for g in grams {
            for (d, v) in data.iter_mut().zip(&g.data) {
                *d += v;
            }
        }
        let inv = 1.0 / grams.len() as f64;
        data.iter_mut().for_each(|d| *d *= inv);
        Gram { n, data }
    }
}

/// `S = Σ_{i≠j} G_ij`; zero for a single copy.
pub fn reset_statistic(gram: &Gram) -> f64 {
    let n = gram.size();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += gram.get(i, j);
            }
        }
    }
    s
}

/// True iff `S < (1 − ε) N (N − 1) E_reset` (strict).
pub fn check_reset(s: f64, e_reset: f64, epsilon: f64, copies: usize) -> bool {
    let n = copies as f64;
    s < (1.0 - epsilon) * n * (n - 1.0) * e_reset
}

#[derive(Clone, Debug)]
pub struct CopyState {
    pub flow: FlowMap,
    pub inverse: InverseMap,
    pub noise: BrownianState,
    pub velocity: VectorField,
    pub vorticity: ScalarField,
}

impl CopyState {
    fn advance(
        &mut self,
        drift: &VectorInterpolant,
        u_reset: &VectorInterpolant,
        dt: f64,
        nu: f64,
        opts: InversionOptions,
    ) -> Result<()> {
        let db = self.noise.sample_increment(dt);
        self.flow = em_step(&self.flow, drift, dt, db, nu)?;
        self.inverse = invert_map(&self.flow, opts, Some(&self.inverse))?;
        self.velocity = weber_velocity(&self.inverse, u_reset);
        self.vorticity = curl2d(&self.velocity);
        Ok(())
    }
}

/// Last recorded values, for the one-sided energy-rate difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrevRecord {
    pub t: f64,
    pub energy: f64,
    pub s: f64,
}

#[derive(Clone, Debug)]
pub struct Replica {
    pub id: usize,
    pub u_reset: VectorField,
    u_reset_interp: VectorInterpolant,
    /// `‖∇u_{t_m}‖₂²`.
    pub e_reset: f64,
    /// `‖u_{t_m}‖₂²`, the Gronwall reference.
    pub energy_at_reset: f64,
    pub copies: Vec<CopyState>,
    pub u_mean: VectorField,
    pub gram: Gram,
    pub prev_record: Option<PrevRecord>,
}

impl Replica {
    /// Starts every copy from the identity map with reset data `u_reset`.
    fn start_interval(&mut self, u_reset: VectorField) {
        let grid = u_reset.grid().clone();
        self.u_reset_interp = VectorInterpolant::new(&u_reset);
        let identity = InverseMap::identity(&grid);
        let v0 = weber_velocity(&identity, &self.u_reset_interp);
        let w0 = curl2d(&v0);
        self.e_reset = w0.inner(&w0);
        self.u_reset = u_reset;
        for c in &mut self.copies {
            c.flow = init_flow(&grid);
            c.inverse = identity.clone();
            c.velocity = v0.clone();
            c.vorticity = w0.clone();
        }
        self.refresh();
        self.energy_at_reset = energy(&self.u_mean);
    }

    fn refresh(&mut self) {
        let vs: Vec<VectorField> = self.copies.iter().map(|c| c.velocity.clone()).collect();
        self.u_mean = ensemble_mean(&vs).expect("non-empty ensemble on one grid");
        let ws: Vec<ScalarField> = self.copies.iter().map(|c| c.vorticity.clone()).collect();
        self.gram = Gram::from_fields(&ws);
    }

    fn step(&mut self, step: u64, cfg: &SimConfig) -> Result<()> {
        let drift = VectorInterpolant::new(&dealias(&self.u_mean));
        let u_reset = &self.u_reset_interp;
        let replica = self.id;
        self.copies
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(c, copy)| {
                copy.advance(&drift, u_reset, cfg.dt, cfg.nu, cfg.inversion)
                    .map_err(|e| Error::Step {
                        step,
                        replica,
                        copy: c,
                        source: Box::new(e),
                    })
            })?;
        self.refresh();
        Ok(())
    }

    pub fn u_reset_interp(&self) -> &VectorInterpolant {
        &self.u_reset_interp
    }
}

/// One resetting event, replica-averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResetEvent {
    /// Index of the interval that starts here.
    pub m: usize,
    pub t_m: f64,
    /// New reset enstrophy `‖∇u_{t_m}‖₂²`.
    pub e_reset: f64,
    /// Mean per-copy enstrophy just before averaging, `(1/N) Σ G_ii`.
    pub energy_before: f64,
    /// Enstrophy of the averaged field, `‖ω_{t_m}‖₂²`.
    pub energy_after: f64,
    /// `‖ω_{t_m}‖₂² / ‖ω_{t_{m−1}}‖₂²`.
    pub contraction: f64,
    /// Off-diagonal Gram sum that fired the trigger.
    pub s_trigger: f64,
    /// `‖ω_{t_{m−1}}‖₂²`.
    pub e_prev: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResetLog {
    pub events: Vec<ResetEvent>,
}

impl ResetLog {
    pub const CSV_HEADER: &'static str =
        "m,t_m,E_reset,energy_before,energy_after,contraction,S_trigger";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }
}

impl ResetEvent {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.m,
            self.t_m,
            self.e_reset,
            self.energy_before,
            self.energy_after,
            self.contraction,
            self.s_trigger
        )
    }
}

/// Full particle-system state.
#[derive(Clone, Debug)]
pub struct EnsembleState {
    pub config: SimConfig,
    pub grid: TorusGrid,
    pub step: u64,
    pub t: f64,
    /// Index of the current reset interval.
    pub m: usize,
    pub t_reset: f64,
    pub replicas: Vec<Replica>,
    pub log: ResetLog,
    pub exhausted: bool,
}

impl EnsembleState {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let u0 = leray_project(&initial_velocity(&grid, &config.initial));
        let replicas = (0..config.replicas)
            .map(|r| Replica::fresh(&grid, config, r, u0.clone()))
            .collect();
        let mut st = EnsembleState {
            config: config.clone(),
            grid,
            step: 0,
            t: 0.0,
            m: 0,
            t_reset: 0.0,
            replicas,
            log: ResetLog::default(),
            exhausted: false,
        };
        st.check_exhausted();
        Ok(st)
    }

    pub fn copies(&self) -> usize {
        self.config.copies
    }

    /// Replica-averaged off-diagonal Gram sum.
    pub fn mean_statistic(&self) -> f64 {
        let grams: Vec<&Gram> = self.replicas.iter().map(|r| &r.gram).collect();
        reset_statistic(&Gram::average(&grams))
    }

    pub fn mean_e_reset(&self) -> f64 {
        self.replicas.iter().map(|r| r.e_reset).sum::<f64>() / self.replicas.len() as f64
    }

    pub fn mean_energy(&self) -> f64 {
        self.replicas.iter().map(|r| energy(&r.u_mean)).sum::<f64>() / self.replicas.len() as f64
    }

    /// Advances one time step; returns the reset event if one fired.
    pub fn step(&mut self) -> Result<Option<ResetEvent>> {
        let step = self.step;
        let cfg = &self.config;
        self.replicas
            .par_iter_mut()
            .try_for_each(|r| r.step(step, cfg))?;
        self.step += 1;
        self.t = self.step as f64 * self.config.dt;

        let mut event = None;
        if self.step % self.config.check_every == 0 {
            let s = self.mean_statistic();
            if check_reset(s, self.mean_e_reset(), self.config.epsilon, self.copies()) {
                event = Some(self.perform_reset(s));
            }
        }
        self.check_exhausted();
        Ok(event)
    }

    /// Replaces the reset data by the current mean and restarts all flows.
    pub fn perform_reset(&mut self, s_trigger: f64) -> ResetEvent {
        let n = self.copies() as f64;
        let e_prev = self.mean_e_reset();
        let energy_before = self
            .replicas
            .iter()
            .map(|r| r.gram.diagonal().iter().sum::<f64>() / n)
            .sum::<f64>()
            / self.replicas.len() as f64;
        self.replicas.par_iter_mut().for_each(|r| {
            let u = r.u_mean.clone();
            r.start_interval(u);
        });
        self.m += 1;
        self.t_reset = self.t;
        let e_new = self.mean_e_reset();
        let event = ResetEvent {
            m: self.m,
            t_m: self.t,
            e_reset: e_new,
            energy_before,
            energy_after: e_new,
            contraction: e_new / e_prev,
            s_trigger,
            e_prev,
        };
        self.log.events.push(event.clone());
        event
    }

    fn check_exhausted(&mut self) {
        if self.mean_e_reset() < ENERGY_EXHAUSTED {
            self.exhausted = true;
        }
    }

    /// One diagnostics row per replica at the current time.
    pub fn record(&mut self) -> Vec<DiagnosticsRecord> {
        let n = self.copies() as f64;
        let (nu, eps) = (self.config.nu, self.config.epsilon);
        let rate = 2.0 * nu * (1.0 - eps) * (n - 1.0) / n;
        let (t, step, m, t_reset) = (self.t, self.step, self.m, self.t_reset);
        self.replicas
            .iter_mut()
            .map(|r| {
                let e = energy(&r.u_mean);
                let s = reset_statistic(&r.gram);
                let rate_residual = match r.prev_record {
                    Some(p) if t > p.t => (e - p.energy) / (t - p.t) + 2.0 * nu * p.s / (n * n),
                    _ => 0.0,
                };
                r.prev_record = Some(PrevRecord { t, energy: e, s });
                DiagnosticsRecord {
                    replica: r.id,
                    step,
                    t,
                    m,
                    energy: e,
                    enstrophies: r.gram.diagonal(),
                    s,
                    rate_residual,
                    gronwall_margin: e * (rate * (t - t_reset)).exp() - r.energy_at_reset,
                }
            })
            .collect()
    }

    /// Rebuilds a state from stored maps (see `checkpoint`). Velocities,
    /// means and Gram matrices are recomputed.
    pub(crate) fn restore(
        config: SimConfig,
        step: u64,
        m: usize,
        t_reset: f64,
        log: ResetLog,
        parts: Vec<ReplicaParts>,
    ) -> Result<Self> {
        let grid = config.grid()?;
        let mut replicas = Vec::with_capacity(parts.len());
        for p in parts {
            let interp = VectorInterpolant::new(&p.u_reset);
            let copies = p
                .copies
                .into_iter()
                .map(|(flow, inverse, noise)| {
                    let velocity = weber_velocity(&inverse, &interp);
                    let vorticity = curl2d(&velocity);
                    CopyState {
                        flow,
                        inverse,
                        noise,
                        velocity,
                        vorticity,
                    }
                })
                .collect();
            let mut r = Replica {
                id: p.id,
                u_reset: p.u_reset,
                u_reset_interp: interp,
                e_reset: p.e_reset,
                energy_at_reset: p.energy_at_reset,
                copies,
                u_mean: VectorField::zeros(&grid),
                gram: Gram::from_matrix(0, vec![]),
                prev_record: p.prev_record,
            };
            r.refresh();
            replicas.push(r);
        }
        let mut st = EnsembleState {
            t: step as f64 * config.dt,
            config,
            grid,
            step,
            m,
            t_reset,
            replicas,
            log,
            exhausted: false,
        };
        st.check_exhausted();
        Ok(st)
    }
}

pub(crate) struct ReplicaParts {
    pub id: usize,
    pub u_reset: VectorField,
    pub e_reset: f64,
    pub energy_at_reset: f64,
    pub prev_record: Option<PrevRecord>,
    pub copies: Vec<(FlowMap, InverseMap, BrownianState)>,
}

impl Replica {
    fn fresh(grid: &TorusGrid, cfg: &SimConfig, id: usize, u0: VectorField) -> Self {
        let copies = (0..cfg.copies)
            .map(|c| CopyState {
                flow: init_flow(grid),
                inverse: InverseMap::identity(grid),
                noise: BrownianState::new(cfg.seed, id as u32, c as u32),
                velocity: VectorField::zeros(grid),
                vorticity: ScalarField::zeros(grid),
            })
            .collect();
        let mut r = Replica {
            id,
            u_reset_interp: VectorInterpolant::new(&u0),
            u_reset: u0.clone(),
            e_reset: 0.0,
            energy_at_reset: 0.0,
            copies,
            u_mean: VectorField::zeros(grid),
            gram: Gram::from_matrix(0, vec![]),
            prev_record: None,
        };
        r.start_interval(u0);
        r
    }
}

/// Everything a run produces, in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub log: ResetLog,
    pub state: EnsembleState,
}

/// What the observer of [`run_observed`] is told after each step.
pub struct StepReport<'a> {
    pub state: &'a EnsembleState,
    pub reset: Option<&'a ResetEvent>,
    pub records: &'a [DiagnosticsRecord],
}

/// Integrates `state` to `config.t_final`, recording every `record_every`
/// steps (and at the last step), and calling `observer` after every step.
pub fn run_observed(
    mut state: EnsembleState,
    mut observer: impl FnMut(StepReport<'_>) -> Result<()>,
) -> Result<EnsembleState> {
    let total = state.config.steps();
    let every = state.config.record_every;
    if state.step == 0 {
        let recs = state.record();
        observer(StepReport {
            state: &state,
            reset: None,
            records: &recs,
        })?;
    }
    while state.step < total && !state.exhausted {
        let reset = state.step()?;
        if let Some(e) = &reset {
            log::info!("reset {} at t = {}: contraction {:.4}", e.m, e.t_m, e.contraction);
        }
        let due = state.step % every == 0 || state.step == total || state.exhausted;
        let recs = if due { state.record() } else { Vec::new() };
        observer(StepReport {
            state: &state,
            reset: reset.as_ref(),
            records: &recs,
        })?;
    }
    if state.exhausted {
        log::info!(
            "reset enstrophy below {ENERGY_EXHAUSTED:e} at t = {}; stopping",
            state.t
        );
    }
    Ok(state)
}

/// Runs the particle system from `t = 0` to `t_final`.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let mut records = Vec::new();
    let state = run_observed(EnsembleState::new(config)?, |rep| {
        records.extend_from_slice(rep.records);
        Ok(())
    })?;
    Ok(RunOutput {
        records,
        log: state.log.clone(),
        state,
    })
}
