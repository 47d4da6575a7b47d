//! Run directories: what `run`, `reference`, `sweep` and `check` read and
//! write.
//!
//! A run directory holds `manifest.json` (config, hash, seed, versions, wall
//! time), `diagnostics.csv`, `resets.csv`, `snapshots/` and, when enabled,
//! `checkpoint/`. Everything but the wall time is a function of the config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{initial_velocity, SimConfig};
use crate::diagnostics::{
    contraction_bound, mean_stderr, reset_identity_residuals, DiagnosticsRecord,
};
use crate::ensemble::{run_observed, EnsembleState, ResetEvent, ResetLog};
use crate::error::{Error, Result};
use crate::reference::{ns_energy_decay, NsSolver};
use crate::torus::{curl2d, leray_project, write_snapshot, Snapshot};

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const RESETS: &str = "resets.csv";
pub const REFERENCE: &str = "reference.csv";
pub const SUMMARY: &str = "summary.json";
pub const SNAPSHOTS: &str = "snapshots";
pub const CHECKPOINT: &str = "checkpoint";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// `"run"` or `"reference"`.
    pub kind: String,
    pub program: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: SimConfig,
    pub threads: usize,
    pub wall_seconds: f64,
    pub step: u64,
    pub t: f64,
    pub resets: usize,
    pub exhausted: bool,
    pub resumed_from_step: Option<u64>,
    pub complete: bool,
}

impl RunManifest {
    fn new(kind: &str, config: &SimConfig) -> Self {
        RunManifest {
            kind: kind.into(),
            program: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
            threads: rayon::current_num_threads(),
            wall_seconds: 0.0,
            step: 0,
            t: 0.0,
            resets: 0,
            exhausted: false,
            resumed_from_step: None,
            complete: false,
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?)
    }
}

/// Lines of an existing CSV whose leading field passes `keep`, header first.
fn retained_lines(path: &Path, header: &str, keep: impl Fn(&str) -> bool) -> Result<Vec<String>> {
    let mut lines = vec![header.to_string()];
    if let Ok(text) = fs::read_to_string(path) {
        lines.extend(
            text.lines()
                .skip(1)
                .filter(|l| !l.is_empty() && keep(l))
                .map(String::from),
        );
    }
    Ok(lines)
}

fn open_csv(path: &Path, lines: &[String]) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    Ok(w)
}

fn write_state_snapshots(dir: &Path, prefix: &str, state: &EnsembleState) -> Result<()> {
    for r in &state.replicas {
        write_snapshot(
            dir.join(format!("{prefix}_r{}.tsf", r.id)),
            &Snapshot::Vector(r.u_mean.clone()),
        )?;
    }
    Ok(())
}

/// Runs the particle system into `out`. With `resume`, continues from a
/// checkpoint; rows already in `out` past the checkpoint are discarded so the
/// directory ends up as if the run had not been interrupted.
pub fn run_to_dir(config: &SimConfig, out: &Path, resume: Option<&Path>) -> Result<RunManifest> {
    let started = Instant::now();
    let state = match resume {
        Some(ck) => {
            let mut st = load_checkpoint(ck)?;
            st.config.t_final = config.t_final;
            st.config.validate()?;
            st
        }
        None => EnsembleState::new(config)?,
    };
    let cfg = state.config.clone();
    let snaps = out.join(SNAPSHOTS);
    fs::create_dir_all(&snaps)?;
    let mut manifest = RunManifest::new("run", &cfg);
    manifest.resumed_from_step = resume.map(|_| state.step);
    manifest.write(out)?;

    let (step0, m0) = (state.step, state.m);
    let diag_lines = retained_lines(
        &out.join(DIAGNOSTICS),
        &DiagnosticsRecord::csv_header(cfg.copies),
        |l| {
            resume.is_some()
                && l.split(',')
                    .nth(1)
                    .and_then(|s| s.parse::<u64>().ok())
                    .is_some_and(|s| s <= step0)
        },
    )?;
    let reset_lines = retained_lines(&out.join(RESETS), ResetLog::CSV_HEADER, |l| {
        resume.is_some()
            && l.split(',')
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .is_some_and(|m| m <= m0)
    })?;
    let mut diag = open_csv(&out.join(DIAGNOSTICS), &diag_lines)?;
    let mut resets = open_csv(&out.join(RESETS), &reset_lines)?;
    if resume.is_none() && cfg.snapshot_every > 0 {
        write_state_snapshots(&snaps, "step_00000000", &state)?;
    }

    let state = run_observed(state, |rep| {
        for r in rep.records {
            writeln!(diag, "{}", r.csv_row())?;
        }
        let st = rep.state;
        if let Some(ev) = rep.reset {
            writeln!(resets, "{}", ev.csv_row())?;
            write_state_snapshots(&snaps, &format!("reset_{:04}", ev.m), st)?;
        }
        if cfg.snapshot_every > 0 && st.step % cfg.snapshot_every == 0 {
            write_state_snapshots(&snaps, &format!("step_{:08}", st.step), st)?;
        }
        if cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 {
            diag.flush()?;
            resets.flush()?;
            save_checkpoint(&out.join(CHECKPOINT), st)?;
        }
        Ok(())
    })?;
    diag.flush()?;
    resets.flush()?;
    write_state_snapshots(&snaps, "final", &state)?;
    if cfg.checkpoint_every > 0 {
        save_checkpoint(&out.join(CHECKPOINT), &state)?;
    }

    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.step = state.step;
    manifest.t = state.t;
    manifest.resets = state.m;
    manifest.exhausted = state.exhausted;
    manifest.complete = true;
    manifest.write(out)?;
    Ok(manifest)
}

/// Runs the deterministic solver from the same initial data into `out`.
pub fn reference_to_dir(config: &SimConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    config.validate()?;
    let grid = config.grid()?;
    let snaps = out.join(SNAPSHOTS);
    fs::create_dir_all(&snaps)?;
    let mut manifest = RunManifest::new("reference", config);
    manifest.write(out)?;

    let omega0 = curl2d(&leray_project(&initial_velocity(&grid, &config.initial)));
    let solver = NsSolver::new(&grid, config.nu, config.dt)?;
    let steps = config.steps();
    let traj = solver.trajectory(&omega0, steps, config.record_every)?;
    let pts = ns_energy_decay(&traj, config.nu);
    let mut w = open_csv(
        &out.join(REFERENCE),
        &["t,energy,enstrophy,residual".to_string()],
    )?;
    for p in &pts {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e}",
            p.t, p.energy, p.enstrophy, p.residual
        )?;
    }
    w.flush()?;
    for (k, (t, field)) in traj.iter().enumerate() {
        let step = (t / config.dt).round() as u64;
        let last = k + 1 == traj.len();
        if last || (config.snapshot_every > 0 && step % config.snapshot_every == 0) {
            write_snapshot(
                snaps.join(format!("vorticity_{step:08}.tsf")),
                &Snapshot::Scalar(field.clone()),
            )?;
        }
    }

    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.step = steps;
    manifest.t = steps as f64 * config.dt;
    manifest.complete = true;
    manifest.write(out)?;
    Ok(manifest)
}

/// One point of a sweep: a name and the parameter values applied to it.
#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub name: String,
    pub params: Vec<(String, String)>,
}

/// Cartesian product of `key=v1,v2,...` specifications.
pub fn sweep_points(vary: &[String]) -> Result<Vec<SweepPoint>> {
    let mut points = vec![SweepPoint {
        name: String::new(),
        params: Vec::new(),
    }];
    for spec in vary {
        let (key, values) = spec.split_once('=').ok_or_else(|| {
            Error::config("vary", format!("expected key=v1,v2,..., got {spec:?}"))
        })?;
        let values: Vec<&str> = values.split(',').filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::config("vary", format!("no values for {key}")));
        }
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.params.push((key.to_string(), v.to_string()));
                    q
                })
            })
            .collect();
    }
    for p in &mut points {
        p.name = if p.params.is_empty() {
            "base".into()
        } else {
            p.params
                .iter()
                .map(|(k, v)| format!("{k}-{v}"))
                .collect::<Vec<_>>()
                .join("_")
        };
    }
    Ok(points)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub name: String,
    pub dir: PathBuf,
    pub params: Vec<(String, String)>,
    pub config_hash: String,
    pub error: Option<String>,
}

/// Independent runs, one subdirectory each, scheduled over `jobs` workers.
pub fn sweep_to_dir(
    base: &SimConfig,
    vary: &[String],
    out: &Path,
    jobs: usize,
) -> Result<Vec<SweepEntry>> {
    let points = sweep_points(vary)?;
    let mut configs = Vec::with_capacity(points.len());
    for p in &points {
        let mut cfg = base.clone();
        for (k, v) in &p.params {
            cfg.set_field(k, v)?;
        }
        cfg.validate()?;
        configs.push(cfg);
    }
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let entries: Vec<SweepEntry> = pool.install(|| {
        points
            .par_iter()
            .zip(&configs)
            .map(|(p, cfg)| {
                let dir = out.join(&p.name);
                let error = run_to_dir(cfg, &dir, None).err().map(|e| e.to_string());
                SweepEntry {
                    name: p.name.clone(),
                    dir,
                    params: p.params.clone(),
                    config_hash: cfg.hash(),
                    error,
                }
            })
            .collect()
    });
    fs::write(out.join("sweep.json"), serde_json::to_vec_pretty(&entries)?)?;
    Ok(entries)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity (`None` if nothing to check).
    pub worst: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub all_pass: bool,
    pub checks: Vec<CheckResult>,
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    fs::read_to_string(path)?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(DiagnosticsRecord::parse_csv_row)
        .collect()
}

/// Parses `resets.csv`; `e_prev` is recovered from the contraction factor.
pub fn read_resets(path: &Path) -> Result<ResetLog> {
    let mut events = Vec::new();
    for line in fs::read_to_string(path)?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
    {
        let bad = || Error::Checkpoint(format!("bad resets row: {line}"));
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 7 {
            return Err(bad());
        }
        let f = |i: usize| c[i].parse::<f64>().map_err(|_| bad());
        let (energy_after, contraction) = (f(4)?, f(5)?);
        events.push(ResetEvent {
            m: c[0].parse().map_err(|_| bad())?,
            t_m: f(1)?,
            e_reset: f(2)?,
            energy_before: f(3)?,
            energy_after,
            contraction,
            s_trigger: f(6)?,
            e_prev: energy_after / contraction,
        });
    }
    Ok(ResetLog { events })
}

/// Tolerances used by `check`.
pub const CONTRACTION_TOL: f64 = 1e-3;
pub const RESET_IDENTITY_TOL: f64 = 1e-8;
pub const GRONWALL_MARGIN: f64 = 0.05;
pub const ENSTROPHY_DRIFT_TOL: f64 = 0.01;

fn check(name: &str, worst: Option<f64>, tolerance: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        pass: worst.is_none_or(|w| w <= tolerance),
        worst,
        tolerance,
        detail,
    }
}

fn max_opt(xs: impl Iterator<Item = f64>) -> Option<f64> {
    xs.fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
}

/// Evaluates every invariant over a run's stored outputs.
pub fn check_records(
    config: &SimConfig,
    records: &[DiagnosticsRecord],
    log: &ResetLog,
) -> Vec<CheckResult> {
    let n = config.copies;
    let nf = n as f64;
    let mut out = Vec::new();

    let bad = records
        .iter()
        .filter(|r| {
            let fin = [r.t, r.energy, r.s, r.rate_residual, r.gronwall_margin]
                .iter()
                .all(|v| v.is_finite());
            !(fin && r.energy >= 0.0 && r.enstrophies.iter().all(|e| e.is_finite() && *e >= 0.0))
        })
        .count();
    out.push(check(
        "records_finite",
        Some(bad as f64),
        0.0,
        format!(
            "{} rows, {bad} with non-finite or negative entries",
            records.len()
        ),
    ));

    let bound = contraction_bound(config.epsilon, n);
    out.push(check(
        "reset_contraction",
        max_opt(log.events.iter().map(|e| e.contraction - bound)),
        CONTRACTION_TOL,
        format!("{} resets; factor minus bound {bound}", log.events.len()),
    ));

    out.push(check(
        "reset_identity",
        max_opt(reset_identity_residuals(log, n).into_iter()),
        RESET_IDENTITY_TOL,
        "relative residual of |ω_m|² = mean G_ii / N + S / N²".into(),
    ));

    let times = group_by_step(records);
    let e0 = times.first().map_or(0.0, |g| {
        mean_stderr(&g.iter().map(|r| r.energy).collect::<Vec<_>>()).0
    });
    let gron = max_opt(times.iter().map(|g| {
        let (m, se) = mean_stderr(&g.iter().map(|r| r.gronwall_margin).collect::<Vec<_>>());
        m - 2.0 * se
    }));
    out.push(check(
        "gronwall_bound",
        gron.map(|g| g / e0.max(f64::MIN_POSITIVE)),
        GRONWALL_MARGIN,
        "replica-mean margin minus 2 SE, relative to initial energy".into(),
    ));

    // a single replica has no standard error to compare against
    let rate = max_opt(
        times
            .iter()
            .filter(|g| g[0].step > 0 && g.len() > 1)
            .map(|g| {
                let (m, se) = mean_stderr(&g.iter().map(|r| r.rate_residual).collect::<Vec<_>>());
                let dissipation = 2.0 * config.nu * g.iter().map(|r| r.s).sum::<f64>()
                    / (g.len() as f64 * nf * nf);
                let tol = 2.0 * se + 0.1 * dissipation.abs() + 1e-3 * e0;
                m.abs() / tol.max(f64::MIN_POSITIVE)
            }),
    );
    out.push(check(
        "energy_rate",
        rate,
        1.0,
        if config.replicas > 1 {
            "|mean residual| over (2 SE + 10% of dissipation + 1e-3 initial energy)".into()
        } else {
            "not evaluated: needs at least 2 replicas".into()
        },
    ));

    let drift = max_opt(records.iter().filter_map(|r| {
        let first = records
            .iter()
            .find(|q| q.replica == r.replica && q.m == r.m)?;
        let d = r
            .enstrophies
            .iter()
            .zip(&first.enstrophies)
            .map(|(a, b)| (a - b).abs() / b.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        Some(d)
    }));
    out.push(check(
        "enstrophy_conservation",
        drift,
        ENSTROPHY_DRIFT_TOL,
        "per-copy relative drift since the first record of each reset interval".into(),
    ));
    out
}

fn group_by_step(records: &[DiagnosticsRecord]) -> Vec<Vec<&DiagnosticsRecord>> {
    let mut groups: Vec<Vec<&DiagnosticsRecord>> = Vec::new();
    let mut sorted: Vec<&DiagnosticsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.step, r.replica));
    for r in sorted {
        match groups.last_mut() {
            Some(g) if g[0].step == r.step => g.push(r),
            _ => groups.push(vec![r]),
        }
    }
    groups
}

/// Checks a run directory and writes `summary.json` next to its outputs.
pub fn check_dir(dir: &Path) -> Result<Summary> {
    let manifest = RunManifest::read(dir)?;
    if manifest.kind != "run" {
        return Err(Error::config(
            "dir",
            "check expects a particle-system run directory",
        ));
    }
    let records = read_diagnostics(&dir.join(DIAGNOSTICS))?;
    let log = read_resets(&dir.join(RESETS))?;
    let checks = check_records(&manifest.config, &records, &log);
    let summary = Summary {
        config_hash: manifest.config_hash,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    };
    fs::write(dir.join(SUMMARY), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
