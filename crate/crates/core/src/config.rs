//! Run configuration: TOML file with sections, flag overrides, validation.
//!
//! ```toml
//! seed = 3
//!
//! [grid]
//! n = 64
//!
//! [ensemble]
//! copies = 16        # N
//! replicas = 1       # M, outer replicas for expectation estimates
//! epsilon = 0.5
//! check_every = 1
//!
//! [physics]
//! nu = 0.05
//!
//! [time]
//! dt = 0.01
//! t_final = 1.0
//!
//! [output]
//! record_every = 1
//! snapshot_every = 0  # 0: snapshots only at resets
//! checkpoint_every = 0
//!
//! [solver]
//! newton_tol = 1e-10
//! newton_max_iter = 50
//!
//! [initial]
//! kind = "taylor-green"   # or "random"
//! amplitude = 1.0
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::InversionOptions;
use crate::torus::{leray_project, Field, ScalarField, TorusGrid, VectorField, TWO_PI};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `A (sin x cos y, −cos x sin y)`.
    TaylorGreen { amplitude: f64 },
    /// Random divergence-free field with shell spectrum `|k|^slope` on
    /// `k_min ≤ |k| ≤ k_max`, rescaled to the given `‖u‖₂²`.
    Random {
        k_min: f64,
        k_max: f64,
        slope: f64,
        energy: f64,
        seed: u64,
    },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::TaylorGreen { amplitude: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Number of copies N.
    pub copies: usize,
    pub nu: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Steps between evaluations of the reset criterion.
    pub check_every: u64,
    /// Outer replicas M of the whole N-copy system.
    pub replicas: usize,
    pub record_every: u64,
    pub snapshot_every: u64,
    pub checkpoint_every: u64,
    pub inversion: InversionOptions,
    pub initial: InitialData,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 64,
            copies: 16,
            nu: 0.05,
            epsilon: 0.5,
            dt: 0.01,
            t_final: 1.0,
            seed: 0,
            check_every: 1,
            replicas: 1,
            record_every: 1,
            snapshot_every: 0,
            checkpoint_every: 0,
            inversion: InversionOptions::default(),
            initial: InitialData::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::config("n", "n must be a power of two"));
        }
        if self.copies == 0 {
            return Err(Error::config("copies", "copies must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::config("replicas", "replicas must be at least 1"));
        }
        // ν = 0 is the Euler case and is allowed
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::config("nu", "nu must be finite and non-negative"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon", "epsilon must lie in (0,1)"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt", "dt must be positive"));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::config("t_final", "t_final must be non-negative"));
        }
        if self.check_every == 0 {
            return Err(Error::config(
                "check_every",
                "check_every must be at least 1",
            ));
        }
        if self.record_every == 0 {
            return Err(Error::config(
                "record_every",
                "record_every must be at least 1",
            ));
        }
        if !(self.inversion.tol > 0.0) || self.inversion.max_iter == 0 {
            return Err(Error::config(
                "solver",
                "newton_tol must be positive and newton_max_iter at least 1",
            ));
        }
        match self.initial {
            InitialData::TaylorGreen { amplitude } if !amplitude.is_finite() => Err(Error::config(
                "initial.amplitude",
                "amplitude must be finite",
            )),
            InitialData::Random {
                k_min,
                k_max,
                energy,
                ..
            } if !(k_min >= 1.0
                && k_max >= k_min
                && k_max < (self.n / 3) as f64
                && energy > 0.0) =>
            {
                Err(Error::config(
                    "initial",
                    "random data needs 1 <= k_min <= k_max < n/3 and energy > 0",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Number of time steps to reach `t_final`.
    pub fn steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.n)
    }
}

impl SimConfig {
    /// Sets one scalar parameter by name from its text form (used by sweeps).
    pub fn set_field(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "copies" => self.copies = parse(key, value)?,
            "replicas" => self.replicas = parse(key, value)?,
            "nu" => self.nu = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "t_final" | "t-final" => self.t_final = parse(key, value)?,
            "check_every" | "check-every" => self.check_every = parse(key, value)?,
            "record_every" | "record-every" => self.record_every = parse(key, value)?,
            _ => return Err(Error::config(key, "not a sweepable parameter")),
        }
        Ok(())
    }
}

/// Values given on the command line; each beats the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub copies: Option<usize>,
    pub nu: Option<f64>,
    pub epsilon: Option<f64>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub replicas: Option<usize>,
    pub check_every: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    ensemble: EnsembleSection,
    #[serde(default)]
    physics: PhysicsSection,
    #[serde(default)]
    time: TimeSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    solver: SolverSection,
    initial: Option<InitialSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSection {
    copies: Option<usize>,
    replicas: Option<usize>,
    epsilon: Option<f64>,
    check_every: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    nu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    dt: Option<f64>,
    t_final: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    record_every: Option<u64>,
    snapshot_every: Option<u64>,
    checkpoint_every: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    kind: String,
    amplitude: Option<f64>,
    k_min: Option<f64>,
    k_max: Option<f64>,
    slope: Option<f64>,
    energy: Option<f64>,
    seed: Option<u64>,
}

impl ConfigFile {
    fn apply(self, cfg: &mut SimConfig) -> Result<()> {
        macro_rules! set {
            ($($src:expr => $dst:expr),* $(,)?) => {
                $(if let Some(v) = $src { $dst = v; })*
            };
        }
        set! {
            self.seed => cfg.seed,
            self.grid.n => cfg.n,
            self.ensemble.copies => cfg.copies,
            self.ensemble.replicas => cfg.replicas,
            self.ensemble.epsilon => cfg.epsilon,
            self.ensemble.check_every => cfg.check_every,
            self.physics.nu => cfg.nu,
            self.time.dt => cfg.dt,
            self.time.t_final => cfg.t_final,
            self.output.record_every => cfg.record_every,
            self.output.snapshot_every => cfg.snapshot_every,
            self.output.checkpoint_every => cfg.checkpoint_every,
            self.solver.newton_tol => cfg.inversion.tol,
            self.solver.newton_max_iter => cfg.inversion.max_iter,
        }
        if let Some(init) = self.initial {
            cfg.initial = match init.kind.as_str() {
                "taylor-green" => InitialData::TaylorGreen {
                    amplitude: init.amplitude.unwrap_or(1.0),
                },
                "random" => InitialData::Random {
                    k_min: init.k_min.unwrap_or(1.0),
                    k_max: init.k_max.unwrap_or(4.0),
                    slope: init.slope.unwrap_or(-1.0),
                    energy: init.energy.unwrap_or(1.0),
                    seed: init.seed.unwrap_or(0),
                },
                other => {
                    return Err(Error::config(
                        "initial.kind",
                        format!("unknown kind {other:?} (expected \"taylor-green\" or \"random\")"),
                    ))
                }
            };
        }
        Ok(())
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut SimConfig) {
        macro_rules! set {
            ($($f:ident),*) => {
                $(if let Some(v) = self.$f { cfg.$f = v; })*
            };
        }
        set!(
            seed,
            n,
            copies,
            nu,
            epsilon,
            dt,
            t_final,
            replicas,
            check_every
        );
    }
}

/// Parses TOML config text (defaults fill missing keys), then applies
/// overrides and validates.
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<SimConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
    let mut cfg = SimConfig::default();
    file.apply(&mut cfg)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a config from a `.toml` file, or from the `config` entry of a run
/// manifest (`.json`); with no path, starts from defaults.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<SimConfig> {
    let Some(path) = path else {
        return parse_config_str("", overrides);
    };
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let inner = value.get("config").cloned().unwrap_or(value);
        let mut cfg: SimConfig = serde_json::from_value(inner)?;
        overrides.apply(&mut cfg);
        cfg.validate()?;
        return Ok(cfg);
    }
    parse_config_str(&text, overrides)
}

/// Builds the initial velocity on `grid`; always divergence-free and
/// mean-zero.
pub fn initial_velocity(grid: &TorusGrid, data: &InitialData) -> VectorField {
    match *data {
        InitialData::TaylorGreen { amplitude } => VectorField::from_fn(grid, |x, y| {
            [
                amplitude * x.sin() * y.cos(),
                -amplitude * x.cos() * y.sin(),
            ]
        }),
        InitialData::Random {
            k_min,
            k_max,
            slope,
            energy,
            seed,
        } => random_field(grid, k_min, k_max, slope, energy, seed),
    }
}

fn random_field(
    grid: &TorusGrid,
    k_min: f64,
    k_max: f64,
    slope: f64,
    energy: f64,
    seed: u64,
) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let kmax = k_max.floor() as i32;
    // streamfunction as a sum of cosines over a half-plane of modes
    let mut modes = Vec::new();
    for ky in 0..=kmax {
        for kx in -kmax..=kmax {
            if ky == 0 && kx <= 0 {
                continue;
            }
            let k = ((kx * kx + ky * ky) as f64).sqrt();
            if k < k_min || k > k_max {
                continue;
            }
            // velocity amplitude ~ k^slope, so ψ amplitude ~ k^(slope-1)
            let amp = k.powf(slope - 1.0) * (0.5 + unit());
            let phase = TWO_PI * unit();
            modes.push((kx as f64, ky as f64, amp, phase));
        }
    }
    let psi = ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, a, p)| a * (kx * x + ky * y + p).cos())
            .sum()
    });
    let g = crate::torus::gradient(&psi);
    let u = leray_project(&VectorField {
        x: g.y.scale(-1.0),
        y: g.x,
    });
    let e = u.inner(&u);
    if e > 0.0 {
        u.scale((energy / e).sqrt())
    } else {
        u
    }
}
