//! Stochastic flow maps `X = id + λ`, their Euler–Maruyama update, Brownian
//! drivers, and the back-to-labels maps `Y = X⁻¹`.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{
    jacobian, periodic_diff, ScalarField, TensorField, TorusGrid, VectorField, VectorInterpolant,
    TWO_PI,
};

/// Forward map `X(x) = x + λ(x)` with periodic displacement `λ`.
#[derive(Clone, Debug)]
pub struct FlowMap {
    disp: VectorField,
    interp: VectorInterpolant,
}

/// Back-to-labels map `Y(x) = x + μ(x)`.
#[derive(Clone, Debug)]
pub struct InverseMap {
    disp: VectorField,
}

impl FlowMap {
    pub fn from_displacement(disp: VectorField) -> Result<Self> {
        if !disp.is_finite() {
            return Err(Error::NonFinite("flow displacement"));
        }
        let interp = VectorInterpolant::new(&disp);
        Ok(FlowMap { disp, interp })
    }

    pub fn displacement(&self) -> &VectorField {
        &self.disp
    }

    pub fn grid(&self) -> &TorusGrid {
        self.disp.grid()
    }

    /// `X(p)` for an arbitrary point, using the interpolated displacement.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let l = self.interp.eval(p);
        [p[0] + l[0], p[1] + l[1]]
    }

    /// `det ∇X` at every node, from the spectral derivatives of `λ`.
    pub fn jacobian_det(&self) -> ScalarField {
        let grid = self.grid();
        let values = (0..grid.len())
            .map(|k| {
                let gx = self.interp.x.node_grad(k);
                let gy = self.interp.y.node_grad(k);
                (1.0 + gx[0]) * (1.0 + gy[1]) - gx[1] * gy[0]
            })
            .collect();
        ScalarField::from_values(grid, values).expect("finite displacement")
    }

    fn check_bijective(&self) -> Result<()> {
        let det = self.jacobian_det();
        match det.values().iter().enumerate().find(|(_, d)| **d <= 0.0) {
            Some((node, &det)) => Err(Error::BijectivityLost { node, det }),
            None => Ok(()),
        }
    }
}

/// Identity flow, `λ = 0`.
pub fn init_flow(grid: &TorusGrid) -> FlowMap {
    FlowMap::from_displacement(VectorField::zeros(grid)).expect("zero field is finite")
}

impl InverseMap {
    pub fn identity(grid: &TorusGrid) -> Self {
        InverseMap {
            disp: VectorField::zeros(grid),
        }
    }

    pub fn from_displacement(disp: VectorField) -> Result<Self> {
        if !disp.is_finite() {
            return Err(Error::NonFinite("inverse displacement"));
        }
        Ok(InverseMap { disp })
    }

    pub fn displacement(&self) -> &VectorField {
        &self.disp
    }

    pub fn grid(&self) -> &TorusGrid {
        self.disp.grid()
    }

    /// Label positions `Y(x_k)` at every node (not wrapped).
    pub fn label_points(&self) -> Vec<[f64; 2]> {
        let grid = self.grid();
        (0..grid.len())
            .map(|k| {
                let x = grid.node(k);
                let m = self.disp.at(k);
                [x[0] + m[0], x[1] + m[1]]
            })
            .collect()
    }
}

/// Per-copy Brownian driver.
///
/// Increments come from a counter-based stream: the draw for step `s` of copy
/// `c` in replica `r` depends only on `(seed, r, c, s)`, so copies can be
/// advanced in any order or on any thread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianState {
    pub seed: u64,
    pub replica: u32,
    pub copy: u32,
    /// Number of increments drawn so far (the stream position).
    pub step: u64,
    /// Accumulated `B_t`.
    pub b: [f64; 2],
}

impl BrownianState {
    pub fn new(seed: u64, replica: u32, copy: u32) -> Self {
        BrownianState {
            seed,
            replica,
            copy,
            step: 0,
            b: [0.0; 2],
        }
    }

    /// Draws `ΔB ~ N(0, dt I₂)` for the current step and advances the stream.
    pub fn sample_increment(&mut self, dt: f64) -> [f64; 2] {
        debug_assert!(dt > 0.0);
        let z = standard_normal_pair(self.seed, self.stream_id(), self.step);
        let s = dt.sqrt();
        let db = [z[0] * s, z[1] * s];
        self.step += 1;
        self.b[0] += db[0];
        self.b[1] += db[1];
        db
    }

    fn stream_id(&self) -> u64 {
        ((self.replica as u64) << 32) | self.copy as u64
    }
}

/// Two independent standard normals at position `counter` of a ChaCha8
/// stream, by Box–Muller on exactly two 64-bit words.
pub fn standard_normal_pair(seed: u64, stream: u64, counter: u64) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // each draw consumes two u64 = four 32-bit words
    rng.set_word_pos(counter as u128 * 4);
    let to_open_unit = |w: u64| ((w >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
    let u1 = to_open_unit(rng.next_u64());
    let u2 = to_open_unit(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = TWO_PI * u2;
    [r * theta.cos(), r * theta.sin()]
}

/// One Euler–Maruyama step `X ← X + u(X) dt + √(2ν) ΔB` at every node.
///
/// `drift` is the (frozen) velocity interpolant. Fails with
/// [`Error::BijectivityLost`] if the updated map folds.
pub fn em_step(
    map: &FlowMap,
    drift: &VectorInterpolant,
    dt: f64,
    db: [f64; 2],
    nu: f64,
) -> Result<FlowMap> {
    let grid = map.grid();
    let noise = (2.0 * nu).sqrt();
    let shift = [noise * db[0], noise * db[1]];
    let (lx, ly): (Vec<f64>, Vec<f64>) = (0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            let l = map.disp.at(k);
            let u = drift.eval([x[0] + l[0], x[1] + l[1]]);
            (l[0] + u[0] * dt + shift[0], l[1] + u[1] * dt + shift[1])
        })
        .unzip();
    let disp = VectorField::new(
        ScalarField::from_values(grid, lx)?,
        ScalarField::from_values(grid, ly)?,
    )?;
    let next = FlowMap::from_displacement(disp)?;
    next.check_bijective()?;
    Ok(next)
}

/// Newton settings for [`invert_map`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

const DAMPED_ITERATIONS: usize = 20;

/// Solves `X(y) = x` at every node by Newton's method on the interpolated map.
///
/// The initial guess is `x − λ(x)`, or `guess(x)` when a nearby inverse (for
/// instance the previous step's) is supplied. Undamped iterations are followed,
/// if needed, by up to 20 backtracking iterations. A node that fails is retried
/// from `x − λ(x)` and then from the node whose image lies closest to `x`.
/// The root is taken on the periodic branch nearest the first guess, which
/// keeps `μ` continuous.
pub fn invert_map(
    map: &FlowMap,
    opts: InversionOptions,
    guess: Option<&InverseMap>,
) -> Result<InverseMap> {
    let grid = map.grid();
    let mut mx = Vec::with_capacity(grid.len());
    let mut my = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = grid.node(k);
        let l = map.disp.at(k);
        let plain = [x[0] - l[0], x[1] - l[1]];
        let y0 = match guess {
            Some(g) => {
                let m = g.disp.at(k);
                [x[0] + m[0], x[1] + m[1]]
            }
            None => plain,
        };
        let mut solved = newton_solve(map, x, y0, opts);
        if solved.is_err() && guess.is_some() {
            solved = newton_solve(map, x, plain, opts);
        }
        if solved.is_err() {
            solved = newton_solve(map, x, nearest_preimage(map, x), opts);
        }
        let y = solved.map_err(|residual| Error::NoConvergence { node: k, residual })?;
        let y = [
            y0[0] + periodic_diff(y[0], y0[0]),
            y0[1] + periodic_diff(y[1], y0[1]),
        ];
        mx.push(y[0] - x[0]);
        my.push(y[1] - x[1]);
    }
    InverseMap::from_displacement(VectorField::new(
        ScalarField::from_values(grid, mx)?,
        ScalarField::from_values(grid, my)?,
    )?)
}

/// Node `y_k` minimizing the periodic distance from `X(y_k)` to `x`.
fn nearest_preimage(map: &FlowMap, x: [f64; 2]) -> [f64; 2] {
    let grid = map.grid();
    let mut best = (f64::INFINITY, [0.0; 2]);
    for k in 0..grid.len() {
        let y = grid.node(k);
        let l = map.disp.at(k);
        let d = periodic_diff(y[0] + l[0], x[0]).hypot(periodic_diff(y[1] + l[1], x[1]));
        if d < best.0 {
            best = (d, y);
        }
    }
    best.1
}

fn newton_solve(
    map: &FlowMap,
    target: [f64; 2],
    mut y: [f64; 2],
    opts: InversionOptions,
) -> std::result::Result<[f64; 2], f64> {
    let eval = |y: [f64; 2]| {
        let (l, j) = map.interp.eval_jacobian(y);
        let g = [
            periodic_diff(y[0] + l[0], target[0]),
            periodic_diff(y[1] + l[1], target[1]),
        ];
        let jac = [[1.0 + j[0][0], j[0][1]], [j[1][0], 1.0 + j[1][1]]];
        (g, jac)
    };
    let norm = |g: [f64; 2]| g[0].abs().max(g[1].abs());
    let newton_dir = |g: [f64; 2], m: [[f64; 2]; 2]| {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            -(m[1][1] * g[0] - m[0][1] * g[1]) / det,
            -(-m[1][0] * g[0] + m[0][0] * g[1]) / det,
        ]
    };
    let finite = |d: [f64; 2]| d[0].is_finite() && d[1].is_finite();

    let (mut g, mut jac) = eval(y);
    for _ in 0..opts.max_iter {
        if norm(g) <= opts.tol {
            return Ok(y);
        }
        let d = newton_dir(g, jac);
        // a step longer than half the period is not trusted
        if !finite(d) || d[0].abs().max(d[1].abs()) > PI {
            break;
        }
        let trial = [y[0] + d[0], y[1] + d[1]];
        let (gt, jt) = eval(trial);
        if norm(gt) >= norm(g) {
            break;
        }
        (y, g, jac) = (trial, gt, jt);
    }
    for _ in 0..DAMPED_ITERATIONS {
        if norm(g) <= opts.tol {
            return Ok(y);
        }
        let d = newton_dir(g, jac);
        if !finite(d) {
            break;
        }
        let r0 = norm(g);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = [y[0] + alpha * d[0], y[1] + alpha * d[1]];
            let (gt, jt) = eval(trial);
            if norm(gt) < r0 {
                (y, g, jac) = (trial, gt, jt);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(g) <= opts.tol {
        Ok(y)
    } else {
        Err(norm(g))
    }
}

/// `∇ᵀY = I + (∇μ)ᵀ`, spectrally.
pub fn jacobian_transpose(inv: &InverseMap) -> TensorField {
    let mut t = jacobian(&inv.disp, true);
    t.xx.values_mut().iter_mut().for_each(|v| *v += 1.0);
    t.yy.values_mut().iter_mut().for_each(|v| *v += 1.0);
    t
}

/// `max_k |X(Y(x_k)) − x_k|`, periodic distance.
pub fn forward_residual(map: &FlowMap, inv: &InverseMap) -> f64 {
    let grid = map.grid();
    inv.label_points()
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let x = grid.node(k);
            let xy = map.apply(y);
            crate::torus::periodic_diff(xy[0], x[0])
                .abs()
                .max(crate::torus::periodic_diff(xy[1], x[1]).abs())
        })
        .fold(0.0, f64::max)
}

/// `max_k |Y(X(x_k)) − x_k|`, with `Y` interpolated from its nodal values.
pub fn reverse_residual(map: &FlowMap, inv: &InverseMap) -> f64 {
    let grid = map.grid();
    let mu = VectorInterpolant::new(&inv.disp);
    (0..grid.len())
        .map(|k| {
            let x = grid.node(k);
            let l = map.disp.at(k);
            let xp = [x[0] + l[0], x[1] + l[1]];
            let m = mu.eval(xp);
            crate::torus::periodic_diff(xp[0] + m[0], x[0])
                .abs()
                .max(crate::torus::periodic_diff(xp[1] + m[1], x[1]).abs())
        })
        .fold(0.0, f64::max)
}
