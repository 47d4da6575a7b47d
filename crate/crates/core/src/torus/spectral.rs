use rustfft::num_complex::Complex64;

use super::{ScalarField, TensorField, TorusGrid, VectorField};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Multiply a spectrum by a per-mode factor `f(i, j)`, `i` the ky index and
/// `j` the kx index.
fn apply_mode(
    grid: &TorusGrid,
    spec: &[Complex64],
    f: impl Fn(usize, usize) -> Complex64,
) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = Vec::with_capacity(spec.len());
    for i in 0..n {
        for j in 0..n {
            out.push(spec[i * n + j] * f(i, j));
        }
    }
    out
}

pub(crate) fn d_dx(grid: &TorusGrid, spec: &[Complex64]) -> Vec<Complex64> {
    apply_mode(grid, spec, |_, j| I * grid.deriv_wavenumber(j))
}

pub(crate) fn d_dy(grid: &TorusGrid, spec: &[Complex64]) -> Vec<Complex64> {
    apply_mode(grid, spec, |i, _| I * grid.deriv_wavenumber(i))
}

pub(crate) fn d_dxdy(grid: &TorusGrid, spec: &[Complex64]) -> Vec<Complex64> {
    apply_mode(grid, spec, |i, j| {
        Complex64::new(-grid.deriv_wavenumber(i) * grid.deriv_wavenumber(j), 0.0)
    })
}

/// Spectral gradient `(∂x f, ∂y f)`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid();
    let spec = grid.forward(f.values());
    let (gx, gy) = grid.inverse_pair(&d_dx(grid, &spec), &d_dy(grid, &spec));
    VectorField {
        x: ScalarField::from_raw(grid, gx),
        y: ScalarField::from_raw(grid, gy),
    }
}

/// Spectral Jacobian `T[a][b] = ∂_b v_a`; with `transpose` the result is
/// `∂_a v_b` instead.
pub fn jacobian(v: &VectorField, transpose: bool) -> TensorField {
    let grid = v.grid();
    let (sx, sy) = grid.forward_pair(v.x.values(), v.y.values());
    let (xx, xy) = grid.inverse_pair(&d_dx(grid, &sx), &d_dy(grid, &sx));
    let (yx, yy) = grid.inverse_pair(&d_dx(grid, &sy), &d_dy(grid, &sy));
    let t = TensorField {
        xx: ScalarField::from_raw(grid, xx),
        xy: ScalarField::from_raw(grid, xy),
        yx: ScalarField::from_raw(grid, yx),
        yy: ScalarField::from_raw(grid, yy),
    };
    if transpose {
        t.transpose()
    } else {
        t
    }
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let (sx, sy) = grid.forward_pair(v.x.values(), v.y.values());
    let dx = d_dx(grid, &sx);
    let dy = d_dy(grid, &sy);
    let sum = dx.iter().zip(&dy).map(|(a, b)| a + b).collect();
    ScalarField::from_raw(grid, grid.inverse_real(sum))
}

/// Scalar vorticity `∂x v_y − ∂y v_x`.
pub fn curl2d(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let (sx, sy) = grid.forward_pair(v.x.values(), v.y.values());
    ScalarField::from_raw(grid, grid.inverse_real(curl_spectrum(grid, &sx, &sy)))
}

pub(crate) fn curl_spectrum(
    grid: &TorusGrid,
    sx: &[Complex64],
    sy: &[Complex64],
) -> Vec<Complex64> {
    let dvy = d_dx(grid, sy);
    let dvx = d_dy(grid, sx);
    dvy.iter().zip(&dvx).map(|(a, b)| a - b).collect()
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let spec = grid.forward(f.values());
    let out = apply_mode(grid, &spec, |i, j| {
        let (ky, kx) = (grid.wavenumber(i), grid.wavenumber(j));
        Complex64::new(-(kx * kx + ky * ky), 0.0)
    });
    ScalarField::from_raw(grid, grid.inverse_real(out))
}

/// Leray-Hodge projection in spectral space, `û − k (k·û) / |k|²`.
/// The mean mode and the Nyquist row/column are zeroed.
pub(crate) fn project_spectrum(grid: &TorusGrid, sx: &mut [Complex64], sy: &mut [Complex64]) {
    let n = grid.n();
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if (i == 0 && j == 0) || grid.is_nyquist(i) || grid.is_nyquist(j) {
                sx[k] = Complex64::default();
                sy[k] = Complex64::default();
                continue;
            }
            let (ky, kx) = (grid.wavenumber(i), grid.wavenumber(j));
            let k2 = kx * kx + ky * ky;
            let dot = (sx[k] * kx + sy[k] * ky) / k2;
            sx[k] -= dot * kx;
            sy[k] -= dot * ky;
        }
    }
}

pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = v.grid();
    let (mut sx, mut sy) = grid.forward_pair(v.x.values(), v.y.values());
    project_spectrum(grid, &mut sx, &mut sy);
    let (x, y) = grid.inverse_pair(&sx, &sy);
    VectorField {
        x: ScalarField::from_raw(grid, x),
        y: ScalarField::from_raw(grid, y),
    }
}

/// Velocity spectrum `û = ∇^⊥ Δ^{-1} ω̂` with `∇^⊥ψ = (−∂y ψ, ∂x ψ)`.
pub(crate) fn biot_savart_spectrum(
    grid: &TorusGrid,
    w: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = grid.n();
    let mut ux = vec![Complex64::default(); n * n];
    let mut uy = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            if (i == 0 && j == 0) || grid.is_nyquist(i) || grid.is_nyquist(j) {
                continue;
            }
            let k = i * n + j;
            let (ky, kx) = (grid.wavenumber(i), grid.wavenumber(j));
            let psi = -w[k] / (kx * kx + ky * ky);
            ux[k] = -I * ky * psi;
            uy[k] = I * kx * psi;
        }
    }
    (ux, uy)
}

/// Divergence-free, mean-zero velocity whose vorticity is `ω`.
///
/// A non-zero mean of `ω` cannot be represented on the torus; it is
/// discarded with a warning.
pub fn biot_savart(omega: &ScalarField) -> VectorField {
    let grid = omega.grid();
    let mean = omega.mean();
    if mean.abs() > 1e-12 * omega.max_abs().max(1.0) {
        log::warn!("biot_savart: discarding non-zero vorticity mean {mean:e}");
    }
    let spec = grid.forward(omega.values());
    let (ux, uy) = biot_savart_spectrum(grid, &spec);
    let (x, y) = grid.inverse_pair(&ux, &uy);
    VectorField {
        x: ScalarField::from_raw(grid, x),
        y: ScalarField::from_raw(grid, y),
    }
}

/// Largest retained |k| per axis under the 2/3 rule.
pub(crate) fn dealias_cutoff(grid: &TorusGrid) -> f64 {
    (grid.n() / 3) as f64
}

pub(crate) fn dealias_spectrum(grid: &TorusGrid, spec: &mut [Complex64]) {
    let n = grid.n();
    let cut = dealias_cutoff(grid);
    for i in 0..n {
        for j in 0..n {
            if grid.wavenumber(i).abs() > cut || grid.wavenumber(j).abs() > cut {
                spec[i * n + j] = Complex64::default();
            }
        }
    }
}

/// 2/3-rule truncation of both components.
pub fn dealias(v: &VectorField) -> VectorField {
    let grid = v.grid();
    let (mut sx, mut sy) = grid.forward_pair(v.x.values(), v.y.values());
    dealias_spectrum(grid, &mut sx);
    dealias_spectrum(grid, &mut sy);
    let (x, y) = grid.inverse_pair(&sx, &sy);
    VectorField {
        x: ScalarField::from_raw(grid, x),
        y: ScalarField::from_raw(grid, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{inner_product, Field};
    use proptest::prelude::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    fn max_err(a: &ScalarField, f: impl Fn(f64, f64) -> f64) -> f64 {
        a.grid()
            .nodes()
            .zip(a.values())
            .fold(0.0, |m, ([x, y], v)| m.max((v - f(x, y)).abs()))
    }

    fn vmax_err(a: &VectorField, f: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
        max_err(&a.x, |x, y| f(x, y)[0]).max(max_err(&a.y, |x, y| f(x, y)[1]))
    }

    /// Random trigonometric polynomial with modes |k| ≤ kmax per axis.
    fn band_limited(g: &TorusGrid, coeffs: &[(i32, i32, f64, f64)]) -> ScalarField {
        ScalarField::from_fn(g, |x, y| {
            coeffs
                .iter()
                .map(|&(kx, ky, a, p)| a * (kx as f64 * x + ky as f64 * y + p).cos())
                .sum()
        })
    }

    fn coeff_strategy(kmax: i32) -> impl Strategy<Value = Vec<(i32, i32, f64, f64)>> {
        prop::collection::vec(
            (-kmax..=kmax, -kmax..=kmax, -1.0..1.0f64, 0.0..6.28f64),
            1..12,
        )
    }

    #[test]
    fn gradient_examples() {
        let g = grid(32);
        let d = gradient(&ScalarField::from_fn(&g, |x, _| x.sin()));
        assert!(vmax_err(&d, |x, _| [x.cos(), 0.0]) < 1e-12);
        let d = gradient(&ScalarField::constant(&g, 3.5));
        assert!(d.max_abs() < 1e-12);
        let d = gradient(&ScalarField::from_fn(&g, |x, y| x.sin() * y.sin()));
        assert!(vmax_err(&d, |x, y| [x.cos() * y.sin(), x.sin() * y.cos()]) < 1e-12);
    }

    #[test]
    fn jacobian_examples() {
        let g = grid(32);
        let t = jacobian(&VectorField::from_fn(&g, |x, _| [x.sin(), 0.0]), false);
        assert!(max_err(&t.xx, |x, _| x.cos()) < 1e-12);
        assert!(t.xy.max_abs() < 1e-12 && t.yx.max_abs() < 1e-12 && t.yy.max_abs() < 1e-12);
        assert!(jacobian(&VectorField::zeros(&g), false).max_abs() < 1e-15);
        let t = jacobian(&VectorField::from_fn(&g, |x, y| [y.sin(), x.sin()]), false);
        assert!(max_err(&t.xy, |_, y| y.cos()) < 1e-12);
        assert!(max_err(&t.yx, |x, _| x.cos()) < 1e-12);
        assert!(t.xx.max_abs() < 1e-12 && t.yy.max_abs() < 1e-12);
        let tt = jacobian(&VectorField::from_fn(&g, |_, y| [y.sin(), 0.0]), true);
        assert!(max_err(&tt.yx, |_, y| y.cos()) < 1e-12);
        assert!(tt.xy.max_abs() < 1e-12);
    }

    #[test]
    fn leray_examples() {
        let g = grid(32);
        let grad = gradient(&ScalarField::from_fn(&g, |x, y| x.sin() * y.sin()));
        assert!(leray_project(&grad).max_abs() < 1e-12);
        let tg = VectorField::from_fn(&g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]);
        assert!(leray_project(&tg).sub(&tg).max_abs() < 1e-12);
        let v = VectorField::from_fn(&g, |x, y| [x.sin() + y.sin(), 0.0]);
        assert!(vmax_err(&leray_project(&v), |_, y| [y.sin(), 0.0]) < 1e-12);
    }

    #[test]
    fn curl_examples() {
        let g = grid(32);
        let tg = VectorField::from_fn(&g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]);
        assert!(max_err(&curl2d(&tg), |x, y| 2.0 * x.sin() * y.sin()) < 1e-12);
        let grad = gradient(&ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).cos()));
        assert!(curl2d(&grad).max_abs() < 1e-12);
        let v = VectorField::from_fn(&g, |x, _| [0.0, x.sin()]);
        assert!(max_err(&curl2d(&v), |x, _| x.cos()) < 1e-12);
    }

    #[test]
    fn biot_savart_examples() {
        let g = grid(32);
        assert!(biot_savart(&ScalarField::zeros(&g)).max_abs() == 0.0);
        let w = ScalarField::from_fn(&g, |x, y| 2.0 * x.sin() * y.sin());
        let u = biot_savart(&w);
        assert!(vmax_err(&u, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]) < 1e-12);
        let u = biot_savart(&ScalarField::from_fn(&g, |x, _| x.cos()));
        assert!(vmax_err(&u, |x, _| [0.0, x.sin()]) < 1e-12);
    }

    #[test]
    fn biot_savart_drops_mean() {
        let g = grid(16);
        let u = biot_savart(&ScalarField::constant(&g, 1.0));
        assert!(u.max_abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_centered_differences() {
        // second-order convergence of the FD stencil against the spectral value
        let f = |x: f64, y: f64| (x + y.cos()).sin() * (2.0 * y).cos();
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let g = grid(n);
            let h = g.h();
            let d = gradient(&ScalarField::from_fn(&g, f));
            let fd = ScalarField::from_fn(&g, |x, y| (f(x + h, y) - f(x - h, y)) / (2.0 * h));
            errs.push(d.x.sub(&fd).max_abs());
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn gram_via_vorticity_matches_frobenius() {
        let g = grid(32);
        let u = leray_project(&VectorField::from_fn(&g, |x, y| {
            [(x + 2.0 * y).sin() + y.cos(), (3.0 * x - y).cos()]
        }));
        let v = leray_project(&VectorField::from_fn(&g, |x, y| {
            [(2.0 * x).sin() * y.cos(), x.cos()]
        }));
        let frob = inner_product(&jacobian(&u, false), &jacobian(&v, false));
        let vort = curl2d(&u).inner(&curl2d(&v));
        assert!((frob - vort).abs() < 1e-10 * frob.abs().max(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn leray_idempotent_and_divergence_free(cx in coeff_strategy(20), cy in coeff_strategy(20)) {
            let g = grid(64);
            let v = VectorField::new(band_limited(&g, &cx), band_limited(&g, &cy)).unwrap();
            let p = leray_project(&v);
            let pp = leray_project(&p);
            prop_assert!(pp.sub(&p).max_abs() <= 1e-12);
            let div = divergence(&p);
            prop_assert!(div.inner(&div).sqrt() <= 1e-10);
            prop_assert!(p.x.mean().abs() < 1e-14 && p.y.mean().abs() < 1e-14);
        }

        #[test]
        fn curl_inverts_biot_savart(c in coeff_strategy(20)) {
            let g = grid(64);
            let mut w = band_limited(&g, &c);
            w.remove_mean();
            let u = biot_savart(&w);
            prop_assert!(curl2d(&u).sub(&w).max_abs() <= 1e-10);
            prop_assert!(divergence(&u).max_abs() <= 1e-10);
        }
    }
}
