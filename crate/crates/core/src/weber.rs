//! Velocity reconstruction from back-to-labels maps.
//!
//! `weber_velocity` is the defining formula `u = P[(∇ᵀY)(u₀ ∘ Y)]`; in two
//! dimensions the same field is `∇^⊥Δ⁻¹(ω₀ ∘ Y)`, which `vorticity_velocity`
//! computes as an independent route.

use crate::error::{Error, Result};
use crate::flow::{jacobian_transpose, InverseMap};
use crate::torus::{biot_savart, leray_project, ScalarInterpolant, VectorField, VectorInterpolant};

/// `P[(∇ᵀY)(u₀ ∘ Y)]` with the mean mode pinned to zero.
pub fn weber_velocity(inv: &InverseMap, u0: &VectorInterpolant) -> VectorField {
    let grid = inv.grid();
    let labels = inv.label_points();
    let composed = u0.sample(grid, &labels);
    let mut w = jacobian_transpose(inv).apply(&composed);
    w.remove_mean();
    leray_project(&w)
}

/// `biot_savart(ω₀ ∘ Y)`.
pub fn vorticity_velocity(inv: &InverseMap, omega0: &ScalarInterpolant) -> VectorField {
    let grid = inv.grid();
    let mut w = omega0.sample(grid, &inv.label_points());
    w.remove_mean();
    biot_savart(&w)
}

/// Pointwise mean of the copies, summed in index order.
pub fn ensemble_mean(us: &[VectorField]) -> Result<VectorField> {
    let first = us
        .first()
        .ok_or(Error::config("copies", "ensemble must be non-empty"))?;
    let mut acc = VectorField::zeros(first.grid());
    for u in us {
        first.grid().check_same(u.grid())?;
        acc.axpy(1.0, u);
    }
    Ok(acc.scale(1.0 / us.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{init_flow, invert_map, FlowMap, InversionOptions};
    use crate::torus::{curl2d, divergence, Field, TorusGrid};

    fn taylor_green(g: &TorusGrid) -> VectorField {
        VectorField::from_fn(g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()])
    }

    fn shear(g: &TorusGrid) -> VectorField {
        VectorField::from_fn(g, |x, y| {
            [(2.0 * y).sin() + 0.3 * y.cos(), 0.5 * (x + 0.2).cos()]
        })
    }

    #[test]
    fn identity_returns_initial_field() {
        let g = TorusGrid::new(32).unwrap();
        let u0 = taylor_green(&g);
        let u = weber_velocity(&InverseMap::identity(&g), &VectorInterpolant::new(&u0));
        assert!(u.sub(&u0).max_abs() < 1e-12);
    }

    #[test]
    fn translation_shifts_field() {
        let g = TorusGrid::new(64).unwrap();
        let u0 = shear(&g);
        let c = [0.37, -0.81];
        let inv =
            InverseMap::from_displacement(VectorField::from_fn(&g, |_, _| [-c[0], -c[1]])).unwrap();
        let u = weber_velocity(&inv, &VectorInterpolant::new(&u0));
        let expected = VectorField::from_fn(&g, |x, y| {
            let (x, y) = (x - c[0], y - c[1]);
            [(2.0 * y).sin() + 0.3 * y.cos(), 0.5 * (x + 0.2).cos()]
        });
        // bicubic interpolation error at h = 2π/64
        assert!(
            u.sub(&expected).max_abs() < 1e-5,
            "{}",
            u.sub(&expected).max_abs()
        );
    }

    #[test]
    fn vorticity_route_examples() {
        let g = TorusGrid::new(32).unwrap();
        let w0 = curl2d(&taylor_green(&g));
        let id = InverseMap::identity(&g);
        let u = vorticity_velocity(&id, &ScalarInterpolant::new(&w0));
        assert!(u.sub(&taylor_green(&g)).max_abs() < 1e-12);
        let zero = vorticity_velocity(&id, &ScalarInterpolant::new(&w0.scale(0.0)));
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn routes_agree_on_smooth_map() {
        let g = TorusGrid::new(64).unwrap();
        let u0 = leray_project(&shear(&g));
        let map = FlowMap::from_displacement(VectorField::from_fn(&g, |x, y| {
            [0.08 * (y + 0.5).sin() + 0.2, 0.06 * (x - 0.1).sin() - 0.1]
        }))
        .unwrap();
        let inv = invert_map(&map, InversionOptions::default(), None).unwrap();
        let a = weber_velocity(&inv, &VectorInterpolant::new(&u0));
        let b = vorticity_velocity(&inv, &ScalarInterpolant::new(&curl2d(&u0)));
        // the map is not area-preserving, so the routes differ by det ∇Y;
        // they must still agree to the size of that defect
        let rel = a.sub(&b).norm() / a.norm();
        assert!(rel < 0.05, "rel {rel}");
        assert!(divergence(&a).max_abs() < 1e-10);
        assert!(divergence(&b).max_abs() < 1e-10);
    }

    #[test]
    fn mean_examples() {
        let g = TorusGrid::new(16).unwrap();
        let v = taylor_green(&g);
        let m = ensemble_mean(&[v.clone(), v.clone(), v.clone()]).unwrap();
        assert!(m.sub(&v).max_abs() < 1e-15);
        let z = ensemble_mean(&[v.clone(), v.scale(-1.0)]).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert_eq!(ensemble_mean(&[v.clone()]).unwrap(), v);
        assert!(ensemble_mean(&[]).is_err());
        let _ = init_flow(&g);
        assert!(m.inner(&m) > 0.0);
    }
}
