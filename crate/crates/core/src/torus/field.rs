use crate::error::{Error, Result};

use super::TorusGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

/// 2×2 matrix per node, `T[a][b]` stored as `xx, xy, yx, yy`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yx: ScalarField,
    pub yy: ScalarField,
}

impl ScalarField {
    pub fn zeros(grid: &TorusGrid) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.nodes().map(|[x, y]| f(x, y)).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.n(),
                found: (values.len() as f64).sqrt() as usize,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    /// Wraps samples without the finiteness scan; callers own the invariant.
    pub(crate) fn from_raw(grid: &TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ScalarField::from_raw(&self.grid, values)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (v, w) in self.values.iter_mut().zip(&other.values) {
            *v += a * w;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.grid.check_same(&y.grid)?;
        Ok(VectorField { x, y })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        VectorField {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid
            .nodes()
            .map(|[x, y]| {
                let v = f(x, y);
                (v[0], v[1])
            })
            .unzip();
        VectorField {
            x: ScalarField::from_raw(grid, xs),
            y: ScalarField::from_raw(grid, ys),
        }
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        self.x.grid()
    }

    #[inline]
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.x.values[k], self.y.values[k]]
    }

    pub fn components(&self) -> [&ScalarField; 2] {
        [&self.x, &self.y]
    }

    pub fn scale(&self, s: f64) -> Self {
        VectorField {
            x: self.x.scale(s),
            y: self.y.scale(s),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.x.axpy(a, &other.x);
        self.y.axpy(a, &other.y);
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        VectorField {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        VectorField {
            x: self.x.add(&other.x),
            y: self.y.add(&other.y),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn remove_mean(&mut self) {
        self.x.remove_mean();
        self.y.remove_mean();
    }

    /// L² norm `sqrt(⟨v, v⟩)`.
    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

impl TensorField {
    pub fn identity(grid: &TorusGrid) -> Self {
        TensorField {
            xx: ScalarField::constant(grid, 1.0),
            xy: ScalarField::zeros(grid),
            yx: ScalarField::zeros(grid),
            yy: ScalarField::constant(grid, 1.0),
        }
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        self.xx.grid()
    }

    #[inline]
    pub fn at(&self, k: usize) -> [[f64; 2]; 2] {
        [
            [self.xx.values[k], self.xy.values[k]],
            [self.yx.values[k], self.yy.values[k]],
        ]
    }

    pub fn transpose(self) -> Self {
        TensorField {
            xx: self.xx,
            xy: self.yx,
            yx: self.xy,
            yy: self.yy,
        }
    }

    /// Pointwise determinant.
    pub fn det(&self) -> ScalarField {
        let values = (0..self.grid().len())
            .map(|k| {
                let m = self.at(k);
                m[0][0] * m[1][1] - m[0][1] * m[1][0]
            })
            .collect();
        ScalarField::from_raw(self.grid(), values)
    }

    /// Pointwise matrix-vector product `T v`.
    pub fn apply(&self, v: &VectorField) -> VectorField {
        let grid = self.grid();
        let (xs, ys) = (0..grid.len())
            .map(|k| {
                let m = self.at(k);
                let w = v.at(k);
                (
                    m[0][0] * w[0] + m[0][1] * w[1],
                    m[1][0] * w[0] + m[1][1] * w[1],
                )
            })
            .unzip();
        VectorField {
            x: ScalarField::from_raw(grid, xs),
            y: ScalarField::from_raw(grid, ys),
        }
    }

    pub fn max_abs(&self) -> f64 {
        [&self.xx, &self.xy, &self.yx, &self.yy]
            .iter()
            .fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

/// L² inner product on the torus, evaluated by the trapezoid rule
/// `h² Σ a·b` (exact for trigonometric polynomials below the Nyquist limit).
pub trait Field {
    fn inner(&self, other: &Self) -> f64;
}

impl Field for ScalarField {
    fn inner(&self, other: &Self) -> f64 {
        let h = self.grid.h();
        h * h
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

impl Field for VectorField {
    fn inner(&self, other: &Self) -> f64 {
        self.x.inner(&other.x) + self.y.inner(&other.y)
    }
}

impl Field for TensorField {
    fn inner(&self, other: &Self) -> f64 {
        self.xx.inner(&other.xx)
            + self.xy.inner(&other.xy)
            + self.yx.inner(&other.yx)
            + self.yy.inner(&other.yy)
    }
}

/// `⟨a, b⟩` for any field kind (Frobenius for tensors).
pub fn inner_product<F: Field>(a: &F, b: &F) -> f64 {
    a.inner(b)
}
