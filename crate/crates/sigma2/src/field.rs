//! Scalar, tangent-vector, and tangent-tensor fields on the grid.
//!
//! A [`ScalarField`] always carries both representations: spectral
//! coefficients over the orthonormal basis and the synthesized nodal values.
//! Constructing one from nodal data projects onto the degree-`l_max` space,
//! so a field's nodal cache is by definition alias-free. Vector and tensor
//! fields are nodal-only bundles of ambient components, kept tangential
//! (`v . x = 0`, `A x = 0`) by the operators that produce them.

use std::sync::Arc;

use crate::grid::SphereGrid;
use crate::util::VOL_S4;

/// Index of the symmetric pair `(i, j)`, `i <= j`, in a 15-slot layout.
#[inline]
pub fn sym_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < 5);
    i * 5 + j - i * (i + 1) / 2
}

#[derive(Clone)]
pub struct ScalarField {
    pub grid: Arc<SphereGrid>,
    pub coeffs: Vec<f64>,
    pub nodal: Vec<f64>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("l_max", &self.grid.l_max)
            .field("norm_l2", &self.norm_l2())
            .finish()
    }
}

impl ScalarField {
    pub fn from_coeffs(grid: Arc<SphereGrid>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), grid.n_basis);
        let nodal = grid.synthesize(&coeffs);
        ScalarField { grid, coeffs, nodal }
    }

    /// Quadrature projection of nodal data onto the basis. The stored nodal
    /// values are re-synthesized, so they carry no unresolved components.
    pub fn project(grid: Arc<SphereGrid>, nodal: &[f64]) -> Self {
        let coeffs = grid.analyze(nodal);
        Self::from_coeffs(grid, coeffs)
    }

    /// Project the pointwise values of a function.
    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(&[f64; 5]) -> f64) -> Self {
        let nodal: Vec<f64> = grid.nodes_x.iter().map(f).collect();
        Self::project(grid, &nodal)
    }

    pub fn zeros(grid: Arc<SphereGrid>) -> Self {
        let coeffs = vec![0.0; grid.n_basis];
        let nodal = vec![0.0; grid.n_nodes()];
        ScalarField { grid, coeffs, nodal }
    }

    pub fn constant(grid: Arc<SphereGrid>, c: f64) -> Self {
        let mut coeffs = vec![0.0; grid.n_basis];
        // The constant basis function is 1/sqrt(|S^4|).
        coeffs[0] = c * VOL_S4.sqrt();
        Self::from_coeffs(grid, coeffs)
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
            || (self.grid.l_max == other.grid.l_max
                && self.grid.n_polar == other.grid.n_polar
                && self.grid.m_azimuth == other.grid.m_azimuth)
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.nodal)
    }

    pub fn mean(&self) -> f64 {
        self.grid.mean(&self.nodal)
    }

    /// L2 norm; exact because the basis is orthonormal.
    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Max over nodes (a lower bound for the true sup norm).
    pub fn norm_inf(&self) -> f64 {
        self.nodal.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn eval_at(&self, pts: &[[f64; 5]]) -> Vec<f64> {
        self.grid.eval_at_points(&self.coeffs, pts)
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &ScalarField) {
        assert!(self.same_grid(other));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
        for (a, b) in self.nodal.iter_mut().zip(&other.nodal) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
            nodal: self.nodal.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.add_scaled(1.0, other);
        out
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    /// Pointwise product followed by projection (the only way products
    /// exist in a degree-capped basis).
    pub fn mul_project(&self, other: &ScalarField) -> Self {
        assert!(self.same_grid(other));
        let nodal: Vec<f64> = self
            .nodal
            .iter()
            .zip(&other.nodal)
            .map(|(&a, &b)| a * b)
            .collect();
        Self::project(self.grid.clone(), &nodal)
    }
}

/// Per-node tangent vectors, stored as five ambient component arrays.
#[derive(Clone)]
pub struct TangentField {
    pub comp: [Vec<f64>; 5],
}

impl TangentField {
    pub fn zeros(n_nodes: usize) -> Self {
        TangentField {
            comp: std::array::from_fn(|_| vec![0.0; n_nodes]),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.comp[0].len()
    }

    /// Pointwise inner product with another tangent field.
    pub fn dot(&self, other: &TangentField) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..5 {
            for ((o, a), b) in out.iter_mut().zip(&self.comp[i]).zip(&other.comp[i]) {
                *o += a * b;
            }
        }
        out
    }

    pub fn norm_sq(&self) -> Vec<f64> {
        self.dot(self)
    }
}

/// Per-node symmetric tangential 5x5 tensors (15 packed components).
#[derive(Clone)]
pub struct TangentTensorField {
    pub comp: [Vec<f64>; 15],
}

impl TangentTensorField {
    pub fn zeros(n_nodes: usize) -> Self {
        TangentTensorField {
            comp: std::array::from_fn(|_| vec![0.0; n_nodes]),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.comp[0].len()
    }

    #[inline]
    pub fn at(&self, node: usize) -> [f64; 15] {
        std::array::from_fn(|k| self.comp[k][node])
    }

    /// Ambient trace (equals the tangential trace for tangential tensors).
    pub fn trace(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..5 {
            let diag = &self.comp[sym_index(i, i)];
            for (o, v) in out.iter_mut().zip(diag) {
                *o += v;
            }
        }
        out
    }

    /// Pointwise Frobenius contraction A : B.
    pub fn contract(&self, other: &TangentTensorField) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        for i in 0..5 {
            for j in i..5 {
                let w = if i == j { 1.0 } else { 2.0 };
                let a = &self.comp[sym_index(i, j)];
                let b = &other.comp[sym_index(i, j)];
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o += w * x * y;
                }
            }
        }
        out
    }

    /// Pointwise matrix-vector product A v.
    pub fn apply(&self, v: &TangentField) -> TangentField {
        let n = self.n_nodes();
        let mut out = TangentField::zeros(n);
        for i in 0..5 {
            for j in 0..5 {
                let a = &self.comp[sym_index(i.min(j), i.max(j))];
                for ((o, m), x) in out.comp[i].iter_mut().zip(a).zip(&v.comp[j]) {
                    *o += m * x;
                }
            }
        }
        out
    }
}

/// Packed symmetric 5x5 helper for per-node work.
#[inline]
pub fn sym_apply(m: &[f64; 15], v: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for i in 0..5 {
        for j in 0..5 {
            out[i] += m[sym_index(i.min(j), i.max(j))] * v[j];
        }
    }
    out
}

#[inline]
pub fn sym_trace(m: &[f64; 15]) -> f64 {
    (0..5).map(|i| m[sym_index(i, i)]).sum()
}

#[inline]
pub fn sym_contract(a: &[f64; 15], b: &[f64; 15]) -> f64 {
    let mut acc = 0.0;
    for i in 0..5 {
        for j in i..5 {
            let w = if i == j { 1.0 } else { 2.0 };
            acc += w * a[sym_index(i, j)] * b[sym_index(i, j)];
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_indices_cover_triangle() {
        let mut seen = vec![false; 15];
        for i in 0..5 {
            for j in i..5 {
                let k = sym_index(i, j);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn constant_field_integrates_to_volume_multiple() {
        let grid = SphereGrid::shared(4).unwrap();
        let f = ScalarField::constant(grid, 2.5);
        assert!((f.integrate() - 2.5 * VOL_S4).abs() < 1e-12);
        assert!((f.mean() - 2.5).abs() < 1e-14);
        assert!(f.nodal.iter().all(|v| (v - 2.5).abs() < 1e-13));
    }

    #[test]
    fn projection_reproduces_polynomial_data() {
        let grid = SphereGrid::shared(4).unwrap();
        let f = ScalarField::from_fn(grid.clone(), |x| x[4] * x[4] - 0.3 * x[0]);
        for (v, x) in f.nodal.iter().zip(&grid.nodes_x) {
            let want = x[4] * x[4] - 0.3 * x[0];
            assert!((v - want).abs() < 1e-12);
        }
        // Idempotence: projecting the projected values changes nothing.
        let g = ScalarField::project(grid, &f.nodal);
        let diff: f64 = f
            .coeffs
            .iter()
            .zip(&g.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn product_projection_matches_exact_low_degree() {
        // x5 * x5 has degree 2 <= l_max, so the projected product is exact.
        let grid = SphereGrid::shared(4).unwrap();
        let x5 = ScalarField::from_fn(grid.clone(), |x| x[4]);
        let sq = x5.mul_project(&x5);
        for (v, x) in sq.nodal.iter().zip(&grid.nodes_x) {
            assert!((v - x[4] * x[4]).abs() < 1e-12);
        }
        // Mean of x5^2 over the sphere is 1/5.
        assert!((sq.mean() - 0.2).abs() < 1e-13);
    }

    #[test]
    fn smooth_function_projection_error_collapses_with_degree() {
        // e^{x5} is entire; its harmonic coefficients decay super-fast, so
        // the nodal reproduction error should fall by orders of magnitude
        // with each degree step.
        let mut errs = Vec::new();
        for l in [4usize, 6, 8] {
            let grid = SphereGrid::shared(l).unwrap();
            let f = ScalarField::from_fn(grid.clone(), |x| x[4].exp());
            let err = f
                .nodal
                .iter()
                .zip(&grid.nodes_x)
                .map(|(v, x)| (v - x[4].exp()).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        assert!(errs[2] < 5e-8, "L=8 error {}", errs[2]);
        assert!(errs[2] < 1e-3 * errs[0], "no super-algebraic decay: {errs:?}");
        assert!(errs[1] < 1e-1 * errs[0]);
    }
}
