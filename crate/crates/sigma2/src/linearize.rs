//! Analytic Frechet derivative of the sigma_2 residual.
//!
//! Differentiating sigma_2(A(w)) - K e^{4w} at w in direction v gives, by
//! the chain rule through the Schouten-type tensor,
//!
//! ```text
//! L v = -2 M : Hess v + 4 (M grad w) . grad v - 2 (tr M) (grad w . grad v)
//!       - 4 K e^{4w} v
//! ```
//!
//! with M the Newton tensor of A(w) and all derivatives in the background
//! metric. This is e^{4w} times the geometric operator
//! -2 M_g^{ij} (nabla_g)^2_{ij} - 4K, which is self-adjoint in L^2(dvol_g)
//! because the Newton tensor is divergence-free in g; consequently the dense
//! matrix of L over the orthonormal background basis is symmetric up to
//! quadrature truncation, and that defect is measurable.
//!
//! Assembly here is analytic; finite differences appear only as a test
//! oracle. For the application to a single field, the tangentiality of the
//! coefficient tensors collapses the covariant pieces to raw ambient
//! derivatives of the polynomial representative: T : Hess v reduces to
//! T : dd(p) - (tr T) (x . d p) and b . grad v to b . d p.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::calculus::{gradient_from_parts, DerivBundle};
use crate::curvature::{newton_tensor, schouten_from_bundle};
use crate::error::Result;
use crate::field::{sym_contract, ScalarField, TangentField, TangentTensorField};
use crate::grid::SphereGrid;
use crate::kspec::KSpec;

/// Nodal coefficients of the linearized operator at a fixed w.
pub struct Linearized {
    /// Second-order coefficient tensor, -2 M.
    pub t_comp: TangentTensorField,
    /// First-order coefficient vector, (4 M - 2 (tr M) Id) grad w.
    pub b_comp: TangentField,
    /// Zeroth-order coefficient, -4 K^[s] e^{4w}.
    pub c_comp: Vec<f64>,
    tr_t: Vec<f64>,
}

/// Linearization against explicit nodal target values (the solver path,
/// where the target is K^[s] composed with a Mobius map).
pub fn linearize_at(w: &ScalarField, k_s_nodal: &[f64]) -> Linearized {
    let g = &w.grid;
    let n = g.n_nodes();
    let b = DerivBundle::new(w);
    let a = schouten_from_bundle(g, &b);
    let m = newton_tensor(g, &a);
    let grad = gradient_from_parts(g, &b.d, &b.radial);
    let trm = m.trace();
    let mgrad = m.apply(&grad);

    let mut t_comp = TangentTensorField::zeros(n);
    for c in 0..15 {
        for p in 0..n {
            t_comp.comp[c][p] = -2.0 * m.comp[c][p];
        }
    }
    let mut b_comp = TangentField::zeros(n);
    for j in 0..5 {
        for p in 0..n {
            b_comp.comp[j][p] = 4.0 * mgrad.comp[j][p] - 2.0 * trm[p] * grad.comp[j][p];
        }
    }
    let c_comp: Vec<f64> = k_s_nodal
        .iter()
        .zip(&w.nodal)
        .map(|(&k, &wp)| -4.0 * k * (4.0 * wp).exp())
        .collect();
    let tr_t: Vec<f64> = trm.iter().map(|&t| -2.0 * t).collect();
    Linearized {
        t_comp,
        b_comp,
        c_comp,
        tr_t,
    }
}

/// Linearization of the residual against a curvature candidate.
pub fn linearize(w: &ScalarField, k: &KSpec) -> Result<Linearized> {
    let k_s = k.nodal_k_s(&w.grid)?;
    Ok(linearize_at(w, &k_s))
}

impl Linearized {
    /// Nodal application to a direction given by its derivative bundle.
    pub fn apply_bundle(&self, b: &DerivBundle) -> Vec<f64> {
        let n = self.c_comp.len();
        let mut out = vec![0.0; n];
        for p in 0..n {
            let t = self.t_comp.at(p);
            let mut dd = [0.0f64; 15];
            for (c, slot) in dd.iter_mut().enumerate() {
                *slot = b.dd[c][p];
            }
            let second = sym_contract(&t, &dd) - self.tr_t[p] * b.radial[p];
            let mut first = 0.0;
            for j in 0..5 {
                first += self.b_comp.comp[j][p] * b.d[j][p];
            }
            out[p] = second + first + self.c_comp[p] * b.value[p];
        }
        out
    }

    /// Projected application to a field.
    pub fn apply(&self, v: &ScalarField) -> ScalarField {
        let b = DerivBundle::new(v);
        let nodal = self.apply_bundle(&b);
        ScalarField::project(v.grid.clone(), &nodal)
    }

    /// Dense columns of the operator over the given basis columns: entry
    /// (i, k) is the coefficient of basis function i in L(basis column
    /// cols[k]). The full square matrix is `to_dense`.
    pub fn dense_columns(&self, grid: &Arc<SphereGrid>, cols: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(grid.n_basis, cols.len());
        for (k, &g_col) in cols.iter().enumerate() {
            let mono = grid.mono_from_column(g_col);
            let b = DerivBundle::from_mono(grid, &mono, None);
            let nodal = self.apply_bundle(&b);
            let coeffs = grid.analyze(&nodal);
            for (i, &c) in coeffs.iter().enumerate() {
                out[(i, k)] = c;
            }
        }
        out
    }

    /// Dense matrix of the operator over the full coefficient basis.
    pub fn to_dense(&self, grid: &Arc<SphereGrid>) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..grid.n_basis).collect();
        self.dense_columns(grid, &cols)
    }
}
