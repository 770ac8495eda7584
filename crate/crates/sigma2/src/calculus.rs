//! Covariant derivatives on the sphere, taken through the ambient
//! polynomial representative.
//!
//! For a field with representative `p` (any polynomial agreeing with the
//! field on the sphere), the tangential gradient, covariant Hessian, and
//! Laplace–Beltrami operator at `x` are
//!
//! ```text
//!   grad f = Pi grad p                      Pi = I - x x^T
//!   Hess f = Pi (d2 p) Pi - (x . grad p) Pi
//!   Lap  f = tr(d2 p) - x^T (d2 p) x - 4 (x . grad p)
//! ```
//!
//! all extension-independent. The ambient partials come from exponent
//! shifts of the monomial expansion, so there is no differencing error;
//! what remains is pure evaluation roundoff.

use crate::evaluator::EvalWorkspace;
use crate::field::{sym_index, ScalarField, TangentField, TangentTensorField};
use crate::grid::SphereGrid;

/// Nodal ambient derivatives of one scalar field, through second order.
pub struct DerivBundle {
    pub value: Vec<f64>,
    /// First partials d_i p.
    pub d: [Vec<f64>; 5],
    /// Second partials d_i d_j p, packed symmetric.
    pub dd: [Vec<f64>; 15],
    /// Radial derivative x . grad p.
    pub radial: Vec<f64>,
}

impl DerivBundle {
    pub fn new(f: &ScalarField) -> Self {
        let mono = f.grid.mono_from_coeffs(&f.coeffs);
        Self::from_mono(&f.grid, &mono, Some(&f.nodal))
    }

    /// Bundle from a monomial vector; `value` skips one evaluation when the
    /// caller already has nodal values.
    pub fn from_mono(g: &SphereGrid, mono: &[f64], value: Option<&[f64]>) -> Self {
        let mut ws = EvalWorkspace::new(g);
        let value = match value {
            Some(v) => v.to_vec(),
            None => g.eval_mono(mono, &mut ws),
        };
        let dmono: [Vec<f64>; 5] = std::array::from_fn(|i| g.mono_derivative(mono, i));
        let d: [Vec<f64>; 5] = std::array::from_fn(|i| g.eval_mono(&dmono[i], &mut ws));

        let mut dd: [Vec<f64>; 15] = std::array::from_fn(|_| Vec::new());
        let mut shift = vec![0.0; g.mono_len()];
        for i in 0..5 {
            for j in i..5 {
                g.mono_derivative_into(&dmono[i], j, &mut shift);
                dd[sym_index(i, j)] = g.eval_mono(&shift, &mut ws);
            }
        }

        let mut radial = vec![0.0; g.n_nodes()];
        for (i, di) in d.iter().enumerate() {
            for ((r, v), x) in radial.iter_mut().zip(di).zip(&g.nodes_x) {
                *r += x[i] * v;
            }
        }

        DerivBundle { value, d, dd, radial }
    }
}

/// First partials only — for gradients the full bundle is overkill.
fn first_derivs(g: &SphereGrid, mono: &[f64]) -> ([Vec<f64>; 5], Vec<f64>) {
    let mut ws = EvalWorkspace::new(g);
    let d: [Vec<f64>; 5] =
        std::array::from_fn(|i| g.eval_mono(&g.mono_derivative(mono, i), &mut ws));
    let mut radial = vec![0.0; g.n_nodes()];
    for (i, di) in d.iter().enumerate() {
        for ((r, v), x) in radial.iter_mut().zip(di).zip(&g.nodes_x) {
            *r += x[i] * v;
        }
    }
    (d, radial)
}

pub fn gradient_from_parts(
    g: &SphereGrid,
    d: &[Vec<f64>; 5],
    radial: &[f64],
) -> TangentField {
    let n = g.n_nodes();
    let mut out = TangentField::zeros(n);
    for i in 0..5 {
        for p in 0..n {
            out.comp[i][p] = d[i][p] - radial[p] * g.nodes_x[p][i];
        }
    }
    out
}

pub fn hessian_from_bundle(g: &SphereGrid, b: &DerivBundle) -> TangentTensorField {
    let n = g.n_nodes();
    let mut out = TangentTensorField::zeros(n);
    for p in 0..n {
        let x = g.nodes_x[p];
        let m: [f64; 15] = std::array::from_fn(|k| b.dd[k][p]);
        let hx = crate::field::sym_apply(&m, &x);
        let q: f64 = (0..5).map(|i| x[i] * hx[i]).sum();
        let r = b.radial[p];
        for i in 0..5 {
            for j in i..5 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let pi_ij = delta - x[i] * x[j];
                out.comp[sym_index(i, j)][p] =
                    m[sym_index(i, j)] - x[i] * hx[j] - x[j] * hx[i] + x[i] * x[j] * q
                        - r * pi_ij;
            }
        }
    }
    out
}

/// Collocation Laplacian: pointwise-exact on polynomial data, used inside
/// the curvature formulas. The spectral form below is the clean inverse-free
/// version for standalone use.
pub fn laplacian_nodal_from_bundle(g: &SphereGrid, b: &DerivBundle) -> Vec<f64> {
    let n = g.n_nodes();
    let mut out = vec![0.0; n];
    for p in 0..n {
        let x = g.nodes_x[p];
        let m: [f64; 15] = std::array::from_fn(|k| b.dd[k][p]);
        let hx = crate::field::sym_apply(&m, &x);
        let q: f64 = (0..5).map(|i| x[i] * hx[i]).sum();
        out[p] = crate::field::sym_trace(&m) - q - 4.0 * b.radial[p];
    }
    out
}

impl ScalarField {
    pub fn gradient(&self) -> TangentField {
        let mono = self.grid.mono_from_coeffs(&self.coeffs);
        let (d, radial) = first_derivs(&self.grid, &mono);
        gradient_from_parts(&self.grid, &d, &radial)
    }

    pub fn hessian(&self) -> TangentTensorField {
        hessian_from_bundle(&self.grid, &DerivBundle::new(self))
    }

    /// Laplace–Beltrami operator, applied spectrally: a degree-l harmonic
    /// is an eigenfunction with eigenvalue -l(l+3).
    pub fn laplacian(&self) -> ScalarField {
        let coeffs: Vec<f64> = self
            .coeffs
            .iter()
            .zip(&self.grid.ell)
            .map(|(&c, &l)| -((l * (l + 3)) as f64) * c)
            .collect();
        ScalarField::from_coeffs(self.grid.clone(), coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SphereGrid;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gradient_of_coordinate_function() {
        let grid = SphereGrid::shared(4).unwrap();
        let f = ScalarField::from_fn(grid.clone(), |x| x[4]);
        let grad = f.gradient();
        for p in 0..grid.n_nodes() {
            let x = grid.nodes_x[p];
            for i in 0..5 {
                let want = if i == 4 { 1.0 - x[4] * x[4] } else { -x[4] * x[i] };
                assert!((grad.comp[i][p] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_great_circle_differences() {
        let grid = SphereGrid::shared(6).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let coeffs: Vec<f64> = (0..grid.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = ScalarField::from_coeffs(grid.clone(), coeffs);
        let grad = f.gradient();

        for _ in 0..12 {
            let node = rng.gen_range(0..grid.n_nodes());
            let x = grid.nodes_x[node];
            // Random unit tangent at x.
            let mut v = [0.0f64; 5];
            for vi in v.iter_mut() {
                *vi = rng.gen_range(-1.0..1.0);
            }
            let xv: f64 = (0..5).map(|i| v[i] * x[i]).sum();
            for i in 0..5 {
                v[i] -= xv * x[i];
            }
            let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for vi in v.iter_mut() {
                *vi /= nv;
            }

            // Richardson-extrapolated central difference along the great
            // circle t -> cos(t) x + sin(t) v.
            let circle = |t: f64| {
                let pt: [f64; 5] = std::array::from_fn(|i| t.cos() * x[i] + t.sin() * v[i]);
                f.eval_at(&[pt])[0]
            };
            let h = 1e-3;
            let d_h = (circle(h) - circle(-h)) / (2.0 * h);
            let d_h2 = (circle(h / 2.0) - circle(-h / 2.0)) / h;
            let fd = (4.0 * d_h2 - d_h) / 3.0;

            let want: f64 = (0..5).map(|i| grad.comp[i][node] * v[i]).sum();
            assert!(
                (fd - want).abs() <= 1e-8 * (1.0 + want.abs()),
                "node {node}: fd {fd} vs {want}"
            );
        }
    }

    #[test]
    fn coordinate_product_gradient_hits_spec_tolerance() {
        let grid = SphereGrid::shared(4).unwrap();
        let f = ScalarField::from_fn(grid.clone(), |x| x[0] * x[1]);
        let grad = f.gradient();
        for p in (0..grid.n_nodes()).step_by(97) {
            let x = grid.nodes_x[p];
            // Pi (x2 e1 + x1 e2), directly.
            let dp = [x[1], x[0], 0.0, 0.0, 0.0];
            let r: f64 = (0..5).map(|i| dp[i] * x[i]).sum();
            for i in 0..5 {
                let want = dp[i] - r * x[i];
                assert!((grad.comp[i][p] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_of_coordinate_is_scaled_projector() {
        let grid = SphereGrid::shared(4).unwrap();
        let f = ScalarField::from_fn(grid.clone(), |x| x[4]);
        let h = f.hessian();
        for p in 0..grid.n_nodes() {
            let x = grid.nodes_x[p];
            for i in 0..5 {
                for j in i..5 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    let want = -x[4] * (delta - x[i] * x[j]);
                    assert!((h.comp[sym_index(i, j)][p] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hessian_is_tangential_and_traces_to_laplacian() {
        let grid = SphereGrid::shared(6).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..grid.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = ScalarField::from_coeffs(grid.clone(), coeffs);
        let h = f.hessian();
        let lap = f.laplacian();

        let hnorm: f64 = h
            .comp
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tr = h.trace();
        for p in 0..grid.n_nodes() {
            let x = grid.nodes_x[p];
            let m: [f64; 15] = h.at(p);
            let hx = crate::field::sym_apply(&m, &x);
            let hx_norm: f64 = hx.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(hx_norm <= 1e-12 * hnorm.max(1.0), "H x != 0 at node {p}");
            assert!((tr[p] - lap.nodal[p]).abs() <= 1e-10 * hnorm.max(1.0));
        }
    }

    #[test]
    fn bundle_laplacian_matches_spectral_eigenvalues() {
        let grid = SphereGrid::shared(6).unwrap();
        let mut ws_scale: f64 = 0.0;
        for g_col in 0..grid.n_basis {
            let ell = grid.ell[g_col];
            let mono = grid.mono_from_column(g_col);
            let b = DerivBundle::from_mono(&grid, &mono, None);
            let lap = laplacian_nodal_from_bundle(&grid, &b);
            let direct = grid.basis_nodal(g_col);
            let eig = -((ell * (ell + 3)) as f64);
            let err = lap
                .iter()
                .zip(&direct)
                .map(|(l, v)| (l - eig * v).abs())
                .fold(0.0f64, f64::max);
            ws_scale = ws_scale.max(err);
            assert!(err < 1e-9, "column {g_col} (degree {ell}): residual {err}");
        }
        assert!(ws_scale < 1e-9);
    }

    #[test]
    fn laplacian_is_self_adjoint_and_divergence_free() {
        let grid = SphereGrid::shared(5).unwrap();
        let mut rng = StdRng::seed_from_u64(21);
        let fc: Vec<f64> = (0..grid.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gc: Vec<f64> = (0..grid.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = ScalarField::from_coeffs(grid.clone(), fc);
        let g = ScalarField::from_coeffs(grid.clone(), gc);

        // Cross-path: collocation Laplacian on one side, spectral on the
        // other; the two must agree as bilinear forms.
        let lap_g = laplacian_nodal_from_bundle(&grid, &DerivBundle::new(&g));
        let lhs = grid.integrate(
            &f.nodal
                .iter()
                .zip(&lap_g)
                .map(|(&a, &b)| a * b)
                .collect::<Vec<_>>(),
        );
        let lap_f = f.laplacian();
        let rhs = grid.integrate(
            &g.nodal
                .iter()
                .zip(&lap_f.nodal)
                .map(|(&a, &b)| a * b)
                .collect::<Vec<_>>(),
        );
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        assert!((lhs - rhs).abs() <= 1e-10 * scale, "{lhs} vs {rhs}");

        // Divergence theorem: the Laplacian integrates to zero.
        let total = grid.integrate(&lap_g);
        let lap_scale = lap_g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(total.abs() <= 1e-10 * lap_scale);
    }
}
