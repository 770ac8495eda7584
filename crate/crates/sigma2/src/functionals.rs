//! Variational quantities behind the prescribing equation: the conformally
//! invariant pieces Y and II and the curvature coupling C_K, combined into
//! the functional determinant F = Y - II + C_K. Critical points of F on the
//! balanced slice are exactly the solutions of sigma_2(A(w)) = K e^{4w}.
//!
//! All averages are taken against the exact sphere volume 8 pi^2 / 3 rather
//! than the quadrature sum, so normalization error never mixes with
//! truncation error.

use crate::calculus::{gradient_from_parts, laplacian_nodal_from_bundle, DerivBundle};
use crate::error::{Result, Sigma2Error};
use crate::field::ScalarField;
use crate::kspec::KSpec;
use crate::util::{fnv1a, VOL_S4};

/// The three pieces and their combination, with enough provenance to match
/// a report line back to its inputs.
#[derive(Clone, Copy, Debug)]
pub struct FunctionalReport {
    pub ii: f64,
    pub y: f64,
    pub c_k: f64,
    pub f: f64,
    pub inputs_hash: u64,
    pub grid_l: usize,
}

/// Average of ((Laplace w)^2 + 2 |grad w|^2 + 12 w) over the sphere.
pub fn functional_ii(w: &ScalarField) -> f64 {
    let g = &w.grid;
    let b = DerivBundle::new(w);
    let lap = laplacian_nodal_from_bundle(g, &b);
    let grad2 = gradient_from_parts(g, &b.d, &b.radial).norm_sq();
    let integrand: Vec<f64> = lap
        .iter()
        .zip(&grad2)
        .zip(&w.nodal)
        .map(|((&l, &g2), &wp)| l * l + 2.0 * g2 + 12.0 * wp)
        .collect();
    g.integrate(&integrand) / VOL_S4
}

/// Average of (Laplace w + |grad w|^2)^2 minus four times the average of
/// |grad w|^2; vanishes on every round conformal factor.
pub fn functional_y(w: &ScalarField) -> f64 {
    let g = &w.grid;
    let b = DerivBundle::new(w);
    let lap = laplacian_nodal_from_bundle(g, &b);
    let grad2 = gradient_from_parts(g, &b.d, &b.radial).norm_sq();
    let integrand: Vec<f64> = lap
        .iter()
        .zip(&grad2)
        .map(|(&l, &g2)| {
            let s = l + g2;
            s * s - 4.0 * g2
        })
        .collect();
    g.integrate(&integrand) / VOL_S4
}

/// 3 log of the K-weighted volume average of e^{4w}.
pub fn functional_ck(w: &ScalarField, k: &KSpec) -> Result<f64> {
    let k_s = k.nodal_k_s(&w.grid)?;
    let density: Vec<f64> = k_s
        .iter()
        .zip(&w.nodal)
        .map(|(&kv, &wp)| kv * (4.0 * wp).exp())
        .collect();
    let mean = w.grid.integrate(&density) / VOL_S4;
    if mean <= 0.0 {
        return Err(Sigma2Error::InvalidArgument(format!(
            "curvature-weighted volume average {mean:.3e} is not positive"
        )));
    }
    Ok(3.0 * mean.ln())
}

fn inputs_hash(w: &ScalarField, k: &KSpec) -> u64 {
    let mut bytes = Vec::with_capacity(8 * w.coeffs.len() + 64);
    for c in &w.coeffs {
        bytes.extend_from_slice(&c.to_bits().to_le_bytes());
    }
    bytes.extend_from_slice(k.name.as_bytes());
    for (expo, coeff) in &k.terms {
        bytes.extend_from_slice(expo);
        bytes.extend_from_slice(&coeff.to_bits().to_le_bytes());
    }
    bytes.extend_from_slice(&k.s.to_bits().to_le_bytes());
    fnv1a(&bytes)
}

/// The functional determinant F = Y - II + C_K with its pieces.
pub fn functional_f(w: &ScalarField, k: &KSpec) -> Result<FunctionalReport> {
    let ii = functional_ii(w);
    let y = functional_y(w);
    let c_k = functional_ck(w, k)?;
    Ok(FunctionalReport {
        ii,
        y,
        c_k,
        f: y - ii + c_k,
        inputs_hash: inputs_hash(w, k),
        grid_l: w.grid.l_max,
    })
}
