//! Candidate curvature functions.
//!
//! A `KSpec` is a positive polynomial on the sphere given by ambient monomial
//! terms in x1..x5, together with a homotopy parameter `s` selecting the
//! interpolated target `K^[s] = (1-s)*6 + s*K`. At `s = 1` the target is `K`
//! itself; as `s` decreases the problem deforms toward the exactly solvable
//! constant 6.

use std::sync::Arc;

use crate::error::{Result, Sigma2Error};
use crate::field::ScalarField;
use crate::grid::SphereGrid;
use crate::moebius::MoebiusMap;

/// Coefficients of the shipped Morse-type preset: all distinct, and chosen so
/// that the spherical Laplacian 2*sum(a) - 10 a_j is nonzero at every
/// critical point +-e_j (values 5.2, 3.2, 0.2, -2.8, -5.8).
pub const MORSE_COEFFS: [f64; 5] = [0.2, 0.4, 0.7, 1.0, 1.3];

#[derive(Clone, Debug)]
pub struct KSpec {
    pub name: String,
    /// Ambient monomial terms: exponents of (x1,...,x5) and a coefficient.
    pub terms: Vec<([u8; 5], f64)>,
    /// Homotopy parameter in (0, 1].
    pub s: f64,
}

impl KSpec {
    pub fn from_terms(name: &str, terms: Vec<([u8; 5], f64)>) -> Self {
        KSpec {
            name: name.to_string(),
            terms,
            s: 1.0,
        }
    }

    /// Replace the homotopy parameter; must lie in (0, 1].
    pub fn with_s(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Sigma2Error::InvalidArgument(format!(
                "homotopy parameter must lie in (0, 1], got {s}"
            )));
        }
        self.s = s;
        Ok(self)
    }

    pub fn constant(c: f64) -> Self {
        Self::from_terms(&format!("constant{c}"), vec![([0; 5], c)])
    }

    /// K ≡ 6 (round curvature).
    pub fn constant6() -> Self {
        Self::from_terms("constant6", vec![([0; 5], 6.0)])
    }

    /// K = 6 + eps * x5: the classical obstructed candidate.
    pub fn linear_eps(eps: f64) -> Self {
        Self::from_terms(
            "linear_eps",
            vec![([0; 5], 6.0), ([0, 0, 0, 0, 1], eps)],
        )
    }

    /// K = 6 + sum a_i (x_i^2 - 1/5) with the distinct `MORSE_COEFFS`.
    pub fn morse() -> Self {
        let mut terms = vec![([0; 5], 6.0 - MORSE_COEFFS.iter().sum::<f64>() / 5.0)];
        for (i, &a) in MORSE_COEFFS.iter().enumerate() {
            let mut e = [0u8; 5];
            e[i] = 2;
            terms.push((e, a));
        }
        Self::from_terms("morse_a", terms)
    }

    /// K = 6 (1 + 0.1 (x5^2 - 1/5)): even, axially symmetric, mild.
    pub fn even_axial() -> Self {
        Self::from_terms(
            "even_axial",
            vec![([0; 5], 6.0 - 0.12), ([0, 0, 0, 0, 2], 0.6)],
        )
    }

    /// Named presets accepted by configs and the command line.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "constant6" => Ok(Self::constant6()),
            "linear_eps" => Ok(Self::linear_eps(0.5)),
            "morse_a" => Ok(Self::morse()),
            "even_axial" => Ok(Self::even_axial()),
            other => Err(Sigma2Error::Config(format!(
                "unknown curvature preset {other:?}; known: constant6, linear_eps, morse_a, even_axial"
            ))),
        }
    }

    /// Total degree of the highest monomial.
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().map(|&v| v as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// Raw K at an ambient point.
    pub fn eval(&self, x: &[f64; 5]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = *c;
            for i in 0..5 {
                for _ in 0..e[i] {
                    m *= x[i];
                }
            }
            acc += m;
        }
        acc
    }

    /// Interpolated target K^[s] at a point.
    pub fn eval_s(&self, x: &[f64; 5]) -> f64 {
        (1.0 - self.s) * 6.0 + self.s * self.eval(x)
    }

    /// Exact ambient gradient of the polynomial K.
    pub fn gradient(&self, x: &[f64; 5]) -> [f64; 5] {
        let mut g = [0.0; 5];
        for (e, c) in &self.terms {
            for d in 0..5 {
                if e[d] == 0 {
                    continue;
                }
                let mut m = *c * e[d] as f64;
                for i in 0..5 {
                    let p = if i == d { e[i] - 1 } else { e[i] };
                    for _ in 0..p {
                        m *= x[i];
                    }
                }
                g[d] += m;
            }
        }
        g
    }

    /// Tangential (spherical) gradient at a unit point.
    pub fn sphere_gradient(&self, x: &[f64; 5]) -> [f64; 5] {
        let g = self.gradient(x);
        let radial: f64 = (0..5).map(|i| g[i] * x[i]).sum();
        std::array::from_fn(|i| g[i] - radial * x[i])
    }

    /// Raw K at all grid nodes, with the positivity gate: the construction
    /// contract demands K > 0 everywhere, and a violation names the node.
    pub fn nodal_k(&self, grid: &SphereGrid) -> Result<Vec<f64>> {
        if self.degree() > grid.l_max {
            return Err(Sigma2Error::InvalidArgument(format!(
                "curvature polynomial degree {} exceeds the truncation order {}",
                self.degree(),
                grid.l_max
            )));
        }
        let vals: Vec<f64> = grid.nodes_x.iter().map(|x| self.eval(x)).collect();
        for (i, (&v, x)) in vals.iter().zip(&grid.nodes_x).enumerate() {
            if v <= 0.0 {
                return Err(Sigma2Error::InvalidArgument(format!(
                    "curvature candidate {:?} is not positive: K = {v:.6e} at node {i}, x = ({:.4}, {:.4}, {:.4}, {:.4}, {:.4})",
                    self.name, x[0], x[1], x[2], x[3], x[4]
                )));
            }
        }
        Ok(vals)
    }

    /// K^[s] at all grid nodes.
    pub fn nodal_k_s(&self, grid: &SphereGrid) -> Result<Vec<f64>> {
        let raw = self.nodal_k(grid)?;
        Ok(raw
            .iter()
            .map(|&k| (1.0 - self.s) * 6.0 + self.s * k)
            .collect())
    }

    /// K^[s] composed with a Mobius map, evaluated exactly at the nodes
    /// (polynomial evaluation at mapped points; no truncation).
    pub fn nodal_k_s_mapped(&self, grid: &SphereGrid, m: &MoebiusMap) -> Vec<f64> {
        grid.nodes_x
            .iter()
            .map(|x| self.eval_s(&m.apply(x)))
            .collect()
    }

    /// K as a projected field (exact when degree <= L).
    pub fn as_field(&self, grid: Arc<SphereGrid>) -> Result<ScalarField> {
        let nodal = self.nodal_k(&grid)?;
        Ok(ScalarField::project(grid, &nodal))
    }

    /// Sup norm of raw K over the grid (tolerance scales).
    pub fn max_abs(&self, grid: &SphereGrid) -> f64 {
        grid.nodes_x
            .iter()
            .map(|x| self.eval(x).abs())
            .fold(0.0, f64::max)
    }
}
