//! Conformal (Mobius) transformations of the round 4-sphere.
//!
//! A map is parametrized by a unit concentration point `P` and a dilation
//! `t >= 1`: rotate `P` onto the pole `e5`, pass to the stereographic chart
//! centered there, dilate the chart by `t`, invert the chart, rotate back.
//! The conformal factor `|d phi|` of this map equals
//!
//! ```text
//! t (1 + |y|^2) / (1 + t^2 |y|^2)        with y the chart value of x,
//! ```
//!
//! which clears to the pole-free rational form
//! `2 t / ((1 - <x,P>) + t^2 (1 + <x,P>))`. Its extreme values are `t` at
//! `-P` and `1/t` at `P`, and the inverse map is the one with the antipodal
//! concentration point: `phi_{P,t}^{-1} = phi_{-P,t}`.
//!
//! The ball parametrization `xi = (t-1)/t * P` identifies the space of these
//! maps with the open unit ball in R^5 (the origin is the identity); it is the
//! coordinate used by the mass-centering Newton iteration.

use std::sync::Arc;

use crate::error::{Result, Sigma2Error};
use crate::field::ScalarField;
use crate::grid::SphereGrid;
use crate::util::VOL_S4;

/// Default ceiling for the dilation parameter. Normalization routines refuse
/// to chase a center of mass past this concentration level and instead report
/// a near-blow-up error so callers can switch to asymptotic diagnostics.
pub const T_CAP: f64 = 50.0;

/// A sphere dilation: fixed points `P` and `-P`, dilation strength `t >= 1`.
#[derive(Clone, Debug)]
pub struct MoebiusMap {
    /// Unit concentration point (the chart pole).
    pub p: [f64; 5],
    /// Dilation parameter, at least 1. `t = 1` is the identity.
    pub t: f64,
    /// Canonical rotation taking `e5` to `p`: the rotation in the plane
    /// spanned by `e5` and `p` that fixes the orthogonal complement.
    pub rot: [[f64; 5]; 5],
}

/// Rotation in span{e5, p} taking e5 to p and fixing the complement.
/// For p = -e5 the plane degenerates; the convention is diag(1,1,1,-1,-1).
fn canonical_rotation(p: &[f64; 5]) -> [[f64; 5]; 5] {
    let c = p[4];
    let mut u = [p[0], p[1], p[2], p[3], 0.0];
    let s = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rot = [[0.0; 5]; 5];
    for (i, row) in rot.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if s < 1e-14 {
        if c < 0.0 {
            // p = -e5: flip the e4/e5 plane to stay a rotation.
            rot[3][3] = -1.0;
            rot[4][4] = -1.0;
        }
        return rot;
    }
    for v in u.iter_mut() {
        *v /= s;
    }
    // R = I + (c-1)(e5 e5^T + u u^T) + s (u e5^T - e5 u^T)
    for i in 0..5 {
        for j in 0..5 {
            rot[i][j] += (c - 1.0) * u[i] * u[j];
            rot[i][j] += s * (u[i] * e5(j) - e5(i) * u[j]);
        }
    }
    rot[4][4] += c - 1.0;
    rot
}

fn e5(i: usize) -> f64 {
    if i == 4 {
        1.0
    } else {
        0.0
    }
}

fn mat_mul(m: &[[f64; 5]; 5], x: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|i| (0..5).map(|j| m[i][j] * x[j]).sum())
}

fn mat_t_mul(m: &[[f64; 5]; 5], x: &[f64; 5]) -> [f64; 5] {
    std::array::from_fn(|i| (0..5).map(|j| m[j][i] * x[j]).sum())
}

fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    (0..5).map(|i| a[i] * b[i]).sum()
}

impl MoebiusMap {
    pub fn new(p: [f64; 5], t: f64) -> Result<Self> {
        let norm = dot5(&p, &p).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Sigma2Error::InvalidArgument(format!(
                "concentration point must be a unit vector, |p| = {norm}"
            )));
        }
        if !(t >= 1.0) || !t.is_finite() {
            return Err(Sigma2Error::InvalidArgument(format!(
                "dilation must satisfy t >= 1, got t = {t}"
            )));
        }
        let p = std::array::from_fn(|i| p[i] / norm);
        let rot = canonical_rotation(&p);
        Ok(MoebiusMap { p, t, rot })
    }

    pub fn identity() -> Self {
        MoebiusMap::new([0.0, 0.0, 0.0, 0.0, 1.0], 1.0).expect("identity map is valid")
    }

    /// The inverse dilation: same strength, antipodal concentration point.
    pub fn inverse(&self) -> Self {
        let p = std::array::from_fn(|i| -self.p[i]);
        MoebiusMap::new(p, self.t).expect("inverse of a valid map is valid")
    }

    /// Ball coordinate of this map: `xi = (t-1)/t * p`, so `|xi| < 1` and the
    /// identity sits at the origin.
    pub fn xi(&self) -> [f64; 5] {
        let r = (self.t - 1.0) / self.t;
        std::array::from_fn(|i| r * self.p[i])
    }

    /// Map for a ball coordinate: `t = 1/(1 - |xi|)`, `p = xi/|xi|`.
    pub fn from_xi(xi: &[f64; 5]) -> Result<Self> {
        let r = dot5(xi, xi).sqrt();
        if r >= 1.0 {
            return Err(Sigma2Error::InvalidArgument(format!(
                "ball coordinate must satisfy |xi| < 1, got {r}"
            )));
        }
        if r < 1e-14 {
            return Ok(MoebiusMap::identity());
        }
        let p = std::array::from_fn(|i| xi[i] / r);
        MoebiusMap::new(p, 1.0 / (1.0 - r))
    }

    /// Apply the map to a point of the sphere.
    pub fn apply(&self, x: &[f64; 5]) -> [f64; 5] {
        let xr = mat_t_mul(&self.rot, x);
        let denom = 1.0 - xr[4];
        if denom.abs() < 1e-14 {
            // The chart pole is a fixed point.
            return self.p;
        }
        let y: [f64; 4] = std::array::from_fn(|i| self.t * xr[i] / denom);
        let y2: f64 = y.iter().map(|v| v * v).sum();
        let back = 1.0 + y2;
        let zr = [
            2.0 * y[0] / back,
            2.0 * y[1] / back,
            2.0 * y[2] / back,
            2.0 * y[3] / back,
            (y2 - 1.0) / back,
        ];
        mat_mul(&self.rot, &zr)
    }

    /// Pointwise conformal factor `|d phi|(x)`.
    ///
    /// The chart expression `t(1+|y|^2)/(1+t^2|y|^2)` is evaluated in the
    /// cleared form `2t / ((1 - <x,p>) + t^2 (1 + <x,p>))`, which needs no
    /// chart and has no pole.
    pub fn factor(&self, x: &[f64; 5]) -> f64 {
        let c = dot5(x, &self.p);
        2.0 * self.t / ((1.0 - c) + self.t * self.t * (1.0 + c))
    }

    /// `ln |d phi|` at a point.
    pub fn ln_factor(&self, x: &[f64; 5]) -> f64 {
        self.factor(x).ln()
    }
}

/// Conformal pullback of a log-factor field: `w o phi + ln |d phi|`,
/// evaluated at the quadrature nodes through the polynomial representative of
/// `w` and projected back onto the truncated basis.
pub fn pullback_w(w: &ScalarField, m: &MoebiusMap) -> ScalarField {
    let grid = w.grid.clone();
    let mapped: Vec<[f64; 5]> = grid.nodes_x.iter().map(|x| m.apply(x)).collect();
    let composed = w.eval_at(&mapped);
    let nodal: Vec<f64> = composed
        .iter()
        .zip(&grid.nodes_x)
        .map(|(val, x)| val + m.ln_factor(x))
        .collect();
    ScalarField::project(grid, &nodal)
}

/// Conformal volume barycenter `|S^4|^{-1} \int e^{4w} x dvol`.
pub fn center_of_mass(w: &ScalarField) -> [f64; 5] {
    let grid = &w.grid;
    let mut acc = [0.0; 5];
    for (q, x) in grid.nodes_x.iter().enumerate() {
        let density = grid.node_weight[q] * (4.0 * w.nodal[q]).exp();
        for i in 0..5 {
            acc[i] += density * x[i];
        }
    }
    std::array::from_fn(|i| acc[i] / VOL_S4)
}

/// Normalized barycenter of `e^{4v}` for `v = pullback_w(w, map(xi))`.
fn centered_mass_ratio(w: &ScalarField, xi: &[f64; 5]) -> Result<[f64; 5]> {
    let m = MoebiusMap::from_xi(xi)?;
    let v = pullback_w(w, &m);
    let grid = &v.grid;
    let mut acc = [0.0; 5];
    let mut mass = 0.0;
    for (q, x) in grid.nodes_x.iter().enumerate() {
        let density = grid.node_weight[q] * (4.0 * v.nodal[q]).exp();
        mass += density;
        for i in 0..5 {
            acc[i] += density * x[i];
        }
    }
    Ok(std::array::from_fn(|i| acc[i] / mass))
}

fn norm5(v: &[f64; 5]) -> f64 {
    dot5(v, v).sqrt()
}

/// Find the dilation that moves the conformal barycenter of `w` to the
/// origin: damped Newton on the ball coordinate `xi` with a forward-difference
/// Jacobian, stopping at `|barycenter| <= 1e-9` (relative to the mass).
/// Returns the normalized field together with the map that produced it.
///
/// Fails with a near-blow-up report if the required dilation exceeds `t_cap`.
pub fn normalize_to_s0(w: &ScalarField, t_cap: f64) -> Result<(ScalarField, MoebiusMap)> {
    const TOL: f64 = 1e-9;
    const MAX_ITER: usize = 40;
    let xi_max = 1.0 - 1.0 / t_cap;

    let mut xi = [0.0; 5];
    let mut g = centered_mass_ratio(w, &xi)?;
    let mut gnorm = norm5(&g);
    for _ in 0..MAX_ITER {
        if gnorm <= TOL {
            let m = MoebiusMap::from_xi(&xi)?;
            let v = pullback_w(w, &m);
            return Ok((v, m));
        }
        // Forward-difference Jacobian of the barycenter in xi.
        let h = 1e-6;
        let mut jac = nalgebra::Matrix5::<f64>::zeros();
        for j in 0..5 {
            let mut xij = xi;
            xij[j] += h;
            if norm5(&xij) >= xi_max {
                xij[j] = xi[j] - h;
            }
            let gj = centered_mass_ratio(w, &xij)?;
            let scale = 1.0 / (xij[j] - xi[j]);
            for i in 0..5 {
                jac[(i, j)] = (gj[i] - g[i]) * scale;
            }
        }
        let rhs = nalgebra::Vector5::from_column_slice(&g);
        let step = jac.lu().solve(&rhs).ok_or_else(|| {
            Sigma2Error::LinearSolve("singular barycenter Jacobian in normalization".into())
        })?;

        // Damped update: halve until the residual decreases and xi stays
        // inside the admissible ball.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand: [f64; 5] = std::array::from_fn(|i| xi[i] - alpha * step[i]);
            let r = norm5(&cand);
            if r >= xi_max {
                let t = 1.0 / (1.0 - r.min(1.0 - 1e-12));
                if alpha == 1.0 && gnorm > TOL {
                    // The full Newton step insists on leaving the cap region.
                    return Err(Sigma2Error::NearBlowup { t, cap: t_cap });
                }
                alpha *= 0.5;
                continue;
            }
            let gc = centered_mass_ratio(w, &cand)?;
            let gcn = norm5(&gc);
            if gcn < gnorm * (1.0 - 0.25 * alpha) || gcn <= TOL {
                xi = cand;
                g = gc;
                gnorm = gcn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Sigma2Error::NewtonStall {
                s: f64::NAN,
                detail: format!(
                    "mass-centering stalled at |barycenter| = {gnorm:.3e} (target {TOL:.0e})"
                ),
            });
        }
    }
    Err(Sigma2Error::NewtonStall {
        s: f64::NAN,
        detail: format!("mass-centering did not converge: |barycenter| = {gnorm:.3e}"),
    })
}

/// Convenience: normalized barycenter check used by tests and reports.
pub fn relative_mass_center(w: &ScalarField) -> f64 {
    let grid = &w.grid;
    let mut mass = 0.0;
    for (q, _) in grid.nodes_x.iter().enumerate() {
        mass += grid.node_weight[q] * (4.0 * w.nodal[q]).exp();
    }
    let com = center_of_mass(w);
    norm5(&com) * VOL_S4 / mass
}

/// Log conformal factor of `m` as a projected field on `grid`.
pub fn ln_factor_field(grid: Arc<SphereGrid>, m: &MoebiusMap) -> ScalarField {
    let nodal: Vec<f64> = grid.nodes_x.iter().map(|x| m.ln_factor(x)).collect();
    ScalarField::project(grid, &nodal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn random_unit(rng: &mut StdRng) -> [f64; 5] {
        loop {
            let v: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>() * 2.0 - 1.0);
            let n = norm5(&v);
            if n > 0.1 {
                return std::array::from_fn(|i| v[i] / n);
            }
        }
    }

    /// Independent form of the map derived by restricting to span{x, p}:
    /// phi(x) = a (x - c p) + b p with c = <x,p>, d = (1-c) + t^2 (1+c),
    /// a = 2t/d, b = (t^2(1+c) - (1-c))/d.
    fn closed_form_apply(p: &[f64; 5], t: f64, x: &[f64; 5]) -> [f64; 5] {
        let c = dot5(x, p);
        let d = (1.0 - c) + t * t * (1.0 + c);
        let a = 2.0 * t / d;
        let b = (t * t * (1.0 + c) - (1.0 - c)) / d;
        std::array::from_fn(|i| a * (x[i] - c * p[i]) + b * p[i])
    }

    #[test]
    fn stereographic_chart_round_trip() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let y: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>() * 6.0 - 3.0);
            let y2: f64 = y.iter().map(|v| v * v).sum();
            let x = [
                2.0 * y[0] / (1.0 + y2),
                2.0 * y[1] / (1.0 + y2),
                2.0 * y[2] / (1.0 + y2),
                2.0 * y[3] / (1.0 + y2),
                (y2 - 1.0) / (1.0 + y2),
            ];
            let r2: f64 = x.iter().map(|v| v * v).sum();
            assert!((r2 - 1.0).abs() < 1e-14);
            for i in 0..4 {
                let back = x[i] / (1.0 - x[4]);
                assert!((back - y[i]).abs() < 1e-13, "chart inversion drifted");
            }
        }
    }

    #[test]
    fn rotation_is_orthogonal_and_carries_pole() {
        let mut rng = StdRng::seed_from_u64(12);
        let mut points: Vec<[f64; 5]> = (0..20).map(|_| random_unit(&mut rng)).collect();
        points.push([0.0, 0.0, 0.0, 0.0, 1.0]);
        points.push([0.0, 0.0, 0.0, 0.0, -1.0]);
        points.push([0.0, 0.0, 0.0, 1.0, 0.0]);
        for p in &points {
            let rot = canonical_rotation(p);
            let re5 = mat_mul(&rot, &[0.0, 0.0, 0.0, 0.0, 1.0]);
            for i in 0..5 {
                assert!((re5[i] - p[i]).abs() < 1e-12);
            }
            // R^T R = I
            for i in 0..5 {
                for j in 0..5 {
                    let v: f64 = (0..5).map(|k| rot[k][i] * rot[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_and_fixed_points() {
        let mut rng = StdRng::seed_from_u64(13);
        let p = random_unit(&mut rng);
        let id = MoebiusMap::new(p, 1.0).unwrap();
        let m = MoebiusMap::new(p, 3.0).unwrap();
        for _ in 0..20 {
            let x = random_unit(&mut rng);
            let fx = id.apply(&x);
            for i in 0..5 {
                assert!((fx[i] - x[i]).abs() < 1e-13);
            }
        }
        let fp = m.apply(&p);
        let anti: [f64; 5] = std::array::from_fn(|i| -p[i]);
        let fa = m.apply(&anti);
        for i in 0..5 {
            assert!((fp[i] - p[i]).abs() < 1e-12, "p must stay fixed");
            assert!((fa[i] - anti[i]).abs() < 1e-12, "-p must stay fixed");
        }
        assert!((m.factor(&anti) - 3.0).abs() < 1e-13);
        assert!((m.factor(&p) - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn chart_path_matches_plane_restriction_formula() {
        let mut rng = StdRng::seed_from_u64(14);
        for _ in 0..40 {
            let p = random_unit(&mut rng);
            let t = 1.0 + rng.gen::<f64>() * 4.0;
            let m = MoebiusMap::new(p, t).unwrap();
            let x = random_unit(&mut rng);
            let got = m.apply(&x);
            let want = closed_form_apply(&p, t, &x);
            let r2: f64 = got.iter().map(|v| v * v).sum();
            assert!((r2 - 1.0).abs() < 1e-13, "image left the sphere");
            for i in 0..5 {
                assert!(
                    (got[i] - want[i]).abs() < 1e-12,
                    "chart path disagrees with closed form"
                );
            }
        }
    }

    #[test]
    fn inverse_map_and_ball_coordinate_round_trip() {
        let mut rng = StdRng::seed_from_u64(15);
        for _ in 0..25 {
            let p = random_unit(&mut rng);
            let t = 1.0 + rng.gen::<f64>() * 3.0;
            let m = MoebiusMap::new(p, t).unwrap();
            let inv = m.inverse();
            let x = random_unit(&mut rng);
            let back = inv.apply(&m.apply(&x));
            for i in 0..5 {
                assert!((back[i] - x[i]).abs() < 1e-12, "inverse round trip failed");
            }
            // factor group law along the composition to the identity
            let f = m.factor(&x) * inv.factor(&m.apply(&x));
            assert!((f - 1.0).abs() < 1e-12);

            let xi = m.xi();
            let m2 = MoebiusMap::from_xi(&xi).unwrap();
            assert!((m2.t - t).abs() < 1e-10);
            for i in 0..5 {
                assert!((m2.p[i] - p[i]).abs() < 1e-10);
            }
        }
        let id_xi = MoebiusMap::identity().xi();
        assert!(norm5(&id_xi) == 0.0);
    }

    #[test]
    fn factor_satisfies_group_law_for_composition() {
        let mut rng = StdRng::seed_from_u64(16);
        for _ in 0..15 {
            let m1 = MoebiusMap::new(random_unit(&mut rng), 1.0 + rng.gen::<f64>() * 2.0).unwrap();
            let m2 = MoebiusMap::new(random_unit(&mut rng), 1.0 + rng.gen::<f64>() * 2.0).unwrap();
            for _ in 0..10 {
                let x = random_unit(&mut rng);
                // |d(m2 o m1)|(x) = |d m2|(m1 x) |d m1|(x); probe it with a
                // finite-difference length ratio along a random tangent curve.
                let chain = m2.factor(&m1.apply(&x)) * m1.factor(&x);
                let mut v = random_unit(&mut rng);
                let c = dot5(&v, &x);
                for i in 0..5 {
                    v[i] -= c * x[i];
                }
                let vn = norm5(&v);
                for vi in v.iter_mut() {
                    *vi /= vn;
                }
                let h = 1e-5;
                let step = |s: f64| -> [f64; 5] {
                    let raw: [f64; 5] =
                        std::array::from_fn(|i| (s.cos()) * x[i] + (s.sin()) * v[i]);
                    m2.apply(&m1.apply(&raw))
                };
                let plus = step(h);
                let minus = step(-h);
                let mut dist2 = 0.0;
                for i in 0..5 {
                    let d = plus[i] - minus[i];
                    dist2 += d * d;
                }
                let fd = dist2.sqrt() / (2.0 * h);
                assert!(
                    (fd - chain).abs() < 1e-5 * chain.max(1.0),
                    "composed factor disagrees with metric stretch: fd={fd}, chain={chain}"
                );
            }
        }
    }

    #[test]
    fn jacobian_identity_for_polynomial_integrands() {
        let grid = SphereGrid::shared(8).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        // integrand of degree <= 4 with O(1) coefficients
        let f = |x: &[f64; 5]| -> f64 {
            1.0 + 0.7 * x[0] - 0.3 * x[4] + 0.5 * x[1] * x[2] + 0.25 * x[3] * x[3] * x[0] * x[4]
                - 0.4 * x[2] * x[2] * x[2] * x[1]
        };
        let base: f64 = grid
            .nodes_x
            .iter()
            .zip(&grid.node_weight)
            .map(|(x, w)| w * f(x))
            .sum();
        for _ in 0..4 {
            let p = random_unit(&mut rng);
            let t = 1.0 + rng.gen::<f64>();
            let m = MoebiusMap::new(p, t).unwrap();
            let moved: f64 = grid
                .nodes_x
                .iter()
                .zip(&grid.node_weight)
                .map(|(x, w)| {
                    let j = m.factor(x);
                    w * f(&m.apply(x)) * j * j * j * j
                })
                .sum();
            assert!(
                (moved - base).abs() < 1e-8 * base.abs().max(1.0),
                "change of variables drifted: {moved} vs {base}"
            );
        }
        // pure volume: integral of |d phi|^4 is |S^4| for any map
        let m = MoebiusMap::new([0.0, 0.0, 0.0, 0.0, 1.0], 1.5).unwrap();
        let vol: f64 = grid
            .nodes_x
            .iter()
            .zip(&grid.node_weight)
            .map(|(x, w)| {
                let j = m.factor(x);
                w * j * j * j * j
            })
            .sum();
        assert!((vol - VOL_S4).abs() < 1e-8 * VOL_S4);
    }

    #[test]
    fn pullback_is_invertible_and_respects_group_law() {
        let grid = SphereGrid::shared(8).unwrap();
        let m = MoebiusMap::new([0.0, 0.0, 0.6, 0.0, 0.8], 1.5).unwrap();

        // pullback of zero by the identity is zero
        let zero = ScalarField::zeros(grid.clone());
        let z = pullback_w(&zero, &MoebiusMap::identity());
        assert!(z.norm_inf() < 1e-12);

        // pullback of ln|d phi^{-1}| by phi collapses to zero up to truncation
        let w = ln_factor_field(grid.clone(), &m.inverse());
        let v = pullback_w(&w, &m);
        assert!(
            v.norm_inf() < 5e-5,
            "group-law cancellation left {}",
            v.norm_inf()
        );

        // and the pullback of a plain coordinate composes exactly:
        // project(x4 o phi) agrees nodally with evaluating x4 after phi,
        // up to the truncation of the rational composition.
        let coord = ScalarField::from_fn(grid.clone(), |x| x[4]);
        let pulled = pullback_w(&coord, &m);
        let direct: Vec<f64> = grid
            .nodes_x
            .iter()
            .map(|x| {
                let fx = m.apply(x);
                fx[4] + m.ln_factor(x)
            })
            .collect();
        let err = pulled
            .nodal
            .iter()
            .zip(&direct)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        assert!(err < 5e-5, "projection error {err} too large for t = 1.5");
    }

    #[test]
    fn center_of_mass_tracks_concentration() {
        let grid = SphereGrid::shared(8).unwrap();
        let zero = ScalarField::zeros(grid.clone());
        let com0 = center_of_mass(&zero);
        assert!(norm5(&com0) < 1e-12, "round measure must be centered");

        let p = [0.0, 0.0, 0.0, 0.0, 1.0];
        let mut last = 0.0;
        for &t in &[1.5, 2.0, 4.0] {
            let m = MoebiusMap::new(p, t).unwrap();
            let w = ln_factor_field(grid.clone(), &m);
            let com = center_of_mass(&w);
            // e^{4w} = |d phi_{P,t}|^4 concentrates mass toward -P
            assert!(com[4] < 0.0, "mass must drift toward -p");
            assert!(com[4].abs() > last, "drift must grow with t");
            last = com[4].abs();
            for i in 0..4 {
                assert!(com[i].abs() < 1e-10, "axial symmetry broken");
            }
        }

        // Pushforward oracle with the exact (unprojected) density: the
        // barycenter of |d phi|^4 equals the plain average of phi^{-1}.
        let tilt = {
            let raw = [0.3, -0.1, 0.0, 0.5, 0.8];
            let n = norm5(&raw);
            let unit: [f64; 5] = std::array::from_fn(|i| raw[i] / n);
            MoebiusMap::new(unit, 2.0).unwrap()
        };
        let mut com = [0.0; 5];
        let mut want = [0.0; 5];
        for (x, wq) in grid.nodes_x.iter().zip(&grid.node_weight) {
            let j = tilt.factor(x);
            let fx = tilt.inverse().apply(x);
            for i in 0..5 {
                com[i] += wq * j * j * j * j * x[i];
                want[i] += wq * fx[i];
            }
        }
        for i in 0..5 {
            assert!(
                (com[i] - want[i]).abs() / VOL_S4 < 1e-8,
                "pushforward identity failed: {com:?} vs {want:?}"
            );
        }
    }

    #[test]
    fn normalization_recovers_dilation_inverse() {
        let grid = SphereGrid::shared(8).unwrap();
        let p = [0.6, 0.0, 0.0, 0.0, 0.8];
        let t = 2.0;
        let m = MoebiusMap::new(p, t).unwrap();
        let w = ln_factor_field(grid.clone(), &m);
        let (v, found) = normalize_to_s0(&w, T_CAP).unwrap();

        // The neutralizer of ln|d phi_{P,t}| is the inverse map phi_{-P,t};
        // truncating w at this resolution shifts the recovered coordinate at
        // the 1e-6 level, so the gate carries a small margin above that.
        let want_xi = m.inverse().xi();
        let got_xi = found.xi();
        for i in 0..5 {
            assert!(
                (got_xi[i] - want_xi[i]).abs() < 5e-6,
                "normalization found xi = {got_xi:?}, expected {want_xi:?}"
            );
        }
        assert!(relative_mass_center(&v) <= 1e-9);
        assert!(
            v.norm_inf() < 5e-4,
            "normalized profile should collapse to zero, sup = {}",
            v.norm_inf()
        );
    }

    #[test]
    fn normalization_leaves_centered_fields_alone() {
        let grid = SphereGrid::shared(6).unwrap();
        let w = ScalarField::from_fn(grid.clone(), |x| 0.05 * (x[0] * x[1] + x[4] * x[4]));
        let (v, m) = normalize_to_s0(&w, T_CAP).unwrap();
        assert!(relative_mass_center(&v) <= 1e-9);
        // an even field is already centered: the map stays near the identity
        assert!(m.t - 1.0 < 1e-6, "unexpected dilation t = {}", m.t);
        assert!((v.norm_inf() - w.norm_inf()).abs() < 1e-6);
    }

    #[test]
    fn normalization_detects_blowup_cap() {
        let grid = SphereGrid::shared(6).unwrap();
        // demand neutralizing a t = 6 concentration with a cap of 3
        let m = MoebiusMap::new([0.0, 0.0, 0.0, 0.0, 1.0], 6.0).unwrap();
        let w = ln_factor_field(grid.clone(), &m);
        match normalize_to_s0(&w, 3.0) {
            Err(Sigma2Error::NearBlowup { t, cap }) => {
                assert!(t >= 3.0 && cap == 3.0);
            }
            other => panic!("expected near-blow-up, got {other:?}"),
        }
    }
}
