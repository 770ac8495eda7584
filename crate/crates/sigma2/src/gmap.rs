//! The barycentric obstruction map G and its degree theory.
//!
//! G(P, t) is the first-harmonic moment of the curvature candidate composed
//! with the sphere dilation centered at P:
//!
//! ```text
//! G(P,t) = |S^4|^{-1} integral of K(phi_{P,t}(x)) x dvol(x)
//! ```
//!
//! Viewed through the ball coordinate xi = (t-1)P/t it becomes a map from
//! the open unit ball of R^5 to R^5 whose zeros seed the solver's outer
//! iteration, and whose Brouwer degree on a ball B_r — computed here as a
//! Kronecker integral over the boundary 4-sphere, reusing the same
//! quadrature machinery that integrates fields — carries the existence
//! criterion. The complementary criterion is the index sum of the gradient
//! field of K over critical points with negative Laplacian.

use std::sync::Arc;

use nalgebra::{Matrix4, Matrix5};

use crate::error::{Result, Sigma2Error};
use crate::grid::SphereGrid;
use crate::kspec::KSpec;
use crate::moebius::MoebiusMap;
use crate::util::VOL_S4;

/// Direct quadrature of the moment integral at a pole and dilation.
pub fn gmap(grid: &SphereGrid, k: &KSpec, p: [f64; 5], t: f64) -> Result<[f64; 5]> {
    let m = MoebiusMap::new(p, t)?;
    Ok(gmap_of_map(grid, k, &m))
}

fn gmap_of_map(grid: &SphereGrid, k: &KSpec, m: &MoebiusMap) -> [f64; 5] {
    let mut acc = [0.0f64; 5];
    for (p, x) in grid.nodes_x.iter().enumerate() {
        let kv = k.eval(&m.apply(x)) * grid.node_weight[p];
        for j in 0..5 {
            acc[j] += kv * x[j];
        }
    }
    for a in &mut acc {
        *a /= VOL_S4;
    }
    acc
}

/// G in the ball coordinate xi = (t-1)P/t.
pub fn gmap_on_ball(grid: &SphereGrid, k: &KSpec, xi: &[f64; 5]) -> Result<[f64; 5]> {
    let m = MoebiusMap::from_xi(xi)?;
    Ok(gmap_of_map(grid, k, &m))
}

/// Jacobian of the ball map by central differences, step 1e-5 per component.
pub fn gmap_gradient(grid: &SphereGrid, k: &KSpec, xi: &[f64; 5]) -> Result<Matrix5<f64>> {
    let h = 1e-5;
    let mut jac = Matrix5::zeros();
    for c in 0..5 {
        let mut xp = *xi;
        let mut xm = *xi;
        xp[c] += h;
        xm[c] -= h;
        let gp = gmap_on_ball(grid, k, &xp)?;
        let gm = gmap_on_ball(grid, k, &xm)?;
        for r in 0..5 {
            jac[(r, c)] = (gp[r] - gm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// A located zero of the ball map with its local degree data.
#[derive(Clone, Copy, Debug)]
pub struct GZero {
    pub xi: [f64; 5],
    /// sign of det of the Jacobian at the zero; 0 when degenerate.
    pub sign: i64,
    pub det: f64,
    pub g_norm: f64,
    /// |det| fell below 1e-10 of the Jacobian's natural scale. Surfaced to
    /// the caller — never silently perturbed away.
    pub degenerate: bool,
}

fn norm5(v: &[f64; 5]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Deterministic low-discrepancy fill of the ball B_r: a Weyl sequence on
/// the cube, rejection-restricted to the ball.
fn ball_seeds(r: f64, count: usize) -> Vec<[f64; 5]> {
    const ALPHA: [f64; 5] = [
        std::f64::consts::SQRT_2,
        1.7320508075688772, // sqrt 3
        2.23606797749979,   // sqrt 5
        2.6457513110645907, // sqrt 7
        3.3166247903554,    // sqrt 11
    ];
    let mut out = Vec::with_capacity(count);
    let mut n = 1u64;
    while out.len() < count {
        let mut y = [0.0f64; 5];
        let mut norm2 = 0.0;
        for i in 0..5 {
            let u = (n as f64 * ALPHA[i]).fract();
            y[i] = 2.0 * u - 1.0;
            norm2 += y[i] * y[i];
        }
        if norm2 <= 1.0 {
            for v in &mut y {
                *v *= r;
            }
            out.push(y);
        }
        n += 1;
    }
    out
}

fn classify_zero(jac: &Matrix5<f64>) -> (i64, f64, bool) {
    let det = jac.determinant();
    let scale = jac.abs().max().max(f64::MIN_POSITIVE);
    let degenerate = det.abs() < 1e-10 * scale.powi(5);
    let sign = if degenerate {
        0
    } else if det > 0.0 {
        1
    } else {
        -1
    };
    (sign, det, degenerate)
}

/// Multistart damped Newton search for all zeros of the ball map in B_r.
/// Zeros closer than 1e-6 are merged. The boolean is a completeness
/// declaration: false when some start stalled at a suspiciously small |G|
/// without actually converging.
pub fn find_zeros(grid: &SphereGrid, k: &KSpec, r: f64) -> Result<(Vec<GZero>, bool)> {
    if !(0.0 < r && r < 1.0) {
        return Err(Sigma2Error::InvalidArgument(format!(
            "zero search radius {r} must lie in (0,1)"
        )));
    }
    let scale = k.max_abs(grid).max(1.0);
    let tol = 1e-11 * scale;
    // a stalled start is only suspicious when it got close enough to zero
    // that quadrature noise could be hiding a root
    let stall_floor = 1e-6 * scale;
    let mut zeros: Vec<[f64; 5]> = Vec::new();
    let mut complete = true;
    // the moment map decays toward the ball boundary (the dilation limit
    // concentrates K at a point, killing the first moment), so iterates are
    // confined to a margin around the search ball; runs parked beyond r are
    // boundary escapes, not candidate zeros of B_r
    let cut = (r + 0.05).min(0.98);

    for seed in ball_seeds(r, 200) {
        let mut xi = seed;
        let mut g = gmap_on_ball(grid, k, &xi)?;
        let mut gn = norm5(&g);
        let mut converged = false;
        for _ in 0..40 {
            if gn <= tol {
                converged = true;
                break;
            }
            let jac = gmap_gradient(grid, k, &xi)?;
            let rhs = nalgebra::Vector5::from_column_slice(&g);
            let Some(step) = jac.lu().solve(&rhs) else {
                break;
            };
            let mut alpha = 1.0f64;
            let mut advanced = false;
            while alpha >= 1e-4 {
                let mut cand = xi;
                for i in 0..5 {
                    cand[i] -= alpha * step[i];
                }
                if norm5(&cand) < cut {
                    let gc = gmap_on_ball(grid, k, &cand)?;
                    let gcn = norm5(&gc);
                    if gcn < gn {
                        xi = cand;
                        g = gc;
                        gn = gcn;
                        advanced = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if converged {
            if norm5(&xi) < r && !zeros.iter().any(|z| {
                let mut d2 = 0.0;
                for i in 0..5 {
                    d2 += (z[i] - xi[i]) * (z[i] - xi[i]);
                }
                d2.sqrt() < 1e-6
            }) {
                zeros.push(xi);
            }
        } else if gn < stall_floor && norm5(&xi) < r {
            complete = false;
        }
    }

    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(zeros.len());
    for xi in zeros {
        let jac = gmap_gradient(grid, k, &xi)?;
        let (sign, det, degenerate) = classify_zero(&jac);
        let g_norm = norm5(&gmap_on_ball(grid, k, &xi)?);
        out.push(GZero {
            xi,
            sign,
            det,
            g_norm,
            degenerate,
        });
    }
    Ok((out, complete))
}

/// Kronecker integral of a normalized map over the boundary sphere of B_r:
/// returns the raw (real-valued) degree and the boundary minimum of |F|.
/// The boundary is parametrized by the given grid's sphere nodes; at each
/// node the integrand is det[u, du_1..du_4] over an oriented orthonormal
/// tangent frame, with u = F/|F| and forward differences for du.
pub fn degree_of_map<F>(grid: &SphereGrid, f: F, r: f64) -> Result<(f64, f64)>
where
    F: Fn(&[f64; 5]) -> Result<[f64; 5]>,
{
    let h = 1e-5;
    let mut acc = 0.0;
    let mut boundary_min = f64::INFINITY;
    for (p, x) in grid.nodes_x.iter().enumerate() {
        // oriented orthonormal frame of the tangent space at x
        let frame = tangent_frame(x);
        let xi: [f64; 5] = std::array::from_fn(|i| r * x[i]);
        let g = f(&xi)?;
        let gn = norm5(&g);
        boundary_min = boundary_min.min(gn);
        if gn == 0.0 {
            return Err(Sigma2Error::DegreeUnstable(format!(
                "map vanishes on the boundary sphere at radius {r}"
            )));
        }
        let u: [f64; 5] = std::array::from_fn(|i| g[i] / gn);
        let mut cols = Matrix5::zeros();
        for i in 0..5 {
            cols[(i, 0)] = u[i];
        }
        for (a, e) in frame.iter().enumerate() {
            // derivative of the normalized map along the boundary direction
            let mut xp = xi;
            for i in 0..5 {
                xp[i] += h * r * e[i];
            }
            let gp = f(&xp)?;
            let dg: [f64; 5] = std::array::from_fn(|i| (gp[i] - g[i]) / h);
            let radial: f64 = (0..5).map(|i| u[i] * dg[i]).sum();
            for i in 0..5 {
                cols[(i, a + 1)] = (dg[i] - radial * u[i]) / gn;
            }
        }
        acc += grid.node_weight[p] * cols.determinant();
    }
    Ok((acc / VOL_S4, boundary_min))
}

/// Orthonormal basis of the tangent space at x, oriented so that
/// det[x, e1, e2, e3, e4] = +1.
fn tangent_frame(x: &[f64; 5]) -> [[f64; 5]; 4] {
    // drop the axis most parallel to x, Gram-Schmidt the rest
    let drop = (0..5)
        .max_by(|&a, &b| x[a].abs().partial_cmp(&x[b].abs()).unwrap())
        .unwrap();
    let mut frame = [[0.0f64; 5]; 4];
    let mut idx = 0;
    for axis in 0..5 {
        if axis == drop {
            continue;
        }
        let mut e = [0.0f64; 5];
        e[axis] = 1.0;
        let xe: f64 = (0..5).map(|i| x[i] * e[i]).sum();
        for i in 0..5 {
            e[i] -= xe * x[i];
        }
        for prev in frame.iter().take(idx) {
            let pe: f64 = (0..5).map(|i| prev[i] * e[i]).sum();
            for i in 0..5 {
                e[i] -= pe * prev[i];
            }
        }
        let n = norm5(&e);
        for v in &mut e {
            *v /= n;
        }
        frame[idx] = e;
        idx += 1;
    }
    let mut m = Matrix5::zeros();
    for i in 0..5 {
        m[(i, 0)] = x[i];
        for a in 0..4 {
            m[(i, a + 1)] = frame[a][i];
        }
    }
    if m.determinant() < 0.0 {
        frame.swap(2, 3);
    }
    frame
}

/// Everything the degree criterion produces for one curvature candidate.
#[derive(Clone, Debug)]
pub struct DegreeReport {
    /// Accepted boundary radius.
    pub r: f64,
    pub degree: i64,
    /// Raw Kronecker integral before rounding.
    pub raw: f64,
    pub boundary_min: f64,
    /// Empirical quadrature error estimate for G on the boundary.
    pub err_est: f64,
    pub zeros: Vec<GZero>,
    pub zeros_complete: bool,
    /// Index sum over critical points of K with negative Laplacian, when K
    /// is Morse in the required sense; the failure reason otherwise.
    pub index_sum: std::result::Result<i64, String>,
    pub method: String,
}

/// Empirical boundary quadrature error: spread of G between the working
/// grid and a coarser one at a few probe points.
fn boundary_error_estimate(grid: &SphereGrid, k: &KSpec, r: f64) -> Result<f64> {
    let coarse = SphereGrid::shared(grid.l_max.saturating_sub(2).max(4))?;
    let probes = ball_seeds(1.0, 8);
    let mut worst = 0.0f64;
    for p in probes {
        let n = norm5(&p).max(1e-9);
        let xi: [f64; 5] = std::array::from_fn(|i| r * p[i] / n);
        let a = gmap_on_ball(grid, k, &xi)?;
        let b = gmap_on_ball(&coarse, k, &xi)?;
        let d: f64 = (0..5).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Brouwer degree of the ball map with adaptive boundary radius: the radius
/// ladder climbs toward the ball boundary until the boundary minimum of |G|
/// clears 10x the quadrature error estimate and the rounded degree agrees
/// at two consecutive radii. Cross-checked against the sign sum over the
/// complete zero list.
///
/// The Kronecker integrand is preconditioned with the inverse Jacobian at
/// the ball center: composing with a fixed linear map multiplies the degree
/// by the sign of its determinant, and the composed map G is close to an
/// isometry near its dominant zero, so the boundary integrand stays
/// resolvable even when the raw moment response is strongly anisotropic.
pub fn brouwer_degree(grid: &Arc<SphereGrid>, k: &KSpec) -> Result<DegreeReport> {
    let boundary = SphereGrid::shared(4)?;
    let j0 = gmap_gradient(grid, k, &[0.0; 5])?;
    let (precond, precond_sign) = match classify_zero(&j0) {
        (sign, _, false) => (j0.try_inverse().unwrap_or_else(Matrix5::identity), sign),
        _ => (Matrix5::identity(), 1),
    };

    let ladder = [0.35, 0.5, 0.65, 0.8, 0.9];
    let mut prev: Option<(f64, i64)> = None;
    let mut accepted: Option<(f64, i64, f64, f64, f64)> = None;
    let mut log = String::new();
    for &r in &ladder {
        let err = boundary_error_estimate(grid, k, r)?;
        let raw_min = std::cell::Cell::new(f64::INFINITY);
        let (raw, _) = degree_of_map(
            &boundary,
            |xi| {
                let g = gmap_on_ball(grid, k, xi)?;
                raw_min.set(raw_min.get().min(norm5(&g)));
                let v = precond * nalgebra::Vector5::from_column_slice(&g);
                Ok([v[0], v[1], v[2], v[3], v[4]])
            },
            r,
        )?;
        let bmin = raw_min.get();
        let rounded = raw.round();
        let integral_ok = (raw - rounded).abs() <= 0.15;
        let margin_ok = bmin > 10.0 * err.max(1e-14);
        log.push_str(&format!(
            "r={r}: raw={raw:.6} min|G|={bmin:.3e} err={err:.3e}{}{}; ",
            if margin_ok { "" } else { " [margin low]" },
            if integral_ok { "" } else { " [non-integral]" },
        ));
        if integral_ok && margin_ok {
            let deg = precond_sign * rounded as i64;
            if let Some((_, prev_deg)) = prev {
                if prev_deg == deg {
                    accepted = Some((r, deg, raw, bmin, err));
                    break;
                }
            }
            prev = Some((r, deg));
        } else {
            prev = None;
        }
    }
    let Some((r, degree, raw, boundary_min, err_est)) = accepted else {
        return Err(Sigma2Error::DegreeUnstable(format!(
            "no two consecutive radii produced a stable integer degree: {log}"
        )));
    };

    let (zeros, zeros_complete) = find_zeros(grid, k, r)?;
    if zeros.iter().any(|z| z.degenerate) {
        return Err(Sigma2Error::DegreeUnstable(
            "degenerate zero of G encountered; perturb the curvature candidate".into(),
        ));
    }
    let sign_sum: i64 = zeros.iter().map(|z| z.sign).sum();
    if zeros_complete && sign_sum != degree {
        return Err(Sigma2Error::DegreeUnstable(format!(
            "Kronecker degree {degree} disagrees with zero sign sum {sign_sum}: {log}"
        )));
    }
    let index_sum = critical_index_sum(grid, k)
        .map(|(s, _)| s)
        .map_err(|e| e.to_string());
    Ok(DegreeReport {
        r,
        degree,
        raw,
        boundary_min,
        err_est,
        zeros,
        zeros_complete,
        index_sum,
        method: format!(
            "kronecker integral, center-preconditioned (sign {precond_sign}), \
             boundary grid L={}, field grid L={}; {log}",
            boundary.l_max, grid.l_max
        ),
    })
}

/// A critical point of K on the sphere with its classification data.
#[derive(Clone, Copy, Debug)]
pub struct CriticalPoint {
    pub x: [f64; 5],
    pub laplacian: f64,
    /// sign det of the covariant Hessian on the tangent space; only
    /// populated (nonzero) for points entering the index sum.
    pub index: i64,
}

/// Covariant Hessian of the polynomial K at a sphere point, as the
/// tangential 5x5 matrix P (d^2 K) P - (x . grad K) P.
fn covariant_hessian(k: &KSpec, x: &[f64; 5]) -> Matrix5<f64> {
    let mut dd = Matrix5::zeros();
    for (expo, coeff) in &k.terms {
        for i in 0..5 {
            for j in 0..5 {
                let mut e = *expo;
                if e[i] == 0 {
                    continue;
                }
                let fi = e[i] as f64;
                e[i] -= 1;
                if e[j] == 0 {
                    continue;
                }
                let fj = e[j] as f64;
                e[j] -= 1;
                let mut mono = coeff * fi * fj;
                for (a, &p) in e.iter().enumerate() {
                    mono *= x[a].powi(p as i32);
                }
                dd[(i, j)] += mono;
            }
        }
    }
    let grad = k.gradient(x);
    let radial: f64 = (0..5).map(|i| grad[i] * x[i]).sum();
    let mut proj = Matrix5::identity();
    for i in 0..5 {
        for j in 0..5 {
            proj[(i, j)] -= x[i] * x[j];
        }
    }
    proj * dd * proj - radial * proj
}

/// Index sum over the critical points of K with negative Laplacian.
/// Requires the critical set to be finite and non-degenerate; degeneracy or
/// a vanishing Laplacian at a critical point is an error, never silently
/// repaired.
pub fn critical_index_sum(grid: &SphereGrid, k: &KSpec) -> Result<(i64, Vec<CriticalPoint>)> {
    let kmax = k.max_abs(grid).max(1.0);
    let grad_tol = 1e-11 * kmax;
    let mut points: Vec<[f64; 5]> = Vec::new();
    let mut degenerate_stalls = 0usize;

    for seed in ball_seeds(1.0, 320) {
        let n = norm5(&seed);
        if n < 1e-3 {
            continue;
        }
        let mut x: [f64; 5] = std::array::from_fn(|i| seed[i] / n);
        let mut converged = false;
        for _ in 0..60 {
            let g = k.sphere_gradient(&x);
            let gn = norm5(&g);
            if gn <= grad_tol {
                converged = true;
                break;
            }
            let hess = covariant_hessian(k, &x);
            // bordered tangent-space Newton step: solve on {x}-orthogonal
            let mut sys = nalgebra::Matrix6::zeros();
            for i in 0..5 {
                for j in 0..5 {
                    sys[(i, j)] = hess[(i, j)];
                }
                sys[(i, 5)] = x[i];
                sys[(5, i)] = x[i];
            }
            let mut rhs = nalgebra::Vector6::zeros();
            for i in 0..5 {
                rhs[i] = -g[i];
            }
            let Some(step) = sys.lu().solve(&rhs) else {
                degenerate_stalls += 1;
                break;
            };
            let mut alpha = 1.0f64;
            let mut advanced = false;
            while alpha >= 1e-6 {
                let mut cand = [0.0f64; 5];
                for i in 0..5 {
                    cand[i] = x[i] + alpha * step[i];
                }
                let cn = norm5(&cand);
                for v in &mut cand {
                    *v /= cn;
                }
                if norm5(&k.sphere_gradient(&cand)) < gn {
                    x = cand;
                    advanced = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !advanced {
                break;
            }
        }
        if converged
            && !points.iter().any(|p| {
                let d: f64 = (0..5).map(|i| (p[i] - x[i]).powi(2)).sum::<f64>().sqrt();
                d < 1e-6
            })
        {
            points.push(x);
        }
    }

    if points.is_empty() {
        return Err(Sigma2Error::DegreeUnstable(format!(
            "no non-degenerate critical points of the curvature candidate found \
             ({degenerate_stalls} searches stalled on a singular Hessian system)"
        )));
    }

    // non-degeneracy screening and classification
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::with_capacity(points.len());
    let mut sum = 0i64;
    for x in points {
        let hess = covariant_hessian(k, &x);
        let lap = hess.trace();
        // tangent-restricted determinant through an orthonormal frame
        let frame = tangent_frame(&x);
        let mut h4 = Matrix4::zeros();
        for a in 0..4 {
            for b in 0..4 {
                let mut v = 0.0;
                for i in 0..5 {
                    for j in 0..5 {
                        v += frame[a][i] * hess[(i, j)] * frame[b][j];
                    }
                }
                h4[(a, b)] = v;
            }
        }
        let det = h4.determinant();
        let scale = h4.abs().max().max(f64::MIN_POSITIVE);
        if det.abs() < 1e-10 * scale.powi(4) {
            return Err(Sigma2Error::DegreeUnstable(format!(
                "degenerate critical point at ({:.4}, {:.4}, {:.4}, {:.4}, {:.4})",
                x[0], x[1], x[2], x[3], x[4]
            )));
        }
        if lap.abs() < 1e-8 * kmax {
            return Err(Sigma2Error::DegreeUnstable(format!(
                "critical point with vanishing Laplacian at ({:.4}, {:.4}, {:.4}, {:.4}, {:.4})",
                x[0], x[1], x[2], x[3], x[4]
            )));
        }
        let index = if lap < 0.0 {
            let s = if det > 0.0 { 1 } else { -1 };
            sum += s;
            s
        } else {
            0
        };
        out.push(CriticalPoint {
            x,
            laplacian: lap,
            index,
        });
    }
    Ok((sum, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid6() -> Arc<SphereGrid> {
        SphereGrid::shared(6).unwrap()
    }

    #[test]
    fn constant_curvature_has_no_moment() {
        let grid = grid6();
        for (p, t) in [([0.0, 0.0, 0.0, 0.0, 1.0], 1.0), ([0.6, 0.0, 0.8, 0.0, 0.0], 2.5)] {
            let g = gmap(&grid, &KSpec::constant6(), p, t).unwrap();
            assert!(norm5(&g) < 1e-12, "constant moment {:?}", g);
        }
    }

    #[test]
    fn linear_curvature_moment_anchors() {
        let grid = grid6();
        let k = KSpec::linear_eps(1.0);
        let g = gmap(&grid, &k, [0.0, 0.0, 0.0, 0.0, 1.0], 1.0).unwrap();
        for j in 0..4 {
            assert!(g[j].abs() < 1e-13);
        }
        assert!((g[4] - 0.2).abs() < 1e-12, "moment {}", g[4]);

        // identity in ball coordinates
        let g0 = gmap_on_ball(&grid, &k, &[0.0; 5]).unwrap();
        assert!((g0[4] - 0.2).abs() < 1e-12);

        // concentration kills the moment monotonically
        let mut prev = f64::INFINITY;
        for t in [2.0, 4.0, 8.0] {
            let g = gmap(&grid, &k, [0.0, 0.0, 0.0, 0.0, 1.0], t).unwrap();
            let n = norm5(&g);
            assert!(n > 1e-4, "moment collapsed too early at t={t}");
            assert!(n < prev, "moment not decreasing at t={t}");
            prev = n;
        }
    }

    #[test]
    fn gradient_matches_richardson_refinement() {
        let grid = grid6();
        let k = KSpec::linear_eps(1.0);
        let jac = gmap_gradient(&grid, &k, &[0.0; 5]).unwrap();
        // Richardson: D(h) with h and h/2 combined to fourth order
        let h = 2e-4;
        for c in 0..5 {
            for r in 0..5 {
                let probe = |step: f64| {
                    let mut xp = [0.0; 5];
                    let mut xm = [0.0; 5];
                    xp[c] += step;
                    xm[c] -= step;
                    let gp = gmap_on_ball(&grid, &k, &xp).unwrap();
                    let gm = gmap_on_ball(&grid, &k, &xm).unwrap();
                    (gp[r] - gm[r]) / (2.0 * step)
                };
                let d1 = probe(h);
                let d2 = probe(h / 2.0);
                let richardson = (4.0 * d2 - d1) / 3.0;
                assert!(
                    (jac[(r, c)] - richardson).abs() < 1e-7 * (1.0 + richardson.abs()),
                    "entry ({r},{c}): {} vs {richardson}",
                    jac[(r, c)]
                );
            }
        }
    }

    #[test]
    fn even_candidates_vanish_at_the_center() {
        let grid = grid6();
        for k in [KSpec::morse(), KSpec::even_axial()] {
            let g = gmap_on_ball(&grid, &k, &[0.0; 5]).unwrap();
            assert!(norm5(&g) < 1e-12, "even candidate has center moment {g:?}");
        }
    }

    #[test]
    fn rotation_equivariance_under_coordinate_cycles() {
        let grid = grid6();
        // rho cycles coordinates (x1..x5) -> (x2,x3,x4,x5,x1): an even
        // permutation, hence a rotation; K∘rho permutes exponent vectors
        let k = KSpec::morse();
        let rotated = KSpec::from_terms(
            "morse-rotated",
            k.terms
                .iter()
                .map(|(e, c)| ([e[1], e[2], e[3], e[4], e[0]], *c))
                .collect(),
        );
        let p = [0.0, 0.6, 0.0, 0.8, 0.0];
        let rho_inv_p = [0.6, 0.0, 0.8, 0.0, 0.0];
        let t = 1.5;
        let g = gmap(&grid, &k, p, t).unwrap();
        let gr = gmap(&grid, &rotated, rho_inv_p, t).unwrap();
        // rho^{-1} of g permutes components the same way as the exponents
        let want = [g[1], g[2], g[3], g[4], g[0]];
        for j in 0..5 {
            assert!(
                (gr[j] - want[j]).abs() < 1e-10,
                "component {j}: {} vs {}",
                gr[j],
                want[j]
            );
        }
    }

    #[test]
    fn affine_maps_pin_the_kronecker_integral() {
        let grid = grid6();
        let (raw, bmin) = degree_of_map(&grid, |xi| Ok(*xi), 0.7).unwrap();
        assert!((raw - 1.0).abs() < 1e-10, "identity degree {raw}");
        assert!((bmin - 0.7).abs() < 1e-12);

        let (raw, _) = degree_of_map(
            &grid,
            |xi| Ok([-xi[0], xi[1], xi[2], xi[3], xi[4]]),
            0.7,
        )
        .unwrap();
        assert!((raw + 1.0).abs() < 1e-10, "reflection degree {raw}");

        // a shifted zero keeps degree 1 while it stays inside the ball;
        // the integrand is now genuinely curved, so quadrature truncation
        // shows up at the 1e-6 level on this grid
        let (raw, _) = degree_of_map(
            &grid,
            |xi| Ok([xi[0] - 0.3, xi[1], xi[2], xi[3], xi[4]]),
            0.7,
        )
        .unwrap();
        assert!((raw - 1.0).abs() < 1e-4, "shifted-zero degree {raw}");
        // ... and drops to 0 once the zero is outside
        let (raw, _) = degree_of_map(
            &grid,
            |xi| Ok([xi[0] - 0.9, xi[1], xi[2], xi[3], xi[4]]),
            0.7,
        )
        .unwrap();
        assert!(raw.abs() < 0.05, "exterior-zero degree {raw}");
    }

    #[test]
    fn obstructed_linear_candidate_has_empty_zero_set_and_degree_zero() {
        let grid = grid6();
        let k = KSpec::linear_eps(0.5);
        let (zeros, _complete) = find_zeros(&grid, &k, 0.9).unwrap();
        assert!(zeros.is_empty(), "unexpected zeros {zeros:?}");
        let report = brouwer_degree(&grid, &k).unwrap();
        assert_eq!(report.degree, 0);
        assert!(report.boundary_min > 0.0);
        assert_eq!(report.index_sum.as_ref().unwrap(), &1);
    }

    #[test]
    fn even_candidates_have_central_zero_with_unit_degree() {
        let grid = grid6();
        for k in [KSpec::even_axial(), KSpec::morse()] {
            let (zeros, complete) = find_zeros(&grid, &k, 0.5).unwrap();
            assert!(complete, "zero search left stragglers for {}", k.name);
            assert_eq!(zeros.len(), 1, "zeros of {}: {zeros:?}", k.name);
            assert!(norm5(&zeros[0].xi) < 1e-7, "central zero drifted");
            assert!(!zeros[0].degenerate);
            let report = brouwer_degree(&grid, &k).unwrap();
            assert_eq!(
                report.degree,
                zeros[0].sign,
                "degree vs sign sum for {}",
                k.name
            );
        }
    }

    #[test]
    fn morse_candidate_index_sum_matches_coefficient_oracle() {
        let grid = grid6();
        let k = KSpec::morse();
        let (sum, points) = critical_index_sum(&grid, &k).unwrap();
        // oracle: critical points of sum a_j x_j^2 on the sphere are the
        // coordinate axes; the tangent Hessian at ±e_j has eigenvalues
        // 2(a_i - a_j), so the index sign is the product over i != j
        let a = crate::kspec::MORSE_COEFFS;
        let mut want_sum = 0i64;
        let mut negatives = 0usize;
        for j in 0..5 {
            let lap: f64 = 2.0 * a.iter().sum::<f64>() - 10.0 * a[j];
            if lap < 0.0 {
                let mut prod = 1.0f64;
                for i in 0..5 {
                    if i != j {
                        prod *= a[i] - a[j];
                    }
                }
                want_sum += 2 * if prod > 0.0 { 1 } else { -1 };
                negatives += 2;
            }
        }
        assert_eq!(sum, want_sum);
        assert_eq!(points.len(), 10, "expected all ±e_j: {points:?}");
        assert_eq!(
            points.iter().filter(|p| p.index != 0).count(),
            negatives
        );
        for p in &points {
            let off_axis = p
                .x
                .iter()
                .filter(|v| v.abs() > 1e-8)
                .count();
            assert_eq!(off_axis, 1, "critical point off axis: {:?}", p.x);
        }
    }

    #[test]
    fn degenerate_critical_sets_are_refused() {
        let grid = grid6();
        // the axially even candidate has an equatorial critical 3-sphere
        match critical_index_sum(&grid, &KSpec::even_axial()) {
            Err(Sigma2Error::DegreeUnstable(msg)) => {
                assert!(msg.contains("degenerate"), "unexpected message {msg}");
            }
            other => panic!("expected degeneracy refusal, got {other:?}"),
        }
        // constant curvature has no critical structure at all
        assert!(critical_index_sum(&grid, &KSpec::constant6()).is_err());
    }

    #[test]
    fn degenerate_jacobian_is_flagged_not_signed() {
        let mut jac = Matrix5::identity();
        jac[(4, 4)] = 1e-14;
        let (sign, _, degenerate) = classify_zero(&jac);
        assert!(degenerate);
        assert_eq!(sign, 0);
        let (sign, _, degenerate) = classify_zero(&Matrix5::identity());
        assert!(!degenerate);
        assert_eq!(sign, 1);
    }
}
