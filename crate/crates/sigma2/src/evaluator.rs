//! Dense monomial representation and staged nodal evaluation.
//!
//! Every basis coefficient vector expands into a dense vector of monomial
//! coefficients `c_a` over exponents `a = (a1..a5)` with `|a| <= l_max`
//! (ranked by [`crate::grid::ExpIndexer`]). Ambient partial derivatives are
//! exponent shifts on that vector, which is what makes gradients and
//! Hessians of spectral fields exact: no finite differences anywhere.
//!
//! Nodal evaluation exploits the product structure of the grid. At a node,
//!
//! ```text
//!   x^a = [u1^{a5} s1^{a1+a2+a3+a4}] * [u2^{a4} s2^{a1+a2+a3}]
//!       * [u3^{a3} s3^{a1+a2}] * [cos^{a2} sin^{a1}](phi)
//! ```
//!
//! so summing over exponents one factor at a time — a5, then a4, then a3,
//! then the trig pair (a1, a2) through its Fourier form — costs
//! `O(#monomials * n + #pairs * n^3)` per field instead of the naive
//! `O(#monomials * #nodes)`. Runs of zero coefficients are skipped at every
//! stage, so applying the same machinery to a single basis column (whose
//! monomial support is one symmetry block) stays cheap; that is what keeps
//! dense operator assembly affordable.

use crate::grid::{axpy, SphereGrid};

/// Fourier modes whose amplitude is below this (relative to the largest
/// mode) are dropped before azimuthal synthesis. Exact-arithmetic zeros
/// reappear as roundoff crumbs when a sparse polynomial is pushed through
/// the stages; skipping them saves the full azimuth loop and perturbs the
/// result by less than the crumbs themselves.
const MODE_PRUNE_REL: f64 = 1e-14;

/// Scratch buffers for [`SphereGrid::eval_mono_into`]; reuse across calls.
#[derive(Debug)]
pub struct EvalWorkspace {
    va: Vec<f64>,
    tri: Vec<f64>,
    pair: Vec<f64>,
    mode_c: Vec<f64>,
    mode_s: Vec<f64>,
}

impl EvalWorkspace {
    pub fn new(grid: &SphereGrid) -> Self {
        let n = grid.n_polar;
        let np = grid.n_polar_nodes();
        EvalWorkspace {
            va: vec![0.0; n],
            tri: vec![0.0; n * n],
            pair: vec![0.0; np],
            mode_c: vec![0.0; (grid.l_max + 1) * np],
            mode_s: vec![0.0; (grid.l_max + 1) * np],
        }
    }
}

impl SphereGrid {
    /// Length of dense monomial vectors for this grid.
    pub fn mono_len(&self) -> usize {
        self.idx_field.len()
    }

    /// Dense monomial expansion of a basis coefficient vector.
    pub fn mono_from_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let span = self.spanning_coeffs(coeffs);
        let mut out = vec![0.0; self.mono_len()];
        for (b, sc) in self.blocks.iter().zip(&span) {
            for (t, &c) in b.mono.iter().zip(sc) {
                if c == 0.0 {
                    continue;
                }
                for (&i, &v) in t.idx.iter().zip(&t.val) {
                    out[i as usize] += c * v;
                }
            }
        }
        out
    }

    /// Dense monomial expansion of a single basis function.
    pub fn mono_from_column(&self, g: usize) -> Vec<f64> {
        let (bi, ci) = self.global_cols[g];
        let b = &self.blocks[bi as usize];
        let nt = b.tuples.len();
        let combo = &b.combo[ci as usize * nt..(ci as usize + 1) * nt];
        let mut out = vec![0.0; self.mono_len()];
        for (t, &c) in b.mono.iter().zip(combo) {
            if c == 0.0 {
                continue;
            }
            for (&i, &v) in t.idx.iter().zip(&t.val) {
                out[i as usize] += c * v;
            }
        }
        out
    }

    /// Ambient partial derivative d/dx_{dir+1} as an exponent shift.
    pub fn mono_derivative(&self, mono: &[f64], dir: usize) -> Vec<f64> {
        let mut out = vec![0.0; mono.len()];
        self.mono_derivative_into(mono, dir, &mut out);
        out
    }

    pub fn mono_derivative_into(&self, mono: &[f64], dir: usize, out: &mut [f64]) {
        assert!(dir < 5);
        assert_eq!(mono.len(), self.mono_len());
        assert_eq!(out.len(), self.mono_len());
        out.fill(0.0);
        let ix = &self.idx_field;
        ix.for_each(|i, a| {
            let c = mono[i];
            if c == 0.0 || a[dir] == 0 {
                return;
            }
            let mut b = a;
            b[dir] -= 1;
            out[ix.index(b)] = c * a[dir] as f64;
        });
    }

    /// Nodal values of a dense monomial vector.
    pub fn eval_mono(&self, mono: &[f64], ws: &mut EvalWorkspace) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes()];
        self.eval_mono_into(mono, ws, &mut out);
        out
    }

    /// Staged contraction: fold a5, a4, a3, then the azimuthal pair.
    pub fn eval_mono_into(&self, mono: &[f64], ws: &mut EvalWorkspace, out: &mut [f64]) {
        let d = self.l_max;
        let n = self.n_polar;
        let np = self.n_polar_nodes();
        let stride = self.deg_tab + 1;
        assert_eq!(mono.len(), self.mono_len());
        assert_eq!(out.len(), self.n_nodes());

        let EvalWorkspace {
            va,
            tri,
            pair,
            mode_c,
            mode_s,
        } = ws;
        mode_c.fill(0.0);
        mode_s.fill(0.0);

        let mut pos = 0usize; // cursor over the contiguous a5-runs
        for a1 in 0..=d {
            for a2 in 0..=d - a1 {
                let mut pair_live = false;
                for a3 in 0..=d - a1 - a2 {
                    let mut tri_live = false;
                    for a4 in 0..=d - a1 - a2 - a3 {
                        let run_len = d - a1 - a2 - a3 - a4 + 1;
                        let run = &mono[pos..pos + run_len];
                        pos += run_len;
                        if run.iter().all(|&c| c == 0.0) {
                            continue;
                        }
                        // Fold a5 against powers of u1, weigh by s1^{a1+..+a4}.
                        let s1r = &self.s_pow_t[0][(a1 + a2 + a3 + a4) * n..][..n];
                        for i1 in 0..n {
                            let urow = &self.u_pow[0][i1 * stride..i1 * stride + run_len];
                            let mut acc = 0.0;
                            for (c, u) in run.iter().zip(urow) {
                                acc += c * u;
                            }
                            va[i1] = acc * s1r[i1];
                        }
                        // Fold a4 against powers of u2.
                        if !tri_live {
                            tri.fill(0.0);
                            tri_live = true;
                        }
                        let u2r = &self.u_pow_t[1][a4 * n..][..n];
                        for i1 in 0..n {
                            let v = va[i1];
                            let row = &mut tri[i1 * n..][..n];
                            for (r, u) in row.iter_mut().zip(u2r) {
                                *r += v * u;
                            }
                        }
                    }
                    if !tri_live {
                        continue;
                    }
                    // Fold a3: weigh by s2^{a1+a2+a3}, expand along u3.
                    if !pair_live {
                        pair.fill(0.0);
                        pair_live = true;
                    }
                    let s2r = &self.s_pow_t[1][(a1 + a2 + a3) * n..][..n];
                    let u3r = &self.u_pow_t[2][a3 * n..][..n];
                    for i1 in 0..n {
                        for i2 in 0..n {
                            let t = tri[i1 * n + i2] * s2r[i2];
                            if t == 0.0 {
                                continue;
                            }
                            let row = &mut pair[(i1 * n + i2) * n..][..n];
                            for (r, u) in row.iter_mut().zip(u3r) {
                                *r += t * u;
                            }
                        }
                    }
                }
                if !pair_live {
                    continue;
                }
                // Weigh by s3^{a1+a2} and scatter the pair's Fourier form.
                let s3r = &self.s_pow_t[2][(a1 + a2) * n..][..n];
                for i12 in 0..n * n {
                    let row = &mut pair[i12 * n..][..n];
                    for (r, s) in row.iter_mut().zip(s3r) {
                        *r *= s;
                    }
                }
                for &(mode, cc, cs) in &self.trig_pairs[&(a1, a2)] {
                    if cc != 0.0 {
                        axpy(&mut mode_c[mode * np..][..np], cc, pair);
                    }
                    if cs != 0.0 {
                        axpy(&mut mode_s[mode * np..][..np], cs, pair);
                    }
                }
            }
        }
        debug_assert_eq!(pos, mono.len());

        self.synthesize_modes_pruned_into(mode_c, mode_s, out);
    }

    /// Azimuthal synthesis that skips negligible modes (see
    /// [`MODE_PRUNE_REL`]).
    fn synthesize_modes_pruned_into(&self, mode_c: &[f64], mode_s: &[f64], out: &mut [f64]) {
        let np = self.n_polar_nodes();
        let m = self.m_azimuth;
        let nmu = self.l_max + 1;

        let mut mode_max = vec![0.0f64; nmu];
        let mut global: f64 = 0.0;
        for mu in 0..nmu {
            let mut mx: f64 = 0.0;
            for p in 0..np {
                mx = mx
                    .max(mode_c[mu * np + p].abs())
                    .max(mode_s[mu * np + p].abs());
            }
            mode_max[mu] = mx;
            global = global.max(mx);
        }
        let thr = MODE_PRUNE_REL * global;

        out.fill(0.0);
        for p in 0..np {
            let run = &mut out[p * m..(p + 1) * m];
            for mu in 0..nmu {
                if mode_max[mu] <= thr {
                    continue;
                }
                let c = mode_c[mu * np + p];
                let s = mode_s[mu * np + p];
                if c == 0.0 && s == 0.0 {
                    continue;
                }
                let ct = &self.cos_tab[mu * m..][..m];
                let st = &self.sin_tab[mu * m..][..m];
                if s == 0.0 {
                    for (r, t) in run.iter_mut().zip(ct) {
                        *r += c * t;
                    }
                } else if c == 0.0 {
                    for (r, t) in run.iter_mut().zip(st) {
                        *r += s * t;
                    }
                } else {
                    for l in 0..m {
                        run[l] += c * ct[l] + s * st[l];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Pointwise oracle: evaluate the monomial sum directly at each node.
    fn direct_eval(g: &SphereGrid, mono: &[f64]) -> Vec<f64> {
        let mut terms: Vec<([usize; 5], f64)> = Vec::new();
        g.idx_field.for_each(|i, a| {
            if mono[i] != 0.0 {
                terms.push((a, mono[i]));
            }
        });
        g.nodes_x
            .iter()
            .map(|x| {
                terms
                    .iter()
                    .map(|&(a, c)| {
                        c * x
                            .iter()
                            .zip(a.iter())
                            .map(|(&xi, &ai)| xi.powi(ai as i32))
                            .product::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn staged_eval_matches_pointwise_oracle() {
        let g = SphereGrid::new(5).unwrap();
        let mut ws = EvalWorkspace::new(&g);
        let mut rng = StdRng::seed_from_u64(42);
        let mut mono = vec![0.0; g.mono_len()];
        for _ in 0..40 {
            let i = rng.gen_range(0..mono.len());
            mono[i] = rng.gen_range(-1.0..1.0);
        }
        let fast = g.eval_mono(&mono, &mut ws);
        let slow = direct_eval(&g, &mono);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn hand_polynomial_and_derivatives() {
        // p = x1^2 x5 - 3 x3 + 2, dp/dx1 = 2 x1 x5, dp/dx3 = -3.
        let g = SphereGrid::new(4).unwrap();
        let mut ws = EvalWorkspace::new(&g);
        let ix = &g.idx_field;
        let mut mono = vec![0.0; g.mono_len()];
        mono[ix.index([2, 0, 0, 0, 1])] = 1.0;
        mono[ix.index([0, 0, 1, 0, 0])] = -3.0;
        mono[ix.index([0, 0, 0, 0, 0])] = 2.0;

        let vals = g.eval_mono(&mono, &mut ws);
        for (v, x) in vals.iter().zip(&g.nodes_x) {
            let want = x[0] * x[0] * x[4] - 3.0 * x[2] + 2.0;
            assert!((v - want).abs() < 1e-13);
        }

        let d1 = g.eval_mono(&g.mono_derivative(&mono, 0), &mut ws);
        for (v, x) in d1.iter().zip(&g.nodes_x) {
            assert!((v - 2.0 * x[0] * x[4]).abs() < 1e-13);
        }
        let d3 = g.eval_mono(&g.mono_derivative(&mono, 2), &mut ws);
        for v in &d3 {
            assert!((v + 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn mono_expansion_agrees_with_synthesis() {
        let g = SphereGrid::new(6).unwrap();
        let mut ws = EvalWorkspace::new(&g);
        let coeffs: Vec<f64> = (0..g.n_basis)
            .map(|k| ((k * 2654435761 % 1000) as f64 / 500.0) - 1.0)
            .collect();
        let via_mono = g.eval_mono(&g.mono_from_coeffs(&coeffs), &mut ws);
        let via_synth = g.synthesize(&coeffs);
        let scale = via_synth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in via_mono.iter().zip(&via_synth) {
            assert!((a - b).abs() < 1e-10 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn single_column_mono_matches_basis_values() {
        let g = SphereGrid::new(5).unwrap();
        let mut ws = EvalWorkspace::new(&g);
        for &g_col in &[0usize, 3, 17, 54, 100] {
            let via_mono = g.eval_mono(&g.mono_from_column(g_col), &mut ws);
            let direct = g.basis_nodal(g_col);
            for (a, b) in via_mono.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10, "column {g_col}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn euler_identity_for_exponent_shifts() {
        // sum_i x_i d_i p must equal the degree-scaled polynomial.
        let g = SphereGrid::new(6).unwrap();
        let mut ws = EvalWorkspace::new(&g);
        let mut rng = StdRng::seed_from_u64(7);
        let coeffs: Vec<f64> = (0..g.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mono = g.mono_from_coeffs(&coeffs);

        let mut combo = vec![0.0; g.n_nodes()];
        for dir in 0..5 {
            let dv = g.eval_mono(&g.mono_derivative(&mono, dir), &mut ws);
            for ((acc, v), x) in combo.iter_mut().zip(&dv).zip(&g.nodes_x) {
                *acc += x[dir] * v;
            }
        }

        let mut scaled = mono.clone();
        g.idx_field.for_each(|i, a| {
            scaled[i] *= a.iter().sum::<usize>() as f64;
        });
        let want = g.eval_mono(&scaled, &mut ws);
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in combo.iter().zip(&want) {
            assert!((a - b).abs() < 1e-11 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let g = SphereGrid::new(5).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let coeffs: Vec<f64> = (0..g.n_basis).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mono = g.mono_from_coeffs(&coeffs);
        for (i, j) in [(0usize, 2usize), (1, 4), (3, 4)] {
            let dij = g.mono_derivative(&g.mono_derivative(&mono, i), j);
            let dji = g.mono_derivative(&g.mono_derivative(&mono, j), i);
            for (a, b) in dij.iter().zip(&dji) {
                assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }
    }
}
