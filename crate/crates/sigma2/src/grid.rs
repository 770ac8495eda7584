//! Product-quadrature grid on S^4 and its degree-labelled orthonormal basis.
//!
//! Nodes are the tensor product of three polar Gauss rules and a uniform
//! azimuth, matched to the hyperspherical factorization of the measure:
//!
//! ```text
//!   x5 = u1,  x4 = s1 u2,  x3 = s1 s2 u3,  (x2, x1) = s1 s2 s3 (cos, sin) phi
//!   dV = (1-u1^2) du1 (1-u2^2)^{1/2} du2 du3 dphi,   s_k = sqrt(1-u_k^2)
//! ```
//!
//! With `n = l_max + 2` polar points per direction and `m = 2 l_max + 4`
//! azimuth points, products of two basis functions (total degree
//! `2 l_max + 3`) integrate exactly, so Gram matrices and projections carry
//! no aliasing error.
//!
//! The basis itself is built block-by-block (see [`crate::blocks`]): inside a
//! block, spanning functions are orthonormalized in ascending polynomial
//! degree with within-degree pivoting. An accepted function is orthogonal to
//! every span of lower degree but lies in a degree-`l` polynomial span, hence
//! is an *exact* spherical harmonic of degree `l`. The acceptance counts per
//! block and degree are known in closed form, which turns rank decisions
//! into hard checks instead of floating-point guesses.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex, OnceLock};

use crate::blocks::{
    block_rank_at_degree, enumerate_blocks, enumerate_tuples, harmonic_dim, legendre_coeffs,
    legendre_values, tuple_monomials, BlockKey, SpanTuple, Trig,
};
use crate::error::{Result, Sigma2Error};
use crate::quadrature::{gauss_symmetric, uniform_azimuth, Rule1D};
use crate::util::{neumaier_sum, VOL_S4};

/// Sparse vector over a monomial exponent index (see [`ExpIndexer`]).
#[derive(Debug, Clone, Default)]
pub struct SparseVec {
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

/// Ranking of exponent tuples `(a1..a5)` with bounded total degree, nested
/// lexicographically so that the last exponent runs contiguously. Stage-based
/// kernels rely on that layout.
#[derive(Debug, Clone)]
pub struct ExpIndexer {
    pub deg: usize,
    /// prefix[k][t][a] = number of k-variable tuples with total <= t and
    /// first exponent < a.
    prefix: Vec<Vec<Vec<usize>>>,
}

impl ExpIndexer {
    pub fn new(deg: usize) -> Self {
        // counts[k][t] = C(t + k, k), tuples of k exponents with sum <= t.
        let mut counts = vec![vec![1usize; deg + 1]; 6];
        for k in 1..6 {
            for t in 0..=deg {
                counts[k][t] = if t == 0 {
                    1
                } else {
                    counts[k][t - 1] + counts[k - 1][t]
                };
            }
        }
        // prefix[k][t][a]: k-variable tuples with sum <= t and first
        // exponent < a.
        let mut prefix = vec![Vec::new(); 6];
        for k in 2..6 {
            let mut per_t = Vec::with_capacity(deg + 1);
            for t in 0..=deg {
                let mut row = Vec::with_capacity(t + 2);
                let mut acc = 0usize;
                row.push(0);
                for b in 0..=t {
                    acc += counts[k - 1][t - b];
                    row.push(acc);
                }
                per_t.push(row);
            }
            prefix[k] = per_t;
        }
        ExpIndexer { deg, prefix }
    }

    /// Total number of exponent tuples.
    pub fn len(&self) -> usize {
        self.prefix[5][self.deg][self.deg + 1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, a: [usize; 5]) -> usize {
        let d = self.deg;
        let mut idx = self.prefix[5][d][a[0]];
        let mut rem = d - a[0];
        idx += self.prefix[4][rem][a[1]];
        rem -= a[1];
        idx += self.prefix[3][rem][a[2]];
        rem -= a[2];
        idx += self.prefix[2][rem][a[3]];
        idx + a[4]
    }

    /// Visit all tuples in index order.
    pub fn for_each(&self, mut f: impl FnMut(usize, [usize; 5])) {
        let d = self.deg;
        let mut i = 0usize;
        for a1 in 0..=d {
            for a2 in 0..=d - a1 {
                for a3 in 0..=d - a1 - a2 {
                    for a4 in 0..=d - a1 - a2 - a3 {
                        for a5 in 0..=d - a1 - a2 - a3 - a4 {
                            f(i, [a1, a2, a3, a4, a5]);
                            i += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Orthonormalized basis functions of one symmetry block.
#[derive(Debug)]
pub struct BlockBasis {
    pub key: BlockKey,
    pub tuples: Vec<SpanTuple>,
    pub n_cols: usize,
    /// Polar parts, column-major `n_polar^3 x n_cols`. The full basis
    /// function is `q[:, k] * cos(mu phi)` (or sin).
    pub q: Vec<f64>,
    /// Harmonic degree of each column.
    pub labels: Vec<usize>,
    /// Expansion of each column over the block's spanning tuples,
    /// column-major `tuples.len() x n_cols`.
    pub combo: Vec<f64>,
    /// Monomial expansion of each spanning tuple (degree-`l_max` indexer).
    pub mono: Vec<SparseVec>,
}

/// Grid + basis bundle. Heavy to build; share via [`SphereGrid::shared`].
pub struct SphereGrid {
    pub l_max: usize,
    pub n_polar: usize,
    pub m_azimuth: usize,

    pub rule_u1: Rule1D,
    pub rule_u2: Rule1D,
    pub rule_u3: Rule1D,

    /// Cartesian coordinates per node, polar-major, azimuth fastest.
    pub nodes_x: Vec<[f64; 5]>,
    /// Quadrature weight per node.
    pub node_weight: Vec<f64>,
    /// Product polar weight w1 w2 w3 per polar node.
    pub polar_weight: Vec<f64>,

    // Per-direction power tables of the Gauss nodes u and of
    // s = sqrt(1 - u^2), up to degree 2 l_max + 3. `u_pow` is node-major
    // ([i * (deg_tab + 1) + power]); the `_t` variants are power-major
    // ([power * n + i]), the layout the staged evaluator streams through.
    pub(crate) deg_tab: usize,
    pub(crate) u_pow: [Vec<f64>; 3],
    pub(crate) u_pow_t: [Vec<f64>; 3],
    pub(crate) s_pow_t: [Vec<f64>; 3],

    /// cos/sin(mu * phi_l) tables, `[mu * m_azimuth + l]`, mu <= deg_tab.
    pub(crate) cos_tab: Vec<f64>,
    pub(crate) sin_tab: Vec<f64>,

    /// Fourier expansion of cos^a2 sin^a1: per pair (lex in (a1, a2),
    /// a1 + a2 <= deg_tab), a list of (mode, cos-coeff, sin-coeff).
    pub(crate) trig_pairs: HashMap<(usize, usize), Vec<(usize, f64, f64)>>,

    pub blocks: Vec<BlockBasis>,
    pub n_basis: usize,
    /// Global column -> (block index, column inside block).
    pub global_cols: Vec<(u32, u32)>,
    /// Harmonic degree per global column.
    pub ell: Vec<usize>,
    /// Degree band boundaries: columns of degree l occupy
    /// `ell_offsets[l] .. ell_offsets[l + 1]`.
    pub ell_offsets: Vec<usize>,

    /// Moment matrix of the five degree-1 columns: `xmat[j][k] = int x_j b_k`.
    pub xmat: [[f64; 5]; 5],

    /// Orthonormalization health: (smallest accepted pivot, largest rejected
    /// residual) across all blocks, after column pre-normalization.
    pub qr_gap: (f64, f64),

    /// Monomial exponent indexer for field-degree polynomials.
    pub idx_field: ExpIndexer,
}

impl std::fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SphereGrid")
            .field("l_max", &self.l_max)
            .field("n_polar", &self.n_polar)
            .field("m_azimuth", &self.m_azimuth)
            .field("n_basis", &self.n_basis)
            .finish()
    }
}

#[inline]
fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut cw = w.chunks_exact(4);
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for ((w4, a4), b4) in (&mut cw).zip(&mut ca).zip(&mut cb) {
        acc[0] += w4[0] * a4[0] * b4[0];
        acc[1] += w4[1] * a4[1] * b4[1];
        acc[2] += w4[2] * a4[2] * b4[2];
        acc[3] += w4[3] * a4[3] * b4[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for ((w1, a1), b1) in cw.remainder().iter().zip(ca.remainder()).zip(cb.remainder()) {
        s += w1 * a1 * b1;
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl SphereGrid {
    /// Canonical resolution for truncation degree `l_max`.
    pub fn new(l_max: usize) -> Result<Self> {
        Self::with_resolution(l_max, l_max + 2, 2 * l_max + 4)
    }

    /// Grid with explicit resolution. `n_polar >= l_max + 2` and
    /// `m_azimuth >= 2 l_max + 2` keep basis Gram matrices alias-free.
    pub fn with_resolution(l_max: usize, n_polar: usize, m_azimuth: usize) -> Result<Self> {
        if l_max < 2 {
            return Err(Sigma2Error::InvalidArgument(
                "truncation degree must be at least 2".into(),
            ));
        }
        if n_polar < l_max + 2 || m_azimuth < 2 * l_max + 2 {
            return Err(Sigma2Error::InvalidArgument(format!(
                "resolution too small for degree {l_max}: need n >= {}, m >= {}",
                l_max + 2,
                2 * l_max + 2
            )));
        }

        let rule_u1 = gauss_symmetric(n_polar, 1.0);
        let rule_u2 = gauss_symmetric(n_polar, 0.5);
        let rule_u3 = gauss_symmetric(n_polar, 0.0);
        let rule_phi = uniform_azimuth(m_azimuth);

        let deg_tab = 2 * l_max + 3;
        let n = n_polar;
        let m = m_azimuth;

        // Power tables per direction, node-major and power-major.
        let mut u_pow: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut s_pow: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut u_pow_t: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut s_pow_t: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (dir, rule) in [&rule_u1, &rule_u2, &rule_u3].iter().enumerate() {
            let mut up = vec![0.0; n * (deg_tab + 1)];
            let mut sp = vec![0.0; n * (deg_tab + 1)];
            for (i, &u) in rule.nodes.iter().enumerate() {
                let s = (1.0 - u * u).max(0.0).sqrt();
                up[i * (deg_tab + 1)] = 1.0;
                sp[i * (deg_tab + 1)] = 1.0;
                for k in 1..=deg_tab {
                    up[i * (deg_tab + 1) + k] = up[i * (deg_tab + 1) + k - 1] * u;
                    sp[i * (deg_tab + 1) + k] = sp[i * (deg_tab + 1) + k - 1] * s;
                }
            }
            let mut upt = vec![0.0; n * (deg_tab + 1)];
            let mut spt = vec![0.0; n * (deg_tab + 1)];
            for i in 0..n {
                for k in 0..=deg_tab {
                    upt[k * n + i] = up[i * (deg_tab + 1) + k];
                    spt[k * n + i] = sp[i * (deg_tab + 1) + k];
                }
            }
            u_pow[dir] = up;
            s_pow[dir] = sp;
            u_pow_t[dir] = upt;
            s_pow_t[dir] = spt;
        }

        // Node coordinates and weights.
        let n_polar_nodes = n * n * n;
        let mut nodes_x = Vec::with_capacity(n_polar_nodes * m);
        let mut node_weight = Vec::with_capacity(n_polar_nodes * m);
        let mut polar_weight = Vec::with_capacity(n_polar_nodes);
        for i1 in 0..n {
            let u1 = rule_u1.nodes[i1];
            let s1 = (1.0 - u1 * u1).max(0.0).sqrt();
            for i2 in 0..n {
                let u2 = rule_u2.nodes[i2];
                let s2 = (1.0 - u2 * u2).max(0.0).sqrt();
                for i3 in 0..n {
                    let u3 = rule_u3.nodes[i3];
                    let s3 = (1.0 - u3 * u3).max(0.0).sqrt();
                    let pw = rule_u1.weights[i1] * rule_u2.weights[i2] * rule_u3.weights[i3];
                    polar_weight.push(pw);
                    let r = s1 * s2 * s3;
                    for l in 0..m {
                        let phi = rule_phi.nodes[l];
                        nodes_x.push([
                            r * phi.sin(),
                            r * phi.cos(),
                            s1 * s2 * u3,
                            s1 * u2,
                            u1,
                        ]);
                        node_weight.push(pw * rule_phi.weights[l]);
                    }
                }
            }
        }

        // Azimuthal trig tables.
        let mut cos_tab = vec![0.0; (deg_tab + 1) * m];
        let mut sin_tab = vec![0.0; (deg_tab + 1) * m];
        for mu in 0..=deg_tab {
            for l in 0..m {
                let ang = mu as f64 * rule_phi.nodes[l];
                cos_tab[mu * m + l] = ang.cos();
                sin_tab[mu * m + l] = ang.sin();
            }
        }

        // Fourier form of cos^a2 sin^a1 via repeated half-shift products.
        let trig_pairs = build_trig_pairs(deg_tab);

        // Per-direction Legendre value tables (order <= l_max).
        let leg_tri = legendre_coeffs(l_max);
        let mut leg_vals: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (dir, rule) in [&rule_u1, &rule_u2, &rule_u3].iter().enumerate() {
            let mut tab = vec![0.0; n * (l_max + 1)];
            for (i, &u) in rule.nodes.iter().enumerate() {
                let vals = legendre_values(l_max, u);
                tab[i * (l_max + 1)..(i + 1) * (l_max + 1)].copy_from_slice(&vals);
            }
            leg_vals[dir] = tab;
        }

        // Build the blocks.
        let keys = enumerate_blocks(l_max);
        let mut blocks = Vec::with_capacity(keys.len());
        let mut min_accept = f64::INFINITY;
        let mut max_reject: f64 = 0.0;
        let idx_field = ExpIndexer::new(l_max);
        for key in keys {
            let block = build_block(
                &key,
                l_max,
                n,
                &leg_vals,
                &s_pow,
                deg_tab,
                &polar_weight,
                &leg_tri,
                &idx_field,
                &mut min_accept,
                &mut max_reject,
            )?;
            blocks.push(block);
        }

        // Global degree-major ordering and per-degree totals.
        let mut cols: Vec<(usize, u32, u32)> = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            for (ci, &l) in b.labels.iter().enumerate() {
                cols.push((l, bi as u32, ci as u32));
            }
        }
        cols.sort();
        let n_basis = cols.len();
        let mut per_degree = vec![0usize; l_max + 1];
        for &(l, _, _) in &cols {
            per_degree[l] += 1;
        }
        for (l, &count) in per_degree.iter().enumerate() {
            if count != harmonic_dim(l) {
                return Err(Sigma2Error::RankMismatch {
                    degree: l,
                    expected: harmonic_dim(l),
                    got: count,
                });
            }
        }
        let mut ell_offsets = vec![0usize; l_max + 2];
        for l in 0..=l_max {
            ell_offsets[l + 1] = ell_offsets[l] + per_degree[l];
        }
        let ell: Vec<usize> = cols.iter().map(|c| c.0).collect();
        let global_cols: Vec<(u32, u32)> = cols.iter().map(|c| (c.1, c.2)).collect();

        let mut grid = SphereGrid {
            l_max,
            n_polar: n,
            m_azimuth: m,
            rule_u1,
            rule_u2,
            rule_u3,
            nodes_x,
            node_weight,
            polar_weight,
            deg_tab,
            u_pow,
            u_pow_t,
            s_pow_t,
            cos_tab,
            sin_tab,
            trig_pairs,
            blocks,
            n_basis,
            global_cols,
            ell,
            ell_offsets,
            xmat: [[0.0; 5]; 5],
            qr_gap: (min_accept, max_reject),
            idx_field,
        };

        // Moment matrix of the degree-1 band.
        let r = grid.ell_range(1);
        let mut xmat = [[0.0; 5]; 5];
        for (k, g) in r.enumerate() {
            let nodal = grid.basis_nodal(g);
            for j in 0..5 {
                xmat[j][k] = neumaier_sum(
                    nodal
                        .iter()
                        .zip(&grid.node_weight)
                        .zip(&grid.nodes_x)
                        .map(|((&v, &w), x)| w * v * x[j]),
                );
            }
        }
        grid.xmat = xmat;
        Ok(grid)
    }

    /// Process-wide cache of canonical grids, keyed by truncation degree.
    pub fn shared(l_max: usize) -> Result<Arc<SphereGrid>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SphereGrid>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        {
            let map = cache.lock().unwrap();
            if let Some(g) = map.get(&l_max) {
                return Ok(g.clone());
            }
        }
        // Build outside the lock: grid construction takes seconds at L=16
        // and other callers may want other degrees meanwhile.
        let grid = Arc::new(SphereGrid::new(l_max)?);
        let mut map = cache.lock().unwrap();
        Ok(map.entry(l_max).or_insert(grid).clone())
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_x.len()
    }

    pub fn n_polar_nodes(&self) -> usize {
        self.n_polar * self.n_polar * self.n_polar
    }

    /// Columns carrying harmonic degree `l`.
    pub fn ell_range(&self, l: usize) -> Range<usize> {
        self.ell_offsets[l]..self.ell_offsets[l + 1]
    }

    /// Quadrature sum of nodal values.
    pub fn integrate(&self, nodal: &[f64]) -> f64 {
        neumaier_sum(nodal.iter().zip(&self.node_weight).map(|(&f, &w)| f * w))
    }

    /// Mean value over the sphere.
    pub fn mean(&self, nodal: &[f64]) -> f64 {
        self.integrate(nodal) / VOL_S4
    }

    /// Nodal values from basis coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n_basis);
        let np = self.n_polar_nodes();
        // Accumulate polar mode amplitudes per (mu, kind).
        let mut mode_c = vec![0.0; (self.l_max + 1) * np];
        let mut mode_s = vec![0.0; (self.l_max + 1) * np];
        for (g, &(bi, ci)) in self.global_cols.iter().enumerate() {
            let c = coeffs[g];
            if c == 0.0 {
                continue;
            }
            let b = &self.blocks[bi as usize];
            let col = &b.q[ci as usize * np..(ci as usize + 1) * np];
            let target = match b.key.kind {
                Trig::Cos => &mut mode_c[b.key.mu * np..(b.key.mu + 1) * np],
                Trig::Sin => &mut mode_s[b.key.mu * np..(b.key.mu + 1) * np],
            };
            axpy(target, c, col);
        }
        self.synthesize_modes(&mode_c, &mode_s)
    }

    /// Azimuthal synthesis from per-(mu, kind) polar amplitudes.
    pub(crate) fn synthesize_modes(&self, mode_c: &[f64], mode_s: &[f64]) -> Vec<f64> {
        let np = self.n_polar_nodes();
        let m = self.m_azimuth;
        let mut out = vec![0.0; np * m];
        for p in 0..np {
            let run = &mut out[p * m..(p + 1) * m];
            for mu in 0..=self.l_max {
                let c = mode_c[mu * np + p];
                let s = mode_s[mu * np + p];
                if c == 0.0 && s == 0.0 {
                    continue;
                }
                let ct = &self.cos_tab[mu * m..mu * m + m];
                let st = &self.sin_tab[mu * m..mu * m + m];
                for l in 0..m {
                    run[l] += c * ct[l] + s * st[l];
                }
            }
        }
        out
    }

    /// Basis coefficients of the quadrature projection of nodal data.
    pub fn analyze(&self, nodal: &[f64]) -> Vec<f64> {
        assert_eq!(nodal.len(), self.n_nodes());
        let np = self.n_polar_nodes();
        let m = self.m_azimuth;
        let wphi = 2.0 * std::f64::consts::PI / m as f64;
        // Azimuthal analysis: mode_raw includes the phi weight.
        let mut mode_c = vec![0.0; (self.l_max + 1) * np];
        let mut mode_s = vec![0.0; (self.l_max + 1) * np];
        for p in 0..np {
            let run = &nodal[p * m..(p + 1) * m];
            for mu in 0..=self.l_max {
                let ct = &self.cos_tab[mu * m..mu * m + m];
                let st = &self.sin_tab[mu * m..mu * m + m];
                let mut ac = 0.0;
                let mut as_ = 0.0;
                for l in 0..m {
                    ac += run[l] * ct[l];
                    as_ += run[l] * st[l];
                }
                mode_c[mu * np + p] = ac * wphi;
                mode_s[mu * np + p] = as_ * wphi;
            }
        }
        // Polar projections: coeff = sum_p w1w2w3 q(p) mode(p).
        let mut coeffs = vec![0.0; self.n_basis];
        let mut tmp = vec![0.0; np];
        for (g, &(bi, ci)) in self.global_cols.iter().enumerate() {
            let b = &self.blocks[bi as usize];
            let modes = match b.key.kind {
                Trig::Cos => &mode_c[b.key.mu * np..(b.key.mu + 1) * np],
                Trig::Sin => &mode_s[b.key.mu * np..(b.key.mu + 1) * np],
            };
            // Consecutive global columns from the same block share tmp.
            if g == 0 || self.global_cols[g - 1].0 != bi {
                for p in 0..np {
                    tmp[p] = modes[p] * self.polar_weight[p];
                }
            }
            let col = &b.q[ci as usize * np..(ci as usize + 1) * np];
            coeffs[g] = col.iter().zip(&tmp).map(|(&q, &t)| q * t).sum();
        }
        coeffs
    }

    /// Nodal values of one basis function.
    pub fn basis_nodal(&self, g: usize) -> Vec<f64> {
        let (bi, ci) = self.global_cols[g];
        let b = &self.blocks[bi as usize];
        let np = self.n_polar_nodes();
        let m = self.m_azimuth;
        let col = &b.q[ci as usize * np..(ci as usize + 1) * np];
        let (tab, mu) = match b.key.kind {
            Trig::Cos => (&self.cos_tab, b.key.mu),
            Trig::Sin => (&self.sin_tab, b.key.mu),
        };
        let mut out = vec![0.0; np * m];
        for p in 0..np {
            for l in 0..m {
                out[p * m + l] = col[p] * tab[mu * m + l];
            }
        }
        out
    }

    /// Per-block spanning-tuple expansion of a coefficient vector.
    pub fn spanning_coeffs(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .map(|b| vec![0.0; b.tuples.len()])
            .collect();
        for (g, &(bi, ci)) in self.global_cols.iter().enumerate() {
            let c = coeffs[g];
            if c == 0.0 {
                continue;
            }
            let b = &self.blocks[bi as usize];
            let nt = b.tuples.len();
            let combo = &b.combo[ci as usize * nt..(ci as usize + 1) * nt];
            axpy(&mut out[bi as usize], c, combo);
        }
        out
    }

    /// Evaluate a coefficient vector at arbitrary points on (or near) the
    /// sphere. Uses the division-free homogenized recurrences, so points
    /// with `x1 = x2 = 0` are handled exactly.
    pub fn eval_at_points(&self, coeffs: &[f64], pts: &[[f64; 5]]) -> Vec<f64> {
        let span = self.spanning_coeffs(coeffs);
        pts.iter().map(|x| self.eval_spanning_at(&span, x)).collect()
    }

    pub(crate) fn eval_spanning_at(&self, span: &[Vec<f64>], x: &[f64; 5]) -> f64 {
        let l = self.l_max;
        // Azimuthal atoms: (re, im) of (x2 + i x1)^mu.
        let mut tr = vec![0.0; l + 1];
        let mut ti = vec![0.0; l + 1];
        tr[0] = 1.0;
        for mu in 1..=l {
            tr[mu] = tr[mu - 1] * x[1] - ti[mu - 1] * x[0];
            ti[mu] = tr[mu - 1] * x[0] + ti[mu - 1] * x[1];
        }
        // Radial powers of x1^2 + x2^2.
        let rho2 = x[0] * x[0] + x[1] * x[1];
        let mut r2p = vec![0.0; l / 2 + 1];
        r2p[0] = 1.0;
        for j in 1..r2p.len() {
            r2p[j] = r2p[j - 1] * rho2;
        }
        // Homogenized Legendre atoms.
        let rho3sq = rho2 + x[2] * x[2];
        let h3 = homogenized_legendre(l, x[2], rho3sq);
        let s1sq = 1.0 - x[4] * x[4];
        let h2 = homogenized_legendre(l, x[3], s1sq);
        let h1 = legendre_values(l, x[4]);

        let mut total = 0.0;
        for (b, sc) in self.blocks.iter().zip(span) {
            let trig = match b.key.kind {
                Trig::Cos => tr[b.key.mu],
                Trig::Sin => ti[b.key.mu],
            };
            if trig == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (t, &c) in b.tuples.iter().zip(sc) {
                if c == 0.0 {
                    continue;
                }
                acc += c * r2p[t.rad] * h3[t.c] * h2[t.d] * h1[t.e];
            }
            total += trig * acc;
        }
        total
    }
}

/// `s^k P_k(z / s)` for k = 0..=k_max, division-free: the three-term
/// recurrence homogenizes to `(k+1) Q_{k+1} = (2k+1) z Q_k - k s^2 Q_{k-1}`.
fn homogenized_legendre(k_max: usize, z: f64, s_sq: f64) -> Vec<f64> {
    let mut q = Vec::with_capacity(k_max + 1);
    q.push(1.0);
    if k_max == 0 {
        return q;
    }
    q.push(z);
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * z * q[k] - kf * s_sq * q[k - 1]) / (kf + 1.0);
        q.push(next);
    }
    q
}

/// Fourier expansions of cos^a2(phi) sin^a1(phi) for all pairs with
/// a1 + a2 <= deg, via complex half-shift products.
fn build_trig_pairs(deg: usize) -> HashMap<(usize, usize), Vec<(usize, f64, f64)>> {
    // Spectrum representation: coefficients over e^{i k phi}, k in [-deg, deg],
    // stored as (re, im) with offset deg.
    let size = 2 * deg + 1;
    let mut spectra: HashMap<(usize, usize), Vec<(f64, f64)>> = HashMap::new();
    let mut delta = vec![(0.0, 0.0); size];
    delta[deg] = (1.0, 0.0);
    spectra.insert((0, 0), delta);

    for total in 1..=deg {
        for a1 in 0..=total {
            let a2 = total - a1;
            let (src, by_sin) = if a2 > 0 {
                ((a1, a2 - 1), false)
            } else {
                ((a1 - 1, a2), true)
            };
            let prev = spectra[&src].clone();
            let mut next = vec![(0.0, 0.0); size];
            for (k, &(re, im)) in prev.iter().enumerate() {
                if re == 0.0 && im == 0.0 {
                    continue;
                }
                if !by_sin {
                    // * cos = (shift up + shift down) / 2
                    if k + 1 < size {
                        next[k + 1].0 += 0.5 * re;
                        next[k + 1].1 += 0.5 * im;
                    }
                    if k >= 1 {
                        next[k - 1].0 += 0.5 * re;
                        next[k - 1].1 += 0.5 * im;
                    }
                } else {
                    // * sin = (shift up - shift down) / (2i) = -i/2 up + i/2 down
                    if k + 1 < size {
                        next[k + 1].0 += 0.5 * im;
                        next[k + 1].1 -= 0.5 * re;
                    }
                    if k >= 1 {
                        next[k - 1].0 -= 0.5 * im;
                        next[k - 1].1 += 0.5 * re;
                    }
                }
            }
            spectra.insert((a1, a2), next);
        }
    }

    let mut out = HashMap::new();
    for (pair, spec) in spectra {
        let mut list = Vec::new();
        for mode in 0..=deg {
            let (pr, pi) = spec[deg + mode];
            let (mr, mi) = spec[deg - mode];
            // c_k e^{ik} + c_{-k} e^{-ik} = (c_k + c_{-k}) cos k + i (c_k - c_{-k}) sin k
            let (ccos, csin) = if mode == 0 {
                (pr, 0.0)
            } else {
                (pr + mr, -(pi - mi))
            };
            if ccos.abs() > 1e-300 || csin.abs() > 1e-300 {
                list.push((mode, ccos, csin));
            }
        }
        out.insert(pair, list);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn build_block(
    key: &BlockKey,
    l_max: usize,
    n: usize,
    leg_vals: &[Vec<f64>; 3],
    s_pow: &[Vec<f64>; 3],
    deg_tab: usize,
    polar_weight: &[f64],
    leg_tri: &[Vec<f64>],
    idx_field: &ExpIndexer,
    min_accept: &mut f64,
    max_reject: &mut f64,
) -> Result<BlockBasis> {
    let tuples = enumerate_tuples(key, l_max);
    let np = n * n * n;
    let c_mu = if key.mu == 0 {
        2.0 * std::f64::consts::PI
    } else {
        std::f64::consts::PI
    };
    let weights: Vec<f64> = polar_weight.iter().map(|&w| w * c_mu).collect();

    // Spanning values on the polar grid, one column per tuple, pre-normalized.
    let nt = tuples.len();
    let mut v = vec![0.0; np * nt];
    let mut prenorm = vec![0.0; nt];
    let stride = deg_tab + 1;
    let lstride = l_max + 1;
    for (t_i, t) in tuples.iter().enumerate() {
        let p1 = key.mu + 2 * t.rad + t.c + t.d;
        let p2 = key.mu + 2 * t.rad + t.c;
        let p3 = key.mu + 2 * t.rad;
        let col = &mut v[t_i * np..(t_i + 1) * np];
        let mut p = 0usize;
        for i1 in 0..n {
            let f1 = s_pow[0][i1 * stride + p1] * leg_vals[0][i1 * lstride + t.e];
            for i2 in 0..n {
                let f12 = f1 * s_pow[1][i2 * stride + p2] * leg_vals[1][i2 * lstride + t.d];
                for i3 in 0..n {
                    col[p] = f12 * s_pow[2][i3 * stride + p3] * leg_vals[2][i3 * lstride + t.c];
                    p += 1;
                }
            }
        }
        let nrm = wdot(&weights, col, col).sqrt();
        debug_assert!(nrm > 0.0, "zero spanning column");
        prenorm[t_i] = nrm;
        let inv = 1.0 / nrm;
        for x in col.iter_mut() {
            *x *= inv;
        }
    }

    // Degree-grouped pivoted MGS with reorthogonalization. Acceptance counts
    // per degree come from the closed-form block ranks.
    let mut q: Vec<f64> = Vec::new();
    let mut combo: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();

    let mut degree_of: Vec<usize> = tuples.iter().map(|t| t.degree(key.mu)).collect();
    degree_of.push(usize::MAX); // sentinel

    let mut t_i = 0usize;
    while t_i < nt {
        let degree = degree_of[t_i];
        let mut group_end = t_i;
        while degree_of[group_end] == degree {
            group_end += 1;
        }
        let g0 = t_i;
        let g_len = group_end - g0;

        // Working copies of the group columns and their tuple expansions.
        let mut cols: Vec<Vec<f64>> = (0..g_len)
            .map(|k| v[(g0 + k) * np..(g0 + k + 1) * np].to_vec())
            .collect();
        let mut cexp: Vec<Vec<f64>> = (0..g_len)
            .map(|k| {
                let mut e = vec![0.0; nt];
                e[g0 + k] = 1.0 / prenorm[g0 + k];
                e
            })
            .collect();

        // Project out everything accepted so far (two passes).
        let n_acc = labels.len();
        for _pass in 0..2 {
            for k in 0..g_len {
                for a in 0..n_acc {
                    let qa = &q[a * np..(a + 1) * np];
                    let r = wdot(&weights, qa, &cols[k]);
                    axpy(&mut cols[k], -r, qa);
                    axpy(&mut cexp[k], -r, &combo[a * nt..(a + 1) * nt]);
                }
            }
        }

        let expected = block_rank_at_degree(key, degree);
        let mut alive: Vec<usize> = (0..g_len).collect();
        for _pick in 0..expected {
            // Pivot on the largest remaining norm.
            let (best_pos, best_norm) = alive
                .iter()
                .enumerate()
                .map(|(pos, &k)| (pos, wdot(&weights, &cols[k], &cols[k])))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .expect("rank exceeds group size");
            let best_norm = best_norm.sqrt();
            if best_norm < 1e-8 {
                return Err(Sigma2Error::RankMismatch {
                    degree,
                    expected,
                    got: labels.iter().filter(|&&l| l == degree).count(),
                });
            }
            *min_accept = min_accept.min(best_norm);
            let k = alive.remove(best_pos);

            // One more sweep against all accepted columns, then normalize.
            let mut picked = std::mem::take(&mut cols[k]);
            let mut picked_exp = std::mem::take(&mut cexp[k]);
            for a in 0..labels.len() {
                let qa = &q[a * np..(a + 1) * np];
                let r = wdot(&weights, qa, &picked);
                axpy(&mut picked, -r, qa);
                axpy(&mut picked_exp, -r, &combo[a * nt..(a + 1) * nt]);
            }
            let nrm = wdot(&weights, &picked, &picked).sqrt();
            let inv = 1.0 / nrm;
            for x in picked.iter_mut() {
                *x *= inv;
            }
            for x in picked_exp.iter_mut() {
                *x *= inv;
            }

            // Orthogonalize the remaining group columns against the pick.
            for &k2 in &alive {
                let r = wdot(&weights, &picked, &cols[k2]);
                axpy(&mut cols[k2], -r, &picked);
                axpy(&mut cexp[k2], -r, &picked_exp);
            }

            q.extend_from_slice(&picked);
            combo.extend_from_slice(&picked_exp);
            labels.push(degree);
        }

        // Everything left in the group must be numerically dependent.
        for &k in &alive {
            let leftover = wdot(&weights, &cols[k], &cols[k]).sqrt();
            if leftover > 1e-5 {
                return Err(Sigma2Error::RankMismatch {
                    degree,
                    expected,
                    got: expected + 1,
                });
            }
            *max_reject = max_reject.max(leftover);
        }

        t_i = group_end;
    }

    // Monomial expansions of the spanning tuples.
    let mono: Vec<SparseVec> = tuples
        .iter()
        .map(|t| {
            let map = tuple_monomials(key, t, leg_tri);
            let mut entries: Vec<(u32, f64)> = map
                .into_iter()
                .map(|(e, c)| {
                    let idx = idx_field.index([
                        e[0] as usize,
                        e[1] as usize,
                        e[2] as usize,
                        e[3] as usize,
                        e[4] as usize,
                    ]) as u32;
                    (idx, c)
                })
                .collect();
            entries.sort_by_key(|&(i, _)| i);
            SparseVec {
                idx: entries.iter().map(|e| e.0).collect(),
                val: entries.iter().map(|e| e.1).collect(),
            }
        })
        .collect();

    let n_cols = labels.len();
    Ok(BlockBasis {
        key: *key,
        tuples,
        n_cols,
        q,
        labels,
        combo,
        mono,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexer_orders_and_counts() {
        let ix = ExpIndexer::new(6);
        assert_eq!(ix.len(), 462); // C(11, 5)
        let mut seen = 0usize;
        ix.for_each(|i, a| {
            assert_eq!(ix.index(a), i);
            assert!(a.iter().sum::<usize>() <= 6);
            seen += 1;
        });
        assert_eq!(seen, 462);
    }

    #[test]
    fn trig_pair_table_matches_direct_products() {
        let table = build_trig_pairs(7);
        let phis: [f64; 5] = [0.3, 1.1, 2.7, 4.0, 5.9];
        for a1 in 0..=7usize {
            for a2 in 0..=7 - a1 {
                let list = &table[&(a1, a2)];
                for &phi in &phis {
                    let direct = phi.sin().powi(a1 as i32) * phi.cos().powi(a2 as i32);
                    let synth: f64 = list
                        .iter()
                        .map(|&(k, cc, cs)| {
                            cc * (k as f64 * phi).cos() + cs * (k as f64 * phi).sin()
                        })
                        .sum();
                    assert!(
                        (direct - synth).abs() < 1e-12,
                        "a1={a1} a2={a2} phi={phi}: {direct} vs {synth}"
                    );
                }
            }
        }
    }

    #[test]
    fn grid_dimensions_match_polynomial_space() {
        let g = SphereGrid::new(4).unwrap();
        assert_eq!(g.n_basis, 105); // C(8,4) + C(7,4)
        assert_eq!(g.ell_offsets, vec![0, 1, 6, 20, 50, 105]);
        assert_eq!(g.n_nodes(), 6 * 6 * 6 * 12);
        // Total quadrature weight = |S^4|.
        let total: f64 = neumaier_sum(g.node_weight.iter().copied());
        assert!((total - VOL_S4).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal_under_quadrature() {
        let g = SphereGrid::new(5).unwrap();
        // Check a random selection of Gram entries including diagonals.
        let cols: Vec<Vec<f64>> = (0..g.n_basis).map(|k| g.basis_nodal(k)).collect();
        for a in 0..g.n_basis {
            for b in a..g.n_basis {
                let dot = g.integrate(
                    &cols[a]
                        .iter()
                        .zip(&cols[b])
                        .map(|(&x, &y)| x * y)
                        .collect::<Vec<_>>(),
                );
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (dot - want).abs() < 1e-11,
                    "gram[{a},{b}] = {dot}, ell {} {}",
                    g.ell[a],
                    g.ell[b]
                );
            }
        }
    }

    #[test]
    fn analyze_inverts_synthesize() {
        let g = SphereGrid::new(6).unwrap();
        // Deterministic pseudo-random coefficients.
        let coeffs: Vec<f64> = (0..g.n_basis)
            .map(|k| ((k * 2654435761 % 1000) as f64 / 500.0) - 1.0)
            .collect();
        let nodal = g.synthesize(&coeffs);
        let back = g.analyze(&nodal);
        let err = coeffs
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "round-trip error {err}");
    }

    #[test]
    fn point_eval_agrees_with_nodal_synthesis() {
        let g = SphereGrid::new(5).unwrap();
        let coeffs: Vec<f64> = (0..g.n_basis)
            .map(|k| ((k * 48271 % 997) as f64 / 499.0) - 1.0)
            .collect();
        let nodal = g.synthesize(&coeffs);
        // Evaluate at a handful of quadrature nodes via the point path.
        for &node in &[0usize, 17, 101, 1000.min(g.n_nodes() - 1)] {
            let x = g.nodes_x[node];
            let got = g.eval_at_points(&coeffs, &[x])[0];
            assert!(
                (got - nodal[node]).abs() < 1e-10,
                "node {node}: {got} vs {}",
                nodal[node]
            );
        }
        // And at an off-grid point (poles have x1 = x2 = 0).
        let pole = [0.0, 0.0, 0.0, 0.0, 1.0];
        let at_pole = g.eval_at_points(&coeffs, &[pole])[0];
        assert!(at_pole.is_finite());
    }

    #[test]
    fn xmat_is_proportional_to_identity() {
        // The five degree-1 basis functions are orthonormal combinations of
        // the coordinates, so int x_j b_k = c * O[j][k] for an orthogonal O.
        // Check O O^T = c^2 I with c^2 = (|S^4| / 5) — the norm of x_j.
        let g = SphereGrid::new(4).unwrap();
        let c2 = VOL_S4 / 5.0;
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = (0..5).map(|k| g.xmat[i][k] * g.xmat[j][k]).sum();
                let want = if i == j { c2 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "xmat gram [{i},{j}]");
            }
        }
    }
}
