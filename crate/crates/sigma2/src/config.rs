//! Run configuration: one TOML document controls grid resolution, the
//! curvature target, schedules, tolerances, and output placement. Unknown
//! keys are hard errors — a typo in a tolerance name must not silently run
//! with the default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, Sigma2Error};
use crate::grid::SphereGrid;
use crate::kspec::KSpec;
use crate::solver::Schedule;

pub const SCHEMA_VERSION: u32 = 1;

/// Grid resolutions outside this range need an explicit opt-in flag; lower
/// grids cannot represent the degree-4 identities, higher ones are
/// minutes-per-factorization territory.
pub const GRID_RANGE: (usize, usize) = (4, 16);

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub k: KConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub degree: DegreeConfig,
    #[serde(default)]
    pub verify: VerifyTolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Spectral truncation order.
    pub l: usize,
    /// Azimuthal node count. Derived from `l` in this build; when given it
    /// is validated against the derived value rather than applied.
    pub azimuth_count: Option<usize>,
    /// Allow `l` outside `GRID_RANGE`.
    #[serde(default)]
    pub allow_out_of_range: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            l: 8,
            azimuth_count: None,
            allow_out_of_range: false,
        }
    }
}

/// Curvature target: exactly one of `preset` or `file`.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KConfig {
    pub preset: Option<String>,
    /// Polynomial term file: lines of five exponents and a coefficient.
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub s_start: f64,
    pub grow: f64,
    pub shrink: f64,
    pub floor: f64,
    pub t_cap: f64,
    pub max_steps: usize,
    pub seed_xi: [f64; 5],
}

impl Default for SolveConfig {
    fn default() -> Self {
        let s = Schedule::default();
        SolveConfig {
            s_start: s.s_start,
            grow: s.grow,
            shrink: s.shrink,
            floor: s.floor,
            t_cap: s.t_cap,
            max_steps: s.max_steps,
            seed_xi: [0.0; 5],
        }
    }
}

impl SolveConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            s_start: self.s_start,
            grow: self.grow,
            shrink: self.shrink,
            floor: self.floor,
            t_cap: self.t_cap,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeConfig {
    /// Ball radius for the zero search backing the sign-sum cross-check.
    pub zeros_radius: f64,
}

impl Default for DegreeConfig {
    fn default() -> Self {
        DegreeConfig { zeros_radius: 0.9 }
    }
}

/// Pass thresholds applied by the `verify` command (and the final check of
/// `solve`) when deciding the exit status.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyTolerances {
    pub residual_sup: f64,
    /// Obstruction-vector norm, relative to ‖K‖∞·|S⁴|.
    pub kw_rel: f64,
    /// Total-mass defect, relative to 16π².
    pub gb_rel: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances {
            residual_sup: 1e-9,
            kw_rel: 1e-7,
            gb_rel: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            grid: GridConfig::default(),
            k: KConfig::default(),
            solve: SolveConfig::default(),
            degree: DegreeConfig::default(),
            verify: VerifyTolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Sigma2Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Sigma2Error::Config(format!(
                "unsupported schema_version {} (this build reads {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let (lo, hi) = GRID_RANGE;
        if !(lo..=hi).contains(&self.grid.l) && !self.grid.allow_out_of_range {
            return Err(Sigma2Error::Config(format!(
                "grid order {} outside [{lo}, {hi}]; set grid.allow_out_of_range to use it anyway",
                self.grid.l
            )));
        }
        if self.k.preset.is_some() && self.k.file.is_some() {
            return Err(Sigma2Error::Config(
                "k.preset and k.file are mutually exclusive".into(),
            ));
        }
        for (name, v) in [
            ("solve.s_start", self.solve.s_start),
            ("solve.grow", self.solve.grow),
            ("solve.shrink", self.solve.shrink),
            ("solve.floor", self.solve.floor),
            ("verify.residual_sup", self.verify.residual_sup),
            ("verify.kw_rel", self.verify.kw_rel),
            ("verify.gb_rel", self.verify.gb_rel),
            ("degree.zeros_radius", self.degree.zeros_radius),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Sigma2Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.solve.t_cap > 1.0) {
            return Err(Sigma2Error::Config(format!(
                "solve.t_cap must exceed 1, got {}",
                self.solve.t_cap
            )));
        }
        if self.degree.zeros_radius >= 1.0 {
            return Err(Sigma2Error::Config(format!(
                "degree.zeros_radius must lie inside the unit ball, got {}",
                self.degree.zeros_radius
            )));
        }
        Ok(())
    }

    /// Build the grid, validating the optional azimuth expectation.
    pub fn build_grid(&self) -> Result<Arc<SphereGrid>> {
        let grid = SphereGrid::shared(self.grid.l)?;
        if let Some(az) = self.grid.azimuth_count {
            if az != grid.m_azimuth {
                return Err(Sigma2Error::Config(format!(
                    "grid.azimuth_count {az} does not match the derived count {} for l = {}",
                    grid.m_azimuth, self.grid.l
                )));
            }
        }
        Ok(grid)
    }

    /// Resolve the curvature target and check positivity on the grid.
    pub fn build_k(&self, grid: &SphereGrid) -> Result<KSpec> {
        let k = match (&self.k.preset, &self.k.file) {
            (Some(name), None) => KSpec::preset(name)?,
            (None, Some(path)) => load_k_terms(path)?,
            (None, None) => Err(Sigma2Error::Config(
                "no curvature target: set k.preset or k.file".into(),
            ))?,
            (Some(_), Some(_)) => unreachable!("validated exclusive"),
        };
        k.nodal_k(grid)?;
        Ok(k)
    }
}

/// Polynomial term file: each non-comment line is `e1 e2 e3 e4 e5 coeff`
/// (five monomial exponents in the ambient coordinates and a decimal
/// coefficient). Lines starting with `#` are comments.
pub fn load_k_terms(path: &Path) -> Result<KSpec> {
    let text = std::fs::read_to_string(path)?;
    let mut terms = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 6 {
            return Err(Sigma2Error::Config(format!(
                "{}:{}: expected five exponents and a coefficient, got {} fields",
                path.display(),
                ln + 1,
                parts.len()
            )));
        }
        let mut e = [0u8; 5];
        for (i, p) in parts[..5].iter().enumerate() {
            e[i] = p.parse().map_err(|_| {
                Sigma2Error::Config(format!(
                    "{}:{}: bad exponent {p:?}",
                    path.display(),
                    ln + 1
                ))
            })?;
        }
        let c: f64 = parts[5].parse().map_err(|_| {
            Sigma2Error::Config(format!(
                "{}:{}: bad coefficient {:?}",
                path.display(),
                ln + 1,
                parts[5]
            ))
        })?;
        terms.push((e, c));
    }
    if terms.is_empty() {
        return Err(Sigma2Error::Config(format!(
            "{}: no terms found",
            path.display()
        )));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "file".into());
    Ok(KSpec::from_terms(&name, terms))
}
