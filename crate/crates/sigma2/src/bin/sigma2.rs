//! Command-line front end: dispatches the solve/degree/diagnostic pipelines
//! from a TOML run configuration, writes structured reports and traces, and
//! encodes contract checks in the exit status (0 pass, 1 checks failed,
//! 2 error).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use sigma2::config::RunConfig;
use sigma2::curvature::{
    bianchi_defect, concavity_gap, curvature_bundle, gauss_bonnet_rhs, newton_tensor,
    SIGMA2_MASS,
};
use sigma2::diagnostics;
use sigma2::error::Result;
use sigma2::field::ScalarField;
use sigma2::gmap;
use sigma2::grid::SphereGrid;
use sigma2::kspec::KSpec;
use sigma2::report::{load_field, save_field, write_trace, Report};
use sigma2::solver::{self, ContinuationStatus, VerifyReport};
use sigma2::util::VOL_S4;

#[derive(Parser)]
#[command(name = "sigma2", version, about = "Prescribed sigma_2 curvature toolkit on the 4-sphere")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Curvature target: preset name or polynomial term file.
    #[arg(long, global = true)]
    k: Option<String>,
    /// Grid truncation order override.
    #[arg(long, global = true)]
    l: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Continue the deformed problem to s = 1 and verify the solution.
    Solve {
        /// Ball-point seed for the outer iteration (five comma-separated values).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        seed_xi: Option<Vec<f64>>,
    },
    /// Evaluate the mass-center moment map at a ball point.
    Gmap {
        /// Ball point (five comma-separated values).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi: Vec<f64>,
    },
    /// Ball degree of the moment map with the zero-census cross-check.
    Degree,
    /// Signed critical-point census of the curvature target.
    IndexSum,
    /// Verification report for a saved solution field.
    Verify {
        /// Coefficient file produced by `solve` (or compatible).
        #[arg(long)]
        w: PathBuf,
    },
    /// Concentration diagnostics for a saved field.
    Diagnose {
        #[arg(long)]
        w: PathBuf,
    },
    /// Pointwise curvature identity suite on sample fields.
    Identities,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(l) = cli.l {
        cfg.grid.l = l;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(karg) = &cli.k {
        if std::path::Path::new(karg).exists() {
            cfg.k.preset = None;
            cfg.k.file = Some(PathBuf::from(karg));
        } else {
            cfg.k.file = None;
            cfg.k.preset = Some(karg.clone());
        }
    }

    match &cli.command {
        Cmd::Solve { seed_xi } => cmd_solve(&cfg, seed_xi.as_deref()),
        Cmd::Gmap { xi } => cmd_gmap(&cfg, xi),
        Cmd::Degree => cmd_degree(&cfg),
        Cmd::IndexSum => cmd_index_sum(&cfg),
        Cmd::Verify { w } => cmd_verify(&cfg, w),
        Cmd::Diagnose { w } => cmd_diagnose(&cfg, w),
        Cmd::Identities => cmd_identities(&cfg),
    }
}

fn emit(report: &Report, cfg: &RunConfig, name: &str) -> Result<()> {
    let path = cfg.output.dir.join(name);
    report.write(&path)?;
    print!("{}", report.render());
    Ok(())
}

fn xi5(v: &[f64]) -> Result<[f64; 5]> {
    if v.len() != 5 {
        return Err(sigma2::Sigma2Error::InvalidArgument(format!(
            "ball points take five comma-separated components, got {}",
            v.len()
        )));
    }
    Ok(std::array::from_fn(|i| v[i]))
}

fn verify_entries(report: &mut Report, v: &VerifyReport) {
    report.f64("residual_sup", v.residual_sup);
    report.f64("kw_norm", v.kw_norm);
    report.f64("gb_defect", v.gb_defect);
    report.f64("mass_defect", v.mass_defect);
    report.f64("min_sigma1", v.min_sigma1);
    report.f64("min_sigma2", v.min_sigma2);
    match v.functional_f {
        Some(f) => report.f64("functional_f", f),
        None => report.str("functional_f", "undefined"),
    };
    report.vec5("center_of_mass", &v.center_of_mass);
    report.f64("inegrad_slack", v.inegrad_slack);
    report.f64("normalization_t", v.normalization_t);
}

fn verify_passes(cfg: &RunConfig, grid: &SphereGrid, k: &KSpec, v: &VerifyReport) -> bool {
    let kw_scale = k.max_abs(grid) * VOL_S4;
    v.residual_sup <= cfg.verify.residual_sup
        && v.kw_norm <= cfg.verify.kw_rel * kw_scale
        && v.gb_defect <= cfg.verify.gb_rel * SIGMA2_MASS
        && v.min_sigma1 > 0.0
        && v.min_sigma2 > 0.0
}

fn cmd_solve(cfg: &RunConfig, seed_xi: Option<&[f64]>) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let mut report = Report::new("solve", grid.l_max);
    report.section("target");
    report.str("k", &k.name);

    // anchor check: the continuation follows a moment-map zero; a target
    // with an empty zero set is obstructed and must be refused, not chased
    let (zeros, complete) = gmap::find_zeros(&grid, &k, cfg.degree.zeros_radius)?;
    report.section("anchors");
    report.int("moment_zeros", zeros.len() as i64);
    report.bool("census_complete", complete);
    if zeros.is_empty() {
        report.str(
            "obstruction",
            "moment map has no zero in the search ball; no continuation anchor exists \
             (consistent with the first-harmonic obstruction)",
        );
        report.section("error");
        report.str("code", "continuation_stall");
        report.section("result");
        report.bool("pass", false);
        emit(&report, cfg, "solve.report")?;
        return Ok(false);
    }
    let sign_sum: i64 = zeros.iter().map(|z| z.sign).sum();
    report.int("zero_sign_sum", sign_sum);
    if sign_sum == 0 && complete {
        report.str(
            "warning",
            "zero signs cancel: the ball degree vanishes and existence is not guaranteed",
        );
    }

    let seed = match seed_xi {
        Some(v) => xi5(v)?,
        None => zeros[0].xi,
    };
    report.section("continuation");
    report.vec5("seed_xi", &seed);

    let schedule = cfg.solve.schedule();
    let (trace, outcome) = solver::continue_to_one(&grid, &k, seed, &schedule);
    write_trace(&trace, &cfg.output.dir.join("trace.csv"))?;
    report.int("steps", trace.rows.len() as i64);
    report.str("status", &format!("{:?}", trace.status));

    match outcome {
        Ok(sol) => {
            save_field(&sol.w, &cfg.output.dir.join("solution.field"))?;
            report.vec5("xi", &sol.xi);
            report.section("verify");
            verify_entries(&mut report, &sol.verify);
            let pass = trace.status == ContinuationStatus::ConvergedAt1
                && verify_passes(cfg, &grid, &k, &sol.verify);
            report.section("result");
            report.bool("pass", pass);
            emit(&report, cfg, "solve.report")?;
            Ok(pass)
        }
        Err(e) => {
            report.section("error");
            report.str("code", e.code());
            report.str("detail", &e.to_string());
            report.section("result");
            report.bool("pass", false);
            emit(&report, cfg, "solve.report")?;
            Ok(false)
        }
    }
}

fn cmd_gmap(cfg: &RunConfig, xi: &[f64]) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let xi = xi5(xi)?;
    let g = gmap::gmap_on_ball(&grid, &k, &xi)?;
    let mut report = Report::new("gmap", grid.l_max);
    report.section("gmap");
    report.str("k", &k.name);
    report.vec5("xi", &xi);
    report.vec5("g", &g);
    report.f64("g_norm", g.iter().map(|v| v * v).sum::<f64>().sqrt());
    emit(&report, cfg, "gmap.report")?;
    Ok(true)
}

fn cmd_degree(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let deg = gmap::brouwer_degree(&grid, &k)?;
    let mut report = Report::new("degree", grid.l_max);
    report.section("degree");
    report.str("k", &k.name);
    report.int("degree", deg.degree);
    report.f64("raw", deg.raw);
    report.f64("boundary_radius", deg.r);
    report.f64("boundary_min", deg.boundary_min);
    report.f64("quadrature_error_estimate", deg.err_est);
    report.str("method", &deg.method);
    report.section("zeros");
    report.int("count", deg.zeros.len() as i64);
    report.bool("complete", deg.zeros_complete);
    if deg.zeros.is_empty() {
        report.str("note", "no zeros: the moment map is nonvanishing in the ball");
    }
    for (i, z) in deg.zeros.iter().enumerate() {
        report.vec5(&format!("zero_{i}_xi"), &z.xi);
        report.int(&format!("zero_{i}_sign"), z.sign);
        report.bool(&format!("zero_{i}_degenerate"), z.degenerate);
    }
    report.section("index_sum");
    match &deg.index_sum {
        Ok(sum) => {
            report.int("value", *sum);
        }
        Err(why) => {
            report.str("unavailable", why);
        }
    }
    emit(&report, cfg, "degree.report")?;
    Ok(true)
}

fn cmd_index_sum(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let (sum, points) = gmap::critical_index_sum(&grid, &k)?;
    let mut report = Report::new("index-sum", grid.l_max);
    report.section("index_sum");
    report.str("k", &k.name);
    report.int("value", sum);
    report.int("critical_points", points.len() as i64);
    for (i, c) in points.iter().enumerate() {
        report.vec5(&format!("point_{i}_x"), &c.x);
        report.f64(&format!("point_{i}_laplacian"), c.laplacian);
        report.int(&format!("point_{i}_index"), c.index);
    }
    emit(&report, cfg, "index-sum.report")?;
    Ok(true)
}

fn cmd_verify(cfg: &RunConfig, w_path: &PathBuf) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let w = load_field(&grid, w_path)?;
    let v = solver::verify_solution(&w, &k, 1.0)?;
    let mut report = Report::new("verify", grid.l_max);
    report.section("verify");
    report.str("k", &k.name);
    report.str("w", &w_path.display().to_string());
    report.f64("gb_integral", gauss_bonnet_rhs(&w, &k)?);
    verify_entries(&mut report, &v);
    let pass = verify_passes(cfg, &grid, &k, &v);
    report.section("result");
    report.bool("pass", pass);
    emit(&report, cfg, "verify.report")?;
    Ok(pass)
}

fn cmd_diagnose(cfg: &RunConfig, w_path: &PathBuf) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let k = cfg.build_k(&grid)?;
    let w = load_field(&grid, w_path)?;
    let (rn, rep) = diagnostics::diagnose(&w, &k)?;
    let mut report = Report::new("diagnose", grid.l_max);
    report.section("renormalization");
    report.vec5("p", &rn.p);
    report.f64("t", rn.t);
    report.bool("t_clamped", rn.t_clamped);
    report.section("profile");
    report.f64("sup_deviation", rep.sup_deviation);
    report.f64("grad4", rep.grad4);
    report.f64("w23", rep.w23);
    report.f64("w26", rep.w26);
    report.f64("inegrad_slack", rep.inegrad_slack);
    report.f64("scar_min", rep.scar_min);
    emit(&report, cfg, "diagnose.report")?;
    Ok(true)
}

/// Deterministic sample fields for the identity suite: flat, a mild
/// concentration profile, and seeded low-degree noise.
fn identity_fields(grid: &Arc<SphereGrid>) -> Result<Vec<(String, ScalarField)>> {
    use rand::{Rng, SeedableRng};
    let mut out = vec![("flat".to_string(), ScalarField::zeros(grid.clone()))];
    let bubble = diagnostics::make_bubble(
        grid,
        &[0.0, 0.0, 0.0, 0.0, 1.0],
        1.5,
        &KSpec::constant6(),
    )?;
    out.push(("bubble_t1p5".into(), bubble));
    for seed in [11u64, 12] {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![0.0; grid.n_basis];
        for (g, c) in coeffs.iter_mut().enumerate() {
            if grid.ell[g] <= 2 {
                *c = rng.gen_range(-0.07..0.07);
            }
        }
        let w = ScalarField::from_coeffs(grid.clone(), coeffs);
        out.push((format!("noise_{seed}"), w));
    }
    Ok(out)
}

fn cmd_identities(cfg: &RunConfig) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let mut report = Report::new("identities", grid.l_max);
    let mut all_pass = true;
    for (name, w) in identity_fields(&grid)? {
        let bundle = curvature_bundle(&w);
        let m = newton_tensor(&grid, &bundle.a);
        let ma = m.contract(&bundle.a);
        let mut einstein = 0.0f64;
        let mut newton = 0.0f64;
        let mut scale = 0.0f64;
        for p in 0..grid.nodes_x.len() {
            let sigma2_g = (-4.0 * w.nodal[p]).exp() * bundle.sigma2[p];
            let lhs = bundle.e_norm2[p];
            let rhs = bundle.r[p] * bundle.r[p] / 12.0 - 2.0 * sigma2_g;
            einstein = einstein.max((lhs - rhs).abs());
            newton = newton.max((ma[p] - 2.0 * bundle.sigma2[p]).abs());
            scale = scale.max(lhs.abs().max(rhs.abs())).max(bundle.sigma2[p].abs());
        }
        let gap = concavity_gap(&w)?;
        let bianchi = bianchi_defect(&w);
        let tol = 1e-9 * (1.0 + scale);
        let pass = einstein <= tol && newton <= tol && gap.min >= -1e-8 * gap.scale.max(1.0);
        all_pass &= pass;
        report.section(&format!("field_{name}"));
        report.f64("traceless_ricci_defect", einstein);
        report.f64("newton_contraction_defect", newton);
        report.f64("concavity_gap_min", gap.min);
        report.f64("bianchi_defect", bianchi);
        report.bool("pass", pass);
    }
    report.section("result");
    report.bool("pass", all_pass);
    emit(&report, cfg, "identities.report")?;
    Ok(all_pass)
}
