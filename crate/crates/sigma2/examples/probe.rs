use std::sync::Arc;
use std::time::Instant;

use sigma2::field::ScalarField;
use sigma2::grid::SphereGrid;
use sigma2::kspec::KSpec;
use sigma2::linearize::linearize_at;
use sigma2::solver;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("dense");
    match mode {
        "dense" => {
            for l in [6usize, 8, 10, 12] {
                let grid = SphereGrid::shared(l).unwrap();
                let t0 = Instant::now();
                let w = ScalarField::zeros(grid.clone());
                let k = KSpec::even_axial().nodal_k_s(&grid).unwrap();
                let lin = linearize_at(&w, &k);
                let built = t0.elapsed();
                let t1 = Instant::now();
                let j = lin.to_dense(&grid);
                let dense = t1.elapsed();
                let t2 = Instant::now();
                let n = grid.n_basis;
                let mut b = nalgebra::DMatrix::zeros(n + 5, n + 5);
                b.view_mut((0, 0), (n, n)).copy_from(&j);
                for q in 0..5 {
                    b[(grid.ell_offsets[1] + q, n + q)] = 1.0;
                    b[(n + q, grid.ell_offsets[1] + q)] = 1.0;
                }
                let lu = b.lu();
                let fact = t2.elapsed();
                let t3 = Instant::now();
                let rhs = nalgebra::DVector::from_element(n + 5, 1.0);
                let _ = lu.solve(&rhs).unwrap();
                let solve = t3.elapsed();
                let t4 = Instant::now();
                let nodal = vec![1.0f64; grid.nodes_x.len()];
                let c = grid.analyze(&nodal);
                let _ = grid.synthesize(&c);
                let xform = t4.elapsed();
                println!(
                    "L={l:2} n={n:5} nodes={:6}  lin {:8.2?}  to_dense {:8.2?}  lu {:8.2?}  solve {:8.2?}  analyze+synth {:8.2?}",
                    grid.nodes_x.len(),
                    built,
                    dense,
                    fact,
                    solve,
                    xform
                );
            }
        }
        "cont" => {
            let l: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
            let grid: Arc<SphereGrid> = SphereGrid::shared(l).unwrap();
            let k = KSpec::preset(&args.get(3).cloned().unwrap_or_else(|| "even_axial".into())).unwrap();
            let t0 = Instant::now();
            let (trace, sol) = solver::continue_to_one(&grid, &k, [0.0; 5], &solver::Schedule::default());
            let dt = t0.elapsed();
            println!("L={l} status {:?} rows {} in {:?}", trace.status, trace.rows.len(), dt);
            for r in &trace.rows {
                println!(
                    "  s={:9.6} |v|={:.4e} |lam|={:.3e} res={:.3e} F={:.8}",
                    r.s,
                    r.v_norm,
                    r.lambda.iter().map(|a| a * a).sum::<f64>().sqrt(),
                    r.residual_norm,
                    r.f_value
                );
            }
            match sol {
                Ok(s) => {
                    println!(
                        "verify: res_sup {:.3e} kw {:.3e} gb {:.3e} mass {:.3e} s1 {:.3} s2 {:.3} slack {:.3e} com |{:.3e}|",
                        s.verify.residual_sup,
                        s.verify.kw_norm,
                        s.verify.gb_defect,
                        s.verify.mass_defect,
                        s.verify.min_sigma1,
                        s.verify.min_sigma2,
                        s.verify.inegrad_slack,
                        s.verify.center_of_mass.iter().map(|a| a * a).sum::<f64>().sqrt()
                    );
                }
                Err(e) => println!("failed: {e}"),
            }
        }
        "inner" => {
            let l: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
            let grid: Arc<SphereGrid> = SphereGrid::shared(l).unwrap();
            let k = KSpec::morse();
            let v0 = ScalarField::zeros(grid.clone());
            let t0 = Instant::now();
            let out = solver::inner_solve(&grid, &k, 0.01, &[0.12, 0.0, -0.08, 0.0, 0.05], &v0).unwrap();
            println!(
                "L={l} inner in {:?}  |v|={:.4e} proj_res={:.3e}",
                t0.elapsed(),
                out.v.norm_l2(),
                out.proj_sup
            );
        }
        "bubble" => {
            for l in [8usize, 10, 12, 14, 16] {
                let grid = SphereGrid::shared(l).unwrap();
                let mut p = [0.4, 0.0, 0.3, 0.0, 0.87];
                let n = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                for a in p.iter_mut() {
                    *a /= n;
                }
                let t0 = Instant::now();
                let w =
                    sigma2::diagnostics::make_bubble(&grid, &p, 2.0, &KSpec::constant6()).unwrap();
                let res = sigma2::curvature::residual_nodal(&w, &vec![6.0; grid.nodes_x.len()]);
                let sup = res.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                let (rn, rep) = sigma2::diagnostics::diagnose(&w, &KSpec::constant6()).unwrap();
                println!(
                    "L={l:2} res_sup {sup:.3e}  t {:.6}  sup_dev {:.3e}  grad4 {:.3e}  slack {:.3e} in {:?}",
                    rn.t, rep.sup_deviation, rep.grad4, rep.inegrad_slack, t0.elapsed()
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
