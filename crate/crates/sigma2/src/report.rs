//! Structured, diff-able artifacts: fixed-schema key/value reports, CSV
//! continuation traces, and exact-round-trip coefficient files. All writes
//! go through a temp-file-plus-rename so readers never observe partial
//! output.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::SCHEMA_VERSION;
use crate::error::{Result, Sigma2Error};
use crate::field::ScalarField;
use crate::grid::SphereGrid;
use crate::solver::ContinuationTrace;
use std::sync::Arc;

/// A flat key/value report with stable ordering. Floats are serialized in
/// shortest round-trip decimal form so reports diff cleanly and reload
/// exactly.
#[derive(Clone, Debug)]
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str, grid_l: usize) -> Self {
        let mut r = Report { lines: Vec::new() };
        r.lines.push(format!("schema_version = {SCHEMA_VERSION}"));
        r.lines.push(format!("command = {command:?}"));
        r.lines.push(format!("grid_l = {grid_l}"));
        r
    }

    /// Start a named section.
    pub fn section(&mut self, name: &str) -> &mut Self {
        self.lines.push(String::new());
        self.lines.push(format!("[{name}]"));
        self
    }

    pub fn str(&mut self, key: &str, value: &str) -> &mut Self {
        self.lines.push(format!("{key} = {value:?}"));
        self
    }

    pub fn f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.lines.push(format!("{key} = {value:?}"));
        self
    }

    pub fn int(&mut self, key: &str, value: i64) -> &mut Self {
        self.lines.push(format!("{key} = {value}"));
        self
    }

    pub fn bool(&mut self, key: &str, value: bool) -> &mut Self {
        self.lines.push(format!("{key} = {value}"));
        self
    }

    pub fn vec5(&mut self, key: &str, value: &[f64; 5]) -> &mut Self {
        let body = value
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(", ");
        self.lines.push(format!("{key} = [{body}]"));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Atomic file write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, bytes)?;
    std::fs::rename(&tmp_path, path)?;
    Ok(())
}

/// CSV rows of a continuation trace, one accepted step per line.
pub fn trace_csv(trace: &ContinuationTrace) -> String {
    let mut out = String::from(
        "s,xi1,xi2,xi3,xi4,xi5,v_norm,lambda1,lambda2,lambda3,lambda4,lambda5,residual_norm,f_value\n",
    );
    for row in &trace.rows {
        let _ = write!(out, "{:?}", row.s);
        for v in row.xi {
            let _ = write!(out, ",{v:?}");
        }
        let _ = write!(out, ",{:?}", row.v_norm);
        for v in row.lambda {
            let _ = write!(out, ",{v:?}");
        }
        let _ = writeln!(out, ",{:?},{:?}", row.residual_norm, row.f_value);
    }
    out
}

pub fn write_trace(trace: &ContinuationTrace, path: &Path) -> Result<()> {
    write_atomic(path, trace_csv(trace).as_bytes())
}

/// Serialize a coefficient field. The header pins the grid order so a
/// reload verifies compatibility; coefficients round-trip exactly.
pub fn save_field(w: &ScalarField, path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# sigma2 field");
    let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
    let _ = writeln!(out, "l_max = {}", w.grid.l_max);
    let _ = writeln!(out, "n_coeffs = {}", w.coeffs.len());
    for c in &w.coeffs {
        let _ = writeln!(out, "{c:?}");
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_field(grid: &Arc<SphereGrid>, path: &Path) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path)?;
    let mut l_max: Option<usize> = None;
    let mut n_coeffs: Option<usize> = None;
    let mut coeffs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            let parsed: usize = value.parse().map_err(|_| {
                Sigma2Error::Config(format!(
                    "{}:{}: bad header value {value:?}",
                    path.display(),
                    ln + 1
                ))
            })?;
            match key {
                "schema_version" => {
                    if parsed as u32 != SCHEMA_VERSION {
                        return Err(Sigma2Error::Config(format!(
                            "{}: schema_version {parsed} (this build reads {SCHEMA_VERSION})",
                            path.display()
                        )));
                    }
                }
                "l_max" => l_max = Some(parsed),
                "n_coeffs" => n_coeffs = Some(parsed),
                other => {
                    return Err(Sigma2Error::Config(format!(
                        "{}:{}: unknown header key {other:?}",
                        path.display(),
                        ln + 1
                    )))
                }
            }
            continue;
        }
        let c: f64 = line.parse().map_err(|_| {
            Sigma2Error::Config(format!(
                "{}:{}: bad coefficient {line:?}",
                path.display(),
                ln + 1
            ))
        })?;
        coeffs.push(c);
    }
    let l = l_max.ok_or_else(|| {
        Sigma2Error::Config(format!("{}: missing l_max header", path.display()))
    })?;
    if l != grid.l_max {
        return Err(Sigma2Error::Config(format!(
            "{}: field was saved at l_max = {l}, grid runs l_max = {}",
            path.display(),
            grid.l_max
        )));
    }
    if let Some(n) = n_coeffs {
        if n != coeffs.len() {
            return Err(Sigma2Error::Config(format!(
                "{}: header says {n} coefficients, found {}",
                path.display(),
                coeffs.len()
            )));
        }
    }
    if coeffs.len() != grid.n_basis {
        return Err(Sigma2Error::Config(format!(
            "{}: {} coefficients, grid needs {}",
            path.display(),
            coeffs.len(),
            grid.n_basis
        )));
    }
    Ok(ScalarField::from_coeffs(grid.clone(), coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{ContinuationStatus, TraceRow};

    #[test]
    fn fields_round_trip_bit_exactly() {
        let grid = SphereGrid::shared(5).unwrap();
        let w = ScalarField::from_fn(grid.clone(), |x| {
            0.1 * x[0] * x[4] + 0.37 * x[2] - 1.0 / 3.0 * x[1] * x[1]
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.field");
        save_field(&w, &path).unwrap();
        let back = load_field(&grid, &path).unwrap();
        assert_eq!(w.coeffs, back.coeffs, "coefficients must reload bit-identically");

        let other = SphereGrid::shared(6).unwrap();
        let err = load_field(&other, &path).unwrap_err();
        assert!(err.to_string().contains("l_max"));
    }

    #[test]
    fn reports_have_the_fixed_header_and_round_trip_floats() {
        let mut r = Report::new("degree", 8);
        r.section("degree");
        r.int("value", -1).f64("raw", -0.9999999923).bool("complete", true);
        r.vec5("zero", &[0.1, 0.0, -0.25, 1.0 / 3.0, 0.0]);
        let text = r.render();
        assert!(text.starts_with("schema_version = 1\ncommand = \"degree\"\ngrid_l = 8\n"));
        assert!(text.contains("\n[degree]\n"));
        for needle in ["raw = -0.9999999923", "0.3333333333333333"] {
            assert!(text.contains(needle), "missing {needle} in:\n{text}");
        }
    }

    #[test]
    fn trace_csv_is_one_line_per_step() {
        let trace = ContinuationTrace {
            rows: vec![TraceRow {
                s: 0.01,
                xi: [0.0, 0.1, 0.0, 0.0, 0.0],
                v_norm: 1e-3,
                lambda: [0.0; 5],
                residual_norm: 1e-12,
                f_value: 5.375,
            }],
            status: ContinuationStatus::ConvergedAt1,
        };
        let csv = trace_csv(&trace);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 14);
        assert_eq!(lines[1].split(',').count(), 14);
        assert!(lines[1].starts_with("0.01,"));
    }

    #[test]
    fn atomic_write_replaces_not_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        // no stray temp files left behind
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
