//! Configuration files and the experiment runner behind the `lipshape`
//! binary: parses `key = value` configs, runs the descent loop, and emits
//! the per-iteration CSV, VTK snapshots, and a final summary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::descent::{run_with_observer, DescentOptions, StopReason, CSV_HEADER};
use crate::geomdiag::circularity;
use crate::mesh::{unit_square_mesh, Rect, TriMesh};
use crate::meshio::{write_mesh, write_vtk};
use crate::problem::{tracking_instance, verify_derivative_consistency, ProblemSpec};
use crate::shapecalc::finite_difference_check;
use crate::{Error, Result};

/// Parsed and validated run configuration. Every field has a default, so
/// an empty file is a valid configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Problem name; only "tracking" ships.
    pub problem: String,
    /// Half-width of the initial square domain.
    pub half_width: f64,
    /// Subdivisions per side of the initial square mesh.
    pub subdivisions: usize,
    pub gamma: f64,
    pub stop_tol: f64,
    pub max_iter: usize,
    /// Refine congruently every this many iterations; 0 disables.
    pub refine_every: usize,
    pub refine_levels: usize,
    pub output_dir: PathBuf,
    pub holdall_half_width: f64,
    pub direction_p: u32,
    pub newton_tol: f64,
    pub inner_tol: f64,
    pub max_backtracks: usize,
    /// Write a VTK snapshot every this many iterations; 0 disables.
    pub vtk_stride: usize,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            problem: "tracking".into(),
            half_width: 1.0,
            subdivisions: 8,
            gamma: 0.1,
            stop_tol: 1e-3,
            max_iter: 500,
            refine_every: 15,
            refine_levels: 4,
            output_dir: PathBuf::from("out"),
            holdall_half_width: 2.0,
            direction_p: 6,
            newton_tol: 1e-10,
            inner_tol: 1e-8,
            max_backtracks: 30,
            vtk_stride: 1,
        }
    }
}

impl RunConfig {
    pub fn holdall(&self) -> Rect {
        Rect::centered_square(self.holdall_half_width)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        match self.problem.as_str() {
            "tracking" => Ok(tracking_instance(self.holdall())),
            other => Err(Error::Config {
                line: 0,
                detail: format!("unknown problem `{other}` (available: tracking)"),
            }),
        }
    }

    pub fn initial_mesh(&self) -> Result<TriMesh> {
        unit_square_mesh(self.half_width, self.subdivisions, self.holdall())
    }

    pub fn descent_options(&self) -> DescentOptions {
        DescentOptions {
            gamma: self.gamma,
            stop_tol: self.stop_tol,
            max_iter: self.max_iter,
            refine_every: if self.refine_every == 0 {
                None
            } else {
                Some(self.refine_every)
            },
            refine_levels: self.refine_levels,
            direction_p: self.direction_p,
            newton_tol: self.newton_tol,
            inner_tol: self.inner_tol,
            max_backtracks: self.max_backtracks,
            hausdorff_h: None,
        }
    }

    /// Effective configuration, echoed at startup.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        writeln!(s, "problem = {}", self.problem).unwrap();
        writeln!(s, "half_width = {}", self.half_width).unwrap();
        writeln!(s, "subdivisions = {}", self.subdivisions).unwrap();
        writeln!(s, "gamma = {}", self.gamma).unwrap();
        writeln!(s, "stop_tol = {}", self.stop_tol).unwrap();
        writeln!(s, "max_iter = {}", self.max_iter).unwrap();
        writeln!(s, "refine_every = {}", self.refine_every).unwrap();
        writeln!(s, "refine_levels = {}", self.refine_levels).unwrap();
        writeln!(s, "output_dir = {}", self.output_dir.display()).unwrap();
        writeln!(s, "holdall_half_width = {}", self.holdall_half_width).unwrap();
        writeln!(s, "direction_p = {}", self.direction_p).unwrap();
        writeln!(s, "newton_tol = {}", self.newton_tol).unwrap();
        writeln!(s, "inner_tol = {}", self.inner_tol).unwrap();
        writeln!(s, "max_backtracks = {}", self.max_backtracks).unwrap();
        writeln!(s, "vtk_stride = {}", self.vtk_stride).unwrap();
        s
    }
}

/// Parses the line-oriented `key = value` format: `#` starts a comment,
/// blank lines are skipped, unknown or duplicate keys are rejected, and
/// absent keys keep their defaults.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            detail: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config {
                line: line_no,
                detail: format!("duplicate key `{key}`"),
            });
        }
        seen.push(key.to_string());

        let bad_value = |detail: String| Error::Config {
            line: line_no,
            detail,
        };
        macro_rules! parse_as {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|e| bad_value(format!("key `{key}`: bad value `{value}`: {e}")))?
            };
        }
        match key {
            "problem" => config.problem = value.to_string(),
            "half_width" => {
                config.half_width = parse_as!(f64);
                if config.half_width <= 0.0 {
                    return Err(bad_value("half_width must be positive".into()));
                }
            }
            "subdivisions" => {
                config.subdivisions = parse_as!(usize);
                if config.subdivisions < 2 {
                    return Err(bad_value("subdivisions must be at least 2".into()));
                }
            }
            "gamma" => {
                config.gamma = parse_as!(f64);
                if !(config.gamma > 0.0 && config.gamma < 1.0) {
                    return Err(bad_value(format!(
                        "gamma = {} violates gamma in (0, 1)",
                        config.gamma
                    )));
                }
            }
            "stop_tol" => {
                config.stop_tol = parse_as!(f64);
                if config.stop_tol <= 0.0 {
                    return Err(bad_value("stop_tol must be positive".into()));
                }
            }
            "max_iter" => config.max_iter = parse_as!(usize),
            "refine_every" => config.refine_every = parse_as!(usize),
            "refine_levels" => {
                config.refine_levels = parse_as!(usize);
                if config.refine_levels < 1 {
                    return Err(bad_value("refine_levels must be at least 1".into()));
                }
            }
            "output_dir" => config.output_dir = PathBuf::from(value),
            "holdall_half_width" => {
                config.holdall_half_width = parse_as!(f64);
                if config.holdall_half_width <= 0.0 {
                    return Err(bad_value("holdall_half_width must be positive".into()));
                }
            }
            "direction_p" => {
                config.direction_p = parse_as!(u32);
                if config.direction_p < 4 || config.direction_p % 2 != 0 {
                    return Err(bad_value("direction_p must be an even integer >= 4".into()));
                }
            }
            "newton_tol" => {
                config.newton_tol = parse_as!(f64);
                if config.newton_tol <= 0.0 {
                    return Err(bad_value("newton_tol must be positive".into()));
                }
            }
            "inner_tol" => {
                config.inner_tol = parse_as!(f64);
                if config.inner_tol <= 0.0 {
                    return Err(bad_value("inner_tol must be positive".into()));
                }
            }
            "max_backtracks" => {
                config.max_backtracks = parse_as!(usize);
                if config.max_backtracks == 0 {
                    return Err(bad_value("max_backtracks must be at least 1".into()));
                }
            }
            "vtk_stride" => config.vtk_stride = parse_as!(usize),
            other => {
                return Err(Error::Config {
                    line: line_no,
                    detail: format!("unknown key `{other}`"),
                })
            }
        }
    }
    if config.half_width >= config.holdall_half_width {
        return Err(Error::Config {
            line: 0,
            detail: format!(
                "half_width = {} must be smaller than holdall_half_width = {}",
                config.half_width, config.holdall_half_width
            ),
        });
    }
    Ok(config)
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentSummary {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub final_j: f64,
    pub final_dual_norm: f64,
    pub final_area: f64,
    pub refinements: usize,
    pub runtime_seconds: f64,
    pub csv_path: PathBuf,
}

/// Runs the configured experiment, writing `iterations.csv`, optional
/// per-iteration VTK snapshots, the final mesh, and `summary.txt` into the
/// output directory. On a solver abort the error diagnostic is written to
/// the summary before the error is returned.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(&config.output_dir)?;
    let spec = config.problem_spec()?;
    let initial = config.initial_mesh()?;
    let opts = config.descent_options();

    let csv_path = config.output_dir.join("iterations.csv");
    let mut csv = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(csv, "{CSV_HEADER}")?;

    let started = Instant::now();
    let vtk_stride = config.vtk_stride;
    let out_dir = config.output_dir.clone();
    let mut observer_error: Option<Error> = None;
    let result = run_with_observer(initial, &spec, &opts, |info| {
        if observer_error.is_some() {
            return;
        }
        // Flush per row so long runs can be monitored from the file.
        if let Err(e) = writeln!(csv, "{}", info.row.to_csv_line()).and_then(|_| csv.flush()) {
            observer_error = Some(e.into());
            return;
        }
        if info.k.is_multiple_of(25) {
            println!(
                "k {:4}  J {:.6e}  dual {:.3e}  t {:<9}  triangles {}",
                info.k, info.row.j, info.row.dual_norm, info.row.t_k, info.row.n_triangles
            );
        }
        if vtk_stride > 0 && info.k.is_multiple_of(vtk_stride) {
            let path = out_dir.join(format!("mesh_{:06}.vtk", info.k));
            if let Err(e) = write_vtk(
                info.mesh,
                &path,
                &[("u", &info.solution.u), ("p", &info.solution.p)],
                &[("V", &info.direction.v)],
            ) {
                observer_error = Some(e);
            }
        }
    });
    let runtime_seconds = started.elapsed().as_secs_f64();

    let state = match result {
        Ok(state) => state,
        Err(e) => {
            let mut s = String::new();
            writeln!(s, "status = aborted").unwrap();
            writeln!(s, "error = {e}").unwrap();
            writeln!(s, "runtime_seconds = {runtime_seconds:.3}").unwrap();
            std::fs::write(config.output_dir.join("summary.txt"), s)?;
            return Err(e);
        }
    };
    csv.flush()?;
    drop(csv);
    if let Some(e) = observer_error {
        return Err(e);
    }

    write_mesh(&state.mesh, &config.output_dir.join("final_mesh.txt"))?;
    // The snapshot stride can skip the terminal iterate; always leave the
    // final geometry behind.
    write_vtk(
        &state.mesh,
        &config.output_dir.join("final_mesh.vtk"),
        &[],
        &[],
    )?;

    let last = state.rows.last().expect("at least one row");
    let mut s = String::new();
    writeln!(s, "status = completed").unwrap();
    writeln!(s, "stop_reason = {}", state.stop_reason.as_str()).unwrap();
    writeln!(s, "iterations = {}", last.k).unwrap();
    writeln!(s, "final_J = {}", last.j).unwrap();
    writeln!(s, "final_dual_norm = {}", last.dual_norm).unwrap();
    writeln!(s, "final_area = {}", last.area).unwrap();
    writeln!(s, "final_perimeter = {}", last.perimeter).unwrap();
    writeln!(s, "final_triangles = {}", last.n_triangles).unwrap();
    writeln!(s, "refinements = {}", state.refinements).unwrap();
    match circularity(&state.mesh) {
        Ok(c) => {
            writeln!(
                s,
                "circularity_centroid = {} {}",
                c.centroid[0], c.centroid[1]
            )
            .unwrap();
            writeln!(s, "circularity_mean_radius = {}", c.mean_radius).unwrap();
            writeln!(s, "circularity_radius_cv = {}", c.radius_cv).unwrap();
        }
        Err(_) => writeln!(s, "circularity = n/a (multiple boundary loops)").unwrap(),
    }
    writeln!(s, "state_sup_bound_2k = {}", state.state_sup_bound).unwrap();
    writeln!(
        s,
        "sup_bound_violations = {}",
        state.sup_bound_violations.len()
    )
    .unwrap();
    writeln!(s, "runtime_seconds = {runtime_seconds:.3}").unwrap();
    std::fs::write(config.output_dir.join("summary.txt"), &s)?;

    Ok(ExperimentSummary {
        stop_reason: state.stop_reason,
        iterations: last.k,
        final_j: last.j,
        final_dual_norm: last.dual_norm,
        final_area: last.area,
        refinements: state.refinements,
        runtime_seconds,
        csv_path,
    })
}

/// Runs the derivative and shape-gradient self-tests for the configured
/// problem and initial mesh; returns true when everything passes. Progress
/// is written to the given sink (stdout in the binary).
pub fn run_self_checks<W: std::io::Write>(config: &RunConfig, out: &mut W) -> Result<bool> {
    let spec = config.problem_spec()?;
    let mut all_pass = true;

    let report = verify_derivative_consistency(&spec, 100, 1e-4);
    writeln!(
        out,
        "derivative consistency (threshold {:.3e}):",
        report.threshold
    )?;
    for check in &report.checks {
        writeln!(
            out,
            "  {:8} max relative mismatch {:.3e}  [{}]",
            check.field,
            check.max_rel_mismatch,
            if check.max_rel_mismatch <= report.threshold {
                "pass"
            } else {
                "FAIL"
            }
        )?;
    }
    all_pass &= report.pass();

    // Dilation-dominant test field: on a symmetric initial domain with
    // radial data, purely antisymmetric fields pair to a derivative at
    // roundoff level and make the relative-error check meaningless.
    let mesh = config.initial_mesh()?;
    let raw = crate::mesh::VertexField::from_fn(&mesh, |x| {
        let hw = config.half_width;
        let bx = hw * hw - x[0] * x[0];
        let by = hw * hw - x[1] * x[1];
        [x[0] + 0.7 * bx * by, x[1] - 0.4 * bx * by * x[0]]
    });
    let scale = crate::direction::max_element_spectral_norm(&mesh, &raw);
    let v = raw.scaled(1.0 / scale);
    let fd = finite_difference_check(&mesh, &spec, &v, &[1e-2, 1e-3, 1e-4], config.newton_tol)?;
    writeln!(
        out,
        "shape derivative: J = {:.6e}, J'[V] = {:.6e}",
        fd.j_value, fd.directional_derivative
    )?;
    for e in &fd.entries {
        writeln!(
            out,
            "  t = {:8.1e}  quotient {:+.6e}  error {:.3e}",
            e.t, e.difference_quotient, e.abs_error
        )?;
    }
    let rel = fd.relative_error_at(1e-3).unwrap_or(f64::INFINITY);
    let fd_pass = (0.7..=1.3).contains(&fd.slope) && rel < 0.05;
    writeln!(
        out,
        "  slope {:.3} (want 1.0 +- 0.3), relative error at t=1e-3: {:.3e}  [{}]",
        fd.slope,
        rel,
        if fd_pass { "pass" } else { "FAIL" }
    )?;
    all_pass &= fd_pass;
    Ok(all_pass)
}

/// Writes the configured initial mesh (text format and VTK) into the
/// output directory.
pub fn emit_initial_mesh(config: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(&config.output_dir)?;
    let mesh = config.initial_mesh()?;
    let text_path = config.output_dir.join("initial_mesh.txt");
    let vtk_path = config.output_dir.join("initial_mesh.vtk");
    write_mesh(&mesh, &text_path)?;
    write_vtk(&mesh, &vtk_path, &[], &[])?;
    Ok((text_path, vtk_path))
}
