//! The outer steepest-descent loop: direction, dyadic Armijo backtracking,
//! mesh update, Lipschitz-norm tracking of the accumulated deformation, and
//! the dual-norm stopping test.

use crate::direction::{
    max_element_spectral_norm, spectral_norm_2x2, steepest_direction, DirectionResult,
};
use crate::geomdiag::hausdorff_complementary;
use crate::mat2::{sub, Mat2};
use crate::mesh::{deform, element_gradients, refine_congruent, TriMesh, VertexField};
use crate::pde::{dirichlet_sup_bound, solve, solve_state, PdeSolution};
use crate::problem::ProblemSpec;
use crate::shapecalc::{assemble_shape_gradient, evaluate_j};
use crate::{Error, Result};

/// Tunable parameters of the descent loop.
#[derive(Clone, Debug)]
pub struct DescentOptions {
    /// Armijo constant in (0, 1).
    pub gamma: f64,
    /// Stop when the dual-norm estimate falls to or below this value.
    pub stop_tol: f64,
    pub max_iter: usize,
    /// Congruently refine every this many iterations (None: never).
    pub refine_every: Option<usize>,
    /// Total number of refinement levels including the initial one.
    pub refine_levels: usize,
    /// Regularization exponent of the direction subproblem.
    pub direction_p: u32,
    pub newton_tol: f64,
    /// Relative gradient tolerance of the inner direction solver.
    pub inner_tol: f64,
    pub max_backtracks: usize,
    /// Grid step for the per-iteration Hausdorff column (None: hold-all
    /// diameter / 128).
    pub hausdorff_h: Option<f64>,
}

impl Default for DescentOptions {
    fn default() -> DescentOptions {
        DescentOptions {
            gamma: 0.1,
            stop_tol: 1e-3,
            max_iter: 500,
            refine_every: None,
            refine_levels: 4,
            direction_p: crate::direction::DEFAULT_P,
            newton_tol: crate::pde::DEFAULT_NEWTON_TOL,
            inner_tol: crate::direction::DEFAULT_INNER_TOL,
            max_backtracks: 30,
            hausdorff_h: None,
        }
    }
}

/// Why the loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Dual-norm estimate reached `stop_tol`.
    Tolerance,
    /// Iteration budget exhausted.
    MaxIter,
    /// Mesh quality fell below the floor (the shrinking-domain outcome).
    Degenerate,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIter => "max_iter",
            StopReason::Degenerate => "degenerate",
        }
    }
}

/// One accepted Armijo step with the data needed to re-verify its
/// acceptance inequality and the bi-Lipschitz bounds a posteriori.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub j_before: f64,
    pub j_after: f64,
    /// `J'(Omega^k)[V^k]` (negative for a descent direction).
    pub directional_derivative: f64,
    pub backtracks: usize,
    /// Minimum over elements of `det(I + t DV)`.
    pub min_det: f64,
    /// Maximum per-element spectral norm of `DV` (before stepping).
    pub max_dv_spectral: f64,
}

/// One CSV row; the columns are, in order:
/// `k, J, dual_norm, t_k, dPhi_inf, area, perimeter, n_triangles,
/// state_newton_iters, hausdorff_to_prev`. The terminal iterate carries
/// `t_k = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub j: f64,
    pub dual_norm: f64,
    pub t_k: f64,
    pub dphi_inf: f64,
    pub area: f64,
    pub perimeter: f64,
    pub n_triangles: usize,
    pub state_newton_iters: usize,
    pub hausdorff_to_prev: f64,
}

pub const CSV_HEADER: &str =
    "k,J,dual_norm,t_k,dPhi_inf,area,perimeter,n_triangles,state_newton_iters,hausdorff_to_prev";

impl IterationRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.j,
            self.dual_norm,
            self.t_k,
            self.dphi_inf,
            self.area,
            self.perimeter,
            self.n_triangles,
            self.state_newton_iters,
            self.hausdorff_to_prev
        )
    }

    pub fn from_csv_line(line: &str) -> Result<IterationRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse {
                path: "csv".into(),
                line: 0,
                detail: format!("expected 10 columns, found {}", fields.len()),
            });
        }
        let bad = |tok: &str, e: &dyn std::fmt::Display| Error::Parse {
            path: "csv".into(),
            line: 0,
            detail: format!("bad field `{tok}`: {e}"),
        };
        Ok(IterationRow {
            k: fields[0].parse().map_err(|e| bad(fields[0], &e))?,
            j: fields[1].parse().map_err(|e| bad(fields[1], &e))?,
            dual_norm: fields[2].parse().map_err(|e| bad(fields[2], &e))?,
            t_k: fields[3].parse().map_err(|e| bad(fields[3], &e))?,
            dphi_inf: fields[4].parse().map_err(|e| bad(fields[4], &e))?,
            area: fields[5].parse().map_err(|e| bad(fields[5], &e))?,
            perimeter: fields[6].parse().map_err(|e| bad(fields[6], &e))?,
            n_triangles: fields[7].parse().map_err(|e| bad(fields[7], &e))?,
            state_newton_iters: fields[8].parse().map_err(|e| bad(fields[8], &e))?,
            hausdorff_to_prev: fields[9].parse().map_err(|e| bad(fields[9], &e))?,
        })
    }
}

/// Full record of a descent run.
#[derive(Debug)]
pub struct DescentState {
    pub mesh: TriMesh,
    /// The reference mesh at the current refinement level; shares
    /// connectivity with `mesh`.
    pub reference_mesh: TriMesh,
    pub gamma: f64,
    pub stop_tol: f64,
    /// `J(Omega^k)` per visited iterate.
    pub j_history: Vec<f64>,
    /// Dual-norm estimate per visited iterate.
    pub dualnorm_history: Vec<f64>,
    /// Accepted step sizes (one fewer than iterates visited when the run
    /// stops on a terminal iterate).
    pub step_history: Vec<f64>,
    /// Max element spectral norm of the reference-to-current Jacobian per
    /// visited iterate.
    pub dphi_inf_history: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub rows: Vec<IterationRow>,
    pub stop_reason: StopReason,
    /// Number of congruent refinements performed during the run.
    pub refinements: usize,
    /// `2K` bound from the auxiliary hold-all solve; `sup |u|` should stay
    /// below it on every iterate.
    pub state_sup_bound: f64,
    /// Iterations whose state exceeded the bound (expected to stay empty).
    pub sup_bound_violations: Vec<usize>,
}

impl DescentState {
    /// Lipschitz norm of the accumulated deformation at the final iterate.
    pub fn dphi_infinity(&self) -> f64 {
        dphi_infinity(&self.reference_mesh, &self.mesh)
    }
}

/// Per-iteration view handed to the observer callback of
/// [`run_with_observer`], in time for snapshot output.
pub struct IterationInfo<'a> {
    pub k: usize,
    pub mesh: &'a TriMesh,
    pub solution: &'a PdeSolution,
    pub direction: &'a DirectionResult,
    pub row: &'a IterationRow,
}

/// Maximum over elements of the spectral norm of the affine map Jacobian
/// from each reference triangle to the corresponding current triangle.
/// The meshes must share connectivity.
pub fn dphi_infinity(reference: &TriMesh, current: &TriMesh) -> f64 {
    assert_eq!(reference.triangles(), current.triangles());
    let mut worst = 0.0f64;
    for (t, tri) in reference.triangles().iter().enumerate() {
        let (r0, r1, r2) = (
            reference.vertices()[tri[0]],
            reference.vertices()[tri[1]],
            reference.vertices()[tri[2]],
        );
        let cur = current.triangles()[t];
        let (c0, c1, c2) = (
            current.vertices()[cur[0]],
            current.vertices()[cur[1]],
            current.vertices()[cur[2]],
        );
        let e_ref = columns(sub(r1, r0), sub(r2, r0));
        let e_cur = columns(sub(c1, c0), sub(c2, c0));
        let jac = e_cur.mul(e_ref.inverse());
        worst = worst.max(spectral_norm_2x2(&jac));
    }
    worst
}

fn columns(a: [f64; 2], b: [f64; 2]) -> Mat2 {
    Mat2([[a[0], b[0]], [a[1], b[1]]])
}

/// Outcome of one accepted Armijo step.
pub struct AcceptedStep {
    pub t: f64,
    pub mesh: TriMesh,
    pub u: Vec<f64>,
    pub j_new: f64,
    pub backtracks: usize,
}

/// Tries `t = 1/2, 1/4, ...` in order and accepts the first step with
/// `J(Omega_t) - J(Omega) <= gamma t J'(Omega)[V]`. Trial solves reuse the
/// previous state as the Newton warm start.
#[allow(clippy::too_many_arguments)]
pub fn armijo_step(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    j_current: f64,
    u_current: &[f64],
    dir: &DirectionResult,
    gamma: f64,
    max_backtracks: usize,
    newton_tol: f64,
    iteration: usize,
) -> Result<AcceptedStep> {
    assert!(dir.dual_norm_estimate > 0.0, "needs a descent direction");
    let directional = -dir.dual_norm_estimate;
    for i in 0..max_backtracks {
        let t = 0.5f64.powi(i as i32 + 1);
        let trial = deform(mesh, &dir.v, t)?;
        let (u_t, _) = solve_state(&trial, spec, newton_tol, Some(u_current))?;
        let j_t = evaluate_j(&trial, spec, &u_t);
        if j_t - j_current <= gamma * t * directional {
            return Ok(AcceptedStep {
                t,
                mesh: trial,
                u: u_t,
                j_new: j_t,
                backtracks: i,
            });
        }
    }
    Err(Error::ArmijoExhausted {
        iteration,
        max_backtracks,
    })
}

/// Runs the descent loop; see [`run_with_observer`].
pub fn run(
    initial_mesh: TriMesh,
    spec: &ProblemSpec,
    opts: &DescentOptions,
) -> Result<DescentState> {
    run_with_observer(initial_mesh, spec, opts, |_| {})
}

/// Runs the descent loop, invoking the observer once per visited iterate
/// (after its row is complete, before the mesh moves on).
pub fn run_with_observer<F: FnMut(&IterationInfo)>(
    initial_mesh: TriMesh,
    spec: &ProblemSpec,
    opts: &DescentOptions,
    mut observer: F,
) -> Result<DescentState> {
    assert!(
        opts.gamma > 0.0 && opts.gamma < 1.0,
        "gamma must lie in (0, 1)"
    );
    assert!(opts.stop_tol > 0.0);

    let hausdorff_h = opts
        .hausdorff_h
        .unwrap_or_else(|| initial_mesh.holdall().diameter() / 128.0);
    let state_sup_bound = 2.0 * dirichlet_sup_bound(spec, 64)?;

    let mut mesh = initial_mesh.clone();
    let mut reference = initial_mesh;
    let mut area_floor = 1e-6 * mesh.min_triangle_area();
    let mut warm_u: Option<Vec<f64>> = None;
    let mut warm_v: Option<VertexField> = None;
    let mut prev_mesh: Option<TriMesh> = None;

    let mut state = DescentState {
        mesh: mesh.clone(),
        reference_mesh: reference.clone(),
        gamma: opts.gamma,
        stop_tol: opts.stop_tol,
        j_history: Vec::new(),
        dualnorm_history: Vec::new(),
        step_history: Vec::new(),
        dphi_inf_history: Vec::new(),
        steps: Vec::new(),
        rows: Vec::new(),
        stop_reason: StopReason::MaxIter,
        refinements: 0,
        state_sup_bound,
        sup_bound_violations: Vec::new(),
    };

    let mut k = 0usize;
    loop {
        let sol = solve(&mesh, spec, opts.newton_tol, warm_u.as_deref())?;
        let sup_u = sol.u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if sup_u > state_sup_bound * 1.05 {
            state.sup_bound_violations.push(k);
        }

        let grad = assemble_shape_gradient(&mesh, spec, &sol);
        let dir = steepest_direction(
            &mesh,
            &grad,
            opts.direction_p,
            opts.inner_tol,
            warm_v.as_ref(),
        )?;
        let dphi = dphi_infinity(&reference, &mesh);
        let hausdorff_to_prev = match &prev_mesh {
            Some(prev) => hausdorff_complementary(&mesh, prev, hausdorff_h)?,
            None => 0.0,
        };

        state.j_history.push(grad.j_value);
        state.dualnorm_history.push(dir.dual_norm_estimate);
        state.dphi_inf_history.push(dphi);

        let mut row = IterationRow {
            k,
            j: grad.j_value,
            dual_norm: dir.dual_norm_estimate,
            t_k: 0.0,
            dphi_inf: dphi,
            area: mesh.total_area(),
            perimeter: crate::geomdiag::boundary_length(&mesh),
            n_triangles: mesh.n_triangles(),
            state_newton_iters: sol.newton_iterations,
            hausdorff_to_prev,
        };

        // Terminal iterate: stationarity, budget, or mesh quality floor.
        let degenerate = mesh.min_triangle_area() < area_floor || mesh.min_angle_deg() < 1.0;
        if dir.dual_norm_estimate <= opts.stop_tol || k >= opts.max_iter || degenerate {
            state.rows.push(row.clone());
            observer(&IterationInfo {
                k,
                mesh: &mesh,
                solution: &sol,
                direction: &dir,
                row: &row,
            });
            state.stop_reason = if dir.dual_norm_estimate <= opts.stop_tol {
                StopReason::Tolerance
            } else if degenerate {
                StopReason::Degenerate
            } else {
                StopReason::MaxIter
            };
            break;
        }

        let step = armijo_step(
            &mesh,
            spec,
            grad.j_value,
            &sol.u,
            &dir,
            opts.gamma,
            opts.max_backtracks,
            opts.newton_tol,
            k,
        )?;

        let dv = element_gradients(&mesh, &dir.v);
        let min_det = dv
            .iter()
            .map(|g| Mat2::IDENTITY.add(g.scale(step.t)).det())
            .fold(f64::INFINITY, f64::min);
        state.steps.push(StepRecord {
            k,
            t: step.t,
            j_before: grad.j_value,
            j_after: step.j_new,
            directional_derivative: -dir.dual_norm_estimate,
            backtracks: step.backtracks,
            min_det,
            max_dv_spectral: max_element_spectral_norm(&mesh, &dir.v),
        });
        state.step_history.push(step.t);

        row.t_k = step.t;
        state.rows.push(row.clone());
        observer(&IterationInfo {
            k,
            mesh: &mesh,
            solution: &sol,
            direction: &dir,
            row: &row,
        });

        prev_mesh = Some(mesh.clone());
        warm_u = Some(step.u);
        warm_v = Some(dir.v.clone());
        mesh = step.mesh;
        k += 1;

        if let Some(every) = opts.refine_every {
            let level = state.refinements + 1;
            if every > 0 && k.is_multiple_of(every) && level < opts.refine_levels {
                let mut carried = Vec::new();
                if let Some(u) = &warm_u {
                    carried.push(VertexField::new(u.iter().map(|&x| [x, 0.0]).collect()));
                }
                if let Some(v) = &warm_v {
                    carried.push(v.clone());
                }
                let (fine_mesh, fine_fields) = refine_congruent(&mesh, &carried);
                let (fine_reference, _) = refine_congruent(&reference, &[]);
                let mut it = fine_fields.into_iter();
                if warm_u.is_some() {
                    let wu = it.next().unwrap();
                    warm_u = Some(wu.values().iter().map(|v| v[0]).collect());
                }
                if warm_v.is_some() {
                    warm_v = Some(it.next().unwrap());
                }
                mesh = fine_mesh;
                reference = fine_reference;
                state.refinements += 1;
                area_floor = 1e-6 * mesh.min_triangle_area();
                // The previous mesh lives on the coarser level; the
                // Hausdorff column remains well defined across levels.
            }
        }
    }

    state.mesh = mesh;
    state.reference_mesh = reference;
    Ok(state)
}
