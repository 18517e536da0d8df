//! P1 finite-element solvers for the semilinear state equation
//! `-Laplace(u) + g(u) = f` and the linear adjoint equation, both with
//! homogeneous Dirichlet data on the domain boundary.
//!
//! Nonlinear and weighted terms use the 3-point mid-edge quadrature rule,
//! which is exact for quadratics; the stiffness matrix is exact for P1.

use crate::linalg::{cg_solve, norm2, SparseMatrix};
use crate::mat2::{dot, Point2};
use crate::mesh::{rect_mesh, scalar_element_gradients, TriMesh};
use crate::problem::ProblemSpec;
use crate::{Error, Result};

/// Default absolute tolerance on the algebraic Newton residual.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;

/// Relative CG tolerance used for all linear solves in this module.
pub const CG_TOL: f64 = 1e-12;

const MAX_NEWTON: usize = 50;

/// P1 basis values at the mid-edge quadrature points, ordered like
/// [`TriMesh::midedge_points`]: row `q`, column `a` is `phi_a(x_q)`.
pub const MID_PHI: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// State and adjoint solutions on one mesh.
#[derive(Clone, Debug)]
pub struct PdeSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub newton_iterations: usize,
    /// Newton residual norm per iteration, including the initial residual.
    pub residual_norms: Vec<f64>,
}

/// Exact P1 stiffness matrix (no boundary conditions applied).
pub fn assemble_stiffness(mesh: &TriMesh) -> SparseMatrix {
    SparseMatrix::from_triplets(mesh.n_vertices(), &stiffness_triplets(mesh))
        .expect("stiffness indices are in range")
}

fn stiffness_triplets(mesh: &TriMesh) -> Vec<(usize, usize, f64)> {
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let (grads, area) = mesh.p1_gradients(t);
        let tri = mesh.triangles()[t];
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((tri[a], tri[b], area * dot(grads[a], grads[b])));
            }
        }
    }
    triplets
}

/// Weighted mass matrix `int w(u_h) phi_i phi_j` where the nodal field is
/// interpolated to the quadrature points before applying `w`.
pub fn assemble_mass_weighted<W: Fn(f64) -> f64>(
    mesh: &TriMesh,
    nodal: &[f64],
    weight: W,
) -> SparseMatrix {
    SparseMatrix::from_triplets(
        mesh.n_vertices(),
        &weighted_mass_triplets(mesh, nodal, &weight),
    )
    .expect("mass indices are in range")
}

fn weighted_mass_triplets<W: Fn(f64) -> f64>(
    mesh: &TriMesh,
    nodal: &[f64],
    weight: &W,
) -> Vec<(usize, usize, f64)> {
    assert_eq!(nodal.len(), mesh.n_vertices());
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let area = mesh.triangle_area(t);
        let w_quad = area / 3.0;
        for q in 0..3 {
            let u_q: f64 = (0..3).map(|a| MID_PHI[q][a] * nodal[tri[a]]).sum();
            let wq = weight(u_q) * w_quad;
            for a in 0..3 {
                for b in 0..3 {
                    triplets.push((tri[a], tri[b], wq * MID_PHI[q][a] * MID_PHI[q][b]));
                }
            }
        }
    }
    triplets
}

/// Load vector `int f phi_i` with `f` evaluated at the quadrature points.
pub fn assemble_load<F: Fn(Point2) -> f64>(mesh: &TriMesh, f: F) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let points = mesh.midedge_points(t);
        let w_quad = mesh.triangle_area(t) / 3.0;
        for q in 0..3 {
            let fq = f(points[q]) * w_quad;
            for a in 0..3 {
                load[tri[a]] += fq * MID_PHI[q][a];
            }
        }
    }
    load
}

/// Load vector `int g(u_h) phi_i` for a nodal field.
fn assemble_g_load(mesh: &TriMesh, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let w_quad = mesh.triangle_area(t) / 3.0;
        for q in 0..3 {
            let u_q: f64 = (0..3).map(|a| MID_PHI[q][a] * u[tri[a]]).sum();
            let gq = spec.g(u_q) * w_quad;
            for a in 0..3 {
                load[tri[a]] += gq * MID_PHI[q][a];
            }
        }
    }
    load
}

/// Right-hand side of the adjoint equation:
/// `int j_u(x, u_h, grad u_h) phi_i + j_z(x, u_h, grad u_h) . grad phi_i`.
fn assemble_adjoint_load(mesh: &TriMesh, spec: &ProblemSpec, u: &[f64]) -> Vec<f64> {
    let grad_u = scalar_element_gradients(mesh, u);
    let mut load = vec![0.0; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let (grads, area) = mesh.p1_gradients(t);
        let points = mesh.midedge_points(t);
        let w_quad = area / 3.0;
        for q in 0..3 {
            let u_q: f64 = (0..3).map(|a| MID_PHI[q][a] * u[tri[a]]).sum();
            let ju = spec.j_u(points[q], u_q, grad_u[t]);
            let jz = spec.j_z(points[q], u_q, grad_u[t]);
            for a in 0..3 {
                load[tri[a]] += w_quad * (ju * MID_PHI[q][a] + dot(jz, grads[a]));
            }
        }
    }
    load
}

/// Applies homogeneous Dirichlet conditions by symmetric elimination:
/// boundary rows and columns are dropped and replaced by a unit diagonal.
fn dirichlet_matrix(mesh: &TriMesh, triplets: Vec<(usize, usize, f64)>) -> SparseMatrix {
    let mut kept: Vec<(usize, usize, f64)> = triplets
        .into_iter()
        .filter(|&(r, c, _)| !mesh.is_boundary_vertex(r) && !mesh.is_boundary_vertex(c))
        .collect();
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary_vertex(v) {
            kept.push((v, v, 1.0));
        }
    }
    SparseMatrix::from_triplets(mesh.n_vertices(), &kept).expect("indices in range")
}

fn zero_boundary(mesh: &TriMesh, v: &mut [f64]) {
    for i in 0..mesh.n_vertices() {
        if mesh.is_boundary_vertex(i) {
            v[i] = 0.0;
        }
    }
}

/// Solves the state equation by a damped Newton method.
///
/// The residual is `F(u) = K u + N(u) - b` restricted to interior nodes,
/// with `N` the nonlinear load and `b` the source load. The Jacobian
/// `K + M_{g'(u)}` is positive definite because `g' >= 0`. If a full step
/// increases the residual norm, the step is halved until it decreases.
pub fn solve_state(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    newton_tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = mesh.n_vertices();
    let stiffness = assemble_stiffness(mesh);
    let mut b = assemble_load(mesh, |x| spec.f(x));
    zero_boundary(mesh, &mut b);

    let mut u = match warm_start {
        Some(w) => {
            assert_eq!(w.len(), n);
            w.to_vec()
        }
        None => vec![0.0; n],
    };
    zero_boundary(mesh, &mut u);

    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r = stiffness.matvec(u);
        let nl = assemble_g_load(mesh, spec, u);
        for i in 0..n {
            r[i] += nl[i] - b[i];
        }
        zero_boundary_vec(mesh, r)
    };

    let mut r = residual(&u);
    let mut r_norm = norm2(&r);
    let mut history = vec![r_norm];

    for _ in 0..MAX_NEWTON {
        if r_norm <= newton_tol {
            return Ok((u, history));
        }
        let mut triplets = stiffness_triplets(mesh);
        triplets.extend(weighted_mass_triplets(mesh, &u, &|t| spec.g_prime(t)));
        let jacobian = dirichlet_matrix(mesh, triplets);
        let neg_r: Vec<f64> = r.iter().map(|&x| -x).collect();
        let delta = cg_solve(&jacobian, &neg_r, CG_TOL, 20 * n.max(100), None)?.x;

        // Halving line search on the residual norm.
        let mut s = 1.0;
        loop {
            let trial: Vec<f64> = (0..n).map(|i| u[i] + s * delta[i]).collect();
            let r_trial = residual(&trial);
            let rn_trial = norm2(&r_trial);
            if rn_trial < r_norm {
                u = trial;
                r = r_trial;
                r_norm = rn_trial;
                break;
            }
            s *= 0.5;
            if s < 1e-8 {
                return Err(Error::NewtonNoConvergence {
                    iterations: history.len() - 1,
                    residual: r_norm,
                });
            }
        }
        history.push(r_norm);
    }
    if r_norm <= newton_tol {
        return Ok((u, history));
    }
    Err(Error::NewtonNoConvergence {
        iterations: MAX_NEWTON,
        residual: r_norm,
    })
}

fn zero_boundary_vec(mesh: &TriMesh, mut v: Vec<f64>) -> Vec<f64> {
    zero_boundary(mesh, &mut v);
    v
}

/// Solves the adjoint equation `(K + M_{g'(u)}) p = dJ/du` with homogeneous
/// Dirichlet data; one SPD linear solve.
pub fn solve_adjoint(mesh: &TriMesh, spec: &ProblemSpec, u: &[f64]) -> Result<Vec<f64>> {
    let n = mesh.n_vertices();
    let mut triplets = stiffness_triplets(mesh);
    triplets.extend(weighted_mass_triplets(mesh, u, &|t| spec.g_prime(t)));
    let a = dirichlet_matrix(mesh, triplets);
    let mut rhs = assemble_adjoint_load(mesh, spec, u);
    zero_boundary(mesh, &mut rhs);
    let mut p = cg_solve(&a, &rhs, CG_TOL, 20 * n.max(100), None)?.x;
    zero_boundary(mesh, &mut p);
    Ok(p)
}

/// Solves state then adjoint.
pub fn solve(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    newton_tol: f64,
    warm_start: Option<&[f64]>,
) -> Result<PdeSolution> {
    let (u, residual_norms) = solve_state(mesh, spec, newton_tol, warm_start)?;
    let p = solve_adjoint(mesh, spec, &u)?;
    Ok(PdeSolution {
        u,
        p,
        newton_iterations: residual_norms.len() - 1,
        residual_norms,
    })
}

/// Sup bound of the auxiliary problem `-Laplace(v) = f - g(0)` on the
/// hold-all with zero boundary data, computed on an `n` by `n` mesh of the
/// hold-all. The state satisfies `|u| <= 2 K` with `K` this bound, which
/// the descent loop uses as a cheap a-priori sanity check.
pub fn dirichlet_sup_bound(spec: &ProblemSpec, n: usize) -> Result<f64> {
    let d = spec.holdall();
    let mesh = rect_mesh(d.min[0], d.max[0], d.min[1], d.max[1], n, n, d)?;
    let g0 = spec.g(0.0);
    let a = dirichlet_matrix(&mesh, stiffness_triplets(&mesh));
    let mut rhs = assemble_load(&mesh, |x| spec.f(x) - g0);
    zero_boundary(&mesh, &mut rhs);
    let v = cg_solve(&a, &rhs, CG_TOL, 20 * mesh.n_vertices(), None)?.x;
    Ok(v.iter().fold(0.0f64, |m, &x| m.max(x.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{disk_mesh, unit_square_mesh, Rect};
    use crate::problem::{reference_radius, tracking_instance, ProblemSpec};
    use rand::{Rng, SeedableRng};

    fn holdall() -> Rect {
        Rect::centered_square(2.0)
    }

    fn poisson_spec(f_const: f64) -> ProblemSpec {
        ProblemSpec::new(
            Box::new(|_| 0.0),
            Box::new(|_| 0.0),
            Box::new(|_| 0.0),
            Box::new(move |_| f_const),
            Box::new(|_| [0.0, 0.0]),
            Box::new(|_, _, _| 0.0),
            Box::new(|_, _, _| 0.0),
            Box::new(|_, _, _| [0.0, 0.0]),
            Box::new(|_, _, _| [0.0, 0.0]),
            holdall(),
        )
        .unwrap()
    }

    fn l2_error<F: Fn(Point2) -> f64>(mesh: &TriMesh, u: &[f64], exact: F) -> f64 {
        let mut acc = 0.0;
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            let points = mesh.midedge_points(t);
            let w = mesh.triangle_area(t) / 3.0;
            for q in 0..3 {
                let uh: f64 = (0..3).map(|a| MID_PHI[q][a] * u[tri[a]]).sum();
                let diff = uh - exact(points[q]);
                acc += w * diff * diff;
            }
        }
        acc.sqrt()
    }

    #[test]
    fn stiffness_interior_row_sums_vanish() {
        let mesh = unit_square_mesh(1.0, 5, holdall()).unwrap();
        let k = assemble_stiffness(&mesh);
        let ones = vec![1.0; mesh.n_vertices()];
        let row_sums = k.matvec(&ones);
        for v in 0..mesh.n_vertices() {
            if !mesh.is_boundary_vertex(v) {
                assert!(row_sums[v].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_mass_sums_to_area() {
        let mesh = unit_square_mesh(0.75, 6, holdall()).unwrap();
        let m = assemble_mass_weighted(&mesh, &vec![0.0; mesh.n_vertices()], |_| 1.0);
        let ones = vec![1.0; mesh.n_vertices()];
        let total: f64 = m.matvec(&ones).iter().sum();
        assert!((total - mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn unit_load_sums_to_area() {
        let mesh = unit_square_mesh(1.0, 7, holdall()).unwrap();
        let load = assemble_load(&mesh, |_| 1.0);
        let total: f64 = load.iter().sum();
        assert!((total - mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn constant_source_matching_g0_gives_zero_state() {
        // With f = g(0), u = 0 solves -Laplace(u) + g(u) = f exactly.
        let spec = ProblemSpec::new(
            Box::new(|t| 0.5 * t.exp()),
            Box::new(|t| 0.5 * t.exp()),
            Box::new(|t| 0.5 * t.exp()),
            Box::new(|_| 0.5),
            Box::new(|_| [0.0, 0.0]),
            Box::new(|_, _, _| 0.0),
            Box::new(|_, _, _| 0.0),
            Box::new(|_, _, _| [0.0, 0.0]),
            Box::new(|_, _, _| [0.0, 0.0]),
            holdall(),
        )
        .unwrap();
        let mesh = unit_square_mesh(1.0, 6, holdall()).unwrap();
        let (u, history) = solve_state(&mesh, &spec, 1e-10, None).unwrap();
        assert!(u.iter().all(|&x| x.abs() < 1e-13));
        assert_eq!(history.len(), 1); // converged at the initial guess
    }

    #[test]
    fn poisson_disk_second_order_convergence() {
        // g = 0, f = 1 on the unit disk: u = (1 - |x|^2) / 4.
        let spec = poisson_spec(1.0);
        let exact = |x: Point2| (1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0;
        let mut errors = Vec::new();
        for level in [2usize, 3, 4] {
            let mesh = disk_mesh(1.0, level, holdall()).unwrap();
            let (u, _) = solve_state(&mesh, &spec, 1e-11, None).unwrap();
            errors.push(l2_error(&mesh, &u, exact));
        }
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(
                (1.7..=2.3).contains(&rate),
                "observed rate {rate}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn manufactured_semilinear_state_on_reference_disk() {
        let spec = tracking_instance(holdall());
        let r = reference_radius();
        let exact =
            |x: Point2| 4.0 / (3.0 * std::f64::consts::PI) - (x[0] * x[0] + x[1] * x[1]) / 4.0;
        let mut errors = Vec::new();
        for level in [2usize, 3, 4] {
            let mesh = disk_mesh(r, level, holdall()).unwrap();
            let (u, _) = solve_state(&mesh, &spec, 1e-11, None).unwrap();
            errors.push(l2_error(&mesh, &u, exact));
        }
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(
                (1.7..=2.3).contains(&rate),
                "observed rate {rate}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn newton_residuals_decrease_and_tail_is_quadratic() {
        let spec = tracking_instance(holdall());
        let mesh = disk_mesh(reference_radius(), 3, holdall()).unwrap();
        let (_, history) = solve_state(&mesh, &spec, 1e-12, None).unwrap();
        assert!(history.len() >= 3);
        for w in history.windows(2) {
            assert!(w[1] < w[0]);
        }
        // Quadratic tail: once inside the basin, |F_{k+1}| / |F_k|^2 stays
        // bounded by a modest constant. Pairs whose successor sits at the
        // float floor (~1e-14) say nothing about the convergence order, so
        // pick a pair well above it.
        let mut checked = false;
        for w in history.windows(2) {
            if (1e-8..1e-2).contains(&w[0]) && w[1] > 1e-13 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio < 1e4, "tail ratio {ratio}, history {history:?}");
                checked = true;
            }
        }
        assert!(checked, "no pair in the quadratic regime: {history:?}");
    }

    #[test]
    fn galerkin_orthogonality_spot_check() {
        let spec = tracking_instance(holdall());
        let mesh = unit_square_mesh(1.0, 10, holdall()).unwrap();
        let tol = 1e-10;
        let (u, _) = solve_state(&mesh, &spec, tol, None).unwrap();
        // Recompute the residual and test against random interior fields.
        let k = assemble_stiffness(&mesh);
        let mut r = k.matvec(&u);
        let nl = assemble_g_load(&mesh, &spec, &u);
        let b = assemble_load(&mesh, |x| spec.f(x));
        for i in 0..mesh.n_vertices() {
            r[i] += nl[i] - b[i];
        }
        let r = zero_boundary_vec(&mesh, r);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut eta: Vec<f64> = (0..mesh.n_vertices())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            zero_boundary(&mesh, &mut eta);
            let pairing: f64 = eta.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!(pairing.abs() <= norm2(&eta) * tol * 1.01);
        }
    }

    #[test]
    fn adjoint_zero_rhs_gives_zero() {
        let spec = poisson_spec(1.0); // j_u = j_z = 0
        let mesh = unit_square_mesh(1.0, 6, holdall()).unwrap();
        let (u, _) = solve_state(&mesh, &spec, 1e-10, None).unwrap();
        let p = solve_adjoint(&mesh, &spec, &u).unwrap();
        assert!(p.iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn adjoint_with_tracked_state_equal_to_target_vanishes() {
        let spec = tracking_instance(holdall());
        let mesh = unit_square_mesh(1.0, 6, holdall()).unwrap();
        // Synthetic u = u_d at the vertices: j_u = 0 at all quadrature
        // points up to interpolation of u_d (quadratic, so interpolation at
        // mid-edges is not exact; use the nodal interpolant directly).
        let u_d = |x: Point2| 4.0 / std::f64::consts::PI - (x[0] * x[0] + x[1] * x[1]);
        let u: Vec<f64> = mesh.vertices().iter().map(|&x| u_d(x)).collect();
        let p = solve_adjoint(&mesh, &spec, &u).unwrap();
        // u_h interpolates u_d; the mid-edge interpolation defect of the
        // quadratic u_d is O(h^2) (about h^2 on the diagonal edges), so the
        // adjoint right-hand side and thus p are O(h^2) rather than zero.
        let h = 2.0 / 6.0;
        let sup = p.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(sup < 0.3 * h * h, "sup |p| = {sup}");
        assert!(sup > 0.0);
    }

    #[test]
    fn adjoint_poisson_oracle_on_unit_disk() {
        // Linear g, j_u = 1, j_z = 0: p solves -Laplace(p) = 1, so
        // p = (1 - |x|^2) / 4 on the unit disk.
        let spec = ProblemSpec::new(
            Box::new(|_| 0.0),
            Box::new(|_| 0.0),
            Box::new(|_| 0.0),
            Box::new(|_| 1.0),
            Box::new(|_| [0.0, 0.0]),
            Box::new(|_, u, _| u),
            Box::new(|_, _, _| 1.0),
            Box::new(|_, _, _| [0.0, 0.0]),
            Box::new(|_, _, _| [0.0, 0.0]),
            holdall(),
        )
        .unwrap();
        let exact = |x: Point2| (1.0 - x[0] * x[0] - x[1] * x[1]) / 4.0;
        let mut errors = Vec::new();
        for level in [2usize, 3, 4] {
            let mesh = disk_mesh(1.0, level, holdall()).unwrap();
            let (u, _) = solve_state(&mesh, &spec, 1e-11, None).unwrap();
            let p = solve_adjoint(&mesh, &spec, &u).unwrap();
            errors.push(l2_error(&mesh, &p, exact));
        }
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(
                (1.7..=2.3).contains(&rate),
                "observed rate {rate}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn state_respects_sup_bound() {
        let spec = tracking_instance(holdall());
        let bound = dirichlet_sup_bound(&spec, 48).unwrap();
        assert!(bound > 0.0);
        let mesh = unit_square_mesh(1.0, 12, holdall()).unwrap();
        let (u, _) = solve_state(&mesh, &spec, 1e-10, None).unwrap();
        let sup = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(
            sup <= 2.0 * bound * 1.05,
            "sup |u| = {sup}, 2K = {}",
            2.0 * bound
        );
    }

    #[test]
    fn solutions_vanish_on_boundary_exactly() {
        let spec = tracking_instance(holdall());
        let mesh = unit_square_mesh(0.75, 8, holdall()).unwrap();
        let sol = solve(&mesh, &spec, 1e-10, None).unwrap();
        for v in mesh.boundary_vertices() {
            assert_eq!(sol.u[v], 0.0);
            assert_eq!(sol.p[v], 0.0);
        }
        assert!(*sol.residual_norms.last().unwrap() <= 1e-10);
    }
}
