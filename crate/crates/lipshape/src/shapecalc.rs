//! Shape functional evaluation and assembly of the shape derivative in
//! volume form as a dual vector over mesh vertices.
//!
//! All quadrature matches the state/adjoint assembly (3-point mid-edge
//! rule, mid-edge points move with the mesh under P1 deformations), so the
//! assembled dual vector is the derivative of the discrete functional with
//! respect to vertex motion, up to solver tolerances. The finite-difference
//! check below exercises exactly that identity.

use crate::mat2::{dot, Point2};
use crate::mesh::{deform, scalar_element_gradients, TriMesh, VertexField};
use crate::pde::{solve_state, PdeSolution, MID_PHI};
use crate::problem::ProblemSpec;
use crate::Result;

/// The shape derivative as a linear functional on P1 vector fields:
/// `J'(Omega)[V] = sum_v dual_vector[v] . V(v)`.
#[derive(Clone, Debug)]
pub struct ShapeGradientAssembly {
    pub dual_vector: Vec<Point2>,
    pub j_value: f64,
}

impl ShapeGradientAssembly {
    /// Pairs the dual vector with a P1 field.
    pub fn pair(&self, v: &VertexField) -> f64 {
        assert_eq!(v.len(), self.dual_vector.len());
        self.dual_vector
            .iter()
            .zip(v.values())
            .map(|(d, w)| dot(*d, *w))
            .sum()
    }

    /// Euclidean norm of the dual vector over all vertex degrees of freedom.
    pub fn dual_euclidean_norm(&self) -> f64 {
        self.dual_vector
            .iter()
            .map(|d| dot(*d, *d))
            .sum::<f64>()
            .sqrt()
    }
}

/// Evaluates `J(Omega) = int j(x, u_h, grad u_h) dx` by mid-edge quadrature.
pub fn evaluate_j(mesh: &TriMesh, spec: &ProblemSpec, u: &[f64]) -> f64 {
    assert_eq!(u.len(), mesh.n_vertices());
    let grad_u = scalar_element_gradients(mesh, u);
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let points = mesh.midedge_points(t);
        let w = mesh.triangle_area(t) / 3.0;
        for q in 0..3 {
            let u_q: f64 = (0..3).map(|a| MID_PHI[q][a] * u[tri[a]]).sum();
            acc += w * spec.j(points[q], u_q, grad_u[t]);
        }
    }
    acc
}

/// Assembles the shape derivative. For each triangle and each of its vertex
/// basis fields `phi_a e_d`, the six terms of the volume form are
/// accumulated:
///
/// `j div V + j_x . V - j_z . (DV^T grad u)
///  + (DV + DV^T - div V I) grad u . grad p - g(u) p div V + div(f V) p`
///
/// with `div(f V)` expanded as `grad f . V + f div V`.
pub fn assemble_shape_gradient(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    sol: &PdeSolution,
) -> ShapeGradientAssembly {
    let grad_u = scalar_element_gradients(mesh, &sol.u);
    let grad_p = scalar_element_gradients(mesh, &sol.p);
    let mut dual = vec![[0.0, 0.0]; mesh.n_vertices()];

    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let (grads, area) = mesh.p1_gradients(t);
        let points = mesh.midedge_points(t);
        let w = area / 3.0;
        let gu = grad_u[t];
        let gp = grad_p[t];
        let gu_dot_gp = dot(gu, gp);

        // Quadrature data shared by all six basis fields of this triangle.
        let mut j_q = [0.0; 3];
        let mut jx_q = [[0.0, 0.0]; 3];
        let mut jz_q = [[0.0, 0.0]; 3];
        let mut gp_q = [0.0; 3]; // g(u) p at quadrature points
        let mut fp_q = [0.0; 3]; // f p
        let mut gradf_p_q = [[0.0, 0.0]; 3]; // (grad f) p
        for q in 0..3 {
            let u_q: f64 = (0..3).map(|a| MID_PHI[q][a] * sol.u[tri[a]]).sum();
            let p_q: f64 = (0..3).map(|a| MID_PHI[q][a] * sol.p[tri[a]]).sum();
            j_q[q] = spec.j(points[q], u_q, gu);
            jx_q[q] = spec.j_x(points[q], u_q, gu);
            jz_q[q] = spec.j_z(points[q], u_q, gu);
            gp_q[q] = spec.g(u_q) * p_q;
            fp_q[q] = spec.f(points[q]) * p_q;
            let gf = spec.grad_f(points[q]);
            gradf_p_q[q] = [gf[0] * p_q, gf[1] * p_q];
        }
        let sum_j: f64 = j_q.iter().sum();
        let sum_gp: f64 = gp_q.iter().sum();
        let sum_fp: f64 = fp_q.iter().sum();

        for a in 0..3 {
            let ga = grads[a];
            let ga_dot_gu = dot(ga, gu);
            let ga_dot_gp = dot(ga, gp);
            let jz_dot_ga: [f64; 3] = [dot(jz_q[0], ga), dot(jz_q[1], ga), dot(jz_q[2], ga)];
            for d in 0..2 {
                // For V = phi_a e_d: DV = e_d (grad phi_a)^T, div V = ga[d].
                let div_v = ga[d];
                let mut val = 0.0;
                // j div V
                val += w * sum_j * div_v;
                // j_x . V
                for q in 0..3 {
                    val += w * jx_q[q][d] * MID_PHI[q][a];
                }
                // - j_z . DV^T grad u  with DV^T grad u = (grad u)_d grad phi_a
                for q in 0..3 {
                    val -= w * jz_dot_ga[q] * gu[d];
                }
                // (DV + DV^T - div V I) grad u . grad p, constant per element
                val += area * (ga_dot_gu * gp[d] + ga_dot_gp * gu[d] - div_v * gu_dot_gp);
                // - g(u) p div V
                val -= w * sum_gp * div_v;
                // div(f V) p = (grad f . V + f div V) p
                for q in 0..3 {
                    val += w * gradf_p_q[q][d] * MID_PHI[q][a];
                }
                val += w * sum_fp * div_v;

                dual[tri[a]][d] += val;
            }
        }
    }

    ShapeGradientAssembly {
        dual_vector: dual,
        j_value: evaluate_j(mesh, spec, &sol.u),
    }
}

/// One row of the finite-difference consistency table.
#[derive(Clone, Debug)]
pub struct FdCheckEntry {
    pub t: f64,
    pub difference_quotient: f64,
    pub abs_error: f64,
}

/// Report of [`finite_difference_check`].
#[derive(Clone, Debug)]
pub struct FdCheckReport {
    pub j_value: f64,
    pub directional_derivative: f64,
    pub entries: Vec<FdCheckEntry>,
    /// Log-log slope of the error against the step size (0 when errors
    /// vanish identically).
    pub slope: f64,
}

impl FdCheckReport {
    /// Relative error at the given step size, against the directional
    /// derivative's magnitude.
    pub fn relative_error_at(&self, t: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.t - t).abs() < 1e-15)
            .map(|e| e.abs_error / self.directional_derivative.abs().max(1e-300))
    }
}

/// Validates the assembled shape derivative against the transport
/// difference quotient `(J(Omega_t) - J(Omega)) / t`: for each step size
/// the mesh is deformed by `t V`, the state is re-solved, and the
/// functional re-evaluated.
pub fn finite_difference_check(
    mesh: &TriMesh,
    spec: &ProblemSpec,
    v: &VertexField,
    t_list: &[f64],
    newton_tol: f64,
) -> Result<FdCheckReport> {
    let (u, _) = solve_state(mesh, spec, newton_tol, None)?;
    let p = crate::pde::solve_adjoint(mesh, spec, &u)?;
    let sol = PdeSolution {
        u: u.clone(),
        p,
        newton_iterations: 0,
        residual_norms: Vec::new(),
    };
    let grad = assemble_shape_gradient(mesh, spec, &sol);
    let directional = grad.pair(v);
    let j0 = grad.j_value;

    let mut entries = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let moved = deform(mesh, v, t)?;
        let (u_t, _) = solve_state(&moved, spec, newton_tol, Some(&u))?;
        let j_t = evaluate_j(&moved, spec, &u_t);
        let dq = (j_t - j0) / t;
        entries.push(FdCheckEntry {
            t,
            difference_quotient: dq,
            abs_error: (dq - directional).abs(),
        });
    }

    let positive: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.abs_error > 0.0)
        .map(|e| (e.t.ln(), e.abs_error.ln()))
        .collect();
    let slope = if positive.len() >= 2 {
        least_squares_slope(&positive)
    } else {
        0.0
    };

    Ok(FdCheckReport {
        j_value: j0,
        directional_derivative: directional,
        entries,
        slope,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
