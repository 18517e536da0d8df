//! Conforming triangle meshes of a domain inside a hold-all rectangle.
//!
//! Meshes are immutable: deformation and refinement return new meshes.
//! Connectivity is fixed across deformations, so the map from a reference
//! mesh to the current mesh is piecewise affine with a constant Jacobian per
//! element, which the descent loop exploits to track its Lipschitz norm.

use crate::mat2::{add, dot, midpoint, norm, scale, sub, Mat2, Point2};
use crate::{Error, Result};

/// Axis-aligned hold-all rectangle containing every admissible domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    /// Square `(-half_width, half_width)^2` centered at the origin.
    pub fn centered_square(half_width: f64) -> Rect {
        Rect {
            min: [-half_width, -half_width],
            max: [half_width, half_width],
        }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn diameter(&self) -> f64 {
        (self.width().powi(2) + self.height().powi(2)).sqrt()
    }

    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        p[0] >= self.min[0] - tol
            && p[0] <= self.max[0] + tol
            && p[1] >= self.min[1] - tol
            && p[1] <= self.max[1] + tol
    }

    /// Distance from an interior point to the boundary of the rectangle
    /// (zero outside or on the boundary).
    pub fn dist_to_boundary(&self, p: Point2) -> f64 {
        let dx = (p[0] - self.min[0]).min(self.max[0] - p[0]);
        let dy = (p[1] - self.min[1]).min(self.max[1] - p[1]);
        dx.min(dy).max(0.0)
    }

    /// True if `p` lies on the boundary of the rectangle (within `tol`).
    pub fn on_boundary(&self, p: Point2, tol: f64) -> bool {
        self.contains(p, tol) && self.dist_to_boundary(p) <= tol
    }
}

/// A P1 vector field given by one 2D value per mesh vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexField {
    values: Vec<Point2>,
}

impl VertexField {
    pub fn new(values: Vec<Point2>) -> VertexField {
        VertexField { values }
    }

    pub fn zeros(n: usize) -> VertexField {
        VertexField {
            values: vec![[0.0, 0.0]; n],
        }
    }

    /// Sample an analytic field at the mesh vertices.
    pub fn from_fn<F: Fn(Point2) -> Point2>(mesh: &TriMesh, f: F) -> VertexField {
        VertexField {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Point2] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Point2] {
        &mut self.values
    }

    pub fn scaled(&self, s: f64) -> VertexField {
        VertexField {
            values: self.values.iter().map(|&v| scale(s, v)).collect(),
        }
    }

    /// Value of the P1 interpolant at barycentric weights `w` of triangle `t`.
    pub fn interpolate(&self, mesh: &TriMesh, t: usize, w: [f64; 3]) -> Point2 {
        let [i, j, k] = mesh.triangles()[t];
        let mut out = [0.0, 0.0];
        for (c, &v) in [self.values[i], self.values[j], self.values[k]]
            .iter()
            .enumerate()
        {
            out = add(out, scale(w[c], v));
        }
        out
    }
}

impl std::ops::Index<usize> for VertexField {
    type Output = Point2;
    fn index(&self, i: usize) -> &Point2 {
        &self.values[i]
    }
}

/// Unstructured conforming triangle mesh with counter-clockwise elements.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    /// Directed boundary edges in loop order; the domain lies on the left.
    boundary_edges: Vec<[usize; 2]>,
    /// Closed boundary vertex cycles (first vertex not repeated).
    boundary_loops: Vec<Vec<usize>>,
    boundary_flags: Vec<bool>,
    holdall: Rect,
}

impl TriMesh {
    /// Builds a mesh from raw vertex and connectivity data, deriving and
    /// validating the boundary topology.
    pub fn new(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        holdall: Rect,
    ) -> Result<TriMesh> {
        let n_v = vertices.len();
        if n_v < 3 || triangles.is_empty() {
            return Err(Error::InvalidMesh(
                "mesh needs at least 3 vertices and 1 triangle".into(),
            ));
        }
        let tol = 1e-12 * holdall.diameter();
        for (i, &p) in vertices.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
            }
            if !holdall.contains(p, tol) {
                return Err(Error::InvalidMesh(format!(
                    "vertex {i} at ({}, {}) lies outside the hold-all",
                    p[0], p[1]
                )));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n_v {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references vertex {v} >= {n_v}"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has repeated vertices"
                )));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive area {a:.3e}"
                )));
            }
        }

        let (boundary_edges, boundary_loops) = extract_boundary(n_v, &triangles)?;
        let mut boundary_flags = vec![false; n_v];
        for e in &boundary_edges {
            boundary_flags[e[0]] = true;
            boundary_flags[e[1]] = true;
        }

        Ok(TriMesh {
            vertices,
            triangles,
            boundary_edges,
            boundary_loops,
            boundary_flags,
            holdall,
        })
    }

    /// Same connectivity with new vertex positions; re-validates areas and
    /// hold-all containment only.
    pub(crate) fn with_vertices(&self, vertices: Vec<Point2>) -> Result<TriMesh> {
        assert_eq!(vertices.len(), self.vertices.len());
        let tol = 1e-12 * self.holdall.diameter();
        for (i, &p) in vertices.iter().enumerate() {
            if !self.holdall.contains(p, tol) {
                return Err(Error::ConstraintViolation(format!(
                    "vertex {i} moved outside the hold-all"
                )));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a <= 0.0 {
                return Err(Error::ConstraintViolation(format!(
                    "triangle {t} inverted (signed area {a:.3e})"
                )));
            }
        }
        Ok(TriMesh {
            vertices,
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            boundary_loops: self.boundary_loops.clone(),
            boundary_flags: self.boundary_flags.clone(),
            holdall: self.holdall,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn holdall(&self) -> Rect {
        self.holdall
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_flags[v]
    }

    /// Sorted indices of vertices on the domain boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices())
            .filter(|&v| self.boundary_flags[v])
            .collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        signed_area(self.vertices[i], self.vertices[j], self.vertices[k])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn min_triangle_area(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.triangle_area(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest interior angle over all elements, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for tri in &self.triangles {
            let p = [
                self.vertices[tri[0]],
                self.vertices[tri[1]],
                self.vertices[tri[2]],
            ];
            for c in 0..3 {
                let u = sub(p[(c + 1) % 3], p[c]);
                let v = sub(p[(c + 2) % 3], p[c]);
                let cosine = dot(u, v) / (norm(u) * norm(v));
                worst = worst.min(cosine.clamp(-1.0, 1.0).acos());
            }
        }
        worst.to_degrees()
    }

    /// Gradients of the three P1 basis functions on triangle `t`, plus its area.
    pub fn p1_gradients(&self, t: usize) -> ([Point2; 3], f64) {
        let [i, j, k] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        let a2 = 2.0 * signed_area(p0, p1, p2);
        let g = [
            [(p1[1] - p2[1]) / a2, (p2[0] - p1[0]) / a2],
            [(p2[1] - p0[1]) / a2, (p0[0] - p2[0]) / a2],
            [(p0[1] - p1[1]) / a2, (p1[0] - p0[0]) / a2],
        ];
        (g, 0.5 * a2)
    }

    /// Mid-edge quadrature points of triangle `t` in edge order
    /// (0,1), (1,2), (2,0); each carries weight `area / 3`.
    pub fn midedge_points(&self, t: usize) -> [Point2; 3] {
        let [i, j, k] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        [midpoint(p0, p1), midpoint(p1, p2), midpoint(p2, p0)]
    }

    /// Centroid of the meshed domain via area-weighted triangle centroids.
    pub fn centroid(&self) -> Point2 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut total = 0.0;
        for t in 0..self.n_triangles() {
            let [i, j, k] = self.triangles[t];
            let a = self.triangle_area(t);
            cx += a * (self.vertices[i][0] + self.vertices[j][0] + self.vertices[k][0]) / 3.0;
            cy += a * (self.vertices[i][1] + self.vertices[j][1] + self.vertices[k][1]) / 3.0;
            total += a;
        }
        [cx / total, cy / total]
    }
}

#[inline]
pub fn signed_area(p0: Point2, p1: Point2, p2: Point2) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

/// Derives directed boundary edges and closed loops from the connectivity.
fn extract_boundary(
    n_v: usize,
    triangles: &[[usize; 3]],
) -> Result<(Vec<[usize; 2]>, Vec<Vec<usize>>)> {
    use std::collections::HashMap;

    // Undirected edge -> (count, directed orientation of first occurrence,
    // sum of directions to detect inconsistent orientation).
    let mut edges: HashMap<(usize, usize), (u32, [usize; 2])> = HashMap::new();
    for tri in triangles {
        for e in [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]] {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            let entry = edges.entry(key).or_insert((0, e));
            if entry.0 == 1 && entry.1 == e {
                return Err(Error::InvalidMesh(format!(
                    "edge ({}, {}) traversed twice in the same direction",
                    e[0], e[1]
                )));
            }
            entry.0 += 1;
        }
    }

    let mut outgoing: Vec<Option<usize>> = vec![None; n_v];
    let mut n_boundary_edges = 0usize;
    for (key, (count, directed)) in &edges {
        match count {
            1 => {
                if outgoing[directed[0]].is_some() {
                    return Err(Error::InvalidMesh(format!(
                        "boundary is self-intersecting at vertex {}",
                        directed[0]
                    )));
                }
                outgoing[directed[0]] = Some(directed[1]);
                n_boundary_edges += 1;
            }
            2 => {}
            n => {
                return Err(Error::InvalidMesh(format!(
                    "edge ({}, {}) shared by {n} triangles",
                    key.0, key.1
                )))
            }
        }
    }
    if n_boundary_edges == 0 {
        return Err(Error::InvalidMesh("mesh has no boundary".into()));
    }

    // Walk the loops, starting each at its smallest vertex index so that the
    // ordering is reproducible.
    let mut visited = vec![false; n_v];
    let mut loops = Vec::new();
    let mut boundary_edges = Vec::with_capacity(n_boundary_edges);
    for start in 0..n_v {
        if visited[start] || outgoing[start].is_none() {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut cur = outgoing[start].unwrap();
        while cur != start {
            if visited[cur] {
                return Err(Error::InvalidMesh(format!(
                    "boundary loop through vertex {start} does not close"
                )));
            }
            visited[cur] = true;
            cycle.push(cur);
            cur = outgoing[cur].ok_or_else(|| {
                Error::InvalidMesh(format!("boundary chain breaks at vertex {cur}"))
            })?;
        }
        if cycle.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "boundary loop through vertex {start} has fewer than 3 edges"
            )));
        }
        for w in 0..cycle.len() {
            boundary_edges.push([cycle[w], cycle[(w + 1) % cycle.len()]]);
        }
        loops.push(cycle);
    }
    Ok((boundary_edges, loops))
}

/// Structured triangulation of the axis-aligned rectangle
/// `(xmin, xmax) x (ymin, ymax)` with `nx` by `ny` cells, each split along
/// the diagonal from its lower-left to its upper-right corner. Vertices are
/// numbered row-major, bottom row first.
pub fn rect_mesh(
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    nx: usize,
    ny: usize,
    holdall: Rect,
) -> Result<TriMesh> {
    if nx < 1 || ny < 1 {
        return Err(Error::InvalidMesh("rect_mesh needs nx, ny >= 1".into()));
    }
    if xmin >= xmax || ymin >= ymax {
        return Err(Error::InvalidMesh(
            "rect_mesh needs a nonempty rectangle".into(),
        ));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = ymin + (ymax - ymin) * j as f64 / ny as f64;
        for i in 0..=nx {
            let x = xmin + (xmax - xmin) * i as f64 / nx as f64;
            vertices.push([x, y]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriMesh::new(vertices, triangles, holdall)
}

/// Structured mesh of the square `(-half_width, half_width)^2` with `n`
/// subdivisions per side.
pub fn unit_square_mesh(half_width: f64, n: usize, holdall: Rect) -> Result<TriMesh> {
    if n < 2 {
        return Err(Error::InvalidMesh(format!(
            "square mesh needs n >= 2 subdivisions, got {n}"
        )));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidMesh("half_width must be positive".into()));
    }
    let margin = (-holdall.min[0])
        .min(holdall.max[0])
        .min(-holdall.min[1])
        .min(holdall.max[1]);
    if half_width >= margin {
        return Err(Error::InvalidMesh(format!(
            "square of half-width {half_width} does not fit strictly inside the hold-all \
             (available margin {margin})"
        )));
    }
    rect_mesh(
        -half_width,
        half_width,
        -half_width,
        half_width,
        n,
        n,
        holdall,
    )
}

/// Polygonal disk of the given radius centered at the origin: a regular
/// hexagon fan refined `refinements` times, with boundary vertices placed on
/// the circle at each level. Doubling `refinements` halves the mesh size,
/// so consecutive levels form a congruent refinement family with a fitted
/// boundary.
pub fn disk_mesh(radius: f64, refinements: usize, holdall: Rect) -> Result<TriMesh> {
    if !(radius > 0.0) {
        return Err(Error::InvalidMesh("disk radius must be positive".into()));
    }
    let margin = (-holdall.min[0])
        .min(holdall.max[0])
        .min(-holdall.min[1])
        .min(holdall.max[1]);
    if radius >= margin {
        return Err(Error::InvalidMesh(format!(
            "disk of radius {radius} does not fit strictly inside the hold-all"
        )));
    }
    let mut vertices: Vec<Point2> = vec![[0.0, 0.0]];
    for k in 0..6 {
        let theta = std::f64::consts::PI / 3.0 * k as f64;
        vertices.push([radius * theta.cos(), radius * theta.sin()]);
    }
    let triangles = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
    let mut mesh = TriMesh::new(vertices, triangles, holdall)?;
    for _ in 0..refinements {
        let (refined, _) = refine_congruent(&mesh, &[]);
        // Project boundary vertices onto the circle; interior midpoints stay.
        let mut moved = refined.vertices().to_vec();
        for v in 0..refined.n_vertices() {
            if refined.is_boundary_vertex(v) {
                let r = norm(moved[v]);
                moved[v] = scale(radius / r, moved[v]);
            }
        }
        mesh = refined.with_vertices(moved)?;
    }
    Ok(mesh)
}

/// Moves every vertex by `t * V(vertex)`, keeping connectivity.
///
/// Callers are responsible for the admissibility of `V` (per-element
/// Jacobian spectral norm at most one, zero on the hold-all boundary);
/// an inverted element or a vertex leaving the hold-all is reported as a
/// constraint violation.
pub fn deform(mesh: &TriMesh, v: &VertexField, t: f64) -> Result<TriMesh> {
    if !(0.0..=0.5).contains(&t) {
        return Err(Error::ConstraintViolation(format!(
            "step size {t} outside [0, 1/2]"
        )));
    }
    if v.len() != mesh.n_vertices() {
        return Err(Error::ConstraintViolation(format!(
            "field has {} values for {} vertices",
            v.len(),
            mesh.n_vertices()
        )));
    }
    let tol = 1e-12 * mesh.holdall().diameter();
    for (i, &p) in mesh.vertices().iter().enumerate() {
        if mesh.holdall().on_boundary(p, tol) && norm(v[i]) > tol {
            return Err(Error::ConstraintViolation(format!(
                "field does not vanish at hold-all boundary vertex {i}"
            )));
        }
    }
    let moved = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, &p)| add(p, scale(t, v[i])))
        .collect();
    mesh.with_vertices(moved)
}

/// Splits every triangle into four congruent children via edge midpoints.
/// Carried P1 fields are interpolated (exactly, for fields linear on each
/// parent). New midpoint vertices are appended after the original vertices,
/// ordered by their sorted parent edge, so two meshes with identical
/// connectivity refine to identical connectivity.
pub fn refine_congruent(
    mesh: &TriMesh,
    carried_fields: &[VertexField],
) -> (TriMesh, Vec<VertexField>) {
    use std::collections::BTreeMap;

    let n_v = mesh.n_vertices();
    let mut edge_index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in mesh.triangles() {
        for e in [[tri[0], tri[1]], [tri[1], tri[2]], [tri[2], tri[0]]] {
            let key = (e[0].min(e[1]), e[0].max(e[1]));
            edge_index.entry(key).or_insert(0);
        }
    }
    for (rank, (_, slot)) in edge_index.iter_mut().enumerate() {
        *slot = n_v + rank;
    }

    let mut vertices = mesh.vertices().to_vec();
    vertices.resize(n_v + edge_index.len(), [0.0, 0.0]);
    for (&(a, b), &m) in &edge_index {
        vertices[m] = midpoint(mesh.vertices()[a], mesh.vertices()[b]);
    }

    let mid = |a: usize, b: usize| edge_index[&(a.min(b), a.max(b))];
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for tri in mesh.triangles() {
        let [i, j, k] = *tri;
        let (mij, mjk, mki) = (mid(i, j), mid(j, k), mid(k, i));
        triangles.push([i, mij, mki]);
        triangles.push([mij, j, mjk]);
        triangles.push([mki, mjk, k]);
        triangles.push([mij, mjk, mki]);
    }

    let refined = TriMesh::new(vertices, triangles, mesh.holdall())
        .expect("congruent refinement of a valid mesh is valid");

    let carried = carried_fields
        .iter()
        .map(|f| {
            let mut values = f.values().to_vec();
            values.resize(refined.n_vertices(), [0.0, 0.0]);
            for (&(a, b), &m) in &edge_index {
                values[m] = midpoint(f[a], f[b]);
            }
            VertexField::new(values)
        })
        .collect();

    (refined, carried)
}

/// Constant Jacobian of the P1 interpolant of `field` on each triangle;
/// entry `[r][c]` is the derivative of component `r` along coordinate `c`.
pub fn element_gradients(mesh: &TriMesh, field: &VertexField) -> Vec<Mat2> {
    assert_eq!(field.len(), mesh.n_vertices());
    (0..mesh.n_triangles())
        .map(|t| {
            let (grads, _) = mesh.p1_gradients(t);
            let tri = mesh.triangles()[t];
            let mut m = Mat2::ZERO;
            for (a, &v) in tri.iter().enumerate() {
                m = m.add(Mat2::outer(field[v], grads[a]));
            }
            m
        })
        .collect()
}

/// Constant gradient of the P1 interpolant of a scalar nodal field per triangle.
pub fn scalar_element_gradients(mesh: &TriMesh, nodal: &[f64]) -> Vec<Point2> {
    assert_eq!(nodal.len(), mesh.n_vertices());
    (0..mesh.n_triangles())
        .map(|t| {
            let (grads, _) = mesh.p1_gradients(t);
            let tri = mesh.triangles()[t];
            let mut g = [0.0, 0.0];
            for (a, &v) in tri.iter().enumerate() {
                g = add(g, scale(nodal[v], grads[a]));
            }
            g
        })
        .collect()
}
