//! Geometric convergence diagnostics: the Hausdorff complementary metric
//! between meshed domains, complement and boundary component counts,
//! boundary length, and circularity of a single-loop domain.

use crate::mat2::{dot, norm, sub, Point2};
use crate::mesh::TriMesh;
use crate::{Error, Result};

/// Grid of samples of the distance function `d(x) = dist(x, closure(D) \ Omega)`
/// over the hold-all; `d` vanishes outside `Omega` and equals the distance
/// to the boundary polygon inside.
#[derive(Clone, Debug)]
pub struct DomainSampler {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub values: Vec<f64>,
}

impl DomainSampler {
    /// Samples the complement distance function on a grid of step about `h`
    /// covering the closed hold-all.
    pub fn sample(mesh: &TriMesh, h: f64) -> DomainSampler {
        assert!(h > 0.0);
        let d = mesh.holdall();
        let nx = (d.width() / h).ceil() as usize;
        let ny = (d.height() / h).ceil() as usize;
        let hx = d.width() / nx as f64;
        let hy = d.height() / ny as f64;
        let mut values = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            let y = d.min[1] + hy * j as f64;
            for i in 0..=nx {
                let x = d.min[0] + hx * i as f64;
                values.push(complement_distance(mesh, [x, y]));
            }
        }
        DomainSampler {
            nx,
            ny,
            h: hx.max(hy),
            values,
        }
    }
}

/// Distance from `x` to the complement of the meshed domain: zero outside
/// (points on the boundary polygon count as outside, the complement being
/// closed), otherwise the distance to the nearest boundary segment.
pub fn complement_distance(mesh: &TriMesh, x: Point2) -> f64 {
    if !point_in_domain(mesh, x) {
        return 0.0;
    }
    distance_to_boundary(mesh, x)
}

/// Winding-number point-in-domain test over all boundary loops. Boundary
/// edges are oriented with the domain on the left, so the total winding is
/// nonzero exactly for interior points (holes wind oppositely and cancel).
pub fn point_in_domain(mesh: &TriMesh, p: Point2) -> bool {
    let mut winding = 0i32;
    for e in mesh.boundary_edges() {
        let a = mesh.vertices()[e[0]];
        let b = mesh.vertices()[e[1]];
        if a[1] <= p[1] {
            if b[1] > p[1] && cross(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b[1] <= p[1] && cross(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn cross(a: Point2, b: Point2, p: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])
}

fn distance_to_boundary(mesh: &TriMesh, p: Point2) -> f64 {
    let mut best = f64::INFINITY;
    for e in mesh.boundary_edges() {
        let a = mesh.vertices()[e[0]];
        let b = mesh.vertices()[e[1]];
        best = best.min(point_segment_distance(p, a, b));
    }
    best
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len_sq = dot(ab, ab);
    if len_sq == 0.0 {
        return norm(ap);
    }
    let t = (dot(ap, ab) / len_sq).clamp(0.0, 1.0);
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Hausdorff complementary distance between two meshed domains sharing a
/// hold-all, sampled on a grid of step about `h`; the sampling error is
/// bounded by `2h` because both distance functions are 1-Lipschitz.
pub fn hausdorff_complementary(mesh_a: &TriMesh, mesh_b: &TriMesh, h: f64) -> Result<f64> {
    if mesh_a.holdall() != mesh_b.holdall() {
        return Err(Error::InvalidMesh(
            "hausdorff_complementary requires a shared hold-all".into(),
        ));
    }
    let sa = DomainSampler::sample(mesh_a, h);
    let sb = DomainSampler::sample(mesh_b, h);
    Ok(sa
        .values
        .iter()
        .zip(&sb.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Number of closed boundary loops.
pub fn boundary_components(mesh: &TriMesh) -> usize {
    mesh.boundary_loops().len()
}

/// Number of connected components of `closure(D) \ Omega`: one for the
/// outer region plus one per hole. Hole loops are recognized by their
/// clockwise orientation (the domain lies to their left, i.e. outside).
pub fn complement_components(mesh: &TriMesh) -> usize {
    let mut holes = 0;
    for cycle in mesh.boundary_loops() {
        let mut twice_area = 0.0;
        for w in 0..cycle.len() {
            let a = mesh.vertices()[cycle[w]];
            let b = mesh.vertices()[cycle[(w + 1) % cycle.len()]];
            twice_area += a[0] * b[1] - b[0] * a[1];
        }
        if twice_area < 0.0 {
            holes += 1;
        }
    }
    holes + 1
}

/// Total length of the boundary polygon.
pub fn boundary_length(mesh: &TriMesh) -> f64 {
    mesh.boundary_edges()
        .iter()
        .map(|e| norm(sub(mesh.vertices()[e[1]], mesh.vertices()[e[0]])))
        .sum()
}

/// Circularity of a single-loop domain.
#[derive(Clone, Copy, Debug)]
pub struct Circularity {
    pub centroid: Point2,
    pub mean_radius: f64,
    /// Standard deviation of boundary-vertex radii divided by the mean.
    pub radius_cv: f64,
}

/// Measures how close the domain is to a disk: centroid by area
/// integration, then mean and relative spread of the boundary-vertex radii.
pub fn circularity(mesh: &TriMesh) -> Result<Circularity> {
    if mesh.boundary_loops().len() != 1 {
        return Err(Error::InvalidMesh(format!(
            "circularity needs a single boundary loop, found {}",
            mesh.boundary_loops().len()
        )));
    }
    let centroid = mesh.centroid();
    let radii: Vec<f64> = mesh.boundary_loops()[0]
        .iter()
        .map(|&v| norm(sub(mesh.vertices()[v], centroid)))
        .collect();
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let var = radii.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / radii.len() as f64;
    Ok(Circularity {
        centroid,
        mean_radius: mean,
        radius_cv: var.sqrt() / mean,
    })
}
