//! Mesh serialization: a line-oriented text format with exact round-trip,
//! and a legacy-ASCII VTK unstructured-grid writer for visualization.

use std::fmt::Write as _;
use std::path::Path;

use crate::mesh::{Rect, TriMesh, VertexField};
use crate::{Error, Result};

/// Serializes a mesh to the text format:
/// line 1 `nv nt nb`, then `nv` lines `x y`, then `nt` lines `i j k`
/// (0-based, counter-clockwise), then `nb` lines `i j` of directed boundary
/// edges. Floats use the shortest representation that round-trips exactly.
pub fn mesh_to_string(mesh: &TriMesh) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{} {} {}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary_edges().len()
    )
    .unwrap();
    for v in mesh.vertices() {
        writeln!(out, "{} {}", v[0], v[1]).unwrap();
    }
    for t in mesh.triangles() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for e in mesh.boundary_edges() {
        writeln!(out, "{} {}", e[0], e[1]).unwrap();
    }
    out
}

pub fn write_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

/// Parses the text format; the hold-all is supplied by the caller (it is
/// not part of the format). The boundary edges in the file are checked
/// against the ones derived from the connectivity.
pub fn mesh_from_str(text: &str, holdall: Rect, origin: &str) -> Result<TriMesh> {
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let counts: Vec<usize> = header
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|e| parse_err(ln + 1, format!("bad count `{tok}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if counts.len() != 3 {
        return Err(parse_err(ln + 1, "expected `nv nt nb`".into()));
    }
    let (nv, nt, nb) = (counts[0], counts[1], counts[2]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in vertices".into()))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|e| parse_err(ln + 1, format!("bad coordinate `{tok}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(parse_err(ln + 1, "expected `x y`".into()));
        }
        vertices.push([vals[0], vals[1]]);
    }

    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in triangles".into()))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| parse_err(ln + 1, format!("bad index `{tok}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(parse_err(ln + 1, "expected `i j k`".into()));
        }
        triangles.push([vals[0], vals[1], vals[2]]);
    }

    let mut file_edges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of file in boundary edges".into()))?;
        let vals: Vec<usize> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| parse_err(ln + 1, format!("bad index `{tok}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 2 {
            return Err(parse_err(ln + 1, "expected `i j`".into()));
        }
        file_edges.push([vals[0], vals[1]]);
    }

    let mesh = TriMesh::new(vertices, triangles, holdall)?;
    let mut derived: Vec<[usize; 2]> = mesh.boundary_edges().to_vec();
    let mut listed = file_edges;
    derived.sort_unstable();
    listed.sort_unstable();
    if derived != listed {
        return Err(parse_err(
            0,
            "boundary edges in file do not match the mesh connectivity".into(),
        ));
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path, holdall: Rect) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    mesh_from_str(&text, holdall, &path.display().to_string())
}

/// Writes a legacy-ASCII VTK unstructured grid (triangle cell type 5) with
/// optional per-vertex scalar and vector data.
pub fn write_vtk(
    mesh: &TriMesh,
    path: &Path,
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &VertexField)],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("lipshape mesh snapshot\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", mesh.n_vertices()).unwrap();
    for v in mesh.vertices() {
        writeln!(out, "{} {} 0", v[0], v[1]).unwrap();
    }
    writeln!(
        out,
        "CELLS {} {}",
        mesh.n_triangles(),
        4 * mesh.n_triangles()
    )
    .unwrap();
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_triangles()).unwrap();
    for _ in 0..mesh.n_triangles() {
        out.push_str("5\n");
    }
    if !scalars.is_empty() || !vectors.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_vertices()).unwrap();
    }
    for (name, values) in scalars {
        assert_eq!(values.len(), mesh.n_vertices());
        writeln!(out, "SCALARS {name} double 1").unwrap();
        out.push_str("LOOKUP_TABLE default\n");
        for v in *values {
            writeln!(out, "{v}").unwrap();
        }
    }
    for (name, field) in vectors {
        assert_eq!(field.len(), mesh.n_vertices());
        writeln!(out, "VECTORS {name} double").unwrap();
        for v in field.values() {
            writeln!(out, "{} {} 0", v[0], v[1]).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
