//! Strict subset of the OFF text format: "OFF" header, counts line,
//! vertex lines, triangle lines with a leading 3. Writers emit 17
//! significant digits so geometry round-trips bit-exactly.

use super::{build_mesh, MeshError, SurfaceMesh};
use nalgebra::Vector3;
use std::path::Path;

pub fn write_off_string(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    out.push_str("OFF\n");
    out.push_str(&format!(
        "{} {} {}\n",
        mesh.vertex_count(),
        mesh.triangle_count(),
        mesh.edge_count()
    ));
    for p in mesh.vertices() {
        out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", p.x, p.y, p.z));
    }
    for t in mesh.triangles() {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    out
}

pub fn write_off(mesh: &SurfaceMesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, write_off_string(mesh)).map_err(|e| MeshError::Io(e.to_string()))
}

pub fn read_off_str(text: &str) -> Result<SurfaceMesh, MeshError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| MeshError::Format("empty file".into()))?;
    if header != "OFF" {
        return Err(MeshError::Format(format!("expected OFF header, got {header:?}")));
    }
    let counts = lines
        .next()
        .ok_or_else(|| MeshError::Format("missing counts line".into()))?;
    let mut it = counts.split_whitespace();
    let nv: usize = parse(it.next(), "vertex count")?;
    let nf: usize = parse(it.next(), "face count")?;
    let _ne: usize = parse(it.next(), "edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let line = lines
            .next()
            .ok_or_else(|| MeshError::Format(format!("missing vertex line {k}")))?;
        let mut it = line.split_whitespace();
        let x: f64 = parse(it.next(), "x")?;
        let y: f64 = parse(it.next(), "y")?;
        let z: f64 = parse(it.next(), "z")?;
        vertices.push(Vector3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    for k in 0..nf {
        let line = lines
            .next()
            .ok_or_else(|| MeshError::Format(format!("missing face line {k}")))?;
        let mut it = line.split_whitespace();
        let arity: usize = parse(it.next(), "face arity")?;
        if arity != 3 {
            return Err(MeshError::Format(format!("face {k} has arity {arity}, want 3")));
        }
        let a: usize = parse(it.next(), "i")?;
        let b: usize = parse(it.next(), "j")?;
        let c: usize = parse(it.next(), "k")?;
        triangles.push([a, b, c]);
    }
    build_mesh(vertices, triangles)
}

pub fn read_off(path: &Path) -> Result<SurfaceMesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io(e.to_string()))?;
    read_off_str(&text)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, MeshError> {
    tok.ok_or_else(|| MeshError::Format(format!("missing {what}")))?
        .parse()
        .map_err(|_| MeshError::Format(format!("bad {what}")))
}
