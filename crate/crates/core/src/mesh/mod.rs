//! Triangulated surfaces with boundary: topology, measures, operators,
//! discrete curvature, and OFF input/output.

mod curvature;
mod off;
mod operators;

pub use curvature::{
    boundary_geodesic_curvature, discrete_curvatures, vertex_normals, BoundaryKappa, ShapeData,
};
pub use off::{read_off, read_off_str, write_off, write_off_string};
pub use operators::{
    boundary_mass, cotan_stiffness, dirichlet_energy, dirichlet_energy_with, lumped_mass,
    robin_boundary_matrix,
};

use nalgebra::Vector3;
use std::collections::BTreeMap;
use thiserror::Error;

/// Relative triangle-area floor; guards the cotangent weights.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle list is empty")]
    NoTriangles,
    #[error("triangle {0} references vertex {1} out of range")]
    IndexOutOfRange(usize, usize),
    #[error("triangle {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("vertex {0} is not referenced by any triangle")]
    UnreferencedVertex(usize),
    #[error("triangle {0} is degenerate (area {1:.3e})")]
    DegenerateTriangle(usize, f64),
    #[error("edge ({0},{1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("inconsistent orientation across edge ({0},{1})")]
    InconsistentOrientation(usize, usize),
    #[error("boundary is not a union of simple cycles at vertex {0}")]
    PinchedBoundary(usize),
    #[error("vertex {0} has valence {1}, too small for a curvature fit")]
    InsufficientNeighborhood(usize, usize),
    #[error("field length {0} does not match vertex count {1}")]
    FieldLength(usize, usize),
    #[error("mesh i/o: {0}")]
    Io(String),
    #[error("malformed OFF data: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRole {
    Interior,
    Boundary,
}

/// One real value per vertex.
#[derive(Debug, Clone)]
pub struct FieldOnMesh(Vec<f64>);

impl FieldOnMesh {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != mesh.vertex_count() {
            return Err(MeshError::FieldLength(values.len(), mesh.vertex_count()));
        }
        Ok(FieldOnMesh(values))
    }

    pub fn constant(mesh: &SurfaceMesh, value: f64) -> Self {
        FieldOnMesh(vec![value; mesh.vertex_count()])
    }

    pub fn from_fn(mesh: &SurfaceMesh, f: impl Fn(&Vector3<f64>) -> f64) -> Self {
        FieldOnMesh(mesh.vertices.iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Oriented triangulated compact surface, possibly with boundary, embedded
/// in 3-space. Topology (boundary loops, genus, Euler characteristic) is
/// derived at construction and every manifoldness invariant is validated.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    boundary_loops: Vec<Vec<usize>>,
    vertex_roles: Vec<VertexRole>,
    vertex_triangles: Vec<Vec<usize>>,
    /// (previous, next) vertex along the boundary loop, for boundary vertices.
    boundary_neighbors: Vec<Option<(usize, usize)>>,
    edge_count: usize,
    components: usize,
    genus: usize,
    scale: f64,
}

/// Validates the triangle soup and derives topology.
pub fn build_mesh(
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
) -> Result<SurfaceMesh, MeshError> {
    if triangles.is_empty() {
        return Err(MeshError::NoTriangles);
    }
    let nv = vertices.len();
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= nv {
                return Err(MeshError::IndexOutOfRange(t, v));
            }
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::RepeatedVertex(t));
        }
    }

    let scale = bbox_diagonal(&vertices);
    for (t, tri) in triangles.iter().enumerate() {
        let a = triangle_area(&vertices, tri);
        if a <= DEGENERACY_THRESHOLD * scale * scale {
            return Err(MeshError::DegenerateTriangle(t, a));
        }
    }

    // directed edges: a consistently oriented manifold uses each direction at most once
    let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut undirected: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for tri in &triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            *undirected.entry(key).or_insert(0) += 1;
            *directed.entry((a, b)).or_insert(0) += 1;
        }
    }
    for (&(a, b), &count) in &undirected {
        if count > 2 {
            return Err(MeshError::NonManifold(a, b));
        }
    }
    for (&(a, b), &count) in &directed {
        if count > 1 {
            return Err(MeshError::InconsistentOrientation(a, b));
        }
    }

    let mut vertex_triangles: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            vertex_triangles[v].push(t);
        }
    }
    for (v, ts) in vertex_triangles.iter().enumerate() {
        if ts.is_empty() {
            return Err(MeshError::UnreferencedVertex(v));
        }
    }

    // boundary = directed edges whose reverse is absent; walk successor cycles
    let mut boundary_next: BTreeMap<usize, usize> = BTreeMap::new();
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) {
            if boundary_next.insert(a, b).is_some() {
                return Err(MeshError::PinchedBoundary(a));
            }
        }
    }
    let mut boundary_loops: Vec<Vec<usize>> = Vec::new();
    let mut visited: BTreeMap<usize, bool> = BTreeMap::new();
    for &start in boundary_next.keys() {
        if visited.get(&start).copied().unwrap_or(false) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        loop {
            if visited.insert(v, true).unwrap_or(false) {
                return Err(MeshError::PinchedBoundary(v));
            }
            cycle.push(v);
            v = *boundary_next
                .get(&v)
                .ok_or(MeshError::PinchedBoundary(v))?;
            if v == start {
                break;
            }
        }
        boundary_loops.push(cycle);
    }

    let mut vertex_roles = vec![VertexRole::Interior; nv];
    let mut boundary_neighbors = vec![None; nv];
    for cycle in &boundary_loops {
        let m = cycle.len();
        for (k, &v) in cycle.iter().enumerate() {
            vertex_roles[v] = VertexRole::Boundary;
            boundary_neighbors[v] = Some((cycle[(k + m - 1) % m], cycle[(k + 1) % m]));
        }
    }

    // connected components over the edge graph
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(parent: &mut Vec<usize>, mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for &(a, b) in undirected.keys() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut roots: Vec<usize> = (0..nv).map(|v| find(&mut parent, v)).collect();
    roots.sort_unstable();
    roots.dedup();
    let components = roots.len();

    let edge_count = undirected.len();
    let chi = nv as i64 - edge_count as i64 + triangles.len() as i64;
    let r = boundary_loops.len() as i64;
    let two_g = 2 * components as i64 - chi - r;
    debug_assert!(two_g >= 0 && two_g % 2 == 0, "chi={chi} r={r} c={components}");
    let genus = (two_g / 2).max(0) as usize;

    Ok(SurfaceMesh {
        vertices,
        triangles,
        boundary_loops,
        vertex_roles,
        vertex_triangles,
        boundary_neighbors,
        edge_count,
        components,
        genus,
        scale,
    })
}

fn bbox_diagonal(vertices: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in vertices {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let d = hi - lo;
    let diag = d.norm();
    if diag > 0.0 {
        diag
    } else {
        1.0
    }
}

fn triangle_area(vertices: &[Vector3<f64>], tri: &[usize; 3]) -> f64 {
    let e1 = vertices[tri[1]] - vertices[tri[0]];
    let e2 = vertices[tri[2]] - vertices[tri[0]];
    0.5 * e1.cross(&e2).norm()
}

impl SurfaceMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn position(&self, v: usize) -> &Vector3<f64> {
        &self.vertices[v]
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    /// Number of boundary components, the paper's `r`.
    pub fn boundary_component_count(&self) -> usize {
        self.boundary_loops.len()
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn connected_components(&self) -> usize {
        self.components
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count as i64 + self.triangles.len() as i64
    }

    pub fn vertex_role(&self, v: usize) -> VertexRole {
        self.vertex_roles[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_roles[v] == VertexRole::Boundary
    }

    /// Bounding-box diagonal; the length unit for relative thresholds.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn incident_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    /// (previous, next) vertex along the boundary loop through `v`.
    pub fn boundary_neighbors(&self, v: usize) -> Option<(usize, usize)> {
        self.boundary_neighbors[v]
    }

    /// Boundary vertices in loop order, loop by loop.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        self.boundary_loops.iter().flatten().cloned().collect()
    }

    /// Directed boundary edges (a, b) following the surface orientation.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for cycle in &self.boundary_loops {
            let m = cycle.len();
            for k in 0..m {
                out.push((cycle[k], cycle[(k + 1) % m]));
            }
        }
        out
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[t])
    }

    pub fn triangle_normal(&self, t: usize) -> Vector3<f64> {
        let tri = &self.triangles[t];
        let e1 = self.vertices[tri[1]] - self.vertices[tri[0]];
        let e2 = self.vertices[tri[2]] - self.vertices[tri[0]];
        e1.cross(&e2).normalize()
    }

    /// Total surface area.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Total length of the boundary.
    pub fn boundary_length(&self) -> f64 {
        self.boundary_edges()
            .iter()
            .map(|&(a, b)| (self.vertices[b] - self.vertices[a]).norm())
            .sum()
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut min = f64::INFINITY;
        for tri in &self.triangles {
            for k in 0..3 {
                let l = (self.vertices[tri[(k + 1) % 3]] - self.vertices[tri[k]]).norm();
                min = min.min(l);
            }
        }
        min
    }

    /// Same connectivity with new vertex positions. The caller owns quality:
    /// only the degeneracy floor is rechecked lazily by the solver.
    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> SurfaceMesh {
        let mut out = self.clone();
        out.set_vertices(vertices);
        out
    }

    /// In-place position update for solver loops; topology is untouched.
    pub fn set_vertices(&mut self, vertices: Vec<Vector3<f64>>) {
        assert_eq!(vertices.len(), self.vertices.len());
        self.vertices = vertices;
        self.scale = bbox_diagonal(&self.vertices);
    }

    /// Interior angle of triangle `t` at vertex `v`.
    pub fn angle_at(&self, t: usize, v: usize) -> f64 {
        let tri = &self.triangles[t];
        let k = tri.iter().position(|&x| x == v).expect("vertex not in triangle");
        let p = self.vertices[tri[k]];
        let q = self.vertices[tri[(k + 1) % 3]];
        let r = self.vertices[tri[(k + 2) % 3]];
        let u = q - p;
        let w = r - p;
        u.cross(&w).norm().atan2(u.dot(&w))
    }

    /// Sum of interior angles around a vertex.
    pub fn angle_sum(&self, v: usize) -> f64 {
        self.vertex_triangles[v]
            .iter()
            .map(|&t| self.angle_at(t, v))
            .sum()
    }

    /// One-ring vertex neighbors, sorted.
    pub fn vertex_neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &t in &self.vertex_triangles[v] {
            for &u in &self.triangles[t] {
                if u != v {
                    out.push(u);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Outward in-surface conormal at a boundary vertex, given vertex normals.
    pub fn boundary_conormal(&self, v: usize, normals: &[Vector3<f64>]) -> Vector3<f64> {
        let (prev, next) = self
            .boundary_neighbors(v)
            .expect("conormal requested at interior vertex");
        let t = (self.vertices[next] - self.vertices[prev]).normalize();
        t.cross(&normals[v]).normalize()
    }
}

/// Per-boundary-vertex lumped boundary weight: half the adjacent edge lengths.
pub fn boundary_vertex_weight(mesh: &SurfaceMesh, v: usize) -> f64 {
    match mesh.boundary_neighbors(v) {
        Some((prev, next)) => {
            0.5 * ((mesh.position(v) - mesh.position(prev)).norm()
                + (mesh.position(next) - mesh.position(v)).norm())
        }
        None => 0.0,
    }
}

/// Gauss–Bonnet residual: interior angle defects plus boundary turning
/// angles minus `2 pi chi`. Exact for triangle meshes, so the residual is
/// pure floating-point noise.
pub fn boundary_turning_check(mesh: &SurfaceMesh) -> f64 {
    let mut total = 0.0;
    for v in 0..mesh.vertex_count() {
        let sum = mesh.angle_sum(v);
        total += match mesh.vertex_role(v) {
            VertexRole::Interior => 2.0 * std::f64::consts::PI - sum,
            VertexRole::Boundary => std::f64::consts::PI - sum,
        };
    }
    (total - 2.0 * std::f64::consts::PI * mesh.euler_characteristic() as f64).abs()
}
