//! Linear finite element operators on triangle meshes: cotangent stiffness,
//! lumped area mass, boundary mass, and the boundary quadrature used by the
//! Robin term of the index form.

use super::{FieldOnMesh, SurfaceMesh};
use crate::linalg::Csr;

/// Cotangent stiffness matrix: `f' K f` discretizes the Dirichlet energy.
/// Symmetric positive semidefinite; constants span the kernel per component.
pub fn cotan_stiffness(mesh: &SurfaceMesh) -> Csr {
    let n = mesh.vertex_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(mesh.triangle_count() * 12);
    for tri in mesh.triangles() {
        let p = [
            mesh.position(tri[0]),
            mesh.position(tri[1]),
            mesh.position(tri[2]),
        ];
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let (pi, pj, po) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = pi - po;
            let v = pj - po;
            let cross = u.cross(&v).norm();
            let cot = u.dot(&v) / cross;
            let w = 0.5 * cot;
            triplets.push((i, j, -w));
            triplets.push((j, i, -w));
            triplets.push((i, i, w));
            triplets.push((j, j, w));
        }
    }
    Csr::from_triplets(n, &triplets)
}

/// Barycentric lumped mass: one third of each incident triangle area.
/// The diagonal sums to the surface area.
pub fn lumped_mass(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            m[v] += a;
        }
    }
    m
}

/// Lumped boundary mass: half the adjacent boundary edge lengths, supported
/// on boundary vertices. The diagonal sums to the boundary length.
pub fn boundary_mass(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (a, b) in mesh.boundary_edges() {
        let l = (mesh.position(b) - mesh.position(a)).norm();
        m[a] += 0.5 * l;
        m[b] += 0.5 * l;
    }
    m
}

/// Consistent (edge-exact) boundary matrix for a weighted boundary integral:
/// `f' R g` integrates `w f g` over the boundary with `f`, `g` piecewise
/// linear and `w` averaged per edge. Used for the Robin term of the index
/// form, where the lumped quadrature would flip the sign of the discrete
/// proof-chain residual at second order.
pub fn robin_boundary_matrix(mesh: &SurfaceMesh, weight: &[f64]) -> Csr {
    let n = mesh.vertex_count();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b) in mesh.boundary_edges() {
        let l = (mesh.position(b) - mesh.position(a)).norm();
        let w = 0.5 * (weight[a] + weight[b]);
        let s = w * l / 6.0;
        triplets.push((a, a, 2.0 * s));
        triplets.push((b, b, 2.0 * s));
        triplets.push((a, b, s));
        triplets.push((b, a, s));
    }
    Csr::from_triplets(n, &triplets)
}

/// Discrete Dirichlet energy of a vertex field.
pub fn dirichlet_energy(mesh: &SurfaceMesh, field: &FieldOnMesh) -> f64 {
    let k = cotan_stiffness(mesh);
    k.quad_form(field.values(), field.values())
}

/// Dirichlet energy against a prebuilt stiffness matrix.
pub fn dirichlet_energy_with(stiffness: &Csr, values: &[f64]) -> f64 {
    stiffness.quad_form(values, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::FieldOnMesh;
    use crate::shapes;

    #[test]
    fn stiffness_kills_constants() {
        let mesh = shapes::disk(10, 1.0);
        let k = cotan_stiffness(&mesh);
        let ones = vec![1.0; mesh.vertex_count()];
        let mut out = vec![0.0; mesh.vertex_count()];
        k.matvec(&ones, &mut out);
        for v in out {
            assert!(v.abs() < 1e-12);
        }
        assert!(k.symmetry_defect() < 1e-14);
    }

    #[test]
    fn mass_partitions_area_and_length() {
        let mesh = shapes::disk(14, 1.0);
        let m: f64 = lumped_mass(&mesh).iter().sum();
        assert!((m - mesh.area()).abs() < 1e-12 * mesh.area());
        let b: f64 = boundary_mass(&mesh).iter().sum();
        assert!((b - mesh.boundary_length()).abs() < 1e-12 * mesh.boundary_length());
    }

    #[test]
    fn dirichlet_energy_of_linear_field() {
        // |grad x|^2 = 1, so the energy equals the area
        let mesh = shapes::unit_square();
        let f = FieldOnMesh::from_fn(&mesh, |p| p.x);
        assert!((dirichlet_energy(&mesh, &f) - 1.0).abs() < 1e-14);
        let c = FieldOnMesh::constant(&mesh, 3.0);
        assert!(dirichlet_energy(&mesh, &c).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_energy_on_ngon_disk() {
        let mesh = shapes::ngon_fan(1024, 1.0);
        let f = FieldOnMesh::from_fn(&mesh, |p| p.x);
        assert!((dirichlet_energy(&mesh, &f) - std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn robin_matrix_integrates_unit_weight() {
        let mesh = shapes::disk(10, 1.0);
        let w = vec![1.0; mesh.vertex_count()];
        let r = robin_boundary_matrix(&mesh, &w);
        let ones = vec![1.0; mesh.vertex_count()];
        let total = r.quad_form(&ones, &ones);
        assert!((total - mesh.boundary_length()).abs() < 1e-12 * mesh.boundary_length());
        assert!(r.symmetry_defect() < 1e-15);
    }
}
