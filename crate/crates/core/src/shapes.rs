//! Structured mesh generators: polar disks, spherical caps, and the small
//! closed-form meshes used as fixtures.

use crate::mesh::{build_mesh, SurfaceMesh};
use nalgebra::{Rotation3, Unit, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Unit square split along the diagonal, counterclockwise from +z.
pub fn unit_square() -> SurfaceMesh {
    build_mesh(
        vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("unit square")
}

/// Flat annulus between squares of half-width 1 and 2: eight vertices,
/// eight triangles, two boundary loops.
pub fn square_annulus() -> SurfaceMesh {
    let outer = [
        Vector3::new(-2.0, -2.0, 0.0),
        Vector3::new(2.0, -2.0, 0.0),
        Vector3::new(2.0, 2.0, 0.0),
        Vector3::new(-2.0, 2.0, 0.0),
    ];
    let inner = [
        Vector3::new(-1.0, -1.0, 0.0),
        Vector3::new(1.0, -1.0, 0.0),
        Vector3::new(1.0, 1.0, 0.0),
        Vector3::new(-1.0, 1.0, 0.0),
    ];
    let mut vertices = Vec::new();
    vertices.extend_from_slice(&outer);
    vertices.extend_from_slice(&inner);
    let mut triangles = Vec::new();
    for k in 0..4usize {
        let (o0, o1) = (k, (k + 1) % 4);
        let (i0, i1) = (4 + k, 4 + (k + 1) % 4);
        triangles.push([o0, o1, i1]);
        triangles.push([o0, i1, i0]);
    }
    build_mesh(vertices, triangles).expect("square annulus")
}

/// Regular octahedron with outward orientation; a closed genus-0 surface.
pub fn octahedron() -> SurfaceMesh {
    let vertices = vec![
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ];
    let triangles = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    build_mesh(vertices, triangles).expect("octahedron")
}

/// Fan triangulation of a regular n-gon inscribed in a circle.
pub fn ngon_fan(n: usize, radius: f64) -> SurfaceMesh {
    assert!(n >= 3);
    let mut vertices = vec![Vector3::zeros()];
    for j in 0..n {
        let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        vertices.push(Vector3::new(radius * t.cos(), radius * t.sin(), 0.0));
    }
    let mut triangles = Vec::with_capacity(n);
    for j in 0..n {
        triangles.push([0, 1 + j, 1 + (j + 1) % n]);
    }
    build_mesh(vertices, triangles).expect("ngon fan")
}

/// Zip two concentric vertex rings (inner before outer in index order)
/// into a consistently oriented triangle band.
fn zip_rings(
    triangles: &mut Vec<[usize; 3]>,
    inner_start: usize,
    n_in: usize,
    outer_start: usize,
    n_out: usize,
) {
    let mut i = 0usize;
    let mut j = 0usize;
    while i < n_in || j < n_out {
        let advance_outer = if j >= n_out {
            false
        } else if i >= n_in {
            true
        } else {
            ((j + 1) as f64 / n_out as f64) <= ((i + 1) as f64 / n_in as f64)
        };
        if advance_outer {
            triangles.push([
                outer_start + j,
                outer_start + (j + 1) % n_out,
                inner_start + i % n_in,
            ]);
            j += 1;
        } else {
            triangles.push([
                inner_start + i,
                outer_start + j % n_out,
                inner_start + (i + 1) % n_in,
            ]);
            i += 1;
        }
    }
}

/// Concentric-ring disk in the z = 0 plane, counterclockwise from +z.
/// Ring k of `rings` has 6k vertices, so the vertex count is 1 + 3m(m+1).
pub fn disk(rings: usize, radius: f64) -> SurfaceMesh {
    assert!(rings >= 1);
    let mut vertices = vec![Vector3::zeros()];
    let mut ring_start = vec![0usize; rings + 1];
    for k in 1..=rings {
        ring_start[k] = vertices.len();
        let nk = 6 * k;
        let r = radius * k as f64 / rings as f64;
        for j in 0..nk {
            let t = 2.0 * std::f64::consts::PI * j as f64 / nk as f64;
            vertices.push(Vector3::new(r * t.cos(), r * t.sin(), 0.0));
        }
    }
    let mut triangles = Vec::new();
    for j in 0..6 {
        triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 1..rings {
        zip_rings(
            &mut triangles,
            ring_start[k],
            6 * k,
            ring_start[k + 1],
            6 * (k + 1),
        );
    }
    build_mesh(vertices, triangles).expect("polar disk")
}

/// Ring count whose polar disk lands near the requested vertex budget.
pub fn disk_rings_for_budget(target_vertices: usize) -> usize {
    let m = ((target_vertices as f64 / 3.0).sqrt() - 0.5).round() as usize;
    m.max(2)
}

/// Geodesic-polar cap of the sphere `|x - center| = radius` around the pole
/// `center + radius * axis`, out to polar angle `alpha_max`. Triangles wind
/// so vertex normals point away from `center`.
pub fn cap_mesh(
    center: Vector3<f64>,
    radius: f64,
    axis: Vector3<f64>,
    alpha_max: f64,
    rings: usize,
) -> SurfaceMesh {
    assert!(rings >= 1);
    let axis = Unit::new_normalize(axis);
    let seed = if axis.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (seed - axis.into_inner() * seed.dot(&axis)).normalize();
    let e2 = axis.cross(&e1);

    let place = |alpha: f64, theta: f64| -> Vector3<f64> {
        center
            + radius
                * (alpha.cos() * axis.into_inner()
                    + alpha.sin() * (theta.cos() * e1 + theta.sin() * e2))
    };

    let mut vertices = vec![place(0.0, 0.0)];
    let mut ring_start = vec![0usize; rings + 1];
    for k in 1..=rings {
        ring_start[k] = vertices.len();
        let nk = 6 * k;
        let alpha = alpha_max * k as f64 / rings as f64;
        for j in 0..nk {
            let t = 2.0 * std::f64::consts::PI * j as f64 / nk as f64;
            vertices.push(place(alpha, t));
        }
    }
    let mut triangles = Vec::new();
    for j in 0..6 {
        triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 1..rings {
        zip_rings(
            &mut triangles,
            ring_start[k],
            6 * k,
            ring_start[k + 1],
            6 * (k + 1),
        );
    }
    build_mesh(vertices, triangles).expect("cap mesh")
}

/// Cap of the unit sphere about the north pole; normals point outward.
pub fn unit_sphere_cap(alpha_max: f64, rings: usize) -> SurfaceMesh {
    cap_mesh(Vector3::zeros(), 1.0, Vector3::z(), alpha_max, rings)
}

/// Free-boundary spherical cap in the unit ball: the sphere of radius
/// `sqrt(d^2 - 1)` centered at `(0, 0, d)` meets the unit sphere
/// orthogonally; the mesh boundary lies exactly on the unit sphere.
pub fn spherical_cap_mesh(d: f64, rings: usize) -> SurfaceMesh {
    assert!(d > 1.0, "orthogonal cap needs the center outside the ball");
    let rho = (d * d - 1.0).sqrt();
    let alpha_max = (rho / d).acos();
    cap_mesh(
        Vector3::new(0.0, 0.0, d),
        rho,
        -Vector3::z(),
        alpha_max,
        rings,
    )
}

/// Open cylinder patch of radius 1: angle in [-0.8, 0.8], height in
/// [0, 1.2], outward orientation.
pub fn cylinder_patch(n_theta: usize, n_z: usize) -> SurfaceMesh {
    let mut vertices = Vec::new();
    for iz in 0..=n_z {
        let z = 1.2 * iz as f64 / n_z as f64;
        for it in 0..=n_theta {
            let t = -0.8 + 1.6 * it as f64 / n_theta as f64;
            vertices.push(Vector3::new(t.cos(), t.sin(), z));
        }
    }
    let w = n_theta + 1;
    let mut triangles = Vec::new();
    for iz in 0..n_z {
        for it in 0..n_theta {
            let a = iz * w + it;
            let b = iz * w + it + 1;
            let c = (iz + 1) * w + it + 1;
            let d = (iz + 1) * w + it;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    build_mesh(vertices, triangles).expect("cylinder patch")
}

/// Rigid rotation of every vertex.
pub fn rotate_mesh(mesh: &SurfaceMesh, axis: Vector3<f64>, angle: f64) -> SurfaceMesh {
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    mesh.with_vertices(mesh.vertices().iter().map(|p| rot * p).collect())
}

/// Random in-plane displacement of interior vertices; boundary and the
/// z-coordinate stay fixed. Used to perturb planar instances without
/// leaving the plane.
pub fn jiggle_interior_in_plane(mesh: &SurfaceMesh, seed: u64, magnitude: f64) -> SurfaceMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    let vertices = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if mesh.is_boundary_vertex(v) {
                *p
            } else {
                p + Vector3::new(
                    magnitude * rng.gen_range(-1.0..1.0),
                    magnitude * rng.gen_range(-1.0..1.0),
                    0.0,
                )
            }
        })
        .collect();
    mesh.with_vertices(vertices)
}

/// Random displacement of interior vertices in all three coordinates.
pub fn jiggle_interior(mesh: &SurfaceMesh, seed: u64, magnitude: f64) -> SurfaceMesh {
    let mut rng = StdRng::seed_from_u64(seed);
    let vertices = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(v, p)| {
            if mesh.is_boundary_vertex(v) {
                *p
            } else {
                p + Vector3::new(
                    magnitude * rng.gen_range(-1.0..1.0),
                    magnitude * rng.gen_range(-1.0..1.0),
                    magnitude * rng.gen_range(-1.0..1.0),
                )
            }
        })
        .collect();
    mesh.with_vertices(vertices)
}
