//! Discrete curvature: angle-weighted normals, quadric-fit shape operator,
//! angle-defect Gaussian curvature, and boundary geodesic curvature.

use super::{MeshError, SurfaceMesh, VertexRole};
use nalgebra::{Matrix2, Matrix5, Vector2, Vector3, Vector5};

/// Per-vertex extrinsic geometry of an embedded mesh.
///
/// The shape operator lives in the orthonormal tangent frame stored in
/// `frames`; its sign follows `A(Y, Z) = <D_Y N, Z>`, so the unit sphere with
/// outward normals has `H = 2`.
#[derive(Debug, Clone)]
pub struct ShapeData {
    pub normals: Vec<Vector3<f64>>,
    pub frames: Vec<(Vector3<f64>, Vector3<f64>)>,
    pub shape_operators: Vec<Matrix2<f64>>,
    /// Mean curvature `H = k1 + k2`.
    pub mean_curvature: Vec<f64>,
    /// Squared norm of the second fundamental form, `k1^2 + k2^2`.
    pub second_form_norm_sq: Vec<f64>,
    /// Gaussian curvature: angle defect over barycentric vertex area at
    /// interior vertices, `det` of the fitted shape operator on the boundary
    /// (the boundary angle defect measures geodesic curvature, not K).
    pub gaussian_curvature: Vec<f64>,
}

impl ShapeData {
    pub fn principal_curvatures(&self, v: usize) -> (f64, f64) {
        let s = &self.shape_operators[v];
        let mid = 0.5 * (s[(0, 0)] + s[(1, 1)]);
        let disc = (0.5 * (s[(0, 0)] - s[(1, 1)])).hypot(s[(0, 1)]);
        (mid - disc, mid + disc)
    }

    /// Extrinsic Gaussian curvature `det S = k1 k2` from the fitted shape
    /// operator; pointwise-accurate where the angle defect is noisy.
    pub fn extrinsic_gaussian(&self, v: usize) -> f64 {
        let s = &self.shape_operators[v];
        s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]
    }

    /// Second fundamental form applied to a 3-space direction projected into
    /// the tangent plane at `v`.
    pub fn second_form_in_direction(&self, v: usize, dir: &Vector3<f64>) -> f64 {
        let (t1, t2) = &self.frames[v];
        let y = Vector2::new(dir.dot(t1), dir.dot(t2));
        let n2 = y.norm_squared();
        if n2 <= 0.0 {
            return 0.0;
        }
        (y.transpose() * self.shape_operators[v] * y)[(0, 0)] / n2
    }
}

/// Angle-weighted vertex normals following the triangle orientation.
pub fn vertex_normals(mesh: &SurfaceMesh) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); mesh.vertex_count()];
    for v in 0..mesh.vertex_count() {
        let mut n = Vector3::zeros();
        for &t in mesh.incident_triangles(v) {
            n += mesh.angle_at(t, v) * mesh.triangle_normal(t);
        }
        normals[v] = n.normalize();
    }
    normals
}

fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t1 = (seed - n * seed.dot(n)).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Two-ring vertex neighborhood, excluding `v` itself.
fn two_ring(mesh: &SurfaceMesh, v: usize) -> Vec<usize> {
    let one = mesh.vertex_neighbors(v);
    let mut out = one.clone();
    for &u in &one {
        out.extend(mesh.vertex_neighbors(u));
    }
    out.sort_unstable();
    out.dedup();
    out.retain(|&u| u != v);
    out
}

/// Shape operator, H, |A|^2, and K for every vertex.
///
/// The shape operator comes from a least-squares quadric fit of the two-ring
/// in the tangent frame, with the first-order (slope) correction applied.
pub fn discrete_curvatures(mesh: &SurfaceMesh) -> Result<ShapeData, MeshError> {
    let n = mesh.vertex_count();
    let mut normals = vertex_normals(mesh);
    let mut frames = Vec::with_capacity(n);
    let mut shape_operators = Vec::with_capacity(n);
    let mut mean_curvature = Vec::with_capacity(n);
    let mut second_form_norm_sq = Vec::with_capacity(n);
    let mut gaussian = vec![0.0; n];

    // barycentric vertex areas for the angle-defect normalization
    let mut vertex_area = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t) / 3.0;
        for &v in tri {
            vertex_area[v] += a;
        }
    }

    for v in 0..n {
        // a five-coefficient fit needs at least five two-ring points; tiny
        // valences (the single-triangle corners) fail here
        let ring = two_ring(mesh, v);
        if ring.len() < 5 {
            return Err(MeshError::InsufficientNeighborhood(v, ring.len()));
        }
        let p = mesh.position(v);

        // scale the neighborhood to unit size for conditioning
        let h: f64 = ring
            .iter()
            .map(|&q| (mesh.position(q) - p).norm())
            .sum::<f64>()
            / ring.len() as f64;

        // fit twice: the first pass corrects the averaged normal through the
        // fitted slope, the second pass measures curvature in the corrected
        // frame, removing the first-order normal-error contamination
        let mut nv = normals[v];
        let mut t1;
        let mut t2;
        let mut hess;
        let mut grad;
        let mut pass = 0;
        loop {
            let frame = tangent_frame(&nv);
            t1 = frame.0;
            t2 = frame.1;
            let mut ata = Matrix5::<f64>::zeros();
            let mut atb = Vector5::<f64>::zeros();
            for &q in &ring {
                let d = (mesh.position(q) - p) / h;
                let (u, w, z) = (d.dot(&t1), d.dot(&t2), d.dot(&nv));
                let row = Vector5::new(0.5 * u * u, u * w, 0.5 * w * w, u, w);
                ata += row * row.transpose();
                atb += row * z;
            }
            let coeffs = match ata.cholesky() {
                Some(ch) => ch.solve(&atb),
                None => return Err(MeshError::InsufficientNeighborhood(v, ring.len())),
            };
            // back to physical units: hessian scales by 1/h, gradient is invariant
            hess = Matrix2::new(coeffs[0], coeffs[1], coeffs[1], coeffs[2]) / h;
            grad = Vector2::new(coeffs[3], coeffs[4]);
            if pass == 2 {
                break;
            }
            nv = (nv - coeffs[3] * t1 - coeffs[4] * t2).normalize();
            pass += 1;
        }
        normals[v] = nv;

        // A = -Hess w / sqrt(1+|grad|^2), pulled to the orthonormal frame
        // through the first fundamental form G = I + grad grad'
        let g = Matrix2::identity() + grad * grad.transpose();
        let det_sqrt = (g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]).sqrt();
        let tr = g[(0, 0)] + g[(1, 1)];
        let sqrt_g = (g + Matrix2::identity() * det_sqrt) / (tr + 2.0 * det_sqrt).sqrt();
        let inv_sqrt_g = sqrt_g.try_inverse().expect("SPD 2x2");
        let a_form = -hess / (1.0 + grad.norm_squared()).sqrt();
        let s = inv_sqrt_g * a_form * inv_sqrt_g;
        let s = (s + s.transpose()) * 0.5;

        let k1k2 = {
            let tr = s[(0, 0)] + s[(1, 1)];
            let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
            (tr, det)
        };
        frames.push((t1, t2));
        shape_operators.push(s);
        mean_curvature.push(k1k2.0);
        second_form_norm_sq.push(k1k2.0 * k1k2.0 - 2.0 * k1k2.1);
        gaussian[v] = match mesh.vertex_role(v) {
            VertexRole::Interior => {
                (2.0 * std::f64::consts::PI - mesh.angle_sum(v)) / vertex_area[v]
            }
            VertexRole::Boundary => k1k2.1,
        };
    }

    Ok(ShapeData {
        normals,
        frames,
        shape_operators,
        mean_curvature,
        second_form_norm_sq,
        gaussian_curvature: gaussian,
    })
}

/// Geodesic curvature sample at one boundary vertex.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryKappa {
    pub vertex: usize,
    /// Exterior turning angle, positive when the boundary bends toward the
    /// surface interior (the unit disk gives +).
    pub turning: f64,
    /// Lumped boundary length weight.
    pub ds: f64,
    /// Pointwise geodesic curvature, turning / ds.
    pub kappa: f64,
}

/// Discrete geodesic curvature of the boundary inside the surface.
pub fn boundary_geodesic_curvature(mesh: &SurfaceMesh) -> Vec<BoundaryKappa> {
    mesh.boundary_vertices()
        .iter()
        .map(|&v| {
            let turning = std::f64::consts::PI - mesh.angle_sum(v);
            let ds = super::boundary_vertex_weight(mesh, v);
            BoundaryKappa {
                vertex: v,
                turning,
                ds,
                kappa: turning / ds,
            }
        })
        .collect()
}
