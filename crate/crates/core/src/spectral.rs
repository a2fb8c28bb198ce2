//! Index form of a free boundary surface, its Robin eigenproblem and Morse
//! index, the Steklov spectrum, and the volume-constrained stability check.

use crate::body::ConvexBody;
use crate::linalg::{lowest_eigenpairs, Csr, LinalgError, ShiftedSolver};
use crate::mesh::{
    boundary_mass, cotan_stiffness, lumped_mass, robin_boundary_matrix, MeshError, ShapeData,
    SurfaceMesh,
};
use nalgebra::{DMatrix, Vector3};
use serde::Serialize;
use thiserror::Error;

/// Fixed seed for the eigensolver start blocks; spectra are deterministic.
const SPECTRUM_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(#[from] LinalgError),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
    #[error(
        "ambiguous index: eigenvalue {eigenvalue:.6e} lies within twice the zero tolerance \
         {tolerance:.3e} of zero and matches no known ambient-motion field"
    )]
    AmbiguousIndex { eigenvalue: f64, tolerance: f64 },
    #[error("requested {requested} eigenpairs of a {dimension}-dimensional problem")]
    WindowTooLarge { requested: usize, dimension: usize },
}

/// Symmetric pair (form, mass) for the quadratic form
/// `I(f, f) = f' Q f` against the L2 product `f' M f`.
#[derive(Debug, Clone)]
pub struct QuadraticFormPair {
    pub form: Csr,
    pub mass: Vec<f64>,
}

impl QuadraticFormPair {
    pub fn dimension(&self) -> usize {
        self.mass.len()
    }

    /// The quadratic form itself.
    pub fn apply(&self, f: &[f64], g: &[f64]) -> f64 {
        self.form.quad_form(f, g)
    }

    pub fn mass_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.mass).map(|((a, b), m)| a * b * m).sum()
    }
}

/// Eigenvalue window of a quadratic form pair, ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// M-orthonormal eigenfunctions.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Relative residuals |Q v - lambda M v| / |Q|.
    pub residuals: Vec<f64>,
    pub zero_tolerance: f64,
    /// Eigenvalues below minus the zero tolerance.
    pub negative_count: usize,
    /// Eigenvalues within the zero tolerance of zero.
    pub near_zero_count: usize,
}

/// Index form of a properly embedded surface in a convex body:
/// `Q = stiffness - diag(|A|^2) mass - Robin(II(N, N))`.
///
/// The ambient is flat, so `Ric(N, N) = 0` and the potential reduces to
/// `|A|^2` from the curvature fit. `II(N, N)` uses the body's analytic
/// Hessian at the projected boundary positions. The Robin term uses the
/// edge-exact boundary quadrature.
pub fn assemble_index_form(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    shape: &ShapeData,
) -> QuadraticFormPair {
    let n = mesh.vertex_count();
    let mass = lumped_mass(mesh);
    let stiffness = cotan_stiffness(mesh);

    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        let (cols, vals) = stiffness.row(i);
        for (c, v) in cols.iter().zip(vals) {
            triplets.push((i, *c, *v));
        }
        let potential = shape.second_form_norm_sq[i];
        triplets.push((i, i, -potential * mass[i]));
    }
    let robin_weights = boundary_robin_weights(mesh, body, shape);
    let robin = robin_boundary_matrix(mesh, &robin_weights);
    for i in 0..n {
        let (cols, vals) = robin.row(i);
        for (c, v) in cols.iter().zip(vals) {
            triplets.push((i, *c, -*v));
        }
    }
    QuadraticFormPair {
        form: Csr::from_triplets(n, &triplets),
        mass,
    }
}

/// `II(N, N)` per vertex: zero in the interior, the body's second
/// fundamental form applied to the surface normal on the boundary.
pub fn boundary_robin_weights(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    shape: &ShapeData,
) -> Vec<f64> {
    let mut w = vec![0.0; mesh.vertex_count()];
    for &v in &mesh.boundary_vertices() {
        let p = body
            .project_to_boundary(mesh.position(v))
            .unwrap_or(*mesh.position(v));
        w[v] = body.second_form_in_direction(&p, &shape.normals[v]);
    }
    w
}

/// Lowest `count` eigenpairs of the pair, with negative / near-zero
/// bookkeeping. `zero_tolerance = None` uses `1e-4` of the largest reported
/// eigenvalue magnitude.
pub fn solve_spectrum(
    pair: &QuadraticFormPair,
    count: usize,
    zero_tolerance: Option<f64>,
) -> Result<Spectrum, SpectralError> {
    let n = pair.dimension();
    if count == 0 || count > n {
        return Err(SpectralError::WindowTooLarge {
            requested: count,
            dimension: n,
        });
    }
    let eig = lowest_eigenpairs(&pair.form, &pair.mass, count, &[], SPECTRUM_SEED)?;
    Ok(classify(eig.values, eig.vectors, eig.residuals, zero_tolerance))
}

fn classify(
    eigenvalues: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    zero_tolerance: Option<f64>,
) -> Spectrum {
    let window = eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let ztol = zero_tolerance.unwrap_or(1e-4 * window);
    let negative_count = eigenvalues.iter().filter(|&&l| l < -ztol).count();
    let near_zero_count = eigenvalues.iter().filter(|&&l| l.abs() <= ztol).count();
    Spectrum {
        eigenvalues,
        eigenfunctions,
        residuals,
        zero_tolerance: ztol,
        negative_count,
        near_zero_count,
    }
}

/// Morse index report: negative eigenvalue count with the near-zero modes
/// cross-identified against ambient-motion fields.
#[derive(Debug, Clone)]
pub struct MorseIndex {
    pub index: usize,
    pub near_zero_count: usize,
    pub spectrum: Spectrum,
}

/// Morse index of the free-boundary Jacobi problem.
///
/// Eigenvalues within twice the zero tolerance of zero must be matched by a
/// rotation field of the body (translations never preserve a bounded convex
/// body); an unmatched borderline mode raises `AmbiguousIndex` instead of
/// guessing a count.
pub fn morse_index(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    shape: &ShapeData,
) -> Result<MorseIndex, SpectralError> {
    let pair = assemble_index_form(mesh, body, shape);
    let n = pair.dimension();
    let mut count = 8.min(n);
    loop {
        let spec = solve_spectrum(&pair, count, None)?;
        // the window must extend past the borderline zone
        let limit = 2.0 * spec.zero_tolerance;
        let undecided = spec.eigenvalues.iter().filter(|&&l| l <= limit).count();
        if undecided == count && count < n {
            count = (count * 2).min(n);
            continue;
        }
        let candidates = rotation_jacobi_candidates(mesh, body, shape, &pair.mass);
        for (k, &lambda) in spec.eigenvalues.iter().enumerate() {
            if lambda.abs() <= limit && lambda >= -limit {
                let matched = projection_onto_span(&spec.eigenfunctions[k], &candidates, &pair.mass);
                if matched < 0.6 {
                    return Err(SpectralError::AmbiguousIndex {
                        eigenvalue: lambda,
                        tolerance: spec.zero_tolerance,
                    });
                }
            }
        }
        return Ok(MorseIndex {
            index: spec.negative_count,
            near_zero_count: spec.near_zero_count,
            spectrum: spec,
        });
    }
}

/// Normal components of the rotation Killing fields that preserve the body,
/// M-orthonormalized; the degenerate ones (surface invariant under the
/// rotation) are dropped.
fn rotation_jacobi_candidates(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    shape: &ShapeData,
    mass: &[f64],
) -> Vec<Vec<f64>> {
    use crate::body::BodyKind;
    let axes: Vec<Vector3<f64>> = match body.kind {
        BodyKind::Ball { .. } => vec![Vector3::x(), Vector3::y(), Vector3::z()],
        BodyKind::PerturbedBall { .. } => vec![Vector3::z()],
        BodyKind::Ellipsoid { a, b, c } => {
            let mut v = Vec::new();
            if (a - b).abs() < 1e-12 {
                v.push(Vector3::z());
            }
            if (b - c).abs() < 1e-12 {
                v.push(Vector3::x());
            }
            if (a - c).abs() < 1e-12 {
                v.push(Vector3::y());
            }
            v
        }
    };
    let area: f64 = mass.iter().sum();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for axis in axes {
        let mut field: Vec<f64> = (0..mesh.vertex_count())
            .map(|v| axis.cross(mesh.position(v)).dot(&shape.normals[v]))
            .collect();
        // M-orthogonalize against the accepted ones
        for prev in &out {
            let d: f64 = field
                .iter()
                .zip(prev)
                .zip(mass)
                .map(|((a, b), m)| a * b * m)
                .sum();
            for (f, p) in field.iter_mut().zip(prev) {
                *f -= d * p;
            }
        }
        let nrm: f64 = field
            .iter()
            .zip(mass)
            .map(|(f, m)| f * f * m)
            .sum::<f64>()
            .sqrt();
        if nrm > 1e-8 * area.sqrt() * mesh.scale() {
            for f in &mut field {
                *f /= nrm;
            }
            out.push(field);
        }
    }
    out
}

/// Squared M-projection of a unit vector onto the span of M-orthonormal
/// candidates.
fn projection_onto_span(u: &[f64], candidates: &[Vec<f64>], mass: &[f64]) -> f64 {
    candidates
        .iter()
        .map(|c| {
            let d: f64 = u.iter().zip(c).zip(mass).map(|((a, b), m)| a * b * m).sum();
            d * d
        })
        .sum()
}

/// Steklov (Dirichlet-to-Neumann) spectrum of a mesh with boundary.
#[derive(Debug, Clone)]
pub struct SteklovSpectrum {
    /// Ascending; the first entry is the zero eigenvalue of constants.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors over the boundary vertices, in `boundary_vertices` order.
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

/// Lowest `count` Steklov eigenvalues: the Schur complement of the cotangent
/// stiffness onto the boundary, against the lumped boundary mass.
pub fn steklov_spectrum(mesh: &SurfaceMesh, count: usize) -> Result<SteklovSpectrum, SpectralError> {
    let n = mesh.vertex_count();
    let boundary = mesh.boundary_vertices();
    let m = boundary.len();
    if count == 0 || count > m {
        return Err(SpectralError::WindowTooLarge {
            requested: count,
            dimension: m,
        });
    }
    let stiffness = cotan_stiffness(mesh);

    let mut interior: Vec<usize> = (0..n).filter(|&v| !mesh.is_boundary_vertex(v)).collect();
    interior.sort_unstable();
    let mut int_index = vec![usize::MAX; n];
    for (k, &v) in interior.iter().enumerate() {
        int_index[v] = k;
    }
    let mut bnd_index = vec![usize::MAX; n];
    for (k, &v) in boundary.iter().enumerate() {
        bnd_index[v] = k;
    }

    let ni = interior.len();
    let mut schur = DMatrix::<f64>::zeros(m, m);
    for (j, &bj) in boundary.iter().enumerate() {
        let (cols, vals) = stiffness.row(bj);
        for (c, v) in cols.iter().zip(vals) {
            if bnd_index[*c] != usize::MAX {
                schur[(bnd_index[*c], j)] += *v;
            }
        }
    }
    if ni > 0 {
        let mut tri: Vec<(usize, usize, f64)> = Vec::new();
        for (k, &v) in interior.iter().enumerate() {
            let (cols, vals) = stiffness.row(v);
            for (c, w) in cols.iter().zip(vals) {
                if int_index[*c] != usize::MAX {
                    tri.push((k, int_index[*c], *w));
                }
            }
        }
        let kii = Csr::from_triplets(ni, &tri);
        let solver = ShiftedSolver::new(&kii, None, 0.0)?;
        let mut rhs = vec![0.0; ni];
        let mut sol = vec![0.0; ni];
        for (j, &bj) in boundary.iter().enumerate() {
            rhs.iter_mut().for_each(|x| *x = 0.0);
            let (cols, vals) = stiffness.row(bj);
            for (c, v) in cols.iter().zip(vals) {
                if int_index[*c] != usize::MAX {
                    rhs[int_index[*c]] = *v;
                }
            }
            solver.solve(&rhs, &mut sol);
            // subtract K_bi K_ii^{-1} K_ib e_j
            for (i, &bi) in boundary.iter().enumerate() {
                let (cols, vals) = stiffness.row(bi);
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    if int_index[*c] != usize::MAX {
                        acc += v * sol[int_index[*c]];
                    }
                }
                schur[(i, j)] -= acc;
            }
        }
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let scale = schur.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);

    let bmass = boundary_mass(mesh);
    let w: Vec<f64> = boundary.iter().map(|&v| bmass[v].sqrt()).collect();
    let mut white = schur.clone();
    for i in 0..m {
        for j in 0..m {
            white[(i, j)] /= w[i] * w[j];
        }
    }
    let eig = white.symmetric_eigen();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&p, &q| eig.eigenvalues[p].partial_cmp(&eig.eigenvalues[q]).unwrap());

    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &k in idx.iter().take(count) {
        let sigma = eig.eigenvalues[k];
        let v: Vec<f64> = (0..m).map(|i| eig.eigenvectors[(i, k)] / w[i]).collect();
        let mut r = 0.0f64;
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += schur[(i, j)] * v[j];
            }
            acc -= sigma * w[i] * w[i] * v[i];
            r += acc * acc;
        }
        eigenvalues.push(sigma);
        eigenvectors.push(v);
        residuals.push(r.sqrt() / scale);
    }
    Ok(SteklovSpectrum {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

/// JSON-facing spectrum record.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumExport {
    pub eigenvalues: Vec<f64>,
    pub negative_count: usize,
    pub near_zero_count: usize,
    pub residuals: Vec<f64>,
}

/// Assemble the index form of a surface in its body and export the lowest
/// window of the Robin spectrum.
pub fn discrete_spectrum_export(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    count: usize,
) -> Result<SpectrumExport, SpectralError> {
    let shape = crate::mesh::discrete_curvatures(mesh)?;
    let pair = assemble_index_form(mesh, body, &shape);
    let spec = solve_spectrum(&pair, count.min(pair.dimension()), None)?;
    Ok(SpectrumExport {
        eigenvalues: spec.eigenvalues,
        negative_count: spec.negative_count,
        near_zero_count: spec.near_zero_count,
        residuals: spec.residuals,
    })
}

/// JSON-facing Steklov record.
#[derive(Debug, Clone, Serialize)]
pub struct SteklovExport {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn steklov_export(mesh: &SurfaceMesh, count: usize) -> Result<SteklovExport, SpectralError> {
    let m = mesh.boundary_vertices().len();
    let spec = steklov_spectrum(mesh, count.min(m))?;
    Ok(SteklovExport {
        eigenvalues: spec.eigenvalues,
        residuals: spec.residuals,
    })
}

/// Outcome of the volume-constrained second-variation check.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport {
    /// Minimum of the index form over mean-zero fields orthogonal to the
    /// identified rotation Jacobi fields.
    pub min_constrained_eigenvalue: f64,
    pub stable: bool,
    /// Largest |Rayleigh quotient| of the deflated rotation fields; these
    /// are exact zero modes of the smooth problem and sit within the
    /// discretization error of zero.
    pub neutral_mode_magnitude: f64,
    /// Number of rotation fields deflated.
    pub neutral_modes: usize,
    pub tolerance: f64,
}

/// Stability of a free boundary CMC surface: minimizes the Rayleigh quotient
/// of the index form over fields with zero mean against the area measure.
/// The rotation Jacobi fields of the body (exact neutral modes, displaced
/// from zero only by discretization) are deflated and reported separately,
/// mirroring the zero-mode treatment of the Morse index count.
pub fn cmc_stability_check(
    mesh: &SurfaceMesh,
    body: &ConvexBody,
    shape: &ShapeData,
    tolerance: f64,
) -> Result<StabilityReport, SpectralError> {
    let pair = assemble_index_form(mesh, body, shape);
    let mass_constraint = pair.mass.clone();
    let mut constraints: Vec<Vec<f64>> = vec![mass_constraint.clone()];
    let mut neutral_mode_magnitude = 0.0f64;
    let mut neutral_modes = 0usize;
    for mut field in rotation_jacobi_candidates(mesh, body, shape, &pair.mass) {
        // make the rotation field mean-zero so it lives in the constrained space
        let total_mass: f64 = pair.mass.iter().sum();
        let mean = pair.mass_inner(&field, &vec![1.0; field.len()]) / total_mass;
        for f in &mut field {
            *f -= mean;
        }
        let nrm2 = pair.mass_inner(&field, &field);
        if nrm2 <= 0.0 {
            continue;
        }
        let quotient = pair.apply(&field, &field) / nrm2;
        neutral_mode_magnitude = neutral_mode_magnitude.max(quotient.abs());
        neutral_modes += 1;
        // constraint vectors enter Euclidean: <v, M field> = 0
        constraints.push(field.iter().zip(&pair.mass).map(|(f, m)| f * m).collect());
    }
    let eig = lowest_eigenpairs(&pair.form, &pair.mass, 1, &constraints, SPECTRUM_SEED)?;
    let min = eig.values[0];
    Ok(StabilityReport {
        min_constrained_eigenvalue: min,
        stable: min >= -tolerance,
        neutral_mode_magnitude,
        neutral_modes,
        tolerance,
    })
}

/// Minimum eigenvalue of the pair restricted to `{f : <f, constraint> = 0}`.
pub fn constrained_min_eigenvalue(
    pair: &QuadraticFormPair,
    constraint: &[f64],
) -> Result<f64, SpectralError> {
    let eig = lowest_eigenpairs(
        &pair.form,
        &pair.mass,
        1,
        std::slice::from_ref(&constraint.to_vec()),
        SPECTRUM_SEED,
    )?;
    Ok(eig.values[0])
}
