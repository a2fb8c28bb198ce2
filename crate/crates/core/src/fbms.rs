//! Free boundary minimal and CMC surfaces by constrained area relaxation:
//! projected gradient descent with backtracking, boundary reprojection onto
//! the body, and (for CMC) an exact enclosed-volume constraint.

use crate::body::{BodyError, BodyKind, ConvexBody};
use crate::mesh::{
    discrete_curvatures, MeshError, SurfaceMesh, VertexRole, DEGENERACY_THRESHOLD,
};
use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations; gradient measure {grad_norm:.3e}")]
    MaxIterationsExceeded { iterations: usize, grad_norm: f64 },
    #[error("line search stalled at iteration {iteration}; gradient measure {grad_norm:.3e}")]
    LineSearchStalled { iteration: usize, grad_norm: f64 },
    #[error("mesh degenerated at iteration {iteration}: min triangle area {min_area:.3e}")]
    MeshDegenerated { iteration: usize, min_area: f64 },
    #[error("initial mesh is not properly embedded: vertex {vertex} has psi = {psi:.3e}")]
    NotProperlyEmbedded { vertex: usize, psi: f64 },
    #[error("volume-constrained relaxation supports ball bodies only")]
    UnsupportedBody,
    #[error("mesh has no antipodal vertex pairing; cannot symmetrize (vertex {0})")]
    SymmetrizationUnavailable(usize),
    #[error("body error: {0}")]
    Body(#[from] BodyError),
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
}

/// Knobs of the relaxation loop.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when `max_v |gradient_v| / area_v` drops below this; units of
    /// inverse length (a discrete mean-curvature scale).
    pub grad_tol: f64,
    /// Boundary containment tolerance for `|psi|`.
    pub projection_tol: f64,
    /// Target enclosed volume for the CMC solve; `None` preserves the
    /// initial volume.
    pub volume_target: Option<f64>,
    pub armijo_c1: f64,
    pub step_shrink: f64,
    pub step_grow: f64,
    /// Tangential smoothing cadence, in accepted steps.
    pub smoothing_interval: usize,
    /// Smoothing displacement cap as a fraction of the min edge length.
    pub smoothing_cap: f64,
    /// Emit an iteration record every this many iterations (0 disables).
    pub log_every: usize,
    /// Constrain the flow to antipodally equivariant configurations
    /// (`x -> -x` maps the mesh to itself). Index-one critical points are
    /// saddles of the area and unreachable by plain descent; within the
    /// equivariant class the through-center disk is a strict minimizer,
    /// while the unconstrained residuals are still measured afterwards.
    pub antipodal_symmetry: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200_000,
            grad_tol: 1e-8,
            projection_tol: 1e-12,
            volume_target: None,
            armijo_c1: 1e-4,
            step_shrink: 0.5,
            step_grow: 1.5,
            smoothing_interval: 50,
            smoothing_cap: 0.1,
            log_every: 0,
            antipodal_symmetry: false,
            seed: 42,
        }
    }
}

/// First-variation residuals at the final state.
#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    /// `max |H| * mesh scale` from the curvature fit.
    pub mean_curvature: f64,
    /// Largest angle between the outward conormal and the body normal,
    /// radians, over boundary vertices.
    pub free_boundary_angle: f64,
    /// `max |psi|` over boundary vertices.
    pub containment: f64,
    /// CMC only: `max |H - Hbar|` with the area-weighted mean.
    pub constant_mean_curvature: Option<f64>,
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub area: f64,
    pub grad_norm: f64,
    pub fb_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub mesh: SurfaceMesh,
    /// Loop iterations consumed (accepted or not).
    pub iterations: usize,
    pub accepted_steps: usize,
    pub converged: bool,
    /// Area after every accepted step, starting with the initial area.
    pub area_history: Vec<f64>,
    pub residuals: Residuals,
    /// Final gradient measure `max |g| / area_v`.
    pub grad_norm: f64,
    /// CMC: Lagrange multiplier estimate at convergence.
    pub multiplier: Option<f64>,
    /// CMC: enclosed volume of the final state.
    pub enclosed_volume: Option<f64>,
    /// CMC: area-weighted mean curvature of the final state.
    pub mean_curvature_average: Option<f64>,
    /// Decimated iteration log, when requested.
    pub log: Vec<IterationRecord>,
}

fn triangle_area_pos(pos: &[Vector3<f64>], tri: &[usize; 3]) -> f64 {
    0.5 * (pos[tri[1]] - pos[tri[0]])
        .cross(&(pos[tri[2]] - pos[tri[0]]))
        .norm()
}

fn total_area(topo: &SurfaceMesh, pos: &[Vector3<f64>]) -> f64 {
    topo.triangles().iter().map(|t| triangle_area_pos(pos, t)).sum()
}

/// Per-vertex gradient of total area: for each triangle the gradient at a
/// vertex is half the unit normal crossed with the opposite edge.
fn area_gradient_into(topo: &SurfaceMesh, pos: &[Vector3<f64>], out: &mut [Vector3<f64>]) {
    out.iter_mut().for_each(|g| *g = Vector3::zeros());
    for tri in topo.triangles() {
        let (a, b, c) = (pos[tri[0]], pos[tri[1]], pos[tri[2]]);
        let n = (b - a).cross(&(c - a));
        let nn = n.norm();
        if nn <= 0.0 {
            continue;
        }
        let n = n / nn;
        out[tri[0]] += 0.5 * n.cross(&(c - b));
        out[tri[1]] += 0.5 * n.cross(&(a - c));
        out[tri[2]] += 0.5 * n.cross(&(b - a));
    }
}

fn vertex_areas_into(topo: &SurfaceMesh, pos: &[Vector3<f64>], out: &mut [f64]) {
    out.iter_mut().for_each(|a| *a = 0.0);
    for tri in topo.triangles() {
        let a = triangle_area_pos(pos, tri) / 3.0;
        for &v in tri {
            out[v] += a;
        }
    }
}

/// Directional derivative of area along a vertex variation field; the exact
/// gradient of the piecewise-linear area functional.
pub fn first_variation(mesh: &SurfaceMesh, field: &[Vector3<f64>]) -> f64 {
    assert_eq!(field.len(), mesh.vertex_count());
    let mut g = vec![Vector3::zeros(); mesh.vertex_count()];
    area_gradient_into(mesh, mesh.vertices(), &mut g);
    g.iter().zip(field).map(|(a, b)| a.dot(b)).sum()
}

/// Volume of the region between the surface and the cap of the ball
/// boundary spanned by its boundary curve, on the side the surface normal
/// points to: the divergence-theorem cone from the ball center (entering
/// with the orientation of the closed surface bounding that region) plus
/// the exact solid-angle cap. `apex` must lie in the cap, i.e. on the
/// normal side.
pub fn enclosed_volume(
    topo: &SurfaceMesh,
    pos: &[Vector3<f64>],
    center: &Vector3<f64>,
    radius: f64,
    apex: &Vector3<f64>,
) -> f64 {
    let mut v = 0.0;
    for tri in topo.triangles() {
        let (a, b, c) = (pos[tri[0]] - center, pos[tri[1]] - center, pos[tri[2]] - center);
        v -= a.dot(&b.cross(&c)) / 6.0;
    }
    let p = (apex - center).normalize();
    let mut omega = 0.0;
    for (u, w) in topo.boundary_edges() {
        let a = (pos[u] - center).normalize();
        let b = (pos[w] - center).normalize();
        let d = a.dot(&b.cross(&p));
        let s = 1.0 + a.dot(&b) + b.dot(&p) + p.dot(&a);
        omega += 2.0 * d.atan2(s);
    }
    v + radius.powi(3) / 3.0 * omega
}

fn volume_gradient_into(
    topo: &SurfaceMesh,
    pos: &[Vector3<f64>],
    center: &Vector3<f64>,
    radius: f64,
    apex: &Vector3<f64>,
    out: &mut [Vector3<f64>],
) {
    out.iter_mut().for_each(|g| *g = Vector3::zeros());
    for tri in topo.triangles() {
        let (a, b, c) = (pos[tri[0]] - center, pos[tri[1]] - center, pos[tri[2]] - center);
        out[tri[0]] -= b.cross(&c) / 6.0;
        out[tri[1]] -= c.cross(&a) / 6.0;
        out[tri[2]] -= a.cross(&b) / 6.0;
    }
    let p = (apex - center).normalize();
    let scale = radius.powi(3) / 3.0;
    for (u, w) in topo.boundary_edges() {
        let xu = pos[u] - center;
        let xw = pos[w] - center;
        let (ru, rw) = (xu.norm(), xw.norm());
        let a = xu / ru;
        let b = xw / rw;
        let d = a.dot(&b.cross(&p));
        let s = 1.0 + a.dot(&b) + b.dot(&p) + p.dot(&a);
        let denom = s * s + d * d;
        // dOmega/da and dOmega/db for Omega = 2 atan2(d, s)
        let da = (b.cross(&p) * s - (b + p) * d) * (2.0 / denom);
        let db = (p.cross(&a) * s - (p + a) * d) * (2.0 / denom);
        // chain through the normalization
        let ga = (da - a * a.dot(&da)) / ru;
        let gb = (db - b * b.dot(&db)) / rw;
        out[u] += scale * ga;
        out[w] += scale * gb;
    }
}

enum Constraint {
    None,
    Volume {
        center: Vector3<f64>,
        radius: f64,
        apex: Vector3<f64>,
        target: f64,
    },
}

/// Relax toward a free boundary minimal surface: gradient descent on area
/// with boundary vertices projected back to the body after every step.
pub fn relax_minimal(
    initial: &SurfaceMesh,
    body: &ConvexBody,
    config: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    relax(initial, body, config, false)
}

/// Relax toward a free boundary CMC surface at fixed enclosed volume.
/// Supports ball bodies, where the cap volume term is exact.
pub fn relax_cmc(
    initial: &SurfaceMesh,
    body: &ConvexBody,
    config: &SolverConfig,
) -> Result<SolveResult, SolveError> {
    relax(initial, body, config, true)
}

fn relax(
    initial: &SurfaceMesh,
    body: &ConvexBody,
    config: &SolverConfig,
    volume_constrained: bool,
) -> Result<SolveResult, SolveError> {
    let topo = initial.clone();
    let n = topo.vertex_count();
    let mut pos: Vec<Vector3<f64>> = topo.vertices().to_vec();

    // proper embedding: interior strictly inside, boundary pinned to the body
    for v in 0..n {
        match topo.vertex_role(v) {
            VertexRole::Interior => {
                let psi = body.psi(&pos[v]);
                if psi >= 0.0 {
                    return Err(SolveError::NotProperlyEmbedded { vertex: v, psi });
                }
            }
            VertexRole::Boundary => {
                pos[v] = body.project_to_boundary(&pos[v])?;
            }
        }
    }

    let pairing = if config.antipodal_symmetry {
        let p = antipodal_pairing(&topo)?;
        symmetrize_positions(&mut pos, &p);
        for &v in &topo.boundary_vertices() {
            pos[v] = body.project_to_boundary(&pos[v])?;
        }
        Some(p)
    } else {
        None
    };

    let constraint = if volume_constrained {
        let BodyKind::Ball { radius } = body.kind else {
            return Err(SolveError::UnsupportedBody);
        };
        let center = Vector3::zeros();
        // fixed apex on the positive-normal side of the initial surface
        let normals = crate::mesh::vertex_normals(&topo.with_vertices(pos.clone()));
        let mut mean_normal = Vector3::zeros();
        let mut areas = vec![0.0; n];
        vertex_areas_into(&topo, &pos, &mut areas);
        for v in 0..n {
            mean_normal += normals[v] * areas[v];
        }
        let apex = center + mean_normal.normalize() * radius;
        let v0 = enclosed_volume(&topo, &pos, &center, radius, &apex);
        Constraint::Volume {
            center,
            radius,
            apex,
            target: config.volume_target.unwrap_or(v0),
        }
    } else {
        Constraint::None
    };

    let mut grad = vec![Vector3::zeros(); n];
    let mut vgrad = vec![Vector3::zeros(); n];
    let mut areas = vec![0.0; n];
    let mut trial: Vec<Vector3<f64>> = pos.clone();
    let mut area = total_area(&topo, &pos);
    let mut area_history = vec![area];
    let mut step = f64::NAN;
    let mut accepted = 0usize;
    let mut converged = false;
    let mut grad_measure = f64::INFINITY;
    let mut multiplier = 0.0;
    let mut iterations = 0usize;
    // previous accepted state for the Barzilai-Borwein step estimate
    let mut prev_pos: Vec<Vector3<f64>> = Vec::new();
    let mut prev_dir: Vec<Vector3<f64>> = Vec::new();
    // the area Hessian has order-one eigenvalues (cotangent weights are
    // dimensionless), so steps beyond this are never useful and only let
    // the iterate wander along the exactly-flat tangential directions
    const STEP_ABS_CAP: f64 = 2.0;

    let volume_tol = |target: f64, radius: f64| 1e-12 * target.abs().max(radius.powi(3));

    let mut normals = vec![Vector3::zeros(); n];
    let mut cached_min_edge = 0.0;
    let mut cached_stability = 0.0;
    let mut log: Vec<IterationRecord> = Vec::new();
    for iter in 0..config.max_iterations {
        iterations = iter;
        area_gradient_into(&topo, &pos, &mut grad);
        vertex_areas_into(&topo, &pos, &mut areas);
        // interior vertices move along their normals, boundary vertices
        // along the conormal inside the body tangent plane: tangential
        // motion is pure reparametrization, which the discrete area
        // functional rewards with sliver triangles instead of geometry
        area_weighted_normals_into(&topo, &pos, &mut normals);
        for v in 0..n {
            if topo.vertex_role(v) == VertexRole::Interior {
                grad[v] = normals[v] * normals[v].dot(&grad[v]);
            }
        }
        for &v in &topo.boundary_vertices() {
            grad[v] = project_boundary_direction(&topo, body, &pos, v, &grad[v]);
        }
        if let Constraint::Volume {
            center,
            radius,
            apex,
            ..
        } = &constraint
        {
            volume_gradient_into(&topo, &pos, center, *radius, apex, &mut vgrad);
            for v in 0..n {
                if topo.vertex_role(v) == VertexRole::Interior {
                    vgrad[v] = normals[v] * normals[v].dot(&vgrad[v]);
                }
            }
            for &v in &topo.boundary_vertices() {
                vgrad[v] = project_boundary_direction(&topo, body, &pos, v, &vgrad[v]);
            }
            let gv: f64 = grad.iter().zip(&vgrad).map(|(a, b)| a.dot(b)).sum();
            let vv: f64 = vgrad.iter().map(|a| a.norm_squared()).sum();
            multiplier = if vv > 0.0 { gv / vv } else { 0.0 };
            for v in 0..n {
                grad[v] -= multiplier * vgrad[v];
            }
        }

        if let Some(p) = &pairing {
            symmetrize_directions(&mut grad, p);
        }

        grad_measure = (0..n)
            .map(|v| grad[v].norm() / areas[v])
            .fold(0.0, f64::max);
        if config.log_every > 0 && iter % config.log_every == 0 {
            log.push(IterationRecord {
                iter,
                area,
                grad_norm: grad_measure,
                fb_residual: quick_fb_angle(&topo, body, &pos, &normals),
            });
        }
        if grad_measure <= config.grad_tol {
            converged = true;
            break;
        }

        let dir_sq: f64 = grad.iter().map(|g| g.norm_squared()).sum();
        let max_g = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
        if iter % 16 == 0 {
            cached_min_edge = min_edge_length(&topo, &pos);
            cached_stability = stability_step_bound(&topo, &pos);
        }
        let step_cap = (0.45 * cached_min_edge / max_g.max(1e-300))
            .min(cached_stability)
            .min(STEP_ABS_CAP);
        if !prev_pos.is_empty() {
            // Barzilai-Borwein: t = <s, y> / <y, y> over the accepted move
            let mut sy = 0.0;
            let mut yy = 0.0;
            for v in 0..n {
                let s = pos[v] - prev_pos[v];
                let y = grad[v] - prev_dir[v];
                sy += s.dot(&y);
                yy += y.norm_squared();
            }
            if sy > 0.0 && yy > 0.0 {
                step = sy / yy;
            } else {
                step *= config.step_grow;
            }
        } else if !step.is_finite() {
            step = 0.2 * cached_min_edge / max_g.max(1e-300);
        }
        step = step.min(step_cap).max(1e-14);

        let mut accepted_step = false;
        let mut accepted_area = area;
        for _ in 0..48 {
            for v in 0..n {
                trial[v] = pos[v] - step * grad[v];
            }
            let mut projected = true;
            for &v in &topo.boundary_vertices() {
                match body.project_to_boundary(&trial[v]) {
                    Ok(p) => trial[v] = p,
                    Err(_) => {
                        projected = false;
                        break;
                    }
                }
            }
            if !projected {
                step *= config.step_shrink;
                continue;
            }
            if let Constraint::Volume {
                center,
                radius,
                apex,
                target,
            } = &constraint
            {
                if !restore_volume(
                    &topo,
                    body,
                    &mut trial,
                    center,
                    *radius,
                    apex,
                    *target,
                    volume_tol(*target, *radius),
                ) {
                    step *= config.step_shrink;
                    continue;
                }
            }
            let trial_area = total_area(&topo, &trial);
            // the decrease demand shrinks below the resolution of the area
            // sum near convergence; steps are stability-capped, so accepting
            // at roundoff level is safe and keeps the iteration moving
            let fp_slack = 1e-13 * area.abs().max(1.0);
            if trial_area <= area - config.armijo_c1 * step * dir_sq + fp_slack {
                accepted_step = true;
                accepted_area = trial_area;
                break;
            }
            step *= config.step_shrink;
        }
        if !accepted_step {
            // the functional is locally flat to rounding; accept as converged
            // when the gradient measure is already near the tolerance
            if grad_measure <= 100.0 * config.grad_tol {
                converged = true;
                break;
            }
            return Err(SolveError::LineSearchStalled {
                iteration: iter,
                grad_norm: grad_measure,
            });
        }

        prev_pos.clear();
        prev_pos.extend_from_slice(&pos);
        prev_dir.clear();
        prev_dir.extend_from_slice(&grad);
        std::mem::swap(&mut pos, &mut trial);
        if let Some(p) = &pairing {
            symmetrize_positions(&mut pos, p);
        }
        area = accepted_area;
        area_history.push(area);
        accepted += 1;

        let min_area = min_triangle_area(&topo, &pos);
        let floor = DEGENERACY_THRESHOLD * scale_of(&pos).powi(2);
        let needs_smoothing = accepted % config.smoothing_interval == 0 || min_area <= 10.0 * floor;
        if needs_smoothing {
            smooth_tangentially(&topo, body, &mut pos, config.smoothing_cap, &constraint);
            if let Some(p) = &pairing {
                symmetrize_positions(&mut pos, p);
            }
            area = total_area(&topo, &pos);
            if min_triangle_area(&topo, &pos) <= floor {
                return Err(SolveError::MeshDegenerated {
                    iteration: iter,
                    min_area: min_triangle_area(&topo, &pos),
                });
            }
        } else if min_area <= floor {
            return Err(SolveError::MeshDegenerated {
                iteration: iter,
                min_area,
            });
        }
    }

    if !converged {
        return Err(SolveError::MaxIterationsExceeded {
            iterations,
            grad_norm: grad_measure,
        });
    }

    let mesh = topo.with_vertices(pos);
    let shape = discrete_curvatures(&mesh)?;
    let mut max_h = 0.0f64;
    for v in 0..n {
        max_h = max_h.max(shape.mean_curvature[v].abs());
    }
    let mut fb_angle = 0.0f64;
    let mut containment = 0.0f64;
    for &v in &mesh.boundary_vertices() {
        let nu = mesh.boundary_conormal(v, &shape.normals);
        let x = body.outward_normal(mesh.position(v));
        fb_angle = fb_angle.max(nu.cross(&x).norm().atan2(nu.dot(&x)).abs());
        containment = containment.max(body.psi(mesh.position(v)).abs());
    }
    let (constant_h, h_bar, volume_out) = match &constraint {
        Constraint::Volume {
            center,
            radius,
            apex,
            ..
        } => {
            let (h_bar, dev) = variational_mean_curvature_spread(&mesh);
            let vol = enclosed_volume(&mesh, mesh.vertices(), center, *radius, apex);
            (Some(dev), Some(h_bar), Some(vol))
        }
        Constraint::None => (None, None, None),
    };

    Ok(SolveResult {
        residuals: Residuals {
            mean_curvature: max_h * mesh.scale(),
            free_boundary_angle: fb_angle,
            containment,
            constant_mean_curvature: constant_h,
        },
        mesh,
        iterations,
        accepted_steps: accepted,
        converged,
        area_history,
        grad_norm: grad_measure,
        multiplier: if volume_constrained {
            Some(multiplier)
        } else {
            None
        },
        enclosed_volume: volume_out,
        mean_curvature_average: h_bar,
        log,
    })
}

/// Cheap free-boundary angle estimate from the flow's own normals.
fn quick_fb_angle(
    topo: &SurfaceMesh,
    body: &ConvexBody,
    pos: &[Vector3<f64>],
    normals: &[Vector3<f64>],
) -> f64 {
    let mut worst = 0.0f64;
    for &v in &topo.boundary_vertices() {
        let (prev, next) = topo.boundary_neighbors(v).expect("boundary vertex");
        let t = (pos[next] - pos[prev]).normalize();
        let nu = t.cross(&normals[v]).normalize();
        let x = body.outward_normal(&pos[v]);
        worst = worst.max(nu.cross(&x).norm().atan2(nu.dot(&x)).abs());
    }
    worst
}

/// Area-weighted mean and max deviation of the variational (cotangent)
/// mean curvature over interior vertices. This is the mean curvature of
/// the discrete area functional itself, so it is the right yardstick for
/// the constant-H residual; the fitted pointwise estimate carries an
/// O(h^2) bias an order of magnitude larger.
pub fn variational_mean_curvature_spread(mesh: &SurfaceMesh) -> (f64, f64) {
    let n = mesh.vertex_count();
    let pos = mesh.vertices();
    let mut grad = vec![Vector3::zeros(); n];
    let mut areas = vec![0.0; n];
    let mut normals = vec![Vector3::zeros(); n];
    area_gradient_into(mesh, pos, &mut grad);
    vertex_areas_into(mesh, pos, &mut areas);
    area_weighted_normals_into(mesh, pos, &mut normals);
    let mut h_bar = 0.0;
    let mut weight = 0.0;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for v in 0..n {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        let h = grad[v].dot(&normals[v]) / areas[v];
        values.push((v, h));
        h_bar += h * areas[v];
        weight += areas[v];
    }
    if weight <= 0.0 {
        return (0.0, 0.0);
    }
    h_bar /= weight;
    let dev = values
        .iter()
        .map(|(_, h)| (h - h_bar).abs())
        .fold(0.0, f64::max);
    (h_bar, dev)
}

/// Involution pairing each vertex with the one at the reflected position
/// `x -> -x`; fails if the mesh is not antipodally symmetric.
fn antipodal_pairing(topo: &SurfaceMesh) -> Result<Vec<usize>, SolveError> {
    let n = topo.vertex_count();
    // loose enough to see through a perturbed start, tight enough that the
    // nearest vertex is unambiguous; the involution check catches mistakes
    let tol = 0.35 * topo.min_edge_length();
    let mut pairing = vec![usize::MAX; n];
    for v in 0..n {
        let target = -topo.position(v);
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for u in 0..n {
            let d = (topo.position(u) - target).norm();
            if d < best_d {
                best_d = d;
                best = u;
            }
        }
        if best_d > tol || topo.vertex_role(best) != topo.vertex_role(v) {
            return Err(SolveError::SymmetrizationUnavailable(v));
        }
        pairing[v] = best;
    }
    for v in 0..n {
        if pairing[pairing[v]] != v {
            return Err(SolveError::SymmetrizationUnavailable(v));
        }
    }
    Ok(pairing)
}

fn symmetrize_positions(pos: &mut [Vector3<f64>], pairing: &[usize]) {
    let snapshot: Vec<Vector3<f64>> = pos.to_vec();
    for v in 0..pos.len() {
        pos[v] = (snapshot[v] - snapshot[pairing[v]]) * 0.5;
    }
}

fn symmetrize_directions(dir: &mut [Vector3<f64>], pairing: &[usize]) {
    let snapshot: Vec<Vector3<f64>> = dir.to_vec();
    for v in 0..dir.len() {
        dir[v] = (snapshot[v] - snapshot[pairing[v]]) * 0.5;
    }
}

/// Unnormalized area-weighted vertex normals from raw positions; cheap
/// enough to rebuild every iteration.
fn area_weighted_normals_into(topo: &SurfaceMesh, pos: &[Vector3<f64>], out: &mut [Vector3<f64>]) {
    out.iter_mut().for_each(|nv| *nv = Vector3::zeros());
    for tri in topo.triangles() {
        let cross = (pos[tri[1]] - pos[tri[0]]).cross(&(pos[tri[2]] - pos[tri[0]]));
        for &v in tri {
            out[v] += cross;
        }
    }
    for nv in out.iter_mut() {
        let n = nv.norm();
        if n > 0.0 {
            *nv /= n;
        }
    }
}

/// Explicit-step stability bound: the area Hessian is dominated by the
/// cotangent stiffness, whose largest eigenvalue is at most twice the
/// largest diagonal entry.
fn stability_step_bound(topo: &SurfaceMesh, pos: &[Vector3<f64>]) -> f64 {
    let mut diag = vec![0.0f64; pos.len()];
    for tri in topo.triangles() {
        for k in 0..3 {
            let (i, j) = (tri[k], tri[(k + 1) % 3]);
            let o = tri[(k + 2) % 3];
            let u = pos[i] - pos[o];
            let v = pos[j] - pos[o];
            let w = 0.5 * (u.dot(&v) / u.cross(&v).norm()).abs();
            diag[i] += w;
            diag[j] += w;
        }
    }
    let max = diag.iter().cloned().fold(0.0, f64::max);
    0.9 / max.max(1e-300)
}

/// Admissible descent direction at a boundary vertex: inside the body's
/// tangent plane with the component along the boundary polyline removed.
fn project_boundary_direction(
    topo: &SurfaceMesh,
    body: &ConvexBody,
    pos: &[Vector3<f64>],
    v: usize,
    g: &Vector3<f64>,
) -> Vector3<f64> {
    let x = body.outward_normal(&pos[v]);
    let mut out = g - x * x.dot(g);
    if let Some((prev, next)) = topo.boundary_neighbors(v) {
        let chord = pos[next] - pos[prev];
        let mut t = chord - x * x.dot(&chord);
        let tn = t.norm();
        if tn > 0.0 {
            t /= tn;
            out -= t * t.dot(&out);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn restore_volume(
    topo: &SurfaceMesh,
    body: &ConvexBody,
    pos: &mut [Vector3<f64>],
    center: &Vector3<f64>,
    radius: f64,
    apex: &Vector3<f64>,
    target: f64,
    tol: f64,
) -> bool {
    let n = pos.len();
    let mut v = enclosed_volume(topo, pos, center, radius, apex);
    if (v - target).abs() <= tol {
        return true;
    }
    // one admissible direction per restore; the correction is small, so the
    // 1D Newton below converges in a couple of volume evaluations
    let mut vgrad = vec![Vector3::zeros(); n];
    volume_gradient_into(topo, pos, center, radius, apex, &mut vgrad);
    for b in 0..n {
        if topo.vertex_role(b) == VertexRole::Interior {
            continue;
        }
        vgrad[b] = project_boundary_direction(topo, body, pos, b, &vgrad[b]);
    }
    let vv: f64 = vgrad.iter().map(|g| g.norm_squared()).sum();
    if vv <= 0.0 {
        return false;
    }
    for _ in 0..12 {
        let s = (v - target) / vv;
        for k in 0..n {
            pos[k] -= s * vgrad[k];
        }
        for &b in &topo.boundary_vertices() {
            match body.project_to_boundary(&pos[b]) {
                Ok(p) => pos[b] = p,
                Err(_) => return false,
            }
        }
        v = enclosed_volume(topo, pos, center, radius, apex);
        if (v - target).abs() <= tol {
            return true;
        }
    }
    (v - target).abs() <= tol * 10.0
}

fn min_edge_length(topo: &SurfaceMesh, pos: &[Vector3<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for tri in topo.triangles() {
        for k in 0..3 {
            min = min.min((pos[tri[(k + 1) % 3]] - pos[tri[k]]).norm());
        }
    }
    min
}

fn min_triangle_area(topo: &SurfaceMesh, pos: &[Vector3<f64>]) -> f64 {
    topo.triangles()
        .iter()
        .map(|t| triangle_area_pos(pos, t))
        .fold(f64::INFINITY, f64::min)
}

fn scale_of(pos: &[Vector3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in pos {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm().max(1e-300)
}

/// Interior vertices move toward their one-ring area centroid, projected
/// onto the local tangent plane and capped; the move is rejected unless the
/// area stays non-increasing (it preserves geometry to first order).
fn smooth_tangentially(
    topo: &SurfaceMesh,
    body: &ConvexBody,
    pos: &mut Vec<Vector3<f64>>,
    cap_fraction: f64,
    constraint: &Constraint,
) {
    let n = pos.len();
    let normals = crate::mesh::vertex_normals(&topo.with_vertices(pos.clone()));
    let cap = cap_fraction * min_edge_length(topo, pos);
    let area_before = total_area(topo, pos);
    let mut moved = pos.clone();
    for v in 0..n {
        if topo.vertex_role(v) != VertexRole::Interior {
            continue;
        }
        let mut centroid = Vector3::zeros();
        let mut weight = 0.0;
        for &t in topo.incident_triangles(v) {
            let tri = topo.triangles()[t];
            let a = triangle_area_pos(pos, &tri);
            centroid += (pos[tri[0]] + pos[tri[1]] + pos[tri[2]]) / 3.0 * a;
            weight += a;
        }
        if weight <= 0.0 {
            continue;
        }
        centroid /= weight;
        let mut delta = centroid - pos[v];
        delta -= normals[v] * normals[v].dot(&delta);
        let nd = delta.norm();
        if nd > cap {
            delta *= cap / nd;
        }
        moved[v] += delta;
    }
    // scale the whole move down until area does not increase
    let mut factor = 1.0;
    for _ in 0..5 {
        let mut candidate: Vec<Vector3<f64>> = (0..n)
            .map(|v| pos[v] + (moved[v] - pos[v]) * factor)
            .collect();
        if let Constraint::Volume {
            center,
            radius,
            apex,
            target,
        } = constraint
        {
            if !restore_volume(
                topo,
                body,
                &mut candidate,
                center,
                *radius,
                apex,
                *target,
                1e-12 * target.abs().max(radius.powi(3)),
            ) {
                factor *= 0.5;
                continue;
            }
        }
        if total_area(topo, &candidate) <= area_before {
            *pos = candidate;
            return;
        }
        factor *= 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn first_variation_of_flat_disk_normal_field() {
        let mesh = shapes::disk(10, 1.0);
        let field = vec![Vector3::z(); mesh.vertex_count()];
        assert!(first_variation(&mesh, &field).abs() < 1e-12);
    }

    #[test]
    fn first_variation_of_radial_field_is_twice_area() {
        // scaling derivative: A(1 + t)^2 has slope 2A; the boundary integral
        // of the conormal flux equals it exactly on the polygon
        let mesh = shapes::disk(16, 1.0);
        let field: Vec<Vector3<f64>> = mesh.vertices().iter().map(|p| *p).collect();
        let fv = first_variation(&mesh, &field);
        assert!((fv - 2.0 * mesh.area()).abs() < 1e-12);
        assert!((fv - 2.0 * PI).abs() < 0.01);
    }

    #[test]
    fn first_variation_matches_finite_differences() {
        let mesh = shapes::spherical_cap_mesh(1.3, 8);
        let mut rng = StdRng::seed_from_u64(5);
        let field: Vec<Vector3<f64>> = (0..mesh.vertex_count())
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let fv = first_variation(&mesh, &field);
        let eps = 1e-6;
        let plus: Vec<Vector3<f64>> = mesh
            .vertices()
            .iter()
            .zip(&field)
            .map(|(p, f)| p + eps * f)
            .collect();
        let minus: Vec<Vector3<f64>> = mesh
            .vertices()
            .iter()
            .zip(&field)
            .map(|(p, f)| p - eps * f)
            .collect();
        let fd = (total_area(&mesh, &plus) - total_area(&mesh, &minus)) / (2.0 * eps);
        assert!(
            (fv - fd).abs() <= 1e-6 * fd.abs().max(1.0),
            "exact {fv} vs fd {fd}"
        );
    }

    #[test]
    fn exact_disk_is_a_fixed_point() {
        let mesh = shapes::disk(12, 1.0);
        let body = ConvexBody::ball(1.0);
        let out = relax_minimal(&mesh, &body, &SolverConfig::default()).unwrap();
        assert_eq!(out.accepted_steps, 0);
        assert!(out.converged);
    }

    #[test]
    fn perturbed_disk_relaxes_to_equator() {
        let mesh = shapes::jiggle_interior(&shapes::disk(10, 1.0), 3, 1e-3);
        let body = ConvexBody::ball(1.0);
        let config = SolverConfig {
            antipodal_symmetry: true,
            ..SolverConfig::default()
        };
        let out = relax_minimal(&mesh, &body, &config).unwrap();
        assert!(out.converged);
        assert!(out.residuals.free_boundary_angle < 1e-6, "angle {}", out.residuals.free_boundary_angle);
        assert!(out.residuals.mean_curvature < 1e-6, "H {}", out.residuals.mean_curvature);
        assert!(out.residuals.containment < 1e-12);
        let l = out.mesh.boundary_length();
        assert!((l - 2.0 * PI).abs() < 0.005 * 2.0 * PI, "L = {l}");
        // monotone area history
        for w in out.area_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn tilted_disk_converges_to_a_great_disk() {
        let disk = shapes::disk(10, 1.0);
        let tilted = shapes::rotate_mesh(&disk, Vector3::x(), 30f64.to_radians());
        let start = shapes::jiggle_interior(&tilted, 11, 5e-4);
        let body = ConvexBody::ball(1.0);
        let config = SolverConfig {
            antipodal_symmetry: true,
            ..SolverConfig::default()
        };
        let out = relax_minimal(&start, &body, &config).unwrap();
        assert!(out.converged);
        assert!((out.mesh.area() - PI).abs() < 0.01 * PI);
        assert!(out.residuals.free_boundary_angle < 1e-6);
    }

    #[test]
    fn converged_state_kills_admissible_variations() {
        let mesh = shapes::jiggle_interior(&shapes::disk(8, 1.0), 7, 1e-3);
        let body = ConvexBody::ball(1.0);
        let config = SolverConfig {
            antipodal_symmetry: true,
            ..SolverConfig::default()
        };
        let out = relax_minimal(&mesh, &body, &config).unwrap();
        let mass = crate::mesh::lumped_mass(&out.mesh);
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..50 {
            let mut field: Vec<Vector3<f64>> = (0..out.mesh.vertex_count())
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            for &v in &out.mesh.boundary_vertices() {
                let x = body.outward_normal(out.mesh.position(v));
                let g = field[v];
                field[v] = g - x * x.dot(&g);
            }
            let weighted: f64 = field
                .iter()
                .zip(&mass)
                .map(|(f, m)| f.norm() * m)
                .sum();
            let fv = first_variation(&out.mesh, &field).abs();
            assert!(
                fv <= 1.01 * config.grad_tol * 100.0 * weighted,
                "variation {fv} too large vs {weighted}"
            );
        }
    }

    #[test]
    fn solutions_stable_under_perturbation() {
        let body = ConvexBody::ball(1.0);
        let base = shapes::disk(8, 1.0);
        let config = SolverConfig {
            antipodal_symmetry: true,
            ..SolverConfig::default()
        };
        let a = relax_minimal(&shapes::jiggle_interior(&base, 1, 1e-3), &body, &config).unwrap();
        let b = relax_minimal(&shapes::jiggle_interior(&base, 2, 1e-3), &body, &config).unwrap();
        let rel = (a.mesh.area() - b.mesh.area()).abs() / a.mesh.area();
        assert!(rel < 1e-4, "areas differ by {rel}");
    }

    #[test]
    fn not_properly_embedded_rejected() {
        let mesh = shapes::disk(6, 1.5); // interior pokes outside the unit ball
        let body = ConvexBody::ball(1.0);
        assert!(matches!(
            relax_minimal(&mesh, &body, &SolverConfig::default()),
            Err(SolveError::NotProperlyEmbedded { .. })
        ));
    }

    #[test]
    fn enclosed_volume_of_equatorial_disk() {
        // region above the disk bounded by the northern hemisphere: 2 pi / 3
        let mesh = shapes::disk(20, 1.0);
        let v = enclosed_volume(
            &mesh,
            mesh.vertices(),
            &Vector3::zeros(),
            1.0,
            &Vector3::z(),
        );
        assert!(
            (v - 2.0 * PI / 3.0).abs() < 0.01,
            "enclosed volume {v} vs {}",
            2.0 * PI / 3.0
        );
    }

    #[test]
    fn enclosed_volume_of_cap_matches_analytic() {
        let d = 1.25f64;
        let rho = (d * d - 1.0).sqrt();
        let mesh = shapes::spherical_cap_mesh(d, 24);
        // lens between the cap and the polar region of the sphere
        let z0 = 1.0 / d;
        let h = rho * (d - rho) / d;
        let lens = PI * (1.0 - z0).powi(2) * (2.0 + z0) / 3.0 + PI * h * h * (3.0 * rho - h) / 3.0;
        // cap normals point away from the cap-sphere center, i.e. downward;
        // the region on the normal side is the complement of the lens
        let v = enclosed_volume(
            &mesh,
            mesh.vertices(),
            &Vector3::zeros(),
            1.0,
            &(-Vector3::z()),
        );
        let expect = 4.0 * PI / 3.0 - lens;
        assert!(
            (v - expect).abs() < 0.005 * expect,
            "volume {v} vs {expect}"
        );
    }

    #[test]
    fn volume_gradient_matches_finite_differences() {
        let mesh = shapes::spherical_cap_mesh(1.3, 6);
        let center = Vector3::zeros();
        let apex = -Vector3::z();
        let mut grad = vec![Vector3::zeros(); mesh.vertex_count()];
        volume_gradient_into(&mesh, mesh.vertices(), &center, 1.0, &apex, &mut grad);
        let mut rng = StdRng::seed_from_u64(4);
        let field: Vec<Vector3<f64>> = (0..mesh.vertex_count())
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let directional: f64 = grad.iter().zip(&field).map(|(g, f)| g.dot(f)).sum();
        let eps = 1e-6;
        let plus: Vec<Vector3<f64>> = mesh
            .vertices()
            .iter()
            .zip(&field)
            .map(|(p, f)| p + eps * f)
            .collect();
        let minus: Vec<Vector3<f64>> = mesh
            .vertices()
            .iter()
            .zip(&field)
            .map(|(p, f)| p - eps * f)
            .collect();
        let fd = (enclosed_volume(&mesh, &plus, &center, 1.0, &apex)
            - enclosed_volume(&mesh, &minus, &center, 1.0, &apex))
            / (2.0 * eps);
        assert!(
            (directional - fd).abs() <= 1e-6 * fd.abs().max(1.0),
            "exact {directional} vs fd {fd}"
        );
    }

    #[test]
    fn cap_relaxes_as_cmc() {
        let d = 1.25f64;
        let rho = (d * d - 1.0).sqrt();
        let mesh = shapes::spherical_cap_mesh(d, 14);
        let body = ConvexBody::ball(1.0);
        let config = SolverConfig {
            grad_tol: 5e-7,
            ..SolverConfig::default()
        };
        let out = relax_cmc(&mesh, &body, &config).unwrap();
        assert!(out.converged);
        let h_bar = out.mean_curvature_average.unwrap();
        assert!(
            (h_bar - 2.0 / rho).abs() < 0.02 * (2.0 / rho),
            "H mean {h_bar} vs {}",
            2.0 / rho
        );
        let dev = out.residuals.constant_mean_curvature.unwrap();
        assert!(dev < 1e-3, "deviation {dev}");
        // boundary circle radius oracle
        let expect_l = 2.0 * PI * rho / d;
        let l = out.mesh.boundary_length();
        assert!((l - expect_l).abs() < 0.01 * expect_l, "L = {l} vs {expect_l}");
    }

    #[test]
    fn cmc_with_disk_volume_is_minimal() {
        // target volume of the flat equatorial configuration: the solver
        // reproduces the minimal disk and the multiplier vanishes
        let disk = shapes::disk(10, 1.0);
        let target = enclosed_volume(
            &disk,
            disk.vertices(),
            &Vector3::zeros(),
            1.0,
            &Vector3::z(),
        );
        let start = shapes::jiggle_interior(&disk, 9, 1e-3);
        let body = ConvexBody::ball(1.0);
        let config = SolverConfig {
            volume_target: Some(target),
            ..SolverConfig::default()
        };
        let out = relax_cmc(&start, &body, &config).unwrap();
        assert!(out.converged);
        let h_bar = out.mean_curvature_average.unwrap().abs();
        assert!(h_bar < 1e-3, "H mean {h_bar}");
        assert!((out.enclosed_volume.unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn cap_mean_curvature_scales_inversely_with_ball_radius() {
        let d = 1.25f64;
        let body1 = ConvexBody::ball(1.0);
        let body2 = ConvexBody::ball(2.0);
        let cap1 = shapes::spherical_cap_mesh(d, 10);
        let cap2 = cap1.with_vertices(cap1.vertices().iter().map(|p| p * 2.0).collect());
        let cfg = SolverConfig {
            grad_tol: 5e-7,
            ..SolverConfig::default()
        };
        let out1 = relax_cmc(&cap1, &body1, &cfg).unwrap();
        let out2 = relax_cmc(&cap2, &body2, &cfg).unwrap();
        let (h1, h2) = (
            out1.mean_curvature_average.unwrap(),
            out2.mean_curvature_average.unwrap(),
        );
        assert!(
            (h1 - 2.0 * h2).abs() < 0.02 * h1.abs(),
            "H(1) = {h1}, H(2) = {h2}"
        );
    }

    #[test]
    fn cmc_requires_ball_body() {
        let mesh = shapes::disk(6, 0.9);
        let body = ConvexBody::ellipsoid(2.0, 1.5, 1.5);
        assert!(matches!(
            relax_cmc(&mesh, &body, &SolverConfig::default()),
            Err(SolveError::UnsupportedBody)
        ));
    }
}
