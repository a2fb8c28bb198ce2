//! Pipeline driver: instance generation, relax -> curvatures -> spectra ->
//! disk map -> certificates, artifact emission, and the refinement study.

use crate::body::{BodyError, ConvexBody};
use crate::config::{BodySpec, CheckKind, ConfigError, RunConfig, SurfaceSpec};
use crate::diskmap::{balance, harmonic_disk_map, MapError};
use crate::fbms::{relax_cmc, relax_minimal, SolveError, SolveResult};
use crate::mesh::{read_off, write_off, MeshError, SurfaceMesh};
use crate::shapes;
use crate::spectral::{discrete_spectrum_export, steklov_export, SpectralError};
use crate::verify::{
    check_corollary1_hypotheses, check_corollary2, check_corollary3, check_theorem1,
    check_theorem2, Certificate, CheckOptions, VerifyError,
};
use nalgebra::Vector3;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(
        "body fails the convexity hypothesis: certified min principal curvature {0:.6} < 1; \
         the sharp bounds assume II >= 1"
    )]
    HypothesisFails(f64),
    #[error("spherical caps need a ball body")]
    CapNeedsBall,
    #[error("body: {0}")]
    Body(#[from] BodyError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("solver: {0}")]
    Solve(#[from] SolveError),
    #[error("spectral: {0}")]
    Spectral(#[from] SpectralError),
    #[error("disk map: {0}")]
    Map(#[from] MapError),
    #[error("verify: {0}")]
    Verify(#[from] VerifyError),
    #[error("i/o at {0}: {1}")]
    Io(PathBuf, String),
    #[error("no certificates found in {0}")]
    MissingArtifacts(PathBuf),
}

fn write_text(path: &Path, text: &str) -> Result<(), DriverError> {
    std::fs::write(path, text).map_err(|e| DriverError::Io(path.to_path_buf(), e.to_string()))
}

/// Build the body; perturbed balls are rescaled until certified.
pub fn build_body(spec: &BodySpec) -> Result<ConvexBody, DriverError> {
    Ok(match spec {
        BodySpec::Ball { radius } => ConvexBody::ball(*radius),
        BodySpec::Ellipsoid { a, b, c } => ConvexBody::ellipsoid(*a, *b, *c),
        BodySpec::PerturbedBall { epsilon } => {
            ConvexBody::perturbed_ball_certified(*epsilon, 2000)?.0
        }
    })
}

/// Structured initial mesh with boundary vertices on the body boundary.
pub fn generate(config: &RunConfig) -> Result<(SurfaceMesh, ConvexBody), DriverError> {
    config.validate()?;
    let body = build_body(&config.body)?;
    let rings = shapes::disk_rings_for_budget(config.resolution);
    let mesh = match &config.surface {
        SurfaceSpec::EquatorialDisk => equatorial_disk(&body, rings)?,
        SurfaceSpec::TiltedDisk { angle_deg } => {
            let flat = equatorial_disk(&body, rings)?;
            let rotated = shapes::rotate_mesh(&flat, Vector3::x(), angle_deg.to_radians());
            project_boundary(&body, rotated)?
        }
        SurfaceSpec::SphericalCap { height } => {
            let BodySpec::Ball { radius } = config.body else {
                return Err(DriverError::CapNeedsBall);
            };
            let unit = shapes::spherical_cap_mesh(1.0 / height, rings);
            unit.with_vertices(unit.vertices().iter().map(|p| p * radius).collect())
        }
        SurfaceSpec::MeshFile { path } => read_off(path)?,
    };
    let mesh = if config.perturbation > 0.0 {
        shapes::jiggle_interior(&mesh, config.seed, config.perturbation)
    } else {
        mesh
    };
    Ok((mesh, body))
}

/// Planar through-center disk with its boundary exactly on the body's
/// equator; an affine stretch of the unit polar disk covers the
/// ellipsoidal case.
fn equatorial_disk(body: &ConvexBody, rings: usize) -> Result<SurfaceMesh, DriverError> {
    let px = body.project_to_boundary(&(Vector3::x() * body.outer_radius() * 2.0))?;
    let py = body.project_to_boundary(&(Vector3::y() * body.outer_radius() * 2.0))?;
    let (rx, ry) = (px.norm(), py.norm());
    let unit = shapes::disk(rings, 1.0);
    Ok(unit.with_vertices(
        unit.vertices()
            .iter()
            .map(|p| Vector3::new(rx * p.x, ry * p.y, 0.0))
            .collect(),
    ))
}

fn project_boundary(body: &ConvexBody, mesh: SurfaceMesh) -> Result<SurfaceMesh, DriverError> {
    let mut vertices = mesh.vertices().to_vec();
    for &v in &mesh.boundary_vertices() {
        vertices[v] = body.project_to_boundary(&vertices[v])?;
    }
    Ok(mesh.with_vertices(vertices))
}

/// JSON-facing disk map record.
#[derive(Debug, serde::Serialize)]
struct DiskMapExport {
    degree: i64,
    energy: f64,
    a0: [f64; 2],
    balance_residual: f64,
    values: Vec<[f64; 2]>,
}

/// Everything a run leaves behind.
#[derive(Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub certificates: Vec<(CheckKind, Certificate)>,
    pub solve: SolveResult,
    pub all_passed: bool,
    pub report: String,
}

/// Execute the full pipeline for one instance.
pub fn run(config: &RunConfig) -> Result<Artifacts, DriverError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let body = build_body(&config.body)?;

    // hypothesis gate: every certificate assumes II >= 1, so a body that
    // cannot certify aborts before any solving happens
    let mut convexity = f64::NAN;
    if !config.checks.is_empty() {
        convexity = body.check_convexity(2000)?;
        if convexity < 1.0 - 1e-6 {
            return Err(DriverError::HypothesisFails(convexity));
        }
    }

    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| DriverError::Io(config.out_dir.clone(), e.to_string()))?;
    let (initial, _) = generate(config)?;
    write_off(&initial, &config.out_dir.join("initial.off"))?;

    let mut solver = config.solver;
    solver.seed = config.seed;
    let is_cap = matches!(config.surface, SurfaceSpec::SphericalCap { .. });
    let solve = if is_cap {
        solver.grad_tol = solver.grad_tol.max(5e-7);
        relax_cmc(&initial, &body, &solver)?
    } else {
        solver.antipodal_symmetry = !matches!(config.surface, SurfaceSpec::MeshFile { .. });
        relax_minimal(&initial, &body, &solver)?
    };
    write_off(&solve.mesh, &config.out_dir.join("final.off"))?;

    let mut log_lines = String::new();
    for rec in &solve.log {
        log_lines.push_str(&serde_json::to_string(rec).expect("log record"));
        log_lines.push('\n');
    }
    write_text(&config.out_dir.join("iterations.jsonl"), &log_lines)?;

    // spectra exports and plot data
    let spectrum = discrete_spectrum_export(&solve.mesh, &body, 8)?;
    write_text(
        &config.out_dir.join("spectrum.json"),
        &serde_json::to_string_pretty(&spectrum).expect("spectrum json"),
    )?;
    let steklov = steklov_export(&solve.mesh, 8)?;
    write_text(
        &config.out_dir.join("steklov.json"),
        &serde_json::to_string_pretty(&steklov).expect("steklov json"),
    )?;
    // disk map export: per-vertex coordinates, degree, energy, balancing point
    if solve.mesh.genus() == 0 && solve.mesh.boundary_component_count() == 1 {
        let map = harmonic_disk_map(&solve.mesh)?;
        let mass = crate::mesh::lumped_mass(&solve.mesh);
        let balanced = balance(&solve.mesh, &map, &mass)?;
        let export = DiskMapExport {
            degree: balanced.map.degree,
            energy: balanced.map.energy,
            a0: [balanced.a0.x, balanced.a0.y],
            balance_residual: balanced.residual,
            values: balanced.map.values.iter().map(|z| [z.x, z.y]).collect(),
        };
        write_text(
            &config.out_dir.join("diskmap.json"),
            &serde_json::to_string_pretty(&export).expect("diskmap json"),
        )?;
    }

    let mut plot = String::from("series,index,value\n");
    for (k, v) in spectrum.eigenvalues.iter().enumerate() {
        plot.push_str(&format!("robin,{k},{v:.17e}\n"));
    }
    for (k, v) in steklov.eigenvalues.iter().enumerate() {
        plot.push_str(&format!("steklov,{k},{v:.17e}\n"));
    }
    write_text(&config.out_dir.join("plot.csv"), &plot)?;

    // certificates
    let instance = config.instance_name();
    let opts = CheckOptions {
        seed: config.seed,
        ..CheckOptions::default()
    };
    let mut certificates = Vec::new();
    let mut all_passed = true;
    for check in &config.checks {
        match check {
            CheckKind::Theorem1 => {
                let cert = check_theorem1(&instance, &solve, &body, &opts)?;
                all_passed &= cert.passed();
                write_text(&config.out_dir.join("theorem1.cert.json"), &cert.to_json())?;
                certificates.push((*check, cert));
            }
            CheckKind::Theorem2 => {
                let cert = check_theorem2(&instance, &solve, &body, &opts)?;
                all_passed &= cert.passed();
                write_text(&config.out_dir.join("theorem2.cert.json"), &cert.to_json())?;
                certificates.push((*check, cert));
            }
            CheckKind::Corollary1 => {
                let rep = check_corollary1_hypotheses(&body, opts.convexity_samples)?;
                all_passed &= rep.satisfied;
                write_text(
                    &config.out_dir.join("corollary1.report.json"),
                    &serde_json::to_string_pretty(&rep).expect("report json"),
                )?;
            }
            CheckKind::Corollary2 => {
                let cert = check_corollary2(&instance, &solve, &opts)?;
                all_passed &= cert.passed();
                write_text(&config.out_dir.join("corollary2.cert.json"), &cert.to_json())?;
                certificates.push((*check, cert));
            }
            CheckKind::Corollary3 => {
                let cert = check_corollary3(&instance, &solve, &body, &opts)?;
                all_passed &= cert.passed();
                write_text(&config.out_dir.join("corollary3.cert.json"), &cert.to_json())?;
                certificates.push((*check, cert));
            }
        }
    }

    // timestamps live apart from the deterministic artifacts
    let meta = format!(
        "{{\n  \"elapsed_seconds\": {:.3},\n  \"convexity_constant\": {convexity},\n  \"iterations\": {},\n  \"accepted_steps\": {}\n}}\n",
        started.elapsed().as_secs_f64(),
        solve.iterations,
        solve.accepted_steps,
    );
    write_text(&config.out_dir.join("metadata.json"), &meta)?;

    let report = render_table(&certificates);
    write_text(&config.out_dir.join("report.txt"), &report)?;

    Ok(Artifacts {
        dir: config.out_dir.clone(),
        certificates,
        solve,
        all_passed,
        report,
    })
}

fn render_table(certs: &[(CheckKind, Certificate)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<42} {:<11} {:>10} {:>10} {:>6} {:>8} {:>10} {:>8}\n",
        "instance", "theorem", "L", "bound", "index", "sigma1", "area", "verdict"
    ));
    for (_, c) in certs {
        let q = |k: &str| c.quantities.get(k).copied();
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.5}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<42} {:<11} {:>10} {:>10} {:>6} {:>8} {:>10} {:>8}\n",
            c.instance,
            c.theorem,
            fmt(q("boundary_length")),
            fmt(c.bounds.get("boundary_length_bound").copied()),
            match q("morse_index") {
                Some(x) => format!("{}", x as i64),
                None => "-".into(),
            },
            fmt(q("sigma1")),
            fmt(q("area")),
            c.verdict,
        ));
    }
    out
}

/// Read back certificates from a run directory and render the summary.
pub fn report(dir: &Path) -> Result<(String, bool), DriverError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| DriverError::Io(dir.to_path_buf(), e.to_string()))?;
    let mut certs: Vec<(CheckKind, Certificate)> = Vec::new();
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(".cert.json")))
        .collect();
    names.sort();
    for path in names {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| DriverError::Io(path.clone(), e.to_string()))?;
        let cert: Certificate = serde_json::from_str(&text)
            .map_err(|e| DriverError::Io(path.clone(), e.to_string()))?;
        let kind = CheckKind::parse(&cert.theorem).unwrap_or(CheckKind::Theorem1);
        certs.push((kind, cert));
    }
    if certs.is_empty() {
        return Err(DriverError::MissingArtifacts(dir.to_path_buf()));
    }
    let all = certs.iter().all(|(_, c)| c.passed());
    Ok((render_table(&certs), all))
}

/// Refinement study: run the pipeline across increasing resolutions and
/// tabulate the residuals of the sharp bounds against the mesh size.
pub fn refine_study(config: &RunConfig) -> Result<String, DriverError> {
    let levels = config.refine_levels.max(2);
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| DriverError::Io(config.out_dir.clone(), e.to_string()))?;
    let mut csv = String::from("level,vertices,h,length_error,area_error\n");
    let mut table = format!(
        "{:>5} {:>9} {:>12} {:>14} {:>14}\n",
        "level", "vertices", "h", "length_err", "area_err"
    );
    for level in 0..levels {
        let mut c = config.clone();
        c.resolution = config.resolution * (1 << (2 * level));
        c.checks = Vec::new();
        c.out_dir = config.out_dir.join(format!("level{level}"));
        let (initial, body) = generate(&c)?;
        let mut solver = c.solver;
        solver.seed = c.seed;
        solver.antipodal_symmetry = true;
        let solve = relax_minimal(&initial, &body, &solver)?;
        let mesh = &solve.mesh;
        let n = mesh.vertex_count();
        let g = mesh.genus() as f64;
        let r = mesh.boundary_component_count() as f64;
        let bound = 2.0 * std::f64::consts::PI * (g + r);
        let h = (mesh.area() / n as f64).sqrt();
        let length_err = (bound - mesh.boundary_length()).abs();
        let area_err = (mesh.area() - std::f64::consts::PI).abs();
        csv.push_str(&format!(
            "{level},{n},{h:.8e},{length_err:.8e},{area_err:.8e}\n"
        ));
        table.push_str(&format!(
            "{level:>5} {n:>9} {h:>12.4e} {length_err:>14.4e} {area_err:>14.4e}\n"
        ));
    }
    write_text(&config.out_dir.join("refine.csv"), &csv)?;
    write_text(&config.out_dir.join("refine.txt"), &table)?;
    Ok(table)
}
