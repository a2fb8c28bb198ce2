//! Proper maps from disk-type surfaces to the closed unit disk: the discrete
//! harmonic map with circle boundary, boundary winding degree, conformal
//! energy accounting, and the Möbius balancing of a weighted barycenter.

use crate::linalg::{Csr, LinalgError, ShiftedSolver};
use crate::mesh::{cotan_stiffness, lumped_mass, MeshError, SurfaceMesh};
use nalgebra::{Matrix2, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("disk maps need genus 0 and one boundary loop, got g = {genus}, r = {loops}")]
    WrongTopology { genus: usize, loops: usize },
    #[error("map is not proper: interior vertex {vertex} has modulus {modulus}")]
    NonProper { vertex: usize, modulus: f64 },
    #[error("boundary image passes within 1e-9 of the origin")]
    ZeroOnBoundary,
    #[error("balancing did not converge; best |f(a)| = {best:.3e}")]
    NoConvergence { best: f64 },
    #[error("weights concentrate on a single boundary point; no balancing point exists")]
    MassConcentrated,
    #[error("mesh error: {0}")]
    Mesh(#[from] MeshError),
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// Per-vertex unit-disk coordinates of a proper map, with its boundary
/// winding degree and conformal energy.
#[derive(Debug, Clone)]
pub struct DiskMap {
    /// (f1, f2) per vertex.
    pub values: Vec<Vector2<f64>>,
    /// Boundary winding number about the origin.
    pub degree: i64,
    /// Conformal energy: half the summed Dirichlet energies.
    pub energy: f64,
    /// Max over interior vertices of (|F| - 1)+.
    pub interior_excess: f64,
    /// Min over boundary vertices of |F|.
    pub min_boundary_modulus: f64,
}

impl DiskMap {
    pub fn complex(&self, v: usize) -> (f64, f64) {
        (self.values[v].x, self.values[v].y)
    }

    pub fn coordinate_field(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|z| z[i]).collect()
    }
}

fn finish_map(mesh: &SurfaceMesh, values: Vec<Vector2<f64>>) -> Result<DiskMap, MapError> {
    let stiffness = cotan_stiffness(mesh);
    Ok(DiskMap {
        degree: winding_degree(mesh, &values)?,
        energy: conformal_energy(&stiffness, &values),
        interior_excess: interior_excess(mesh, &values),
        min_boundary_modulus: mesh
            .boundary_vertices()
            .iter()
            .map(|&v| values[v].norm())
            .fold(f64::INFINITY, f64::min),
        values,
    })
}

fn conformal_energy(stiffness: &Csr, values: &[Vector2<f64>]) -> f64 {
    let f1: Vec<f64> = values.iter().map(|z| z.x).collect();
    let f2: Vec<f64> = values.iter().map(|z| z.y).collect();
    0.5 * (stiffness.quad_form(&f1, &f1) + stiffness.quad_form(&f2, &f2))
}

fn interior_excess(mesh: &SurfaceMesh, values: &[Vector2<f64>]) -> f64 {
    (0..mesh.vertex_count())
        .filter(|&v| !mesh.is_boundary_vertex(v))
        .map(|v| (values[v].norm() - 1.0).max(0.0))
        .fold(0.0, f64::max)
}

/// Discrete harmonic map of a disk-type mesh onto the unit disk: the
/// boundary loop goes to the circle by normalized arclength, the interior
/// is the harmonic extension.
pub fn harmonic_disk_map(mesh: &SurfaceMesh) -> Result<DiskMap, MapError> {
    if mesh.genus() != 0 || mesh.boundary_component_count() != 1 {
        return Err(MapError::WrongTopology {
            genus: mesh.genus(),
            loops: mesh.boundary_component_count(),
        });
    }
    let n = mesh.vertex_count();
    let cycle = &mesh.boundary_loops()[0];
    let m = cycle.len();
    let mut lengths = Vec::with_capacity(m);
    for k in 0..m {
        lengths.push((mesh.position(cycle[(k + 1) % m]) - mesh.position(cycle[k])).norm());
    }
    let total: f64 = lengths.iter().sum();
    let mut values = vec![Vector2::zeros(); n];
    let mut s = 0.0;
    for k in 0..m {
        let theta = 2.0 * std::f64::consts::PI * s / total;
        values[cycle[k]] = Vector2::new(theta.cos(), theta.sin());
        s += lengths[k];
    }

    let stiffness = cotan_stiffness(mesh);
    let mut interior: Vec<usize> = (0..n).filter(|&v| !mesh.is_boundary_vertex(v)).collect();
    interior.sort_unstable();
    let ni = interior.len();
    if ni > 0 {
        let mut int_index = vec![usize::MAX; n];
        for (k, &v) in interior.iter().enumerate() {
            int_index[v] = k;
        }
        let mut tri = Vec::new();
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
        for coord in 0..2 {
            let mut rhs = vec![0.0; ni];
            for (k, &v) in interior.iter().enumerate() {
                let (cols, vals) = stiffness.row(v);
                let mut acc = 0.0;
                for (c, w) in cols.iter().zip(vals) {
                    if int_index[*c] == usize::MAX {
                        acc -= w * values[*c][coord];
                    }
                }
                rhs[k] = acc;
            }
            let mut sol = vec![0.0; ni];
            solver.solve(&rhs, &mut sol);
            for (k, &v) in interior.iter().enumerate() {
                values[v][coord] = sol[k];
            }
        }
    }

    let map = finish_map(mesh, values)?;
    if map.interior_excess > 1e-12 {
        let worst = (0..n)
            .filter(|&v| !mesh.is_boundary_vertex(v))
            .max_by(|&a, &b| {
                map.values[a]
                    .norm()
                    .partial_cmp(&map.values[b].norm())
                    .unwrap()
            })
            .unwrap();
        return Err(MapError::NonProper {
            vertex: worst,
            modulus: map.values[worst].norm(),
        });
    }
    Ok(map)
}

/// Total winding number of the boundary image about the origin.
pub fn winding_degree(mesh: &SurfaceMesh, values: &[Vector2<f64>]) -> Result<i64, MapError> {
    let mut total = 0.0;
    for cycle in mesh.boundary_loops() {
        let m = cycle.len();
        for k in 0..m {
            let a = values[cycle[k]];
            let b = values[cycle[(k + 1) % m]];
            if a.norm() < 1e-9 || b.norm() < 1e-9 {
                return Err(MapError::ZeroOnBoundary);
            }
            let cross = a.x * b.y - a.y * b.x;
            let dot = a.dot(&b);
            total += cross.atan2(dot);
        }
    }
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

/// Degree of a disk map (winding of its boundary image).
pub fn degree(mesh: &SurfaceMesh, map: &DiskMap) -> Result<i64, MapError> {
    winding_degree(mesh, &map.values)
}

/// Energy vs the topological lower bound `pi * degree`.
#[derive(Debug, Clone, Copy)]
pub struct ConformalEnergyReport {
    pub energy: f64,
    pub degree: i64,
    pub two_pi_degree: f64,
    /// `E - pi * degree`; zero exactly for conformal maps, positive
    /// otherwise. Enters certificates as the measured conformality defect.
    pub defect: f64,
}

pub fn conformal_energy_bound(map: &DiskMap) -> ConformalEnergyReport {
    let d = map.degree as f64;
    ConformalEnergyReport {
        energy: map.energy,
        degree: map.degree,
        two_pi_degree: 2.0 * std::f64::consts::PI * d,
        defect: map.energy - std::f64::consts::PI * d,
    }
}

/// Disk automorphism `m_a(z) = (z - a) / (1 - conj(a) z)`.
pub fn mobius_point(a: Vector2<f64>, z: Vector2<f64>) -> Vector2<f64> {
    // complex arithmetic on (re, im) pairs
    let num = z - a;
    let conj_az = Vector2::new(a.x * z.x + a.y * z.y, a.x * z.y - a.y * z.x);
    let den = Vector2::new(1.0 - conj_az.x, -conj_az.y);
    let d2 = den.norm_squared();
    Vector2::new(
        (num.x * den.x + num.y * den.y) / d2,
        (num.y * den.x - num.x * den.y) / d2,
    )
}

/// Post-compose a disk map with the automorphism `m_a`.
pub fn mobius_apply(mesh: &SurfaceMesh, map: &DiskMap, a: Vector2<f64>) -> Result<DiskMap, MapError> {
    assert!(a.norm() < 1.0, "Mobius point must lie inside the disk");
    let values: Vec<Vector2<f64>> = map.values.iter().map(|&z| mobius_point(a, z)).collect();
    finish_map(mesh, values)
}

/// Result of the barycenter balancing.
#[derive(Debug, Clone)]
pub struct BalanceOutcome {
    /// The balancing point `a0` in the open disk.
    pub a0: Vector2<f64>,
    /// The post-composed, balanced map.
    pub map: DiskMap,
    /// `|f(a0)|` actually achieved.
    pub residual: f64,
    /// All distinct zeros found from the seed grid (the balancing point is
    /// not claimed unique).
    pub zeros: Vec<Vector2<f64>>,
}

/// Weighted barycenter of the transformed map:
/// `f(a) = sum_v m_a(F(v)) w(v)` with `sum w = 1`.
fn barycenter(a: Vector2<f64>, values: &[Vector2<f64>], weights: &[f64]) -> Vector2<f64> {
    let mut out = Vector2::zeros();
    for (z, w) in values.iter().zip(weights) {
        if *w != 0.0 {
            out += mobius_point(a, *z) * *w;
        }
    }
    out
}

/// Find `a0` with `f(a0) = 0` by damped Newton from a deterministic seed
/// grid. `weights` are per-vertex masses, `phi(v) * mass(v)`, normalized to
/// unit total here.
pub fn balance(
    mesh: &SurfaceMesh,
    map: &DiskMap,
    raw_weights: &[f64],
) -> Result<BalanceOutcome, MapError> {
    let total: f64 = raw_weights.iter().sum();
    assert!(total > 0.0, "balancing needs positive total mass");
    let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();

    // all mass at a single boundary point: |f| = 1 everywhere, no zero
    let mean: Vector2<f64> = map
        .values
        .iter()
        .zip(&weights)
        .map(|(z, w)| z * *w)
        .sum();
    let spread: f64 = map
        .values
        .iter()
        .zip(&weights)
        .map(|(z, w)| (z - mean).norm() * w)
        .sum();
    if spread < 1e-9 && (mean.norm() - 1.0).abs() < 1e-9 {
        return Err(MapError::MassConcentrated);
    }

    let f = |a: Vector2<f64>| barycenter(a, &map.values, &weights);

    let mut zeros: Vec<Vector2<f64>> = Vec::new();
    let mut best = f64::INFINITY;
    let mut seeds = vec![Vector2::zeros()];
    for &r in &[0.3, 0.6, 0.8, 0.93] {
        for k in 0..6 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 6.0;
            seeds.push(Vector2::new(r * t.cos(), r * t.sin()));
        }
    }
    for seed in seeds {
        if let Some(zero) = newton_from(seed, &f, &mut best) {
            if !zeros.iter().any(|z| (z - zero).norm() < 1e-6) {
                zeros.push(zero);
            }
        }
    }
    if zeros.is_empty() {
        return Err(MapError::NoConvergence { best });
    }
    // deterministic pick: best residual, then smallest modulus
    zeros.sort_by(|p, q| {
        let (fp, fq) = (f(*p).norm(), f(*q).norm());
        fp.partial_cmp(&fq)
            .unwrap()
            .then(p.norm().partial_cmp(&q.norm()).unwrap())
    });
    let a0 = zeros[0];
    let residual = f(a0).norm();
    let balanced = mobius_apply(mesh, map, a0)?;
    Ok(BalanceOutcome {
        a0,
        map: balanced,
        residual,
        zeros,
    })
}

fn newton_from(
    start: Vector2<f64>,
    f: &dyn Fn(Vector2<f64>) -> Vector2<f64>,
    best: &mut f64,
) -> Option<Vector2<f64>> {
    let clamp = |a: Vector2<f64>| {
        let n = a.norm();
        if n >= 1.0 - 1e-9 {
            a * ((1.0 - 1e-9) / n)
        } else {
            a
        }
    };
    let mut a = clamp(start);
    let mut fa = f(a);
    for _ in 0..120 {
        let r = fa.norm();
        *best = best.min(r);
        if r <= 1e-12 {
            return Some(a);
        }
        // finite-difference Jacobian
        let h = 1e-7;
        let fx = (f(clamp(a + Vector2::new(h, 0.0))) - f(clamp(a - Vector2::new(h, 0.0)))) / (2.0 * h);
        let fy = (f(clamp(a + Vector2::new(0.0, h))) - f(clamp(a - Vector2::new(0.0, h)))) / (2.0 * h);
        let jac = Matrix2::new(fx.x, fy.x, fx.y, fy.y);
        let step = match jac.lu().solve(&(-fa)) {
            Some(s) => s,
            None => return None,
        };
        let mut t = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let trial = clamp(a + step * t);
            let ft = f(trial);
            if ft.norm() < r * (1.0 - 1e-4 * t) {
                a = trial;
                fa = ft;
                advanced = true;
                break;
            }
            t *= 0.5;
        }
        if !advanced {
            return if fa.norm() <= 1e-10 { Some(a) } else { None };
        }
    }
    if fa.norm() <= 1e-10 {
        Some(a)
    } else {
        None
    }
}

/// Balanced test functions for the proof-chain audits.
#[derive(Debug, Clone)]
pub struct BalancedTestFunctions {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    /// The balanced map the coordinates come from.
    pub map: DiskMap,
    pub a0: Vector2<f64>,
    /// `integral of f_i phi dA` after balancing, per coordinate.
    pub orthogonality: [f64; 2],
    /// Largest negative undershoot clamped from the weight function.
    pub clamp_magnitude: f64,
    pub balance_residual: f64,
}

/// Build the harmonic disk map, balance it against the weight function
/// (sign-flipped and clamped to be nonnegative), and return its coordinates.
pub fn balanced_test_functions(
    mesh: &SurfaceMesh,
    phi: &[f64],
) -> Result<BalancedTestFunctions, MapError> {
    let map = harmonic_disk_map(mesh)?;
    balance_test_functions_with(mesh, &map, phi)
}

/// Same, reusing an existing proper map.
pub fn balance_test_functions_with(
    mesh: &SurfaceMesh,
    map: &DiskMap,
    phi: &[f64],
) -> Result<BalancedTestFunctions, MapError> {
    let mass = lumped_mass(mesh);
    let integral: f64 = phi.iter().zip(&mass).map(|(p, m)| p * m).sum();
    let sign = if integral < 0.0 { -1.0 } else { 1.0 };
    let mut clamp_magnitude = 0.0f64;
    let weights: Vec<f64> = phi
        .iter()
        .zip(&mass)
        .map(|(p, m)| {
            let v = sign * p;
            if v < 0.0 {
                clamp_magnitude = clamp_magnitude.max(-v);
                0.0
            } else {
                v * m
            }
        })
        .collect();
    let outcome = balance(mesh, map, &weights)?;
    let total: f64 = weights.iter().sum();
    let f1 = outcome.map.coordinate_field(0);
    let f2 = outcome.map.coordinate_field(1);
    let ortho = |f: &[f64]| -> f64 {
        f.iter()
            .zip(&weights)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            / total
    };
    Ok(BalancedTestFunctions {
        orthogonality: [ortho(&f1), ortho(&f2)],
        f1,
        f2,
        a0: outcome.a0,
        balance_residual: outcome.residual,
        map: outcome.map,
        clamp_magnitude,
    })
}

/// Per-triangle energy-area audit. Returns the minimum pointwise gap
/// between the energy density and the absolute Jacobian (nonnegative for
/// every map) and the signed image area, which tends to `pi * degree`.
pub fn energy_area_check(mesh: &SurfaceMesh, map: &DiskMap) -> (f64, f64) {
    let mut image_area = 0.0;
    let mut min_gap = f64::INFINITY;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        let n = mesh.triangle_normal(t);
        let p0 = mesh.position(tri[0]);
        let p1 = mesh.position(tri[1]);
        let p2 = mesh.position(tri[2]);
        let grads = [
            n.cross(&(p2 - p1)) / (2.0 * area),
            n.cross(&(p0 - p2)) / (2.0 * area),
            n.cross(&(p1 - p0)) / (2.0 * area),
        ];
        let mut g1 = Vector3::zeros();
        let mut g2 = Vector3::zeros();
        for k in 0..3 {
            g1 += grads[k] * map.values[tri[k]].x;
            g2 += grads[k] * map.values[tri[k]].y;
        }
        let density = 0.5 * (g1.norm_squared() + g2.norm_squared());
        let jac = g1.cross(&g2).dot(&n);
        min_gap = min_gap.min(density - jac.abs());
        image_area += jac * area;
    }
    (min_gap, image_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn harmonic_map_of_flat_disk() {
        let mesh = shapes::disk(24, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        assert_eq!(map.degree, 1);
        assert!((map.energy - PI).abs() < 0.01 * PI, "E = {}", map.energy);
        assert_eq!(map.interior_excess, 0.0);
        assert!((map.min_boundary_modulus - 1.0).abs() < 1e-12);
        let rep = conformal_energy_bound(&map);
        assert!(rep.defect.abs() < 0.01 * PI);
        // exact discrete energy-area inequality: E dominates the signed
        // image area, which approaches pi * degree from below
        let (min_gap, image_area) = energy_area_check(&mesh, &map);
        assert!(min_gap >= -1e-12);
        assert!(map.energy >= image_area.abs() - 1e-12);
        assert!(map.energy >= PI * map.degree as f64 - 0.01);
    }

    #[test]
    fn one_ring_disk_maps_inside() {
        let mesh = shapes::ngon_fan(6, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        assert!(map.values[0].norm() < 1.0);
        for &v in &mesh.boundary_vertices() {
            assert!((map.values[v].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_topology_rejected() {
        let annulus = shapes::square_annulus();
        assert!(matches!(
            harmonic_disk_map(&annulus),
            Err(MapError::WrongTopology { .. })
        ));
    }

    #[test]
    fn degree_of_squared_and_reversed_boundary() {
        let mesh = shapes::disk(10, 1.0);
        // z^2 on the positions: boundary winds twice
        let values: Vec<Vector2<f64>> = mesh
            .vertices()
            .iter()
            .map(|p| Vector2::new(p.x * p.x - p.y * p.y, 2.0 * p.x * p.y))
            .collect();
        assert_eq!(winding_degree(&mesh, &values).unwrap(), 2);
        // conjugation reverses orientation
        let conj: Vec<Vector2<f64>> = mesh
            .vertices()
            .iter()
            .map(|p| Vector2::new(p.x, -p.y))
            .collect();
        assert_eq!(winding_degree(&mesh, &conj).unwrap(), -1);
    }

    #[test]
    fn mobius_group_laws() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..200 {
            let a = Vector2::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7));
            let z = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if z.norm() > 1.0 {
                continue;
            }
            // identity at a = 0
            assert!((mobius_point(Vector2::zeros(), z) - z).norm() < 1e-15);
            // m_a(a) = 0
            assert!(mobius_point(a, a).norm() < 1e-15);
            // |m_a(z)| = 1 iff |z| = 1
            let zb = z / z.norm().max(1e-9);
            assert!((mobius_point(a, zb).norm() - 1.0).abs() < 1e-12);
            if z.norm() < 0.99 {
                assert!(mobius_point(a, z).norm() < 1.0);
            }
        }
    }

    #[test]
    fn degree_invariant_under_mobius() {
        let mesh = shapes::disk(12, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let moved = mobius_apply(&mesh, &map, Vector2::new(0.4, -0.2)).unwrap();
        assert_eq!(moved.degree, map.degree);
    }

    #[test]
    fn balance_single_mass() {
        let mesh = shapes::disk(12, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        // all mass at the vertex mapping closest to 0.5 + 0i
        let target = Vector2::new(0.5, 0.0);
        let v_star = (0..mesh.vertex_count())
            .filter(|&v| !mesh.is_boundary_vertex(v))
            .min_by(|&a, &b| {
                (map.values[a] - target)
                    .norm()
                    .partial_cmp(&(map.values[b] - target).norm())
                    .unwrap()
            })
            .unwrap();
        let mut weights = vec![0.0; mesh.vertex_count()];
        weights[v_star] = 1.0;
        let out = balance(&mesh, &map, &weights).unwrap();
        assert!((out.a0 - map.values[v_star]).norm() < 1e-8);
        assert!(out.residual < 1e-10);
    }

    #[test]
    fn balance_symmetric_masses() {
        let mesh = shapes::disk(12, 1.0);
        // exact mirror pair under the identity-like map of positions
        let values: Vec<Vector2<f64>> = mesh.vertices().iter().map(|p| Vector2::new(p.x, p.y)).collect();
        let map = finish_map(&mesh, values).unwrap();
        let mut weights = vec![0.0; mesh.vertex_count()];
        let a = (0..mesh.vertex_count())
            .find(|&v| (map.values[v] - Vector2::new(0.3, 0.0)).norm() < 0.05)
            .expect("vertex near +0.3");
        let b = (0..mesh.vertex_count())
            .find(|&v| (map.values[v] + map.values[a]).norm() < 1e-12)
            .expect("exact mirror vertex");
        weights[a] = 0.5;
        weights[b] = 0.5;
        let out = balance(&mesh, &map, &weights).unwrap();
        assert!(out.a0.norm() < 1e-10, "a0 = {:?}", out.a0);
    }

    #[test]
    fn balance_uniform_weights_on_disk() {
        let mesh = shapes::disk(16, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let mass = crate::mesh::lumped_mass(&mesh);
        let out = balance(&mesh, &map, &mass).unwrap();
        assert!(out.a0.norm() < 1e-8, "a0 = {:?}", out.a0);
        assert!(out.residual <= 1e-10);
    }

    #[test]
    fn balance_random_weights() {
        for seed in 0..12u64 {
            let mesh = shapes::disk(8 + (seed % 3) as usize, 1.0);
            let map = harmonic_disk_map(&mesh).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let weights: Vec<f64> = (0..mesh.vertex_count())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            let out = balance(&mesh, &map, &weights).unwrap();
            assert!(out.residual <= 1e-10, "seed {seed}: {}", out.residual);
            assert!(out.a0.norm() < 1.0);
        }
    }

    #[test]
    fn mass_concentrated_on_boundary_fails() {
        let mesh = shapes::disk(8, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let b = mesh.boundary_vertices()[0];
        let mut weights = vec![0.0; mesh.vertex_count()];
        weights[b] = 1.0;
        assert!(matches!(
            balance(&mesh, &map, &weights),
            Err(MapError::MassConcentrated)
        ));
    }

    #[test]
    fn boundary_limit_of_the_extension() {
        // f(a) -> -a as |a| -> 1
        let mesh = shapes::disk(14, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let mass = crate::mesh::lumped_mass(&mesh);
        let total: f64 = mass.iter().sum();
        let weights: Vec<f64> = mass.iter().map(|m| m / total).collect();
        let r = 1.0 - 1e-4;
        for k in 0..16 {
            let t = 2.0 * PI * k as f64 / 16.0;
            let a = Vector2::new(r * t.cos(), r * t.sin());
            let fa = barycenter(a, &map.values, &weights);
            assert!((fa + a).norm() <= 1e-2, "direction {k}: |f(a)+a| = {}", (fa + a).norm());
        }
    }

    #[test]
    fn balance_equivariant_under_rotation() {
        let mesh = shapes::disk(10, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let weights: Vec<f64> = (0..mesh.vertex_count())
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let out = balance(&mesh, &map, &weights).unwrap();
        let theta = 0.77f64;
        let rot = |z: Vector2<f64>| {
            Vector2::new(
                theta.cos() * z.x - theta.sin() * z.y,
                theta.sin() * z.x + theta.cos() * z.y,
            )
        };
        let rotated_values: Vec<Vector2<f64>> = map.values.iter().map(|&z| rot(z)).collect();
        let rotated = finish_map(&mesh, rotated_values).unwrap();
        let out_rot = balance(&mesh, &rotated, &weights).unwrap();
        assert!((out_rot.a0 - rot(out.a0)).norm() < 1e-8);
    }

    #[test]
    fn energy_area_inequality_per_triangle() {
        let mesh = shapes::disk(12, 1.0);
        let map = harmonic_disk_map(&mesh).unwrap();
        let (min_gap, image_area) = energy_area_check(&mesh, &map);
        assert!(min_gap >= -1e-12, "gap {min_gap}");
        assert!((image_area - PI * map.degree as f64).abs() < 0.02 * PI);
        // long ellipse-like disk: harmonic is not conformal, defect positive
        let stretched = mesh.with_vertices(
            mesh.vertices()
                .iter()
                .map(|p| Vector3::new(3.0 * p.x, p.y, p.z))
                .collect(),
        );
        let map2 = harmonic_disk_map(&stretched).unwrap();
        let rep = conformal_energy_bound(&map2);
        assert!(rep.defect > 0.01, "defect {}", rep.defect);
        let (gap2, image2) = energy_area_check(&stretched, &map2);
        assert!(gap2 >= -1e-12);
        assert!(map2.energy >= image2.abs() - 1e-12);
    }

    #[test]
    fn balanced_test_functions_are_orthogonal() {
        let mesh = shapes::disk(12, 1.0);
        let mut rng = StdRng::seed_from_u64(8);
        let phi: Vec<f64> = (0..mesh.vertex_count())
            .map(|_| -rng.gen_range(0.0..1.0)) // negative: exercises the sign flip
            .collect();
        let out = balanced_test_functions(&mesh, &phi).unwrap();
        assert!(out.orthogonality[0].abs() < 1e-9);
        assert!(out.orthogonality[1].abs() < 1e-9);
        assert_eq!(out.clamp_magnitude, 0.0);
        for &v in &mesh.boundary_vertices() {
            let z = Vector2::new(out.f1[v], out.f2[v]);
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        for v in 0..mesh.vertex_count() {
            assert!(out.f1[v].abs() <= 1.0 + 1e-12);
            assert!(out.f2[v].abs() <= 1.0 + 1e-12);
        }
    }
}
