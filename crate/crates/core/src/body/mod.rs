//! Strictly convex ambient bodies: implicit evaluators with analytic
//! gradient and Hessian, boundary projection, the boundary second
//! fundamental form, convexity certification, and the enclosing-ball
//! constant.

mod minball;

pub use minball::{ball_from_support, enclosing_ball, enclosing_ball_seeded, EnclosingBall};

use nalgebra::{Matrix2, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("boundary projection diverged from {0:?}")]
    ProjectionDiverged(Vector3<f64>),
    #[error("body is not strictly convex: min principal curvature {0:.6e}")]
    NotStrictlyConvex(f64),
    #[error("convexity certification needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("enclosing-ball sandwich violated: {0}")]
    BoundViolation(String),
}

/// Body families. All are star-shaped about the origin, which the boundary
/// sampler relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyKind {
    Ball { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// `psi(x) = |y|^2 - 1 - epsilon * h(y)` with `y = x / scale` and `h`
    /// the degree-4 zonal solid harmonic. Even in z, so the equatorial
    /// plane stays a symmetry plane.
    PerturbedBall { epsilon: f64, scale: f64 },
}

/// Implicit strictly convex body: `psi < 0` inside, `psi = 0` on the
/// boundary, with analytic gradient and Hessian.
#[derive(Debug, Clone, Copy)]
pub struct ConvexBody {
    pub kind: BodyKind,
}

/// Degree-4 zonal solid harmonic and derivatives: `(35 z^4 - 30 z^2 r^2 + 3 r^4) / 8`.
fn zonal4(y: &Vector3<f64>) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let r2 = y.norm_squared();
    let z = y.z;
    let h = (35.0 * z.powi(4) - 30.0 * z * z * r2 + 3.0 * r2 * r2) / 8.0;
    let g = Vector3::new(
        0.5 * (3.0 * r2 - 15.0 * z * z) * y.x,
        0.5 * (3.0 * r2 - 15.0 * z * z) * y.y,
        10.0 * z.powi(3) - 6.0 * r2 * z,
    );
    let hxx = 0.5 * (3.0 * r2 - 15.0 * z * z) + 3.0 * y.x * y.x;
    let hyy = 0.5 * (3.0 * r2 - 15.0 * z * z) + 3.0 * y.y * y.y;
    let hzz = 18.0 * z * z - 6.0 * r2;
    let hxy = 3.0 * y.x * y.y;
    let hxz = -12.0 * y.x * z;
    let hyz = -12.0 * y.y * z;
    let hess = Matrix3::new(hxx, hxy, hxz, hxy, hyy, hyz, hxz, hyz, hzz);
    (h, g, hess)
}

impl ConvexBody {
    pub fn ball(radius: f64) -> Self {
        assert!(radius > 0.0);
        ConvexBody {
            kind: BodyKind::Ball { radius },
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Self {
        assert!(a > 0.0 && b > 0.0 && c > 0.0);
        ConvexBody {
            kind: BodyKind::Ellipsoid { a, b, c },
        }
    }

    pub fn perturbed_ball(epsilon: f64) -> Self {
        ConvexBody {
            kind: BodyKind::PerturbedBall {
                epsilon,
                scale: 1.0,
            },
        }
    }

    /// Perturbed ball rescaled so the certified convexity constant exceeds
    /// one; returns the body and its constant.
    pub fn perturbed_ball_certified(epsilon: f64, samples: usize) -> Result<(Self, f64), BodyError> {
        let raw = Self::perturbed_ball(epsilon);
        let c0 = raw.check_convexity(samples)?;
        let scaled = ConvexBody {
            kind: BodyKind::PerturbedBall {
                epsilon,
                scale: c0 * (1.0 - 1e-9),
            },
        };
        let c = scaled.check_convexity(samples)?;
        Ok((scaled, c))
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            BodyKind::Ball { .. } => "ball",
            BodyKind::Ellipsoid { .. } => "ellipsoid",
            BodyKind::PerturbedBall { .. } => "perturbed-ball",
        }
    }

    pub fn psi(&self, x: &Vector3<f64>) -> f64 {
        match self.kind {
            BodyKind::Ball { radius } => x.norm_squared() - radius * radius,
            BodyKind::Ellipsoid { a, b, c } => {
                (x.x / a).powi(2) + (x.y / b).powi(2) + (x.z / c).powi(2) - 1.0
            }
            BodyKind::PerturbedBall { epsilon, scale } => {
                let y = x / scale;
                let (h, _, _) = zonal4(&y);
                y.norm_squared() - 1.0 - epsilon * h
            }
        }
    }

    pub fn grad(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self.kind {
            BodyKind::Ball { .. } => 2.0 * x,
            BodyKind::Ellipsoid { a, b, c } => Vector3::new(
                2.0 * x.x / (a * a),
                2.0 * x.y / (b * b),
                2.0 * x.z / (c * c),
            ),
            BodyKind::PerturbedBall { epsilon, scale } => {
                let y = x / scale;
                let (_, g, _) = zonal4(&y);
                (2.0 * y - epsilon * g) / scale
            }
        }
    }

    pub fn hessian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        match self.kind {
            BodyKind::Ball { .. } => Matrix3::identity() * 2.0,
            BodyKind::Ellipsoid { a, b, c } => Matrix3::from_diagonal(&Vector3::new(
                2.0 / (a * a),
                2.0 / (b * b),
                2.0 / (c * c),
            )),
            BodyKind::PerturbedBall { epsilon, scale } => {
                let y = x / scale;
                let (_, _, h) = zonal4(&y);
                (Matrix3::identity() * 2.0 - epsilon * h) / (scale * scale)
            }
        }
    }

    /// Conservative outer radius; `psi > 0` beyond it.
    pub fn outer_radius(&self) -> f64 {
        match self.kind {
            BodyKind::Ball { radius } => radius,
            BodyKind::Ellipsoid { a, b, c } => a.max(b).max(c),
            BodyKind::PerturbedBall { epsilon, scale } => {
                scale * (1.0 + epsilon.abs()).sqrt() * 1.1
            }
        }
    }

    /// Backtracking Newton projection onto the zero level set along the
    /// gradient. Points far outside the bounding tube are rejected.
    pub fn project_to_boundary(&self, point: &Vector3<f64>) -> Result<Vector3<f64>, BodyError> {
        let mut x = *point;
        if x.norm() > 8.0 * self.outer_radius() {
            return Err(BodyError::ProjectionDiverged(*point));
        }
        if x.norm() < 1e-12 {
            // gradients of our star-shaped families vanish only at the center
            x = Vector3::new(self.outer_radius() * 1e-6, 0.0, 0.0);
        }
        let mut f = self.psi(&x);
        for _ in 0..200 {
            if f.abs() <= 1e-13 {
                return Ok(x);
            }
            let g = self.grad(&x);
            let g2 = g.norm_squared();
            if !g2.is_finite() || g2 < 1e-28 {
                return Err(BodyError::ProjectionDiverged(*point));
            }
            let mut step = g * (f / g2);
            let mut accepted = false;
            for _ in 0..40 {
                let trial = x - step;
                let ft = self.psi(&trial);
                if ft.is_finite() && ft.abs() < f.abs() {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(BodyError::ProjectionDiverged(*point));
            }
        }
        if f.abs() <= 1e-12 {
            Ok(x)
        } else {
            Err(BodyError::ProjectionDiverged(*point))
        }
    }

    /// Outward unit normal at a boundary point.
    pub fn outward_normal(&self, boundary_point: &Vector3<f64>) -> Vector3<f64> {
        self.grad(boundary_point).normalize()
    }

    /// Shape operator of the boundary with respect to the outward normal,
    /// restricted to an orthonormal tangent frame.
    pub fn boundary_second_form(&self, boundary_point: &Vector3<f64>) -> SecondForm {
        let n = self.outward_normal(boundary_point);
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let t1 = (seed - n * seed.dot(&n)).normalize();
        let t2 = n.cross(&t1);
        let h = self.hessian(boundary_point);
        let gn = self.grad(boundary_point).norm();
        let m = Matrix2::new(
            (t1.transpose() * h * t1)[(0, 0)],
            (t1.transpose() * h * t2)[(0, 0)],
            (t2.transpose() * h * t1)[(0, 0)],
            (t2.transpose() * h * t2)[(0, 0)],
        ) / gn;
        let m = (m + m.transpose()) * 0.5;
        let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
        // cancellation-free eigenvalue split for symmetric 2x2
        let disc = (0.5 * (m[(0, 0)] - m[(1, 1)])).hypot(m[(0, 1)]);
        SecondForm {
            frame: (t1, t2),
            matrix: m,
            k1: mid - disc,
            k2: mid + disc,
        }
    }

    /// `II(v, v)` for a unit direction `v`; `v` is projected into the
    /// boundary tangent plane and renormalized first.
    pub fn second_form_in_direction(&self, boundary_point: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let n = self.outward_normal(boundary_point);
        let t = v - n * v.dot(&n);
        let t2 = t.norm_squared();
        if t2 <= 0.0 {
            return 0.0;
        }
        let h = self.hessian(boundary_point);
        (t.transpose() * h * t)[(0, 0)] / (t2 * self.grad(boundary_point).norm())
    }

    /// Quasi-uniform boundary sampling: Fibonacci-sphere directions pushed
    /// to the zero level set along rays from the origin.
    pub fn sample_boundary(&self, count: usize) -> Vec<Vector3<f64>> {
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            out.push(self.ray_to_boundary(&dir));
        }
        out
    }

    fn ray_to_boundary(&self, dir: &Vector3<f64>) -> Vector3<f64> {
        // psi is negative at the center and increases along rays
        let mut hi = self.outer_radius() * 1.5;
        let mut lo = 0.0f64;
        while self.psi(&(dir * hi)) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if self.psi(&(dir * mid)) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.project_to_boundary(&(dir * (0.5 * (lo + hi))))
            .expect("ray point is on the boundary tube")
    }

    /// Certified convexity constant: the minimum boundary principal
    /// curvature over a quasi-uniform sampling.
    pub fn check_convexity(&self, sample_count: usize) -> Result<f64, BodyError> {
        if sample_count < 100 {
            return Err(BodyError::TooFewSamples(sample_count));
        }
        let mut c = f64::INFINITY;
        for p in self.sample_boundary(sample_count) {
            c = c.min(self.boundary_second_form(&p).k1);
        }
        if c <= 0.0 {
            return Err(BodyError::NotStrictlyConvex(c));
        }
        Ok(c)
    }

    /// Enclosing-ball radius and diameter estimate from a boundary sampling.
    pub fn geometric_constants(
        &self,
        sample_count: usize,
        seed: u64,
    ) -> Result<GeometricConstants, BodyError> {
        let samples = self.sample_boundary(sample_count);
        let ball = enclosing_ball_seeded(&samples, seed);
        let step = (samples.len() / 2048).max(1);
        let sub: Vec<&Vector3<f64>> = samples.iter().step_by(step).collect();
        let mut diam = 0.0f64;
        for i in 0..sub.len() {
            for j in (i + 1)..sub.len() {
                diam = diam.max((sub[i] - sub[j]).norm());
            }
        }
        let slack = 1e-9 * (1.0 + diam);
        if ball.radius < diam / 2.0 - slack || ball.radius > diam + slack {
            return Err(BodyError::BoundViolation(format!(
                "R = {}, diam = {diam}",
                ball.radius
            )));
        }
        Ok(GeometricConstants {
            enclosing: ball,
            r_omega: ball.radius,
            diameter: diam,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SecondForm {
    pub frame: (Vector3<f64>, Vector3<f64>),
    pub matrix: Matrix2<f64>,
    /// Smaller principal curvature.
    pub k1: f64,
    /// Larger principal curvature.
    pub k2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GeometricConstants {
    pub enclosing: EnclosingBall,
    /// Radius of the smallest ball containing the boundary sampling.
    pub r_omega: f64,
    pub diameter: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unit_ball_projection() {
        let body = ConvexBody::ball(1.0);
        let p = body.project_to_boundary(&Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert!((p - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((body.outward_normal(&p) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);

        let q = Vector3::new(0.3, -0.4, 0.2);
        let proj = body.project_to_boundary(&q).unwrap();
        assert!((proj - q.normalize()).norm() < 1e-10);
    }

    #[test]
    fn ellipsoid_axis_projection_and_curvature() {
        let body = ConvexBody::ellipsoid(2.0, 1.0, 1.0);
        let p = body.project_to_boundary(&Vector3::new(3.0, 0.0, 0.0)).unwrap();
        assert!((p - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-10);
        assert!((body.outward_normal(&p) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        // closed-form principal curvatures at the long-axis point: a / b^2
        let ff = body.boundary_second_form(&p);
        assert!((ff.k1 - 2.0).abs() < 1e-10, "k1 = {}", ff.k1);
        assert!((ff.k2 - 2.0).abs() < 1e-10, "k2 = {}", ff.k2);
        // and at a short-axis point: b / a^2
        let q = Vector3::new(0.0, 1.0, 0.0);
        let ffq = body.boundary_second_form(&q);
        assert!((ffq.k1 - 0.25).abs() < 1e-10, "k1 = {}", ffq.k1);
        assert!((ffq.k2 - 1.0).abs() < 1e-10, "k2 = {}", ffq.k2);
    }

    #[test]
    fn ball_second_form_is_inverse_radius() {
        for rho in [0.5, 1.0, 2.0] {
            let body = ConvexBody::ball(rho);
            let mut rng = StdRng::seed_from_u64(3);
            for _ in 0..1000 {
                let d = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if d.norm() < 1e-3 {
                    continue;
                }
                let p = body.project_to_boundary(&d).unwrap();
                let ff = body.boundary_second_form(&p);
                assert!((ff.k1 - 1.0 / rho).abs() < 1e-9);
                assert!((ff.k2 - 1.0 / rho).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn convexity_certification() {
        let ball = ConvexBody::ball(1.0);
        let c = ball.check_convexity(500).unwrap();
        assert!((c - 1.0).abs() < 1e-9);
        let half = ConvexBody::ball(0.5);
        assert!((half.check_convexity(500).unwrap() - 2.0).abs() < 1e-9);
        // long ellipsoid fails II >= 1: min curvature is 1/4 < 1
        let ell = ConvexBody::ellipsoid(2.0, 1.0, 1.0);
        let c = ell.check_convexity(2000).unwrap();
        assert!(c > 0.0 && c < 1.0, "c = {c}");
        assert!((c - 0.25).abs() < 0.05, "c = {c}");
    }

    #[test]
    fn perturbed_ball_certifies_above_one() {
        let (body, c) = ConvexBody::perturbed_ball_certified(0.1, 2000).unwrap();
        assert!(c >= 1.0 - 1e-6, "c = {c}");
        // still a genuine perturbation: boundary radius varies
        let samples = body.sample_boundary(500);
        let radii: Vec<f64> = samples.iter().map(|p| p.norm()).collect();
        let min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = radii.iter().cloned().fold(0.0, f64::max);
        assert!(max - min > 1e-3, "spread {}", max - min);
    }

    #[test]
    fn geometric_constants_of_balls() {
        for rho in [0.5, 1.0] {
            let body = ConvexBody::ball(rho);
            let gc = body.geometric_constants(4000, 11).unwrap();
            assert!((gc.r_omega - rho).abs() < 1e-9, "R = {}", gc.r_omega);
            assert!((gc.diameter - 2.0 * rho).abs() < 1e-3);
            assert!(gc.r_omega < std::f64::consts::PI);
        }
    }

    #[test]
    fn samples_lie_on_boundary() {
        let (body, _) = ConvexBody::perturbed_ball_certified(0.08, 400).unwrap();
        for p in body.sample_boundary(500) {
            assert!(body.psi(&p).abs() <= 1e-12);
        }
    }
}
