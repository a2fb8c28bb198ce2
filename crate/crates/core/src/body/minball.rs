//! Minimal enclosing ball of a 3D point set: Welzl's algorithm with
//! move-to-front ordering and a deterministic seeded shuffle.

use nalgebra::{Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Smallest ball containing a sampled point set.
#[derive(Debug, Clone, Copy)]
pub struct EnclosingBall {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl EnclosingBall {
    fn invalid() -> Self {
        EnclosingBall {
            center: Vector3::zeros(),
            radius: -1.0,
        }
    }

    fn contains(&self, p: &Vector3<f64>) -> bool {
        if self.radius < 0.0 {
            return false;
        }
        let slack = 1e-12 * (1.0 + self.radius * self.radius);
        (p - self.center).norm_squared() <= self.radius * self.radius + slack
    }
}

/// Circumball of 1 to 4 affinely independent points; all of them lie on the
/// sphere. Returns an invalid ball on degenerate input.
pub fn ball_from_support(support: &[Vector3<f64>]) -> EnclosingBall {
    match support.len() {
        0 => EnclosingBall::invalid(),
        1 => EnclosingBall {
            center: support[0],
            radius: 0.0,
        },
        2 => {
            let center = (support[0] + support[1]) * 0.5;
            EnclosingBall {
                center,
                radius: (support[0] - center).norm(),
            }
        }
        3 => {
            let (a, b, c) = (support[0], support[1], support[2]);
            let u = b - a;
            let v = c - a;
            let w = u.cross(&v);
            let d = 2.0 * w.norm_squared();
            let span = u.norm_squared().max(v.norm_squared());
            if d <= 1e-24 * span * span {
                return EnclosingBall::invalid();
            }
            let center = a + (u.norm_squared() * v - v.norm_squared() * u).cross(&w) / d;
            EnclosingBall {
                center,
                radius: (a - center).norm(),
            }
        }
        4 => {
            let a = support[0];
            let rows: Vec<Vector3<f64>> = (1..4).map(|k| support[k] - a).collect();
            let m = Matrix3::from_rows(&[
                rows[0].transpose(),
                rows[1].transpose(),
                rows[2].transpose(),
            ]);
            let rhs = Vector3::new(
                0.5 * rows[0].norm_squared(),
                0.5 * rows[1].norm_squared(),
                0.5 * rows[2].norm_squared(),
            );
            match m.lu().solve(&rhs) {
                Some(x) => {
                    let center = a + x;
                    EnclosingBall {
                        center,
                        radius: (a - center).norm(),
                    }
                }
                None => EnclosingBall::invalid(),
            }
        }
        _ => unreachable!("support sets have at most 4 points"),
    }
}

fn welzl_mtf(points: &mut [Vector3<f64>], end: usize, support: &mut Vec<Vector3<f64>>) -> EnclosingBall {
    let mut ball = ball_from_support(support);
    if support.len() == 4 {
        return ball;
    }
    let mut i = 0;
    while i < end {
        let p = points[i];
        if !ball.contains(&p) {
            support.push(p);
            ball = welzl_mtf(points, i, support);
            support.pop();
            points[..=i].rotate_right(1);
        }
        i += 1;
    }
    ball
}

/// Minimal enclosing ball with the default shuffle seed.
pub fn enclosing_ball(points: &[Vector3<f64>]) -> EnclosingBall {
    enclosing_ball_seeded(points, 42)
}

/// Minimal enclosing ball; the shuffle is drawn from `seed`, so runs are
/// reproducible. The result itself does not depend on the seed.
pub fn enclosing_ball_seeded(points: &[Vector3<f64>], seed: u64) -> EnclosingBall {
    assert!(!points.is_empty(), "enclosing ball of an empty set");
    let mut pts: Vec<Vector3<f64>> = points.to_vec();
    let mut rng = StdRng::seed_from_u64(seed);
    pts.shuffle(&mut rng);
    let n = pts.len();
    let mut support = Vec::with_capacity(4);
    welzl_mtf(&mut pts, n, &mut support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Exhaustive minimum over circumballs of all support subsets of size
    /// <= 4 that cover the set. Exponential, test-only.
    pub fn brute_force_ball(points: &[Vector3<f64>]) -> EnclosingBall {
        let n = points.len();
        let mut best = EnclosingBall::invalid();
        let mut consider = |ball: EnclosingBall| {
            if ball.radius < 0.0 {
                return;
            }
            if points.iter().all(|p| ball.contains(p)) && (best.radius < 0.0 || ball.radius < best.radius) {
                best = ball;
            }
        };
        for i in 0..n {
            consider(ball_from_support(&[points[i]]));
            for j in (i + 1)..n {
                consider(ball_from_support(&[points[i], points[j]]));
                for k in (j + 1)..n {
                    consider(ball_from_support(&[points[i], points[j], points[k]]));
                    for l in (k + 1)..n {
                        consider(ball_from_support(&[
                            points[i], points[j], points[k], points[l],
                        ]));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn single_point() {
        let b = enclosing_ball(&[Vector3::new(1.0, 2.0, 3.0)]);
        assert_eq!(b.radius, 0.0);
        assert_eq!(b.center, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn regular_tetrahedron_circumball() {
        // circumradius-1 tetrahedron centered at a known point
        let shift = Vector3::new(0.3, -0.2, 0.5);
        let s = 1.0 / 3.0f64.sqrt();
        let pts: Vec<Vector3<f64>> = [
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ]
        .iter()
        .map(|p| p + shift)
        .collect();
        let b = enclosing_ball(&pts);
        assert!((b.radius - 1.0).abs() < 1e-12);
        assert!((b.center - shift).norm() < 1e-12);
        let brute = brute_force_ball(&pts);
        assert!((b.radius - brute.radius).abs() < 1e-12);
    }

    #[test]
    fn poles_force_the_unit_ball() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
        ];
        for _ in 0..200 {
            let p = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if p.norm() < 1.0 {
                pts.push(p);
            }
        }
        let b = enclosing_ball(&pts);
        assert!((b.radius - 1.0).abs() < 1e-12);
        assert!(b.center.norm() < 1e-12);
    }

    #[test]
    fn welzl_matches_brute_force_on_200_seeds() {
        for seed in 0..200u64 {
            let mut rng = StdRng::seed_from_u64(seed);
            let n = rng.gen_range(1..=10);
            let pts: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    )
                })
                .collect();
            let w = enclosing_ball_seeded(&pts, seed.wrapping_mul(31).wrapping_add(7));
            let b = brute_force_ball(&pts);
            assert!(
                (w.radius - b.radius).abs() <= 1e-12 * (1.0 + b.radius),
                "seed {seed}: welzl {} vs brute {}",
                w.radius,
                b.radius
            );
            assert!((w.center - b.center).norm() <= 1e-9 * (1.0 + b.radius), "seed {seed}");
        }
    }

    #[test]
    fn permutation_and_rigid_motion_invariance() {
        let mut rng = StdRng::seed_from_u64(5);
        let pts: Vec<Vector3<f64>> = (0..40)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let base = enclosing_ball(&pts);
        let mut rev = pts.clone();
        rev.reverse();
        let b2 = enclosing_ball_seeded(&rev, 1234);
        assert!((base.radius - b2.radius).abs() < 1e-12);
        assert!((base.center - b2.center).norm() < 1e-10);

        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let shift = Vector3::new(4.0, -2.0, 0.5);
        let moved: Vec<Vector3<f64>> = pts.iter().map(|p| rot * p + shift).collect();
        let bm = enclosing_ball(&moved);
        assert!((base.radius - bm.radius).abs() < 1e-10);
        assert!(((rot * base.center + shift) - bm.center).norm() < 1e-9);
    }

    #[test]
    fn support_points_on_sphere() {
        let mut rng = StdRng::seed_from_u64(77);
        let pts: Vec<Vector3<f64>> = (0..25)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let b = enclosing_ball(&pts);
        let on_sphere = pts
            .iter()
            .filter(|p| ((*p - b.center).norm() - b.radius).abs() <= 1e-9)
            .count();
        assert!(on_sphere >= 2, "support count {on_sphere}");
    }
}
