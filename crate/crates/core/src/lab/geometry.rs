//! Convex supports, projections, the piecewise scaling map, and exact
//! volumes of ball intersections.
//!
//! Two support shapes cover every synthetic density: Euclidean balls
//! and axis-aligned boxes. Both admit closed-form projections,
//! uniform sampling, and (in low dimension) exact ball-intersection
//! volumes, which is what lets the harness compare empirical counts
//! against true masses instead of estimates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta_reg;

use super::LabError;
use crate::knn::unit_ball_volume;

/// A convex support region.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Ball { center: Vec<f64>, radius: f64 },
    Rect { lo: Vec<f64>, hi: Vec<f64> },
}

impl Support {
    /// # Errors
    ///
    /// `InvalidConfig` for an empty center, non-finite coordinates, or
    /// a non-positive radius.
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, LabError> {
        if center.is_empty() {
            return Err(LabError::InvalidConfig("ball center must have at least one coordinate".into()));
        }
        if center.iter().any(|c| !c.is_finite()) || !radius.is_finite() || radius <= 0.0 {
            return Err(LabError::InvalidConfig(format!(
                "ball needs finite center and positive finite radius, got radius {radius}"
            )));
        }
        Ok(Support::Ball { center, radius })
    }

    /// # Errors
    ///
    /// `InvalidConfig` unless `lo` and `hi` are equal-length, finite,
    /// and `lo < hi` on every axis.
    pub fn rect(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, LabError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(LabError::InvalidConfig(format!(
                "box corners must be nonempty and equal-length, got {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !l.is_finite() || !h.is_finite() || l >= h {
                return Err(LabError::InvalidConfig(format!(
                    "box needs finite corners with lo < hi on every axis, got [{l}, {h}]"
                )));
            }
        }
        Ok(Support::Rect { lo, hi })
    }

    pub fn unit_ball(dim: usize) -> Result<Self, LabError> {
        Self::ball(vec![0.0; dim], 1.0)
    }

    pub fn unit_box(dim: usize) -> Result<Self, LabError> {
        Self::rect(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Support::Ball { center, .. } => center.len(),
            Support::Rect { lo, .. } => lo.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Support::Ball { center, radius } => ball_volume(center.len(), *radius),
            Support::Rect { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
        }
    }

    /// Closed membership test (the boundary belongs to the support).
    pub fn contains(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Support::Ball { center, radius } => dist2(x, center) <= radius * radius,
            Support::Rect { lo, hi } => {
                x.iter().zip(lo).zip(hi).all(|((v, l), h)| *l <= *v && *v <= *h)
            }
        }
    }

    /// Strict membership test (boundary points are not interior).
    pub fn strictly_inside(&self, x: &[f64]) -> bool {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Support::Ball { center, radius } => dist2(x, center) < radius * radius,
            Support::Rect { lo, hi } => {
                x.iter().zip(lo).zip(hi).all(|((v, l), h)| *l < *v && *v < *h)
            }
        }
    }

    /// Euclidean projection onto the support, defined for points on or
    /// outside the boundary: balls project radially, boxes clamp per
    /// coordinate.
    ///
    /// # Errors
    ///
    /// `InteriorPoint` for strictly interior inputs, whose nearest
    /// boundary point is not the identity and is never needed here.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, LabError> {
        if self.strictly_inside(x) {
            return Err(LabError::InteriorPoint);
        }
        Ok(match self {
            Support::Ball { center, radius } => {
                let norm = dist2(x, center).sqrt();
                center
                    .iter()
                    .zip(x)
                    .map(|(c, v)| c + (v - c) * radius / norm)
                    .collect()
            }
            Support::Rect { lo, hi } => {
                x.iter().zip(lo).zip(hi).map(|((v, l), h)| v.clamp(*l, *h)).collect()
            }
        })
    }

    /// Distance from `x` to the support (0 for members).
    pub fn distance(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        let p = self.project(x).expect("x is outside the support");
        dist2(x, &p).sqrt()
    }

    /// Smallest axis-aligned box containing the support, as
    /// `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Support::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Support::Rect { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Longest bounding-box edge; a convenient length scale.
    pub fn max_extent(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }

    /// Uniform sample from the support.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Support::Ball { center, radius } => {
                let u = unit_vector(rng, center.len());
                let scale = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
                center.iter().zip(&u).map(|(c, e)| c + scale * e).collect()
            }
            Support::Rect { lo, hi } => {
                lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)).collect()
            }
        }
    }

    /// Random point at distance exactly `margin` from the support.
    ///
    /// Balls offset a uniform sphere direction; boxes pick a face with
    /// probability proportional to its area, a uniform point on it,
    /// and step outward along the face normal. Either way the nearest
    /// support point is the construction's base point, so the margin
    /// is exact rather than estimated.
    pub fn sample_at_distance<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Vec<f64> {
        debug_assert!(margin > 0.0);
        match self {
            Support::Ball { center, radius } => {
                let u = unit_vector(rng, center.len());
                center.iter().zip(&u).map(|(c, e)| c + (radius + margin) * e).collect()
            }
            Support::Rect { lo, hi } => {
                let d = lo.len();
                let volume = self.volume();
                let areas: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| volume / (h - l)).collect();
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = d - 1;
                for (j, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = j;
                        break;
                    }
                    pick -= a;
                }
                let low_face = rng.random::<f64>() < 0.5;
                let mut x: Vec<f64> =
                    lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)).collect();
                x[axis] = if low_face { lo[axis] - margin } else { hi[axis] + margin };
                x
            }
        }
    }

    /// Volume of the intersection of this support with the closed
    /// ball of the given center and radius.
    ///
    /// # Errors
    ///
    /// `UnsupportedBallMass` for boxes above dimension 2, where no
    /// closed form is implemented.
    pub fn ball_intersection_volume(&self, center: &[f64], radius: f64) -> Result<f64, LabError> {
        debug_assert_eq!(center.len(), self.dim());
        match self {
            Support::Ball { center: c, radius: r } => {
                Ok(ball_ball_intersection_volume(c.len(), c, *r, center, radius))
            }
            Support::Rect { lo, hi } => match lo.len() {
                1 => {
                    let l = (center[0] - radius).max(lo[0]);
                    let h = (center[0] + radius).min(hi[0]);
                    Ok((h - l).max(0.0))
                }
                2 => Ok(disc_rect_area(center[0], center[1], radius, lo[0], hi[0], lo[1], hi[1])),
                dim => Err(LabError::UnsupportedBallMass { family: "box", dim }),
            },
        }
    }
}

/// The piecewise scaling map used to model embedding contraction:
/// support members move toward the anchor by factor `gamma_in`;
/// outside points keep their boundary projection and shrink their
/// offset from it by factor `gamma_out`.
pub fn contraction_map(
    support: &Support,
    anchor: &[f64],
    gamma_in: f64,
    gamma_out: f64,
    x: &[f64],
) -> Vec<f64> {
    if support.contains(x) {
        anchor.iter().zip(x).map(|(a, v)| a + gamma_in * (v - a)).collect()
    } else {
        let p = support.project(x).expect("x is outside the support");
        p.iter().zip(x).map(|(b, v)| b + gamma_out * (v - b)).collect()
    }
}

/// Volume of the radius-`r` ball in `d` dimensions.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    unit_ball_volume(d) * r.powi(d as i32)
}

/// Volume of a spherical cap of height `h` cut from the radius-`r`
/// ball in `d` dimensions, in terms of the regularized incomplete
/// beta function. `h` is measured from the cap's rim plane to the
/// sphere surface and is clamped to `[0, 2r]`.
pub fn spherical_cap_volume(d: usize, r: f64, h: f64) -> f64 {
    debug_assert!(d >= 1 && r > 0.0);
    if h <= 0.0 {
        return 0.0;
    }
    if h >= 2.0 * r {
        return ball_volume(d, r);
    }
    if h > r {
        return ball_volume(d, r) - spherical_cap_volume(d, r, 2.0 * r - h);
    }
    let x = ((2.0 * r * h - h * h) / (r * r)).clamp(0.0, 1.0);
    0.5 * ball_volume(d, r) * beta_reg((d as f64 + 1.0) / 2.0, 0.5, x)
}

/// Exact intersection volume of two closed balls in `d` dimensions,
/// decomposed into two spherical caps split at the radical plane.
pub fn ball_ball_intersection_volume(d: usize, c1: &[f64], r1: f64, c2: &[f64], r2: f64) -> f64 {
    debug_assert_eq!(c1.len(), c2.len());
    let rho = dist2(c1, c2).sqrt();
    if rho >= r1 + r2 {
        return 0.0;
    }
    if rho + r1 <= r2 {
        return ball_volume(d, r1);
    }
    if rho + r2 <= r1 {
        return ball_volume(d, r2);
    }
    let a1 = (rho * rho + r1 * r1 - r2 * r2) / (2.0 * rho);
    spherical_cap_volume(d, r1, r1 - a1) + spherical_cap_volume(d, r2, r2 - (rho - a1))
}

/// Area of the intersection of a disc with an axis-aligned rectangle,
/// by inclusion-exclusion over the rectangle's corners.
pub fn disc_rect_area(cx: f64, cy: f64, r: f64, x1: f64, x2: f64, y1: f64, y2: f64) -> f64 {
    debug_assert!(r > 0.0 && x1 <= x2 && y1 <= y2);
    let g = |x: f64, y: f64| corner_area(x - cx, y - cy, r);
    g(x2, y2) - g(x1, y2) - g(x2, y1) + g(x1, y1)
}

/// Area of `{X <= x, Y <= y}` inside the radius-`r` disc at the
/// origin, integrating clipped vertical chords over three ranges of
/// `X` (full chord left of the `Y = y` crossing, clipped chord across
/// it, full chord right of it).
fn corner_area(x: f64, y: f64, r: f64) -> f64 {
    if x <= -r || y <= -r {
        return 0.0;
    }
    // Integral of sqrt(r^2 - X^2) dX from -r to t.
    let half_chord_integral = |t: f64| -> f64 {
        let t = t.clamp(-r, r);
        0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin()) + 0.25 * PI * r * r
    };
    let xc = x.min(r);
    if y >= r {
        return 2.0 * half_chord_integral(xc);
    }
    let s = (r * r - y * y).sqrt();
    if y >= 0.0 {
        let mut total = 2.0 * half_chord_integral(xc.min(-s));
        let (lo, hi) = (-s, xc.min(s));
        if hi > lo {
            total += y * (hi - lo) + half_chord_integral(hi) - half_chord_integral(lo);
        }
        if xc > s {
            total += 2.0 * (half_chord_integral(xc) - half_chord_integral(s));
        }
        total
    } else {
        let (lo, hi) = (-s, xc.min(s));
        if hi <= lo {
            0.0
        } else {
            y * (hi - lo) + half_chord_integral(hi) - half_chord_integral(lo)
        }
    }
}

/// Uniform direction on the unit sphere from normalized Gaussians.
fn unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructors_validate() {
        assert!(Support::ball(vec![0.0, 0.0], 1.0).is_ok());
        assert!(Support::ball(vec![], 1.0).is_err());
        assert!(Support::ball(vec![0.0], 0.0).is_err());
        assert!(Support::ball(vec![f64::NAN], 1.0).is_err());
        assert!(Support::rect(vec![0.0], vec![1.0]).is_ok());
        assert!(Support::rect(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Support::rect(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let ball = Support::unit_ball(2).unwrap();
        assert_eq!(ball.project(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let boxy = Support::unit_box(2).unwrap();
        assert_eq!(boxy.project(&[2.0, 0.5]).unwrap(), vec![1.0, 0.5]);
        assert_eq!(boxy.project(&[2.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(ball.project(&[0.0, 0.5]).unwrap_err(), LabError::InteriorPoint);
        // Boundary points project to themselves.
        assert_eq!(boxy.project(&[1.0, 0.5]).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn projection_satisfies_variational_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let supports = vec![
            Support::ball(vec![0.3, -0.2, 1.0], 1.4).unwrap(),
            Support::rect(vec![-1.0, 0.0, 2.0], vec![1.0, 0.5, 5.0]).unwrap(),
        ];
        for support in supports {
            for _ in 0..200 {
                let margin: f64 = rng.random_range(0.01..2.0);
                let x = support.sample_at_distance(&mut rng, margin);
                let p = support.project(&x).unwrap();
                // The projection realizes the distance to the set and
                // sits on the boundary up to float rounding.
                let gap = (0..x.len()).map(|j| (x[j] - p[j]).powi(2)).sum::<f64>().sqrt();
                assert_relative_eq!(gap, support.distance(&x), max_relative = 1e-9);
                assert!(support.distance(&p) <= 1e-9);
                for _ in 0..20 {
                    let z = support.sample_uniform(&mut rng);
                    let dot: f64 =
                        (0..x.len()).map(|j| (x[j] - p[j]) * (z[j] - p[j])).sum();
                    assert!(dot <= 1e-9, "variational inequality violated: {dot}");
                }
            }
        }
    }

    #[test]
    fn distance_matches_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let supports = vec![
            Support::ball(vec![1.0, 2.0], 0.7).unwrap(),
            Support::rect(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap(),
            Support::unit_box(1).unwrap(),
        ];
        for support in supports {
            for _ in 0..200 {
                let margin = rng.random_range(0.01..1.5);
                let x = support.sample_at_distance(&mut rng, margin);
                assert_relative_eq!(support.distance(&x), margin, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn uniform_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for support in [
            Support::ball(vec![0.0; 3], 2.0).unwrap(),
            Support::rect(vec![0.0, 5.0], vec![1.0, 9.0]).unwrap(),
        ] {
            for _ in 0..500 {
                let x = support.sample_uniform(&mut rng);
                assert!(support.contains(&x));
            }
        }
    }

    #[test]
    fn contraction_map_examples() {
        let ball = Support::unit_ball(2).unwrap();
        let anchor = [0.0, 0.0];
        let at = |x: &[f64]| contraction_map(&ball, &anchor, 0.5, 0.8, x);
        assert_eq!(at(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(at(&[0.4, 0.0]), vec![0.2, 0.0]);
        let out = at(&[2.0, 0.0]);
        assert_relative_eq!(out[0], 1.8, max_relative = 1e-15);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn contraction_scales_interior_distances_by_gamma_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let support = Support::ball(vec![0.5, -1.0], 2.0).unwrap();
        let anchor = vec![0.7, -0.5];
        let gamma_in = 0.37;
        for _ in 0..200 {
            let a = support.sample_uniform(&mut rng);
            let b = support.sample_uniform(&mut rng);
            let fa = contraction_map(&support, &anchor, gamma_in, 0.9, &a);
            let fb = contraction_map(&support, &anchor, gamma_in, 0.9, &b);
            let before = dist2(&a, &b).sqrt();
            let after = dist2(&fa, &fb).sqrt();
            assert_relative_eq!(after, gamma_in * before, max_relative = 1e-12);
        }
    }

    #[test]
    fn ball_volumes() {
        assert_relative_eq!(ball_volume(1, 3.0), 6.0, max_relative = 1e-12);
        assert_relative_eq!(ball_volume(2, 2.0), 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(ball_volume(3, 1.0), 4.0 * PI / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn cap_volume_edge_cases() {
        for d in 1..=6 {
            let full = ball_volume(d, 1.5);
            assert_eq!(spherical_cap_volume(d, 1.5, 0.0), 0.0);
            assert_eq!(spherical_cap_volume(d, 1.5, -0.2), 0.0);
            assert_relative_eq!(spherical_cap_volume(d, 1.5, 3.0), full, max_relative = 1e-12);
            assert_relative_eq!(
                spherical_cap_volume(d, 1.5, 1.5),
                full / 2.0,
                max_relative = 1e-12
            );
            // Complementary heights partition the ball.
            let h = 0.4;
            assert_relative_eq!(
                spherical_cap_volume(d, 1.5, h) + spherical_cap_volume(d, 1.5, 3.0 - h),
                full,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn cap_volume_closed_forms() {
        // 1-d: a cap of height h is an interval of length h.
        assert_relative_eq!(spherical_cap_volume(1, 1.0, 0.3), 0.3, max_relative = 1e-12);
        // 3-d: pi * h^2 * (r - h/3).
        let cap3 = |r: f64, h: f64| PI * h * h * (r - h / 3.0);
        assert_relative_eq!(
            spherical_cap_volume(3, 1.0, 0.5),
            cap3(1.0, 0.5),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            spherical_cap_volume(3, 1.5, 0.2),
            cap3(1.5, 0.2),
            max_relative = 1e-12
        );
        // Values frozen from high-resolution numeric integration of
        // the cap's cross-sections.
        assert_relative_eq!(
            spherical_cap_volume(2, 1.0, 0.4),
            0.44729521798301985,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            spherical_cap_volume(2, 2.0, 1.7),
            5.0877006178438995,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            spherical_cap_volume(5, 1.0, 0.9),
            2.141694285431997,
            max_relative = 1e-8
        );
    }

    #[test]
    fn ball_ball_intersection_cases() {
        let d = 3;
        let full = ball_volume(d, 1.0);
        // Identical balls.
        assert_relative_eq!(
            ball_ball_intersection_volume(d, &[0.0; 3], 1.0, &[0.0; 3], 1.0),
            full,
            max_relative = 1e-12
        );
        // Disjoint.
        assert_eq!(
            ball_ball_intersection_volume(d, &[0.0; 3], 1.0, &[5.0, 0.0, 0.0], 1.0),
            0.0
        );
        // Contained.
        assert_relative_eq!(
            ball_ball_intersection_volume(d, &[0.1, 0.0, 0.0], 0.2, &[0.0; 3], 1.0),
            ball_volume(d, 0.2),
            max_relative = 1e-12
        );
        // Symmetry in the arguments.
        let a = ball_ball_intersection_volume(2, &[0.0, 0.0], 1.0, &[0.8, 0.3], 0.7);
        let b = ball_ball_intersection_volume(2, &[0.8, 0.3], 0.7, &[0.0, 0.0], 1.0);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn ball_ball_matches_closed_forms_in_low_dimension() {
        // 1-d: interval overlap.
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..200 {
            let c1: f64 = rng.random_range(-2.0..2.0);
            let c2: f64 = rng.random_range(-2.0..2.0);
            let r1: f64 = rng.random_range(0.1..2.0);
            let r2: f64 = rng.random_range(0.1..2.0);
            let expect = ((c1 + r1).min(c2 + r2) - (c1 - r1).max(c2 - r2)).max(0.0);
            assert_relative_eq!(
                ball_ball_intersection_volume(1, &[c1], r1, &[c2], r2),
                expect,
                max_relative = 1e-10,
                epsilon = 1e-12
            );
        }
        // 2-d equal radii: the standard lens area.
        for _ in 0..200 {
            let r: f64 = rng.random_range(0.2..2.0);
            let rho: f64 = rng.random_range(0.0..2.0 * r);
            let lens = 2.0 * r * r * (rho / (2.0 * r)).acos()
                - rho / 2.0 * (4.0 * r * r - rho * rho).sqrt();
            assert_relative_eq!(
                ball_ball_intersection_volume(2, &[0.0, 0.0], r, &[rho, 0.0], r),
                lens,
                max_relative = 1e-9,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn disc_rect_frozen_cases() {
        // Disc inside rectangle.
        assert_relative_eq!(disc_rect_area(0.0, 0.0, 1.0, -1.0, 1.0, -1.0, 1.0), PI, max_relative = 1e-12);
        // Quarter disc.
        assert_relative_eq!(
            disc_rect_area(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0),
            PI / 4.0,
            max_relative = 1e-12
        );
        // Rectangle inside disc.
        assert_relative_eq!(
            disc_rect_area(0.0, 0.0, 2.0, -0.3, 0.4, -0.1, 0.2),
            0.21,
            max_relative = 1e-12
        );
        // General positions, frozen from high-resolution quadrature.
        assert_relative_eq!(
            disc_rect_area(0.5, 0.25, 0.8, 0.0, 1.0, 0.0, 1.0),
            0.975655675524003,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            disc_rect_area(1.4, 0.0, 0.5, 0.0, 1.0, 0.0, 1.0),
            0.020437638599160562,
            max_relative = 1e-8
        );
    }

    #[test]
    fn disc_rect_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..25 {
            let cx: f64 = rng.random_range(-2.0..2.0);
            let cy: f64 = rng.random_range(-2.0..2.0);
            let r: f64 = rng.random_range(0.05..2.5);
            let x1: f64 = rng.random_range(-2.0..2.0);
            let x2: f64 = x1 + rng.random_range(0.01..3.0);
            let y1: f64 = rng.random_range(-2.0..2.0);
            let y2: f64 = y1 + rng.random_range(0.01..3.0);
            let lo = x1.max(cx - r);
            let hi = x2.min(cx + r);
            let mut quad = 0.0;
            if hi > lo {
                let steps = 20000;
                let w = (hi - lo) / steps as f64;
                for i in 0..steps {
                    let x = lo + (i as f64 + 0.5) * w;
                    let half = (r * r - (x - cx) * (x - cx)).max(0.0).sqrt();
                    let seg = (y2.min(cy + half) - y1.max(cy - half)).max(0.0);
                    quad += seg * w;
                }
            }
            let exact = disc_rect_area(cx, cy, r, x1, x2, y1, y2);
            assert_abs_diff_eq!(exact, quad, epsilon = 2e-4);
            assert!(exact >= -1e-12);
            assert!(exact <= PI * r * r + 1e-9);
            assert!(exact <= (x2 - x1) * (y2 - y1) + 1e-9);
        }
    }

    #[test]
    fn support_ball_intersection_dispatch() {
        let boxy = Support::unit_box(2).unwrap();
        assert_relative_eq!(
            boxy.ball_intersection_volume(&[0.0, 0.0], 0.2).unwrap(),
            PI * 0.04 / 4.0,
            max_relative = 1e-12
        );
        let seg = Support::unit_box(1).unwrap();
        assert_relative_eq!(
            seg.ball_intersection_volume(&[0.9], 0.3).unwrap(),
            0.4,
            max_relative = 1e-15
        );
        let cube = Support::unit_box(3).unwrap();
        assert_eq!(
            cube.ball_intersection_volume(&[0.5; 3], 0.1).unwrap_err(),
            LabError::UnsupportedBallMass { family: "box", dim: 3 }
        );
        let ball = Support::unit_ball(4).unwrap();
        assert_relative_eq!(
            ball.ball_intersection_volume(&[0.0; 4], 2.0).unwrap(),
            ball_volume(4, 1.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn box_margin_samples_cover_all_faces() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let boxy = Support::rect(vec![0.0, 0.0], vec![1.0, 3.0]).unwrap();
        let mut face_hits = [0usize; 4];
        for _ in 0..2000 {
            let x = boxy.sample_at_distance(&mut rng, 0.25);
            if x[0] < 0.0 {
                face_hits[0] += 1;
            } else if x[0] > 1.0 {
                face_hits[1] += 1;
            } else if x[1] < 0.0 {
                face_hits[2] += 1;
            } else {
                face_hits[3] += 1;
            }
        }
        // Long faces (axis 0 offsets) are 3x likelier than short ones.
        assert!(face_hits.iter().all(|&c| c > 0), "{face_hits:?}");
        let long = (face_hits[0] + face_hits[1]) as f64;
        let short = (face_hits[2] + face_hits[3]) as f64;
        let ratio = long / short;
        assert!((2.0..4.5).contains(&ratio), "face ratio {ratio}");
    }
}
