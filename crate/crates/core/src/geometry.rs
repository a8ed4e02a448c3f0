//! Reference domains, samplers and shape metrics.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sympnet::Mat2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReferenceDomain {
    Disk { radius: f64 },
    Annulus { r_min: f64, r_max: f64 },
}

impl ReferenceDomain {
    /// Disk centred at the origin with area `volume`.
    pub fn disk_with_volume(volume: f64) -> Self {
        ReferenceDomain::Disk {
            radius: (volume / PI).sqrt(),
        }
    }

    /// Outer radius.
    pub fn radius(&self) -> f64 {
        match *self {
            ReferenceDomain::Disk { radius } => radius,
            ReferenceDomain::Annulus { r_max, .. } => r_max,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            ReferenceDomain::Disk { radius } => PI * radius * radius,
            ReferenceDomain::Annulus { r_min, r_max } => PI * (r_max * r_max - r_min * r_min),
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        let r2 = x[0] * x[0] + x[1] * x[1];
        match *self {
            ReferenceDomain::Disk { radius } => r2 <= radius * radius,
            ReferenceDomain::Annulus { r_min, r_max } => r2 <= r_max * r_max && r2 >= r_min * r_min,
        }
    }
}

/// Ellipse `(x1/a)^2 + (x2/b)^2 <= 1` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub a: f64,
    pub b: f64,
}

impl Obstacle {
    /// Level-set function, negative inside.
    pub fn phi(&self, x: [f64; 2]) -> f64 {
        (x[0] / self.a).powi(2) + (x[1] / self.b).powi(2) - 1.0
    }
}

/// Uniform i.i.d. points in the domain.
pub fn sample_interior<R: Rng + ?Sized>(
    domain: &ReferenceDomain,
    n: usize,
    rng: &mut R,
) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let (r0sq, r1sq) = match *domain {
        ReferenceDomain::Disk { radius } => (0.0, radius * radius),
        ReferenceDomain::Annulus { r_min, r_max } => (r_min * r_min, r_max * r_max),
    };
    Ok((0..n)
        .map(|_| {
            let t = rng.random_range(0.0..TAU);
            let r = (r0sq + rng.random::<f64>() * (r1sq - r0sq)).sqrt();
            [r * t.cos(), r * t.sin()]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub x: [f64; 2],
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
}

impl BoundarySample {
    pub fn on_circle(radius: f64, t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self {
            x: [radius * c, radius * s],
            normal: [c, s],
            tangent: [s, -c],
        }
    }
}

/// Points uniform in angle on the outer circle, with unit normal and tangent.
pub fn sample_boundary<R: Rng + ?Sized>(
    domain: &ReferenceDomain,
    n: usize,
    rng: &mut R,
) -> Result<Vec<BoundarySample>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be positive".into()));
    }
    let r = domain.radius();
    Ok((0..n)
        .map(|_| BoundarySample::on_circle(r, rng.random_range(0.0..TAU)))
        .collect())
}

/// Evenly spaced angles `2 pi k / n`.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Keeps the points whose image lies outside the obstacle.
pub fn mask_obstacle<F>(points: &[[f64; 2]], map: F, obstacle: &Obstacle) -> Result<Vec<[f64; 2]>>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let kept: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|&x| obstacle.phi(map(x)) > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate(format!(
            "all {} collocation points fall inside the obstacle",
            points.len()
        )));
    }
    Ok(kept)
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Directed Hausdorff distance with early break: the inner scan stops as
/// soon as a point closer than the running maximum is found. Inputs are
/// shuffled with a fixed seed so the expected cost is close to linear.
fn directed_hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let mut cmax = 0.0;
    for &x in a {
        let mut cmin = f64::INFINITY;
        let mut early = false;
        for &y in b {
            let d = dist2(x, y);
            if d < cmax {
                early = true;
                break;
            }
            if d < cmin {
                cmin = d;
            }
        }
        if !early && cmin > cmax {
            cmax = cmin;
        }
    }
    cmax.sqrt()
}

pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("Hausdorff distance of an empty set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x4841_5553);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.shuffle(&mut rng);
    b.shuffle(&mut rng);
    Ok(directed_hausdorff(&a, &b).max(directed_hausdorff(&b, &a)))
}

fn inv_transpose(j: &Mat2) -> Mat2 {
    // Unit determinant is not assumed here.
    let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    [[j[1][1] / d, -j[1][0] / d], [-j[0][1] / d, j[0][0] / d]]
}

/// `J^{-T} v`.
pub fn apply_inv_transpose(j: &Mat2, v: [f64; 2]) -> [f64; 2] {
    let m = inv_transpose(j);
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Unit normal of the image boundary and the tangential Jacobian `|J^{-T} n|`.
pub fn pushforward_normal(j: &Mat2, n: [f64; 2]) -> ([f64; 2], f64) {
    let v = apply_inv_transpose(j, n);
    let s = v[0].hypot(v[1]);
    ([v[0] / s, v[1] / s], s)
}

/// Images of `n` evenly spaced points of the circle of radius `radius`.
pub fn boundary_cloud<F>(map: F, radius: f64, n: usize) -> Vec<[f64; 2]>
where
    F: Fn([f64; 2]) -> [f64; 2],
{
    uniform_angles(n)
        .into_iter()
        .map(|t| map([radius * t.cos(), radius * t.sin()]))
        .collect()
}

/// Centroid of the closed polygon through `points`, weighting each edge
/// midpoint by the edge length.
pub fn arclength_centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len();
    let (mut cx, mut cy, mut total) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        let l = dist2(p, q).sqrt();
        cx += l * 0.5 * (p[0] + q[0]);
        cy += l * 0.5 * (p[1] + q[1]);
        total += l;
    }
    if total == 0.0 {
        return points.first().copied().unwrap_or([0.0, 0.0]);
    }
    [cx / total, cy / total]
}

/// Velocity `gamma'(t)` of `t -> T(radius cos t, radius sin t)`.
pub fn boundary_velocity<F>(map_jac: &F, radius: f64, t: f64) -> [f64; 2]
where
    F: Fn([f64; 2]) -> ([f64; 2], Mat2),
{
    let (s, c) = t.sin_cos();
    let (_, j) = map_jac([radius * c, radius * s]);
    let d = [-radius * s, radius * c];
    [
        j[0][0] * d[0] + j[0][1] * d[1],
        j[1][0] * d[0] + j[1][1] * d[1],
    ]
}

/// Signed curvature of the mapped circle at angle `t`.
///
/// The velocity is exact (chain rule through the map Jacobian); the
/// acceleration is a central difference of the velocity with step `1e-4`.
pub fn boundary_curvature<F>(map_jac: &F, radius: f64, t: f64) -> Result<f64>
where
    F: Fn([f64; 2]) -> ([f64; 2], Mat2),
{
    const H: f64 = 1e-4;
    let g1 = boundary_velocity(map_jac, radius, t);
    let speed = g1[0].hypot(g1[1]);
    if speed < 1e-10 {
        return Err(Error::Degenerate(format!(
            "boundary parametrization has vanishing speed at t = {t}"
        )));
    }
    let gp = boundary_velocity(map_jac, radius, t + H);
    let gm = boundary_velocity(map_jac, radius, t - H);
    let g2 = [(gp[0] - gm[0]) / (2.0 * H), (gp[1] - gm[1]) / (2.0 * H)];
    Ok((g1[0] * g2[1] - g1[1] * g2[0]) / speed.powi(3))
}
