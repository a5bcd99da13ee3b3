//! Exact geometry of the unit-ball domain and its singular boundary sets.
//!
//! The domain is always Ω = B(0,1) ⊂ ℝ^N (N ∈ {2,3}), so every distance has
//! a closed form and the discretization never owns the geometry. Three
//! singular sets K ⊂ ∂Ω are supported:
//!
//! * the whole boundary K = ∂Ω (codimension 1),
//! * a single boundary point K = {p}, p the north pole (codimension N),
//! * the equatorial circle K = {x₃ = 0, |x| = 1} (codimension 2, N = 3).
//!
//! For an interior point x the quantities produced are
//!
//! * d(x) = 1 − |x|, the distance to ∂Ω,
//! * d_K(x), the Euclidean distance to K,
//! * d̃_K(x)² = d(x)² + dist_{∂Ω}(ξ_x, K)², the smoothed distance built from
//!   the geodesic distance of the boundary anchor ξ_x = x/|x| to K,
//! * ξ_x itself.
//!
//! They satisfy d ≤ d_K ≤ d̃_K ≤ C·d_K pointwise (the chord/arc comparison
//! on the sphere gives C ≤ √(π²+1)), so either distance may play the role of
//! "distance to K" in two-sided estimates.
//!
//! The module also constructs the admissible balls of the interior Harnack
//! machinery — a Euclidean ball deep inside, a boundary cylinder at ∂Ω away
//! from K, and a corner set straddling K — and integrates the doubling
//! weight d²·d_K^γ over them by midpoint quadrature.

use serde::{Deserialize, Serialize};

use crate::model::{exponents, ExponentPair};
use crate::{Error, Result};

/// Which singular set K ⊂ ∂Ω the Hardy potential concentrates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KKind {
    /// K = ∂Ω, codimension 1.
    WholeBoundary,
    /// K = {north pole}, codimension N.
    BoundaryPoint,
    /// K = equatorial circle of S², codimension 2; requires N = 3.
    EquatorialCircle,
}

/// A fully validated problem instance: dimension, singular set, coupling,
/// and the exponent pair they generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    /// Ambient dimension N ∈ {2, 3}.
    pub n: u32,
    /// Singular set.
    pub k_kind: KKind,
    /// Hardy coupling μ ≤ k²/4.
    pub mu: f64,
    /// Roots of γ² + kγ + μ = 0 for the codimension k of `k_kind`.
    pub pair: ExponentPair,
}

#[derive(Deserialize)]
struct RawProblemSpec {
    n: u32,
    k_kind: KKind,
    mu: f64,
}

impl TryFrom<RawProblemSpec> for ProblemSpec {
    type Error = Error;
    fn try_from(raw: RawProblemSpec) -> Result<Self> {
        ProblemSpec::new(raw.n, raw.k_kind, raw.mu)
    }
}

impl<'de> Deserialize<'de> for ProblemSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawProblemSpec::deserialize(deserializer)?;
        ProblemSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl ProblemSpec {
    /// Validate and construct. Rejects N ∉ {2, 3}, the equatorial circle in
    /// N ≠ 3, and μ > k²/4.
    pub fn new(n: u32, k_kind: KKind, mu: f64) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::Validation(format!(
                "ambient dimension must be 2 or 3, got {n}"
            )));
        }
        if matches!(k_kind, KKind::EquatorialCircle) && n != 3 {
            return Err(Error::Validation(
                "the equatorial circle needs N = 3".into(),
            ));
        }
        let k = match k_kind {
            KKind::WholeBoundary => 1,
            KKind::BoundaryPoint => n,
            KKind::EquatorialCircle => 2,
        };
        let pair = exponents(k, mu)?;
        Ok(ProblemSpec {
            n,
            k_kind,
            mu,
            pair,
        })
    }

    /// Codimension of K in the closure of Ω.
    pub fn codim(&self) -> u32 {
        self.pair.k
    }

    /// The north pole p: the singular point for [`KKind::BoundaryPoint`],
    /// and the reference boundary point generally ((0,1,0) in N = 2,
    /// (0,0,1) in N = 3).
    pub fn pole(&self) -> [f64; 3] {
        if self.n == 2 {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        }
    }
}

/// Distances of one interior point to the boundary and to K, plus the
/// boundary anchor ξ = x/|x|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointGeometry {
    /// d(x) = 1 − |x|, distance to ∂Ω.
    pub d: f64,
    /// Euclidean distance to K.
    pub d_k: f64,
    /// Smoothed distance √(d² + arc(ξ_x, K)²); equals d when K = ∂Ω.
    pub d_tilde_k: f64,
    /// Radial projection of x onto ∂Ω.
    pub xi: [f64; 3],
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm(sub(a, b))
}

/// Exact distances of an interior point x to ∂Ω and K.
///
/// Rejects points outside the open ball, the origin (no boundary anchor),
/// points on the x₃-axis for the equatorial circle (no azimuth), and a
/// nonzero third coordinate when N = 2.
pub fn point_geometry(spec: &ProblemSpec, x: [f64; 3]) -> Result<PointGeometry> {
    if spec.n == 2 && x[2] != 0.0 {
        return Err(Error::Validation(format!(
            "N = 2 points live in the plane x₃ = 0, got x₃ = {}",
            x[2]
        )));
    }
    let r = norm(x);
    if r >= 1.0 {
        return Err(Error::Validation(format!(
            "point with |x| = {r} is not in the open unit ball"
        )));
    }
    if r == 0.0 {
        return Err(Error::Validation(
            "the origin has no boundary anchor (all of ∂Ω is equidistant)".into(),
        ));
    }
    let d = 1.0 - r;
    let xi = [x[0] / r, x[1] / r, x[2] / r];
    let (d_k, arc) = match spec.k_kind {
        KKind::WholeBoundary => (d, 0.0),
        KKind::BoundaryPoint => {
            let p = spec.pole();
            let d_k = dist(x, p);
            let arc = dot(xi, p).clamp(-1.0, 1.0).acos();
            (d_k, arc)
        }
        KKind::EquatorialCircle => {
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if rho == 0.0 {
                return Err(Error::Validation(
                    "points on the x₃-axis have no nearest point on the equator".into(),
                ));
            }
            let d_k = ((rho - 1.0) * (rho - 1.0) + x[2] * x[2]).sqrt();
            let arc = (xi[2].abs().clamp(0.0, 1.0)).asin();
            (d_k, arc)
        }
    };
    let d_tilde_k = (arc * arc + d * d).sqrt();
    Ok(PointGeometry {
        d,
        d_k,
        d_tilde_k,
        xi,
    })
}

/// Tunable constants of the Harnack-ball construction and the collar widths.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoParams {
    /// Interior/boundary switch: a Euclidean ball is used when d(x) > b·r.
    pub b: f64,
    /// Corner switch: the boundary cylinder is used when d_K(x) > b·c_xi·r.
    pub c_xi: f64,
    /// Width of the collar around K on which the trace weight W is active.
    pub beta0: f64,
    /// Upper bound on admissible Harnack radii.
    pub beta1: f64,
}

impl Default for GeoParams {
    fn default() -> Self {
        GeoParams {
            b: 1.5,
            c_xi: 2.0,
            beta0: 0.5,
            beta1: 1.0 / 16.0,
        }
    }
}

/// Which of the three admissible-ball shapes was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnackBranch {
    /// Euclidean ball B(x, r), fully interior.
    Interior,
    /// Boundary cylinder: tangential radius r, radial slab |δ(y)| < r + d(x),
    /// on the same hemisphere as x.
    BoundaryDisk,
    /// Corner set straddling K: slab conditions in the along-K,
    /// across-K-in-∂Ω, and radial directions.
    Corner,
}

/// An admissible ball 𝓑(x, r) for the interior Harnack inequality.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HarnackBall {
    pub center: [f64; 3],
    pub r: f64,
    pub branch: HarnackBranch,
    /// d(center), cached at construction.
    pub d_center: f64,
    /// d_K(center), cached at construction.
    pub d_k_center: f64,
}

/// Select the admissible ball at center x and radius r (Euclidean ball,
/// boundary cylinder, or corner set) according to d(x) and d_K(x).
///
/// Requires 0 < r < β₁. For K = ∂Ω there is no separate corner regime: any
/// center with d(x) ≤ b·r gets the boundary cylinder.
pub fn harnack_ball(
    spec: &ProblemSpec,
    params: &GeoParams,
    x: [f64; 3],
    r: f64,
) -> Result<HarnackBall> {
    if !(r > 0.0 && r < params.beta1) {
        return Err(Error::Validation(format!(
            "harnack radius r = {r} must lie in (0, beta1 = {})",
            params.beta1
        )));
    }
    let geo = point_geometry(spec, x)?;
    let branch = if geo.d > params.b * r {
        HarnackBranch::Interior
    } else if matches!(spec.k_kind, KKind::WholeBoundary) {
        HarnackBranch::BoundaryDisk
    } else if geo.d_k > params.b * params.c_xi * r {
        HarnackBranch::BoundaryDisk
    } else {
        HarnackBranch::Corner
    };
    Ok(HarnackBall {
        center: x,
        r,
        branch,
        d_center: geo.d,
        d_k_center: geo.d_k,
    })
}

/// Wrap an angle difference into (−π, π].
fn wrap_angle(mut t: f64) -> f64 {
    use std::f64::consts::PI;
    while t > PI {
        t -= 2.0 * PI;
    }
    while t <= -PI {
        t += 2.0 * PI;
    }
    t
}

impl HarnackBall {
    /// Membership test for interior points y. Points outside the open ball
    /// Ω are never members.
    ///
    /// * `Interior`: |y − x| < r.
    /// * `BoundaryDisk`: tangential displacement |y − ⟨y,n⟩n| < r along the
    ///   radial direction n = x/|x|, radial slab |δ(y)| < r + d(x), and
    ///   ⟨y,n⟩ > 0 (the chart is local; without the hemisphere condition the
    ///   cylinder would also capture an antipodal cap).
    /// * `Corner`: radial slab |δ(y)| < r + d(x) together with, per kind —
    ///   boundary point: arc(ξ_y, p) < r + d_K(x); equatorial circle:
    ///   along-equator arc |Δazimuth| < r and latitude arc < r + d_K(x).
    pub fn contains(&self, spec: &ProblemSpec, y: [f64; 3]) -> bool {
        let ry = norm(y);
        if ry >= 1.0 || ry == 0.0 {
            return false;
        }
        let delta = 1.0 - ry; // signed boundary distance, positive inside
        match self.branch {
            HarnackBranch::Interior => dist(y, self.center) < self.r,
            HarnackBranch::BoundaryDisk => {
                let rx = norm(self.center);
                let n = [
                    self.center[0] / rx,
                    self.center[1] / rx,
                    self.center[2] / rx,
                ];
                let yn = dot(y, n);
                if yn <= 0.0 {
                    return false;
                }
                let tang = [y[0] - yn * n[0], y[1] - yn * n[1], y[2] - yn * n[2]];
                norm(tang) < self.r && delta.abs() < self.r + self.d_center
            }
            HarnackBranch::Corner => {
                if delta.abs() >= self.r + self.d_center {
                    return false;
                }
                let xi_y = [y[0] / ry, y[1] / ry, y[2] / ry];
                match spec.k_kind {
                    KKind::WholeBoundary => {
                        // K = ∂Ω: every boundary direction is in K, so the
                        // corner set coincides with the boundary cylinder.
                        let rx = norm(self.center);
                        let n = [
                            self.center[0] / rx,
                            self.center[1] / rx,
                            self.center[2] / rx,
                        ];
                        let yn = dot(y, n);
                        if yn <= 0.0 {
                            return false;
                        }
                        let tang =
                            [y[0] - yn * n[0], y[1] - yn * n[1], y[2] - yn * n[2]];
                        norm(tang) < self.r
                    }
                    KKind::BoundaryPoint => {
                        let p = spec.pole();
                        let arc = dot(xi_y, p).clamp(-1.0, 1.0).acos();
                        arc < self.r + self.d_k_center
                    }
                    KKind::EquatorialCircle => {
                        let az_y = y[1].atan2(y[0]);
                        let az_x = self.center[1].atan2(self.center[0]);
                        let along = wrap_angle(az_y - az_x).abs();
                        let lat = xi_y[2].abs().clamp(0.0, 1.0).asin();
                        along < self.r && lat < self.r + self.d_k_center
                    }
                }
            }
        }
    }

    /// An axis-aligned bounding box guaranteed to contain 𝓑 ∩ Ω.
    fn bounding_box(&self, spec: &ProblemSpec) -> ([f64; 3], [f64; 3]) {
        let half = match self.branch {
            HarnackBranch::Interior => {
                return (
                    sub(self.center, [self.r, self.r, self.r]),
                    [
                        self.center[0] + self.r,
                        self.center[1] + self.r,
                        self.center[2] + self.r,
                    ],
                );
            }
            // Cylinder: |y⊥| < r and |1 − |y|| < r + d bound |y − x| by
            // 2(r + d) radially plus r tangentially.
            HarnackBranch::BoundaryDisk => 3.0 * self.r + 2.0 * self.d_center,
            // Corner: |y − anchor| < (r + d) + (2r + d_K) via the arc and
            // slab conditions; anchored at the center, add d_K for safety.
            HarnackBranch::Corner => 4.0 * self.r + 2.0 * self.d_center + 2.0 * self.d_k_center,
        };
        let mut lo = sub(self.center, [half, half, half]);
        let mut hi = [
            self.center[0] + half,
            self.center[1] + half,
            self.center[2] + half,
        ];
        for i in 0..3 {
            lo[i] = lo[i].max(-1.0);
            hi[i] = hi[i].min(1.0);
        }
        if spec.n == 2 {
            lo[2] = 0.0;
            hi[2] = 0.0;
        }
        (lo, hi)
    }
}

/// Result of integrating the doubling weight over an admissible ball.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeasureMResult {
    /// Midpoint-rule value of ∫_{𝓑(x,r) ∩ Ω} d(y)² d_K(y)^γ dy.
    pub value: f64,
    /// |value(resolution) − value(resolution/2)|: the quadrature's own
    /// refinement gap, reported as an error proxy.
    pub error_estimate: f64,
}

/// Measure of an admissible ball under the doubling weight d²·d_K^γ,
/// γ ≥ −k, by tensor midpoint quadrature over the bounding box with
/// membership rejection.
pub fn measure_m(
    spec: &ProblemSpec,
    ball: &HarnackBall,
    gamma: f64,
    resolution: usize,
) -> Result<MeasureMResult> {
    if gamma < -(spec.codim() as f64) {
        return Err(Error::Validation(format!(
            "doubling weight needs γ ≥ −k = {}, got γ = {gamma}",
            -(spec.codim() as f64)
        )));
    }
    if resolution < 8 {
        return Err(Error::Validation(format!(
            "quadrature resolution must be at least 8, got {resolution}"
        )));
    }
    let fine = integrate_ball(spec, ball, gamma, resolution)?;
    let coarse = integrate_ball(spec, ball, gamma, resolution / 2)?;
    Ok(MeasureMResult {
        value: fine,
        error_estimate: (fine - coarse).abs(),
    })
}

fn integrate_ball(
    spec: &ProblemSpec,
    ball: &HarnackBall,
    gamma: f64,
    resolution: usize,
) -> Result<f64> {
    let (lo, hi) = ball.bounding_box(spec);
    let m = resolution;
    let hx = (hi[0] - lo[0]) / m as f64;
    let hy = (hi[1] - lo[1]) / m as f64;
    let (zs, cell): (Vec<f64>, f64) = if spec.n == 2 {
        (vec![0.0], hx * hy)
    } else {
        let hz = (hi[2] - lo[2]) / m as f64;
        (
            (0..m).map(|k| lo[2] + (k as f64 + 0.5) * hz).collect(),
            hx * hy * hz,
        )
    };
    let mut total = 0.0;
    for i in 0..m {
        let x = lo[0] + (i as f64 + 0.5) * hx;
        for j in 0..m {
            let y = lo[1] + (j as f64 + 0.5) * hy;
            for &z in &zs {
                let pt = [x, y, z];
                if !ball.contains(spec, pt) {
                    continue;
                }
                // Members are interior and off the degenerate sets except on
                // a measure-zero locus; skip the handful that fail.
                if let Ok(geo) = point_geometry(spec, pt) {
                    total += geo.d * geo.d * geo.d_k.powf(gamma);
                }
            }
        }
    }
    Ok(total * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec_whole() -> ProblemSpec {
        ProblemSpec::new(3, KKind::WholeBoundary, 0.25).unwrap()
    }
    fn spec_point() -> ProblemSpec {
        ProblemSpec::new(3, KKind::BoundaryPoint, 2.0).unwrap()
    }
    fn spec_circle() -> ProblemSpec {
        ProblemSpec::new(3, KKind::EquatorialCircle, 1.0).unwrap()
    }

    #[test]
    fn codimensions_per_kind() {
        assert_eq!(spec_whole().codim(), 1);
        assert_eq!(spec_point().codim(), 3);
        assert_eq!(spec_circle().codim(), 2);
        assert_eq!(
            ProblemSpec::new(2, KKind::BoundaryPoint, 0.5).unwrap().codim(),
            2
        );
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ProblemSpec::new(4, KKind::WholeBoundary, 0.0).is_err());
        assert!(ProblemSpec::new(2, KKind::EquatorialCircle, 0.0).is_err());
        // μ above k²/4 for the kind's codimension
        assert!(ProblemSpec::new(3, KKind::WholeBoundary, 0.3).is_err());
        assert!(ProblemSpec::new(3, KKind::BoundaryPoint, 2.26).is_err());
    }

    #[test]
    fn whole_boundary_distances_coincide() {
        let spec = spec_whole();
        for x in [[0.3, 0.1, -0.2], [0.0, 0.0, 0.9], [-0.5, 0.4, 0.1]] {
            let g = point_geometry(&spec, x).unwrap();
            assert_abs_diff_eq!(g.d, g.d_k, epsilon = 1e-15);
            assert_abs_diff_eq!(g.d, g.d_tilde_k, epsilon = 1e-15);
        }
    }

    #[test]
    fn boundary_point_distances_worked_values() {
        let spec = spec_point();
        // On the pole axis: d = d_K = d̃_K.
        let g = point_geometry(&spec, [0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(g.d, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_k, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_tilde_k, 0.5, epsilon = 1e-15);
        // On the equatorial axis: arc = π/2.
        let g = point_geometry(&spec, [0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g.d, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_k, 1.25f64.sqrt(), epsilon = 1e-15);
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            g.d_tilde_k,
            (pi * pi / 4.0 + 0.25).sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn circle_distances_worked_values() {
        let spec = spec_circle();
        // In-plane point: nearest equator point along the same ray.
        let g = point_geometry(&spec, [0.6, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g.d, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_k, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(g.d_tilde_k, 0.4, epsilon = 1e-15);
        // Tilted point.
        let g = point_geometry(&spec, [0.6, 0.0, 0.3]).unwrap();
        let rho: f64 = 0.6;
        let expect_dk = (rho - 1.0).hypot(0.3);
        assert_abs_diff_eq!(g.d_k, expect_dk, epsilon = 1e-15);
        assert!(g.d <= g.d_k && g.d_k <= g.d_tilde_k);
    }

    #[test]
    fn degenerate_points_rejected() {
        assert!(point_geometry(&spec_whole(), [0.0, 0.0, 0.0]).is_err());
        assert!(point_geometry(&spec_whole(), [1.0, 0.0, 0.0]).is_err());
        assert!(point_geometry(&spec_whole(), [0.8, 0.8, 0.0]).is_err());
        // x₃-axis is degenerate only for the circle kind
        assert!(point_geometry(&spec_circle(), [0.0, 0.0, 0.4]).is_err());
        assert!(point_geometry(&spec_point(), [0.0, 0.0, 0.4]).is_ok());
        // planar constraint in N = 2
        let spec2 = ProblemSpec::new(2, KKind::WholeBoundary, 0.25).unwrap();
        assert!(point_geometry(&spec2, [0.1, 0.1, 0.1]).is_err());
        assert!(point_geometry(&spec2, [0.1, 0.1, 0.0]).is_ok());
    }

    #[test]
    fn harnack_branch_selection() {
        let spec = spec_point();
        let params = GeoParams::default();
        let r = 0.05;
        let b = harnack_ball(&spec, &params, [0.05, 0.0, 0.0], r).unwrap();
        assert_eq!(b.branch, HarnackBranch::Interior);
        // near boundary, far from the pole
        let b = harnack_ball(&spec, &params, [0.97, 0.0, 0.0], r).unwrap();
        assert_eq!(b.branch, HarnackBranch::BoundaryDisk);
        // near the pole
        let b = harnack_ball(&spec, &params, [0.0, 0.0, 0.97], r).unwrap();
        assert_eq!(b.branch, HarnackBranch::Corner);
        // whole boundary never has a corner
        let b = harnack_ball(&spec_whole(), &params, [0.97, 0.0, 0.0], r).unwrap();
        assert_eq!(b.branch, HarnackBranch::BoundaryDisk);
        // radius cap enforced
        assert!(harnack_ball(&spec, &params, [0.5, 0.0, 0.0], 0.2).is_err());
    }

    #[test]
    fn harnack_ball_contains_its_center() {
        let params = GeoParams::default();
        let r = 0.05;
        for spec in [spec_whole(), spec_point(), spec_circle()] {
            for x in [
                [0.05, 0.02, 0.01],
                [0.93, 0.1, 0.05],
                [0.02, 0.01, 0.96],
                [0.7, 0.65, 0.05],
                [0.6, 0.55, 0.45],
            ] {
                let ball = harnack_ball(&spec, &params, x, r).unwrap();
                assert!(
                    ball.contains(&spec, x),
                    "center {x:?} not in its own ball ({:?}, {:?})",
                    spec.k_kind,
                    ball.branch
                );
            }
        }
    }

    #[test]
    fn boundary_disk_excludes_antipodal_cap() {
        let spec = spec_point();
        let params = GeoParams::default();
        let x = [0.97, 0.0, 0.0];
        let ball = harnack_ball(&spec, &params, x, 0.05).unwrap();
        assert_eq!(ball.branch, HarnackBranch::BoundaryDisk);
        // The antipodal point satisfies the cylinder and slab conditions but
        // sits on the far side of the domain.
        assert!(!ball.contains(&spec, [-0.97, 0.0, 0.0]));
        assert!(ball.contains(&spec, [0.96, 0.01, 0.0]));
    }

    #[test]
    fn interior_ball_measure_matches_geometry() {
        // Fully interior ball, γ = 0: the weight is d(y)² which is smooth,
        // so the midpoint value should sit near d(x)²·|B(x,r)| and the
        // refinement gap should be small.
        let spec = spec_point();
        let params = GeoParams::default();
        let x = [0.2, 0.0, 0.0];
        let r = 0.05;
        let ball = harnack_ball(&spec, &params, x, r).unwrap();
        assert_eq!(ball.branch, HarnackBranch::Interior);
        let m = measure_m(&spec, &ball, 0.0, 48).unwrap();
        let vol = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let expect = 0.8 * 0.8 * vol;
        assert!(
            (m.value - expect).abs() < 0.05 * expect,
            "value {} vs expected {expect}",
            m.value
        );
        assert!(m.error_estimate < 0.05 * m.value);
    }

    #[test]
    fn measure_doubling_is_bounded() {
        // M(x, 2r) ≤ C·M(x, r) with a modest C across branch types.
        let params = GeoParams::default();
        for (spec, gamma) in [
            (spec_point(), 2.0 * (-1.0)),
            (spec_circle(), -0.5),
            (spec_whole(), 0.5),
        ] {
            for x in [[0.4, 0.1, 0.05], [0.9, 0.1, 0.05], [0.03, 0.02, 0.93]] {
                let r = 0.02;
                let small = harnack_ball(&spec, &params, x, r).unwrap();
                let big = harnack_ball(&spec, &params, x, 2.0 * r).unwrap();
                let ms = measure_m(&spec, &small, gamma, 32).unwrap();
                let mb = measure_m(&spec, &big, gamma, 32).unwrap();
                assert!(ms.value > 0.0 && mb.value > 0.0);
                let ratio = mb.value / ms.value;
                assert!(
                    ratio < 64.0,
                    "doubling ratio {ratio} too large at {x:?} ({:?})",
                    spec.k_kind
                );
            }
        }
    }

    #[test]
    fn measure_rejects_bad_inputs() {
        let spec = spec_circle();
        let params = GeoParams::default();
        let ball = harnack_ball(&spec, &params, [0.5, 0.0, 0.0], 0.03).unwrap();
        // γ below −k
        assert!(measure_m(&spec, &ball, -2.5, 32).is_err());
        // resolution too coarse
        assert!(measure_m(&spec, &ball, 0.0, 4).is_err());
    }

    proptest! {
        #[test]
        fn distance_ordering_holds_everywhere(
            ax in -0.99f64..0.99,
            ay in -0.99f64..0.99,
            az in -0.99f64..0.99,
            kind in 0u32..3,
        ) {
            let spec = match kind {
                0 => spec_whole(),
                1 => spec_point(),
                _ => spec_circle(),
            };
            let x = [ax, ay, az];
            let r = norm(x);
            prop_assume!(r > 1e-6 && r < 0.999);
            prop_assume!((ax * ax + ay * ay).sqrt() > 1e-6);
            let g = point_geometry(&spec, x).unwrap();
            prop_assert!(g.d > 0.0);
            prop_assert!(g.d <= g.d_k + 1e-15);
            prop_assert!(g.d_k <= g.d_tilde_k + 1e-15);
            // chord/arc comparability keeps d̃_K within a fixed multiple
            prop_assert!(g.d_tilde_k <= 3.5 * g.d_k + 1e-15);
        }

        #[test]
        fn harnack_membership_within_bounding_box(
            ax in -0.9f64..0.9,
            ay in -0.9f64..0.9,
            az in -0.9f64..0.9,
            px in -1.0f64..1.0,
            py in -1.0f64..1.0,
            pz in -1.0f64..1.0,
        ) {
            let spec = spec_circle();
            let params = GeoParams::default();
            let x = [ax, ay, az];
            prop_assume!(norm(x) > 0.05 && norm(x) < 0.99);
            prop_assume!((ax * ax + ay * ay).sqrt() > 0.05);
            let ball = harnack_ball(&spec, &params, x, 0.04).unwrap();
            let y = [px, py, pz];
            if ball.contains(&spec, y) {
                let (lo, hi) = ball.bounding_box(&spec);
                for i in 0..3 {
                    prop_assert!(y[i] >= lo[i] - 1e-12 && y[i] <= hi[i] + 1e-12,
                        "member {y:?} escapes bounding box axis {i}");
                }
            }
        }
    }
}
