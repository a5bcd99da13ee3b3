//! Closed-form exponents, weights, and comparison profiles.
//!
//! The operator L_μ = −Δ − μ/d_K² near a codimension-k boundary submanifold K
//! is governed by the roots of the indicial equation
//!
//! ```text
//!     γ² + k·γ + μ = 0,      γ± = −k/2 ± √(k²/4 − μ),
//! ```
//!
//! real exactly when μ ≤ k²/4 (beyond that the quadratic form is unbounded
//! below and nothing in this crate applies). The larger root γ₊ sets every
//! boundary rate near K: the eigenfunction behaves like d·d_K^{γ₊}, the heat
//! kernel picks up (d_K/(d_K+√t))^{γ₊} factors, the Green and Martin kernels
//! decay like d_K^{γ₊} on approach to K. At the critical coupling μ = k²/4
//! the roots collide at −k/2 and logarithmic corrections appear in the Green
//! and Martin estimates for the extreme case k = N (K a boundary point).
//!
//! This module holds only closed-form expressions evaluated at exact
//! geometric data: no grids, no PDE solves. The solvers elsewhere in the
//! crate compare their output against these profiles, fitting the one
//! constant the theory leaves free (e.g. the Gaussian rate), never adjusting
//! the exponents.

use serde::{Deserialize, Serialize};

use crate::geometry::PointGeometry;
use crate::{Error, Result};

/// Tolerance under which the discriminant k²/4 − μ is treated as zero
/// (critical coupling, double root).
const CRITICAL_TOL: f64 = 1e-12;

/// The roots γ± of γ² + kγ + μ = 0 for a codimension-k singular set with
/// coupling μ ≤ k²/4.
///
/// Invariants maintained by construction: γ₊ + γ₋ = −k and γ₊·γ₋ = μ (the
/// product is exact because γ₊ is computed from Vieta's formula), and
/// γ₋ ≤ −k/2 ≤ γ₊.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    /// Codimension of K inside the closure of Ω (1 ≤ k ≤ N).
    pub k: u32,
    /// Coupling constant of the Hardy potential.
    pub mu: f64,
    /// Larger root; governs boundary rates near K.
    pub gamma_plus: f64,
    /// Smaller root; appears in the trace weight W.
    pub gamma_minus: f64,
}

impl ExponentPair {
    /// Whether the coupling is critical (double root γ± = −k/2).
    pub fn is_critical(&self) -> bool {
        let k = self.k as f64;
        k * k / 4.0 - self.mu <= CRITICAL_TOL
    }

    /// Whether this pair sits in the log-corrected regime γ₊ = −N/2 for the
    /// given ambient dimension (possible only when k = N and μ = N²/4).
    pub fn is_log_critical(&self, n: u32) -> bool {
        self.k == n && self.is_critical()
    }
}

/// Both roots of γ² + kγ + μ = 0, ordered γ₊ ≥ γ₋.
///
/// Rejects μ > k²/4: the discriminant turns negative and the quadratic form
/// of L_μ is unbounded below — outside the scope of every estimate here.
///
/// γ₋ = −k/2 − √(k²/4 − μ) is computed directly (no cancellation) and
/// γ₊ = μ/γ₋ by Vieta, which keeps γ₊ accurate in absolute terms even when
/// μ → 0 makes the naive subtraction cancel.
pub fn exponents(k: u32, mu: f64) -> Result<ExponentPair> {
    if k < 1 {
        return Err(Error::Validation(format!(
            "codimension k must be at least 1, got {k}"
        )));
    }
    if !mu.is_finite() {
        return Err(Error::Validation(format!("coupling mu = {mu} is not finite")));
    }
    let kf = k as f64;
    let quarter = kf * kf / 4.0;
    if mu > quarter {
        return Err(Error::Validation(format!(
            "mu = {mu} exceeds k²/4 = {quarter}: negative discriminant, \
             operator unbounded below"
        )));
    }
    let disc = (quarter - mu).max(0.0);
    let s = disc.sqrt();
    let gamma_minus = -kf / 2.0 - s;
    // Vieta: γ₊·γ₋ = μ exactly; γ₋ < 0 always since k ≥ 1.
    let gamma_plus = if mu == 0.0 { 0.0 } else { mu / gamma_minus };
    Ok(ExponentPair {
        k,
        mu,
        gamma_plus,
        gamma_minus,
    })
}

/// Which part of the boundary a measure is supported on, for the critical
/// exponent of the semilinear problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupportKind {
    /// Arbitrary support: the minimum of the two regimes applies.
    General,
    /// Support contained in K.
    OnK,
    /// Support away from K.
    OffK,
}

/// Critical exponent p for solvability of L_μu + |u|^{p−1}u = 0 with measure
/// boundary data:
///
/// * support away from K:  p_∂Ω = (N+1)/(N−1),
/// * support on K:         p_K  = (N+γ₊+1)/(N+γ₊−1),
/// * general support:      min(p_∂Ω, p_K).
///
/// The combination (k = N, μ = N²/4, support on K) is rejected: there the
/// pure power threshold is replaced by a log-corrected integral condition,
/// and [`crate::semilinear::subcritical_check`] with q > 0 must be used
/// instead.
pub fn critical_exponent(n: u32, pair: &ExponentPair, support: SupportKind) -> Result<f64> {
    if n < 3 {
        return Err(Error::Validation(format!(
            "critical exponents require N ≥ 3, got N = {n}"
        )));
    }
    let nf = n as f64;
    let p_off = (nf + 1.0) / (nf - 1.0);
    let p_on = || -> Result<f64> {
        if pair.is_log_critical(n) && matches!(support, SupportKind::OnK) {
            return Err(Error::Validation(
                "k = N with critical coupling: the power threshold on K is \
                 log-corrected; use the log-critical subcriticality check"
                    .into(),
            ));
        }
        let denom = nf + pair.gamma_plus - 1.0;
        if denom <= 0.0 {
            return Err(Error::Validation(format!(
                "N + γ₊ − 1 = {denom} must be positive for the K-supported branch"
            )));
        }
        Ok((nf + pair.gamma_plus + 1.0) / denom)
    };
    match support {
        SupportKind::OffK => Ok(p_off),
        SupportKind::OnK => p_on(),
        SupportKind::General => Ok(p_off.min(p_on()?)),
    }
}

/// Tags for the closed-form comparison profiles and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    HeatSmallTime,
    HeatLargeTime,
    GreenGeneric,
    GreenLogCritical,
    MartinGeneric,
    MartinLogCritical,
    WeightW,
    WeightTildeW,
}

impl ProfileKind {
    /// The log-critical tags are meaningful only when γ₊ = −N/2, i.e. k = N
    /// with critical coupling.
    pub fn validate(&self, pair: &ExponentPair, n: u32) -> Result<()> {
        match self {
            ProfileKind::GreenLogCritical | ProfileKind::MartinLogCritical => {
                if pair.is_log_critical(n) {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "{self:?} requires γ₊ = −N/2 (k = N = {n} with μ = N²/4); \
                         got k = {}, μ = {}",
                        pair.k, pair.mu
                    )))
                }
            }
            _ => Ok(()),
        }
    }
}

/// Small-time heat-kernel comparison profile.
///
/// Returns `(amplitude, gauss_arg)` where
///
/// ```text
/// amplitude = d(x)/(d(x)+√t) · d(y)/(d(y)+√t)
///           · (d_K(x)/(d_K(x)+√t))^{γ₊} · (d_K(y)/(d_K(y)+√t))^{γ₊} · t^{−N/2}
/// gauss_arg = |x−y|²/t
/// ```
///
/// The Gaussian factor e^{−C·gauss_arg} carries a non-explicit constant, so
/// the argument is returned separately and checkers fit C from data.
pub fn heat_profile(
    x: &PointGeometry,
    y: &PointGeometry,
    dist_xy: f64,
    t: f64,
    pair: &ExponentPair,
    n: u32,
) -> Result<(f64, f64)> {
    if t <= 0.0 {
        return Err(Error::Validation(format!("time t = {t} must be positive")));
    }
    if x.d <= 0.0 || y.d <= 0.0 || x.d_k <= 0.0 || y.d_k <= 0.0 {
        return Err(Error::Validation(
            "heat profile needs interior points (d > 0, d_K > 0)".into(),
        ));
    }
    let st = t.sqrt();
    let gp = pair.gamma_plus;
    let amplitude = (x.d / (x.d + st))
        * (y.d / (y.d + st))
        * (x.d_k / (x.d_k + st)).powf(gp)
        * (y.d_k / (y.d_k + st)).powf(gp)
        * t.powf(-(n as f64) / 2.0);
    Ok((amplitude, dist_xy * dist_xy / t))
}

/// Two-sided Green-function comparison profile.
///
/// Generic branch (γ₊ > −N/2):
///
/// ```text
/// |x−y|^{2−N} · min{1, d(x)d(y)/|x−y|²}
///            · ( d_K(x)d_K(y) / ((d_K(x)+|x−y|)(d_K(y)+|x−y|)) )^{γ₊}
/// ```
///
/// In the log-corrected regime γ₊ = −N/2 (k = N, μ = N²/4) the same
/// expression is kept and the additional term
///
/// ```text
/// d(x)d(y)/(d_K(x)d_K(y))^{N/2} · | ln min{ |x−y|^{−2}, (d(x)d(y))^{−1} } |
/// ```
///
/// is added; it dominates when both points approach K.
pub fn green_profile(
    x: &PointGeometry,
    y: &PointGeometry,
    dist_xy: f64,
    pair: &ExponentPair,
    n: u32,
) -> Result<f64> {
    if dist_xy <= 0.0 {
        return Err(Error::Validation(
            "green profile rejected: x = y (profile is singular on the diagonal)".into(),
        ));
    }
    if x.d <= 0.0 || y.d <= 0.0 || x.d_k <= 0.0 || y.d_k <= 0.0 {
        return Err(Error::Validation(
            "green profile needs interior points (d > 0, d_K > 0)".into(),
        ));
    }
    let nf = n as f64;
    let r = dist_xy;
    let gp = pair.gamma_plus;
    let near_field = (x.d * y.d / (r * r)).min(1.0);
    let k_factor =
        (x.d_k * y.d_k / ((x.d_k + r) * (y.d_k + r))).powf(gp);
    let mut value = r.powf(2.0 - nf) * near_field * k_factor;
    if pair.is_log_critical(n) {
        let log_arg = (1.0 / (r * r)).min(1.0 / (x.d * y.d));
        value += x.d * y.d / (x.d_k * y.d_k).powf(nf / 2.0) * log_arg.ln().abs();
    }
    Ok(value)
}

/// Martin-kernel comparison profile for a boundary point ξ at distance
/// `dist_x_xi` from the interior point x.
///
/// Generic branch:
///
/// ```text
/// d(x)/|x−ξ|^N · ( d_K(x)/(d_K(x)+|x−ξ|)² )^{γ₊}
/// ```
///
/// Log-corrected branch (k = N, μ = N²/4) adds d(x)/d_K(x)^{N/2}·|ln|x−ξ||,
/// which carries the kernel's extra growth at the singular boundary point.
pub fn martin_profile(
    x: &PointGeometry,
    dist_x_xi: f64,
    pair: &ExponentPair,
    n: u32,
) -> Result<f64> {
    if x.d <= 0.0 || x.d_k <= 0.0 {
        return Err(Error::Validation(
            "martin profile needs an interior point (d > 0, d_K > 0)".into(),
        ));
    }
    if dist_x_xi <= 0.0 {
        return Err(Error::Validation(
            "martin profile needs |x−ξ| > 0 (ξ on the boundary, x interior)".into(),
        ));
    }
    let nf = n as f64;
    let r = dist_x_xi;
    let mut value =
        x.d / r.powf(nf) * (x.d_k / ((x.d_k + r) * (x.d_k + r))).powf(pair.gamma_plus);
    if pair.is_log_critical(n) {
        value += x.d / x.d_k.powf(nf / 2.0) * r.ln().abs();
    }
    Ok(value)
}

/// The near-K trace weight
///
/// ```text
/// W = (d + d̃_K²) · d̃_K^{γ₋}                    (μ < k²/4)
/// W = (d + d̃_K²) · d̃_K^{−k/2} · |ln d̃_K|      (μ = k²/4)
/// ```
///
/// Harmonic functions with finite boundary trace are measured against this
/// weight; it blows up on approach to K exactly as fast as the most singular
/// Martin kernel.
pub fn weight_w(geo: &PointGeometry, pair: &ExponentPair) -> Result<f64> {
    if geo.d_tilde_k <= 0.0 {
        return Err(Error::Validation(
            "weight W needs d̃_K > 0 (undefined on K itself)".into(),
        ));
    }
    let dt = geo.d_tilde_k;
    let base = geo.d + dt * dt;
    let value = if pair.is_critical() {
        base * dt.powf(-(pair.k as f64) / 2.0) * dt.ln().abs()
    } else {
        base * dt.powf(pair.gamma_minus)
    };
    Ok(value)
}

/// Quintic smoothstep: 0 for s ≤ 0, 1 for s ≥ 1, 6s⁵−15s⁴+10s³ between.
/// C² across both knots, monotone — fixed once for determinism.
fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

/// Cutoff η(d̃_K): identically 1 for d̃_K ≤ β₀/4, identically 0 for
/// d̃_K ≥ β₀/2, C² monotone in between.
pub fn cutoff_eta(d_tilde_k: f64, beta0: f64) -> f64 {
    1.0 - smoothstep((d_tilde_k - beta0 / 4.0) / (beta0 / 4.0))
}

/// The globally defined trace weight W̃ = (1 − η) + η·W: equal to W in the
/// inner collar d̃_K ≤ β₀/4, equal to 1 outside d̃_K ≥ β₀/2, and a C² blend
/// in between. β₀ must lie in (0, 1] so the critical log factor |ln d̃_K| is
/// bounded away from its zero at d̃_K = 1 on the blending region.
pub fn weight_tilde_w(geo: &PointGeometry, pair: &ExponentPair, beta0: f64) -> Result<f64> {
    if !(beta0 > 0.0 && beta0 <= 1.0) {
        return Err(Error::Validation(format!(
            "beta0 = {beta0} must lie in (0, 1]"
        )));
    }
    let eta = cutoff_eta(geo.d_tilde_k, beta0);
    if eta == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - eta) + eta * weight_w(geo, pair)?)
}
