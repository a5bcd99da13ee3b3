//! Principal eigenpair of the discretized operator and the discrete Hardy
//! constant.
//!
//! The ground state (λ, φ) of A = −Δ_h − μ/d_eff² drives everything
//! downstream: the weighted heat semigroup is conjugated by φ, the Green
//! operator's trace identities use λ, and the eigenfunction's own boundary
//! behavior φ ≍ d·d_K^{γ₊} is one of the headline rates this crate checks.
//!
//! The solver is inverse iteration with shift 0 — legitimate because the
//! assembled operator is positive definite for every admissible coupling
//! (the potential floor in [`crate::discretization`] keeps the discrete form
//! coercive up to and including μ = k²/4). Each outer step solves A w = v by
//! preconditioned conjugate gradients with a tolerance proportional to the
//! current eigenresidual, so early iterations are cheap and late ones sharp.
//! If positive definiteness fails anyway (it can on externally modified
//! operators), the solve restarts with the spectrum shifted below its
//! Gershgorin floor and then sharpens the shift toward the Rayleigh value,
//! keeping a safety margin of a few residual norms; the indefiniteness guard
//! inside CG catches any overshoot and the margin widens.
//!
//! The discrete Hardy constant — the smallest θ with
//! ∫|∇u|² ≥ θ ∫ u²/d_eff² on the lattice — is the ground value of the
//! pencil A₀ u = θ D u, computed on the symmetrized operator
//! D^{−1/2} A₀ D^{−1/2}. Its spectrum clusters at the bottom (the continuum
//! infimum is not attained), so the iteration stops on stagnation of the
//! value, not the vector.

use serde::{Deserialize, Serialize};

use crate::discretization::solver::{cg_solve, CgOptions};
use crate::discretization::sparse::{dot, nrm2, AffineOp, DiagScaledOp, LinearOperator, SparseSymOp};
use crate::discretization::{assemble_l_mu_coupling, build_grid, BuildOptions, Grid};
use crate::geometry::ProblemSpec;
use crate::report::{fit_loglog, FitResult};
use crate::{Error, Result};

/// Controls for the eigensolvers.
#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Target scaled eigenresidual ‖Av − λv‖/(max(|λ|, 1)·‖v‖).
    pub tol: f64,
    /// Outer (inverse-iteration) budget.
    pub max_outer: usize,
    /// Inner CG budget per solve.
    pub cg_max_iter: usize,
    /// Optional starting vector (e.g. prolonged from a coarser grid).
    pub initial: Option<Vec<f64>>,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            tol: 5e-10,
            max_outer: 400,
            cg_max_iter: 50_000,
            initial: None,
        }
    }
}

/// Converged principal eigenpair.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Principal eigenvalue of the discrete operator.
    pub lambda: f64,
    /// Eigenfunction, strictly positive in exact arithmetic, normalized to
    /// h^N Σ φ² = 1.
    pub phi: Vec<f64>,
    /// Final absolute eigenresidual ‖Aφ − λφ‖₂/‖φ‖₂.
    pub residual: f64,
    /// Outer iterations consumed.
    pub iterations: usize,
    /// Gershgorin lower bound of the operator (diagnostic).
    pub gershgorin_lower: f64,
}

enum StopRule {
    /// Residual only.
    Residual,
    /// Residual, or the Rayleigh value stagnating to this relative gap on
    /// two consecutive iterations.
    ValueGap(f64),
}

struct CoreResult {
    lambda: f64,
    v: Vec<f64>,
    residual: f64,
    iterations: usize,
    value_gap: f64,
}

/// Inverse iteration with shift 0 on an SPD operator; returns a Euclidean
/// unit eigenvector.
fn smallest_eigenpair_core(
    op: &impl LinearOperator,
    start: &[f64],
    opts: &SpectralOptions,
    stop: StopRule,
) -> Result<CoreResult> {
    let n = op.dim();
    let mut v = start.to_vec();
    let nv = nrm2(&v);
    if !(nv > 0.0) {
        return Err(Error::Validation("starting vector must be nonzero".into()));
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut av = vec![0.0; n];
    let mut lambda_prev = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut last_residual = f64::INFINITY;
    for outer in 1..=opts.max_outer {
        op.apply(&v, &mut av);
        let lambda = dot(&v, &av);
        let mut res2 = 0.0;
        for i in 0..n {
            let r = av[i] - lambda * v[i];
            res2 += r * r;
        }
        let residual = res2.sqrt() / lambda.abs().max(1.0);
        last_residual = residual;
        let last_gap = ((lambda - lambda_prev) / lambda.abs().max(1.0)).abs();
        let value_stop = match stop {
            StopRule::Residual => false,
            StopRule::ValueGap(gap) => {
                if last_gap <= gap {
                    stagnant += 1;
                } else {
                    stagnant = 0;
                }
                stagnant >= 2
            }
        };
        if residual <= opts.tol || value_stop {
            return Ok(CoreResult {
                lambda,
                v,
                residual,
                iterations: outer,
                value_gap: last_gap,
            });
        }
        lambda_prev = lambda;
        let inner_tol = (0.05 * residual).clamp(1e-13, 1e-4);
        let x0: Option<Vec<f64>> = if lambda > 0.0 {
            Some(v.iter().map(|&x| x / lambda).collect())
        } else {
            None
        };
        let sol = cg_solve(
            op,
            &v,
            x0.as_deref(),
            &CgOptions {
                rel_tol: inner_tol,
                max_iter: opts.cg_max_iter,
            },
        )?;
        let nw = nrm2(&sol.x);
        if !(nw > 0.0 && nw.is_finite()) {
            return Err(Error::Numerical(
                "inverse iteration produced a degenerate vector".into(),
            ));
        }
        v = sol.x;
        for x in v.iter_mut() {
            *x /= nw;
        }
    }
    Err(Error::NonConvergence {
        what: "inverse iteration".into(),
        residual: last_residual,
        iterations: opts.max_outer,
    })
}

/// Safeguarded shifted inverse iteration for operators that are indefinite
/// at shift zero.
///
/// The first shift sits below the Gershgorin floor — certainly on the
/// coercive side — and is then sharpened toward the current Rayleigh value,
/// keeping a safety margin of a few residual norms so the shifted operator
/// stays positive definite. If a sharpened shift overshoots the bottom
/// eigenvalue, the indefiniteness guard inside CG trips; the margin then
/// widens and the shift falls back to the floor for one step. Without the
/// sharpening, a Gershgorin-sized shift (≳ 1/h² for singular potentials)
/// dwarfs the spectral gap and the iteration crawls.
fn shifted_eigenpair_core(
    op: &SparseSymOp,
    start: &[f64],
    opts: &SpectralOptions,
    gershgorin_lower: f64,
) -> Result<CoreResult> {
    let n = op.dim();
    let mut v = start.to_vec();
    let nv = nrm2(&v);
    if !(nv > 0.0) {
        return Err(Error::Validation("starting vector must be nonzero".into()));
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let floor_shift = gershgorin_lower - 0.01 * gershgorin_lower.abs() - 1e-9;
    let mut sigma = floor_shift;
    let mut margin = 4.0;
    let mut av = vec![0.0; n];
    let mut lambda_prev = f64::INFINITY;
    let mut last_residual = f64::INFINITY;
    for outer in 1..=opts.max_outer {
        op.apply(&v, &mut av);
        let lambda = dot(&v, &av);
        let mut res2 = 0.0;
        for i in 0..n {
            let r = av[i] - lambda * v[i];
            res2 += r * r;
        }
        let abs_res = res2.sqrt();
        let residual = abs_res / lambda.abs().max(1.0);
        let value_gap = ((lambda - lambda_prev) / lambda.abs().max(1.0)).abs();
        if residual <= opts.tol {
            return Ok(CoreResult {
                lambda,
                v,
                residual,
                iterations: outer,
                value_gap,
            });
        }
        last_residual = residual;
        lambda_prev = lambda;
        let cand = lambda - margin * abs_res;
        if cand > sigma {
            sigma = cand;
        }
        let shifted = AffineOp::shifted(op, 1.0, -sigma);
        let inner_tol = (0.05 * residual).clamp(1e-13, 1e-4);
        let x0: Vec<f64> = v.iter().map(|&x| x / (lambda - sigma)).collect();
        match cg_solve(
            &shifted,
            &v,
            Some(&x0),
            &CgOptions {
                rel_tol: inner_tol,
                max_iter: opts.cg_max_iter,
            },
        ) {
            Ok(sol) => {
                let nw = nrm2(&sol.x);
                if !(nw > 0.0 && nw.is_finite()) {
                    return Err(Error::Numerical(
                        "inverse iteration produced a degenerate vector".into(),
                    ));
                }
                v = sol.x;
                for x in v.iter_mut() {
                    *x /= nw;
                }
            }
            Err(Error::Numerical(_)) => {
                margin *= 4.0;
                sigma = floor_shift;
                if margin > 1e9 {
                    return Err(Error::Numerical(
                        "shift safeguard exhausted without finding a coercive shift".into(),
                    ));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NonConvergence {
        what: "shifted inverse iteration".into(),
        residual: last_residual,
        iterations: opts.max_outer,
    })
}

/// Principal eigenpair of the assembled operator on a grid.
///
/// Starts from the boundary-distance profile (or `opts.initial`), iterates
/// A⁻¹ with shift 0, and falls back to safeguarded shifted iteration if the
/// operator turns out indefinite. The returned φ is positively oriented and
/// normalized to unit lattice L² mass; the stored residual is the absolute
/// ‖Aφ − λφ‖₂/‖φ‖₂.
pub fn principal_eigenpair(
    grid: &Grid,
    op: &SparseSymOp,
    opts: &SpectralOptions,
) -> Result<SpectralResult> {
    if op.dim() != grid.node_count() {
        return Err(Error::Validation(format!(
            "operator dimension {} does not match grid with {} nodes",
            op.dim(),
            grid.node_count()
        )));
    }
    let start: Vec<f64> = match &opts.initial {
        Some(v) => {
            if v.len() != grid.node_count() {
                return Err(Error::Validation(
                    "initial vector length does not match the grid".into(),
                ));
            }
            v.clone()
        }
        None => grid.geo.iter().map(|g| g.d).collect(),
    };
    let gershgorin_lower = op.gershgorin_lower_bound();
    let core = match smallest_eigenpair_core(op, &start, opts, StopRule::Residual) {
        Ok(core) => core,
        Err(Error::Numerical(_)) => {
            // not SPD at shift 0: safeguarded shifted iteration
            shifted_eigenpair_core(op, &start, opts, gershgorin_lower)?
        }
        Err(e) => return Err(e),
    };
    let mut phi = core.v;
    // orient positively (the principal eigenvector has one sign)
    let total: f64 = phi.iter().sum();
    if total < 0.0 {
        for x in phi.iter_mut() {
            *x = -*x;
        }
    }
    // normalize the lattice L² mass to 1
    let mass = grid.inner(&phi, &phi);
    if !(mass > 0.0) {
        return Err(Error::Numerical("eigenvector has no mass".into()));
    }
    let scale = 1.0 / mass.sqrt();
    for x in phi.iter_mut() {
        *x *= scale;
    }
    Ok(SpectralResult {
        lambda: core.lambda,
        phi,
        residual: core.residual * core.lambda.abs().max(1.0),
        iterations: core.iterations,
        gershgorin_lower,
    })
}

/// Piecewise-constant prolongation of nodal values from a coarse grid to a
/// fine one (nearest coarse node; 0 in the boundary fringe the coarse grid
/// does not cover). Used to warm-start eigen solves along a mesh ladder.
pub fn prolong(coarse: &Grid, coarse_vals: &[f64], fine: &Grid) -> Vec<f64> {
    debug_assert_eq!(coarse_vals.len(), coarse.node_count());
    fine.nodes
        .iter()
        .map(|&p| coarse.nearest_node(p).map_or(0.0, |id| coarse_vals[id]))
        .collect()
}

/// Discrete Hardy constant on one grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HardyConstant {
    /// Smallest θ with ⟨A₀u, u⟩ ≥ θ ⟨u/d_w², u⟩ on the lattice, where
    /// d_w = max(d_K, h/2).
    pub theta: f64,
    /// Final scaled eigenresidual of the symmetrized pencil.
    pub residual: f64,
    /// Relative change of θ on the final iteration.
    pub value_gap: f64,
    pub iterations: usize,
}

/// Ground value of the Hardy pencil A₀ u = θ D u, D = diag(1/d_w²),
/// computed on the symmetrized operator D^{−1/2} A₀ D^{−1/2}.
///
/// Unlike operator assembly, the pencil wants the raw lattice quotient, so
/// its weight uses the barely-floored distance d_w = max(d_K, h/2): the
/// floor only suppresses the handful of staircase cells whose centers graze
/// K = ∂Ω at distances far below the lattice scale (those cells would
/// otherwise drive the quotient toward zero on their own), and it is
/// inactive for the other kinds, whose nodes keep d_K ≥ h·√N/2 naturally.
///
/// The bottom of this pencil's spectrum is a cluster, so the stopping rule
/// accepts stagnation of the value (relative gap ≤ 1e−9 twice in a row) as
/// convergence even while the residual is still settling.
pub fn hardy_constant(grid: &Grid) -> Result<HardyConstant> {
    let a0 = assemble_l_mu_coupling(grid, 0.0);
    let op = DiagScaledOp {
        a: &a0,
        scale: grid
            .geo
            .iter()
            .map(|g| g.d_k.max(grid.h / 2.0))
            .collect(),
    };
    let start: Vec<f64> = grid.geo.iter().map(|g| g.d.sqrt()).collect();
    let opts = SpectralOptions::default();
    let core = smallest_eigenpair_core(&op, &start, &opts, StopRule::ValueGap(1e-9))?;
    Ok(HardyConstant {
        theta: core.lambda,
        residual: core.residual,
        value_gap: core.value_gap,
        iterations: core.iterations,
    })
}

/// Hardy constants along a mesh ladder with an Aitken-extrapolated limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardyLadder {
    /// (h, θ_h) pairs in the order given.
    pub samples: Vec<(f64, f64)>,
    /// Aitken Δ² limit of the last three values.
    pub extrapolated: f64,
    /// Apparent convergence order log₂(Δ₁/Δ₂); NaN when increments vanish.
    pub order: f64,
}

/// Run [`hardy_constant`] on at least three mesh widths (given coarse to
/// fine) and extrapolate the limit.
pub fn hardy_ladder(spec: &ProblemSpec, hs: &[f64], build: &BuildOptions) -> Result<HardyLadder> {
    if hs.len() < 3 {
        return Err(Error::Validation(format!(
            "extrapolation needs at least three mesh widths, got {}",
            hs.len()
        )));
    }
    let mut samples = Vec::with_capacity(hs.len());
    for &h in hs {
        let grid = build_grid(spec, h, build)?;
        let hc = hardy_constant(&grid)?;
        samples.push((h, hc.theta));
    }
    let k = samples.len();
    let (t1, t2, t3) = (samples[k - 3].1, samples[k - 2].1, samples[k - 1].1);
    let d1 = t2 - t1;
    let d2 = t3 - t2;
    let denom = d2 - d1;
    let extrapolated = if denom.abs() > 1e-14 * t3.abs().max(1.0) {
        t3 - d2 * d2 / denom
    } else {
        t3
    };
    let order = if d1 * d2 > 0.0 {
        (d1 / d2).abs().log2()
    } else {
        f64::NAN
    };
    Ok(HardyLadder {
        samples,
        extrapolated,
        order,
    })
}

/// Log-log fits of the eigenfunction's boundary rates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenFits {
    /// Slope of log(φ/d) against log d_K on the approach cone to K;
    /// the theory predicts γ₊.
    pub dk_fit: FitResult,
    /// Slope of log φ against log d on a thin cone toward a boundary point
    /// away from K; the theory predicts 1. Absent when K = ∂Ω (there is no
    /// boundary away from K).
    pub d_fit: Option<FitResult>,
}

/// Fit the predicted rates φ ≍ d·d_K^{γ₊} from a converged eigenpair.
///
/// The d_K-fit samples nodes with d_K ∈ [4h, 0.2] on a narrow ray pencil
/// toward K (d ≥ 0.9·d_K, i.e. rays landing nearly normally); dividing φ by
/// d first removes the boundary factor. The pencil matters: wider cones mix
/// in tangential approach paths whose prefactor varies along the window and
/// biases the fitted exponent. The d-fit samples a cone of half-angle
/// 0.2 rad around the ray to the south pole (boundary-point kind) or the
/// north pole (equatorial circle), with d ∈ [4h, 0.3].
pub fn eigen_asymptotics_report(grid: &Grid, eig: &SpectralResult) -> Result<EigenFits> {
    let (dk_fit, d_fit) = boundary_rate_fits(grid, &eig.phi, &|_| true)?;
    Ok(EigenFits { dk_fit, d_fit })
}

/// Shared boundary-rate fitter used for eigenfunctions, Green columns, and
/// Martin kernels: all three are expected to behave like d·d_K^{γ₊} on
/// approach to the boundary (away from their own singular points, which the
/// caller masks out via `keep`).
///
/// Returns `(dk_fit, d_fit)` with the windows and pencils documented on
/// [`eigen_asymptotics_report`]; `d_fit` is `None` when K = ∂Ω.
pub(crate) fn boundary_rate_fits(
    grid: &Grid,
    values: &[f64],
    keep: &dyn Fn(usize) -> bool,
) -> Result<(FitResult, Option<FitResult>)> {
    use crate::geometry::KKind;
    let h = grid.h;
    let mut dk_samples = Vec::new();
    for (i, g) in grid.geo.iter().enumerate() {
        if g.d_k >= 4.0 * h && g.d_k <= 0.2 && g.d >= 0.9 * g.d_k && values[i] > 0.0 && keep(i) {
            dk_samples.push((g.d_k, values[i] / g.d));
        }
    }
    let dk_fit = fit_loglog(&dk_samples, (4.0 * h, 0.2))?;

    let ray: Option<[f64; 3]> = match grid.spec.k_kind {
        KKind::WholeBoundary => None,
        KKind::BoundaryPoint => {
            let p = grid.spec.pole();
            Some([-p[0], -p[1], -p[2]])
        }
        KKind::EquatorialCircle => Some([0.0, 0.0, 1.0]),
    };
    let d_fit = match ray {
        None => None,
        Some(q) => {
            let cos_cap = 0.2f64.cos();
            let mut d_samples = Vec::new();
            for (i, g) in grid.geo.iter().enumerate() {
                if !(g.d >= 4.0 * h && g.d <= 0.3 && values[i] > 0.0 && keep(i)) {
                    continue;
                }
                let p = grid.nodes[i];
                let r = crate::geometry::norm(p);
                let cosang = crate::geometry::dot(p, q) / r;
                if cosang >= cos_cap {
                    d_samples.push((g.d, values[i]));
                }
            }
            Some(fit_loglog(&d_samples, (4.0 * h, 0.3))?)
        }
    };
    Ok((dk_fit, d_fit))
}
