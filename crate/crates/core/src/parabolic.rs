//! Heat semigroup evolution and kernel experiments.
//!
//! The evolution problem is v_t = −L v for the Hardy operator
//! L = −Δ − μ/d_K² with Dirichlet conditions, discretized in space by the
//! lattice operator and in time by implicit one-step schemes. Everything
//! downstream — kernel columns, the weighted kernel, conservation and
//! Harnack checks — is built on this single stepper.
//!
//! Ground-state representation. With the principal eigenpair (λ, φ) the
//! kernel factorizes as
//!
//! ```text
//! h(t, x, y) = φ(x) φ(y) e^{−λ t} k(t, x, y),
//! ```
//!
//! and k is the kernel of the φ²-weighted semigroup: it solves the weak
//! problem ∫ (k_t Φ + ∇k·∇Φ) φ² = 0. Two exact discrete facts carry over
//! from this structure and anchor the tests:
//!
//! * constants solve the weighted equation exactly — the transformed
//!   generator Ã w = φ^{−1} A(φ w) − λ w annihilates 𝟙 precisely because
//!   A φ = λ φ;
//! * the weighted mass ∫ k(t, x, ·) φ² dy equals e^{λt} R(λ) where R is
//!   the rational function the one-step scheme applies to A, so the
//!   conservation defect is purely the scalar time-discretization error.
//!
//! Schemes. A backward (implicit) Euler step inverts an M-matrix, so it
//! preserves positivity unconditionally; Crank–Nicolson is second-order
//! accurate but oscillates on rough data. The default scheme therefore
//! warms up with implicit Euler until t = 10h² (enough to smooth a lattice
//! delta) and switches to Crank–Nicolson afterwards. Internal steps start
//! at h², grow geometrically, and are capped so that the scalar decay
//! e^{−λt} stays accurate to a fraction of a percent out to t = 2.
//!
//! Harnack cylinders. For a nonnegative solution of the weighted equation
//! on (0, r²) × 𝓑(x, r) ∩ Ω, the boundary Harnack inequality bounds
//!
//! ```text
//! sup over (r²/4, r²/2) × 𝓑(x, r/2)   by   C · inf over (3r²/4, r²) × 𝓑(x, r/2),
//! ```
//!
//! with C independent of x, r, and the solution. [`harnack_check`]
//! measures the empirical ratio for weighted-kernel columns with the
//! source outside 𝓑(x, 2r), and for the exact constant solution.

use crate::discretization::solver::{cg_solve, CgOptions};
use crate::discretization::sparse::{AffineOp, LinearOperator, SparseSymOp};
use crate::discretization::{discrete_delta, Grid};
use crate::geometry::{dist, harnack_ball, GeoParams, HarnackBranch};
use crate::model::heat_profile;
use crate::report::{fit_linear, EstimateReport};
use crate::spectral::SpectralResult;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Time-stepping scheme for [`heat_evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward Euler throughout: first-order, unconditionally
    /// positivity-preserving on the lattice M-matrix.
    ImplicitEuler,
    /// Backward Euler while t ≤ warmup·h² (smooths rough data), then
    /// Crank–Nicolson: second-order once the solution is smooth.
    CrankNicolsonAfterWarmup,
}

/// Controls for the heat stepper.
#[derive(Debug, Clone)]
pub struct HeatOptions {
    pub scheme: Scheme,
    /// Warmup horizon in units of h² (only used by the warmup scheme).
    pub warmup_factor: f64,
    /// First internal step in units of h².
    pub initial_step_factor: f64,
    /// Geometric growth of the internal step after warmup.
    pub step_growth: f64,
    /// Hard cap on the internal step. The cap bounds the scalar decay
    /// error: one Crank–Nicolson step leaves a relative defect (λ·dt)³/12
    /// on the ground mode, so 0.01 keeps the defect ~1% out to t = 2 at
    /// the eigenvalues this domain produces.
    pub max_step: f64,
    /// Linear-solve controls for the one-step systems.
    pub solve: CgOptions,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions {
            scheme: Scheme::CrankNicolsonAfterWarmup,
            warmup_factor: 10.0,
            initial_step_factor: 1.0,
            step_growth: 1.25,
            max_step: 0.01,
            solve: CgOptions::default(),
        }
    }
}

impl HeatOptions {
    fn validate(&self) -> Result<()> {
        if !(self.warmup_factor >= 0.0 && self.warmup_factor.is_finite()) {
            return Err(Error::Validation(format!(
                "warmup factor {} must be a finite nonnegative number",
                self.warmup_factor
            )));
        }
        if !(self.initial_step_factor > 0.0 && self.initial_step_factor.is_finite()) {
            return Err(Error::Validation(format!(
                "initial step factor {} must be positive",
                self.initial_step_factor
            )));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return Err(Error::Validation(format!(
                "step growth {} must be ≥ 1",
                self.step_growth
            )));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::Validation(format!(
                "step cap {} must be positive",
                self.max_step
            )));
        }
        Ok(())
    }
}

/// One executed internal time step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepRecord {
    pub dt: f64,
    /// True for a Crank–Nicolson step, false for backward Euler.
    pub crank_nicolson: bool,
}

/// The lattice source a kernel column was started from.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SourceInfo {
    /// Requested source point.
    pub point: [f64; 3],
    /// Node the lattice delta was snapped to.
    pub node: usize,
}

/// A heat evolution sampled at a strictly increasing list of times.
///
/// `fields[j]` holds the solution at `times[j]` on the grid's nodes. For
/// data starting nonnegative, every stored field is nonnegative up to the
/// solver tolerance 1e−12·max|u| — the stepper enforces this and fails
/// loudly on a violation instead of clamping.
#[derive(Debug, Clone)]
pub struct HeatColumn {
    /// Present when the column was started from a lattice delta.
    pub source: Option<SourceInfo>,
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    /// Every internal step taken, in order.
    pub steps: Vec<StepRecord>,
}

/// One backward-Euler or Crank–Nicolson step of width dt:
/// (I + dt·A) u⁺ = u, or (I + dt/2·A) u⁺ = (I − dt/2·A) u.
fn step_once(
    a: &SparseSymOp,
    u: &mut Vec<f64>,
    dt: f64,
    crank_nicolson: bool,
    cg: &CgOptions,
) -> Result<()> {
    let n = a.dim();
    let (coeff, b) = if crank_nicolson {
        let mut au = vec![0.0; n];
        a.apply(u, &mut au);
        let b: Vec<f64> = u
            .iter()
            .zip(&au)
            .map(|(&ui, &aui)| ui - 0.5 * dt * aui)
            .collect();
        (0.5 * dt, b)
    } else {
        (dt, u.clone())
    };
    let sys = AffineOp::shifted(a, coeff, 1.0);
    let sol = cg_solve(&sys, &b, Some(u), cg)?;
    *u = sol.x;
    Ok(())
}

/// Evolve initial data under the heat flow of the assembled operator and
/// hand each requested slice to `visit` as it is produced.
///
/// This is the streaming core behind [`heat_evolve`]: time integrators
/// (e.g. a Green function assembled from the heat flow) accumulate slices
/// on the fly instead of holding every field in memory. `visit` receives
/// the slice index, the slice time, and the field; returning an error
/// aborts the evolution. The step records of the full run are returned.
///
/// Times must be positive, finite, and strictly increasing. Internal
/// steps are clipped to land exactly on every requested time (and on the
/// warmup horizon), so the visited slices are genuine scheme outputs, not
/// interpolants. If the initial data is nonnegative, each slice is
/// checked against the positivity tolerance 1e−12·max|u|.
pub fn heat_evolve_visit(
    grid: &Grid,
    op: &SparseSymOp,
    u0: &[f64],
    times: &[f64],
    opts: &HeatOptions,
    visit: &mut dyn FnMut(usize, f64, &[f64]) -> Result<()>,
) -> Result<Vec<StepRecord>> {
    opts.validate()?;
    if u0.len() != grid.node_count() {
        return Err(Error::Validation(format!(
            "initial data has {} entries for a grid of {} nodes",
            u0.len(),
            grid.node_count()
        )));
    }
    if times.is_empty() {
        return Err(Error::Validation("need at least one output time".into()));
    }
    let mut prev = 0.0;
    for &t in times {
        if !(t > prev && t.is_finite()) {
            return Err(Error::Validation(format!(
                "output times must be finite, positive, strictly increasing; got {t} after {prev}"
            )));
        }
        prev = t;
    }
    let nonneg = u0.iter().all(|&v| v >= 0.0);
    let warmup_end = match opts.scheme {
        Scheme::ImplicitEuler => 0.0,
        Scheme::CrankNicolsonAfterWarmup => opts.warmup_factor * grid.h * grid.h,
    };
    let mut dt_nominal = opts.initial_step_factor * grid.h * grid.h;
    let mut t = 0.0;
    let mut u = u0.to_vec();
    let mut steps = Vec::new();
    for (slice, &target) in times.iter().enumerate() {
        while t < target * (1.0 - 1e-12) {
            let in_warmup = t < warmup_end * (1.0 - 1e-12);
            let mut dt = dt_nominal.min(target - t);
            if in_warmup {
                dt = dt.min(warmup_end - t);
            }
            let cn = !in_warmup && matches!(opts.scheme, Scheme::CrankNicolsonAfterWarmup);
            step_once(op, &mut u, dt, cn, &opts.solve)?;
            t += dt;
            steps.push(StepRecord {
                dt,
                crank_nicolson: cn,
            });
            if !in_warmup {
                dt_nominal = (dt_nominal * opts.step_growth).min(opts.max_step);
            }
        }
        t = target;
        if nonneg {
            let mut max_abs = 0.0f64;
            let mut min_v = f64::INFINITY;
            for &v in &u {
                max_abs = max_abs.max(v.abs());
                min_v = min_v.min(v);
            }
            if min_v < -1e-12 * max_abs {
                return Err(Error::Numerical(format!(
                    "positivity lost at t = {target}: min {min_v:.3e} vs scale {max_abs:.3e}; \
                     extend the implicit-Euler warmup or shrink the step cap"
                )));
            }
        }
        visit(slice, target, &u)?;
    }
    Ok(steps)
}

/// Evolve initial data under the heat flow of the assembled operator and
/// store the solution at each requested time. See [`heat_evolve_visit`]
/// for the validation and stepping rules.
pub fn heat_evolve(
    grid: &Grid,
    op: &SparseSymOp,
    u0: &[f64],
    times: &[f64],
    opts: &HeatOptions,
) -> Result<HeatColumn> {
    let mut fields: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let steps = heat_evolve_visit(grid, op, u0, times, opts, &mut |_, _, u| {
        fields.push(u.to_vec());
        Ok(())
    })?;
    Ok(HeatColumn {
        source: None,
        times: times.to_vec(),
        fields,
        steps,
    })
}

/// Kernel column h(t, ·, y): the heat evolution of the lattice delta at
/// the node nearest y. Since the delta snaps, columns requested at y and
/// at its nearest node coincide.
pub fn heat_kernel_column(
    grid: &Grid,
    op: &SparseSymOp,
    y: [f64; 3],
    times: &[f64],
    opts: &HeatOptions,
) -> Result<HeatColumn> {
    let delta = discrete_delta(grid, y)?;
    let mut column = heat_evolve(grid, op, &delta.values, times, opts)?;
    column.source = Some(SourceInfo {
        point: y,
        node: delta.node,
    });
    Ok(column)
}

/// Transform a kernel column into values of the weighted kernel
/// k(t, x, y) = e^{λt} h(t, x, y)/(φ(x) φ(y)).
pub fn weighted_kernel(
    grid: &Grid,
    column: &HeatColumn,
    eig: &SpectralResult,
) -> Result<HeatColumn> {
    let source = column.source.ok_or_else(|| {
        Error::Validation("weighted kernel needs a column with a delta source".into())
    })?;
    if eig.phi.len() != grid.node_count() {
        return Err(Error::Validation(format!(
            "eigenfunction has {} entries for a grid of {} nodes",
            eig.phi.len(),
            grid.node_count()
        )));
    }
    if eig.phi.iter().any(|&p| p <= 0.0) {
        return Err(Error::Numerical(
            "eigenfunction must be strictly positive to weight a kernel column".into(),
        ));
    }
    let phi_y = eig.phi[source.node];
    let mut fields = Vec::with_capacity(column.fields.len());
    for (u, &t) in column.fields.iter().zip(&column.times) {
        let scale = (eig.lambda * t).exp() / phi_y;
        let k: Vec<f64> = u
            .iter()
            .zip(&eig.phi)
            .map(|(&ui, &px)| scale * ui / px)
            .collect();
        fields.push(k);
    }
    Ok(HeatColumn {
        source: column.source,
        times: column.times.clone(),
        fields,
        steps: column.steps.clone(),
    })
}

/// Weighted mass ∫ k(t, x, ·) φ² of a weighted-kernel column at each
/// stored time. By symmetry of the kernel this equals the conservation
/// integral with the roaming argument second; the exact value for the
/// discrete scheme is e^{λt}·R(λ) with R the scheme's rational function,
/// so the defect isolates the time-discretization error.
pub fn conservation_profile(grid: &Grid, kernel: &HeatColumn, eig: &SpectralResult) -> Vec<(f64, f64)> {
    let vol = grid.cell_volume();
    kernel
        .times
        .iter()
        .zip(&kernel.fields)
        .map(|(&t, k)| {
            let mass: f64 = k
                .iter()
                .zip(&eig.phi)
                .map(|(&ki, &pi)| ki * pi * pi)
                .sum::<f64>()
                * vol;
            (t, mass)
        })
        .collect()
}

/// Controls for [`heat_estimate_report`].
#[derive(Debug, Clone, Copy)]
pub struct HeatReportOptions {
    /// Keep samples with gauss_arg = |x−y|²/t at most this large; beyond
    /// it kernel values sink toward solver noise at desk resolution.
    pub q_max: f64,
    /// Small-time window upper end for the Gaussian fit.
    pub t_small: f64,
    /// Slices at or beyond this time feed the large-time flatness check.
    pub t_large: f64,
    /// The large-time check reads log k only on nodes with
    /// φ ≥ bulk_fraction·max φ, where the kernel column stays far above
    /// linear-solver noise.
    pub bulk_fraction: f64,
}

impl Default for HeatReportOptions {
    fn default() -> Self {
        HeatReportOptions {
            q_max: 8.0,
            t_small: 0.1,
            t_large: 1.0,
            bulk_fraction: 0.1,
        }
    }
}

/// Compare kernel columns against the two-sided comparison profile.
///
/// Small time: for every stored slice with t ≤ t_small and every node
/// with gauss_arg ≤ q_max, the ratio R = h/amplitude is formed, log R is
/// fitted against gauss_arg by least squares (slope reported as
/// `gauss_slope`, expected strictly negative — the Gaussian factor), and
/// the compensated ratios R·e^{−slope·gauss_arg} give the two-sided
/// spread. Large time: for slices with t ≥ t_large, the drift
/// max |log k(t) − log k(t′)| over bulk nodes is reported as
/// `large_time_log_drift` (flat k means the kernel has settled onto
/// φ(x)φ(y)e^{−λt}).
pub fn heat_estimate_report(
    grid: &Grid,
    eig: &SpectralResult,
    columns: &[HeatColumn],
    opts: &HeatReportOptions,
) -> Result<EstimateReport> {
    if columns.is_empty() {
        return Err(Error::Validation("no kernel columns supplied".into()));
    }
    let pair = grid.spec.pair;
    let n = grid.spec.n;
    let mut log_samples: Vec<(f64, f64)> = Vec::new();
    let mut raw: Vec<(f64, f64)> = Vec::new();
    for column in columns {
        let source = column.source.ok_or_else(|| {
            Error::Validation("estimate report needs kernel columns with sources".into())
        })?;
        let y_pos = grid.nodes[source.node];
        let y_geo = grid.geo[source.node];
        for (j, &t) in column.times.iter().enumerate() {
            if t > opts.t_small {
                continue;
            }
            let field = &column.fields[j];
            for (i, &value) in field.iter().enumerate() {
                let d_xy = dist(grid.nodes[i], y_pos);
                if d_xy * d_xy / t > opts.q_max {
                    continue;
                }
                let (amplitude, q) = heat_profile(&grid.geo[i], &y_geo, d_xy, t, &pair, n)?;
                if !(value > 0.0) {
                    return Err(Error::Numerical(format!(
                        "kernel value {value:.3e} at gauss_arg {q:.2} is not positive; \
                         refine the grid or shrink q_max"
                    )));
                }
                let ratio = value / amplitude;
                log_samples.push((q, ratio.ln()));
                raw.push((q, ratio));
            }
        }
    }
    if raw.is_empty() {
        return Err(Error::Validation(format!(
            "no samples with gauss_arg ≤ {} and t ≤ {}",
            opts.q_max, opts.t_small
        )));
    }
    let gauss = fit_linear(&log_samples)?;
    let slope = gauss.slope;
    let compensated: Vec<f64> = raw.iter().map(|&(q, r)| r * (-slope * q).exp()).collect();
    let mut report = EstimateReport::from_ratios(
        &compensated,
        format!("gauss_arg ≤ {}, t ≤ {}", opts.q_max, opts.t_small),
    )?
    .with_constant("gauss_slope", slope);

    // Large-time flatness of log k on bulk nodes.
    let phi_max = eig.phi.iter().cloned().fold(0.0f64, f64::max);
    let floor = opts.bulk_fraction * phi_max;
    let mut drift: Option<f64> = None;
    for column in columns {
        let source = column.source.expect("checked above");
        let phi_y = eig.phi[source.node];
        let mut lo = vec![f64::INFINITY; grid.node_count()];
        let mut hi = vec![f64::NEG_INFINITY; grid.node_count()];
        let mut late_slices = 0usize;
        for (j, &t) in column.times.iter().enumerate() {
            if t < opts.t_large {
                continue;
            }
            late_slices += 1;
            for (i, &value) in column.fields[j].iter().enumerate() {
                if eig.phi[i] < floor {
                    continue;
                }
                if !(value > 0.0) {
                    return Err(Error::Numerical(format!(
                        "kernel value {value:.3e} on a bulk node at t = {t}; \
                         the large-time check needs positive columns"
                    )));
                }
                let log_k = value.ln() + eig.lambda * t - (eig.phi[i] * phi_y).ln();
                lo[i] = lo[i].min(log_k);
                hi[i] = hi[i].max(log_k);
            }
        }
        if late_slices >= 2 {
            let worst = lo
                .iter()
                .zip(&hi)
                .filter(|(l, _)| l.is_finite())
                .map(|(l, h)| h - l)
                .fold(0.0f64, f64::max);
            drift = Some(drift.map_or(worst, |d: f64| d.max(worst)));
        }
    }
    if let Some(d) = drift {
        report = report.with_constant("large_time_log_drift", d);
    }
    Ok(report)
}

/// The caloric function a Harnack ratio is measured on.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnackSource {
    /// Weighted-kernel column started from a lattice delta at this point,
    /// which must lie outside 𝓑(x, 2r).
    WeightedKernel { source: [f64; 3] },
    /// The constant function 1, an exact solution of the weighted
    /// equation; exercises the cylinder plumbing with a known answer.
    ConstantOne,
}

/// Controls for [`harnack_check`].
#[derive(Debug, Clone)]
pub struct HarnackOptions {
    /// Admissible-ball parameters; raise β₁ to admit larger radii.
    pub params: GeoParams,
    /// Number of stored time slices on (0, r²].
    pub slices: usize,
    /// Stepper controls for the kernel evolution.
    pub heat: HeatOptions,
}

impl Default for HarnackOptions {
    fn default() -> Self {
        HarnackOptions {
            params: GeoParams::default(),
            slices: 48,
            heat: HeatOptions::default(),
        }
    }
}

/// Outcome of one Harnack cylinder measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnackCheck {
    /// sup over the early window divided by inf over the late window.
    pub ratio: f64,
    pub sup: f64,
    pub inf: f64,
    /// Nodes of 𝓑(x, r/2) ∩ Ω the windows were sampled on.
    pub node_count: usize,
    /// Shape selected for the half ball.
    pub branch: HarnackBranch,
    /// Stored slices inside each of the two time windows.
    pub window_slices: usize,
    /// Node the kernel source snapped to (None for the constant solution).
    pub source_node: Option<usize>,
    pub r: f64,
}

/// Measure the boundary Harnack ratio
/// sup_{(r²/4, r²/2) × 𝓑(x, r/2)} v / inf_{(3r²/4, r²) × 𝓑(x, r/2)} v
/// for a nonnegative solution of the weighted heat equation.
///
/// Requires r < β₁ and at least 4 grid nodes inside the half ball. For a
/// kernel source, the source point must lie outside the admissible ball
/// 𝓑(x, 2r), so the solution is caloric on the whole cylinder
/// (0, r²) × 𝓑(x, r) ∩ Ω.
pub fn harnack_check(
    grid: &Grid,
    op: &SparseSymOp,
    eig: &SpectralResult,
    x: [f64; 3],
    r: f64,
    source: HarnackSource,
    opts: &HarnackOptions,
) -> Result<HarnackCheck> {
    if !(r > 0.0 && r < opts.params.beta1) {
        return Err(Error::Validation(format!(
            "harnack radius r = {r} must lie in (0, beta1 = {})",
            opts.params.beta1
        )));
    }
    if opts.slices < 16 {
        return Err(Error::Validation(format!(
            "need at least 16 time slices to populate both windows, got {}",
            opts.slices
        )));
    }
    let half = harnack_ball(&grid.spec, &opts.params, x, r / 2.0)?;
    let nodes_in: Vec<usize> = (0..grid.node_count())
        .filter(|&i| half.contains(&grid.spec, grid.nodes[i]))
        .collect();
    if nodes_in.len() < 4 {
        return Err(Error::Validation(format!(
            "𝓑(x, r/2) contains only {} grid nodes at h = {}; refine the grid or enlarge r",
            nodes_in.len(),
            grid.h
        )));
    }
    let r2 = r * r;
    let times: Vec<f64> = (0..opts.slices)
        .map(|i| (i as f64 + 0.5) * r2 / opts.slices as f64)
        .collect();
    let sup_window = |t: f64| t > r2 / 4.0 && t < r2 / 2.0;
    let inf_window = |t: f64| t > 3.0 * r2 / 4.0 && t < r2;
    let sup_count = times.iter().filter(|&&t| sup_window(t)).count();
    let inf_count = times.iter().filter(|&&t| inf_window(t)).count();
    if sup_count == 0 || inf_count == 0 {
        return Err(Error::Validation(
            "slice schedule leaves a time window empty; increase slices".into(),
        ));
    }

    let (sup, inf, source_node) = match source {
        HarnackSource::ConstantOne => (1.0, 1.0, None),
        HarnackSource::WeightedKernel { source: y } => {
            // The separation ball 𝓑(x, 2r) may exceed β₁; only the radius
            // cap is relaxed, the shape parameters stay as configured.
            let relaxed = GeoParams {
                beta1: opts.params.beta1.max(2.0 * r * (1.0 + 1e-9)),
                ..opts.params
            };
            let big = harnack_ball(&grid.spec, &relaxed, x, 2.0 * r)?;
            if big.contains(&grid.spec, y) {
                return Err(Error::Validation(format!(
                    "kernel source {y:?} lies inside 𝓑(x, 2r); move it outside so the \
                     column is caloric on the whole cylinder"
                )));
            }
            let column = heat_kernel_column(grid, op, y, &times, &opts.heat)?;
            let kernel = weighted_kernel(grid, &column, eig)?;
            let mut sup = f64::NEG_INFINITY;
            let mut inf = f64::INFINITY;
            for (j, &t) in kernel.times.iter().enumerate() {
                let in_sup = sup_window(t);
                let in_inf = inf_window(t);
                if !in_sup && !in_inf {
                    continue;
                }
                for &i in &nodes_in {
                    let v = kernel.fields[j][i];
                    if in_sup {
                        sup = sup.max(v);
                    }
                    if in_inf {
                        inf = inf.min(v);
                    }
                }
            }
            if !(inf > 0.0) {
                return Err(Error::Numerical(format!(
                    "weighted kernel reaches {inf:.3e} in the late window; the scheme \
                     lost positivity at this resolution"
                )));
            }
            (sup, inf, column.source.map(|s| s.node))
        }
    };
    Ok(HarnackCheck {
        ratio: sup / inf,
        sup,
        inf,
        node_count: nodes_in.len(),
        branch: half.branch,
        window_slices: sup_count.min(inf_count),
        source_node,
        r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_l_mu, build_grid, BuildOptions};
    use crate::geometry::{KKind, ProblemSpec};
    use crate::spectral::{principal_eigenpair, SpectralOptions};

    fn disk_setup(h: f64, mu: f64) -> (Grid, SparseSymOp, SpectralResult) {
        let spec = ProblemSpec::new(2, KKind::WholeBoundary, mu).unwrap();
        let grid = build_grid(&spec, h, &BuildOptions::default()).unwrap();
        let a = assemble_l_mu(&grid);
        let eig = principal_eigenpair(&grid, &a, &SpectralOptions::default()).unwrap();
        (grid, a, eig)
    }

    #[test]
    fn eigenfunction_decays_at_the_eigen_rate() {
        // u0 = φ evolves to e^{−λt}φ; the only error is the scalar
        // time-discretization defect, well under half a percent here.
        let (grid, a, eig) = disk_setup(1.0 / 16.0, 0.25);
        let t = 0.1;
        let col = heat_evolve(&grid, &a, &eig.phi, &[t], &HeatOptions::default()).unwrap();
        let expected: Vec<f64> = eig.phi.iter().map(|&p| (-eig.lambda * t).exp() * p).collect();
        let err2: f64 = col.fields[0]
            .iter()
            .zip(&expected)
            .map(|(&u, &e)| (u - e) * (u - e))
            .sum::<f64>()
            .sqrt();
        let ref2: f64 = expected.iter().map(|&e| e * e).sum::<f64>().sqrt();
        assert!(err2 / ref2 <= 0.005, "relative decay error {}", err2 / ref2);
    }

    #[test]
    fn composed_schedules_agree_with_one_long_schedule() {
        // Fixed-step backward Euler applied 10+10 times equals the same
        // 20 steps in one call: the one-step linear maps are identical.
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.25);
        let dt = grid.h * grid.h;
        let fixed = HeatOptions {
            scheme: Scheme::ImplicitEuler,
            initial_step_factor: 1.0,
            step_growth: 1.0,
            max_step: dt,
            ..HeatOptions::default()
        };
        let u0: Vec<f64> = grid
            .nodes
            .iter()
            .map(|p| (2.0 + (5.0 * p[0]).sin()) * (1.0 - p[0] * p[0] - p[1] * p[1]))
            .collect();
        let direct = heat_evolve(&grid, &a, &u0, &[20.0 * dt], &fixed).unwrap();
        let leg1 = heat_evolve(&grid, &a, &u0, &[10.0 * dt], &fixed).unwrap();
        let leg2 = heat_evolve(&grid, &a, &leg1.fields[0], &[10.0 * dt], &fixed).unwrap();
        let scale: f64 = direct.fields[0].iter().cloned().fold(0.0, f64::max);
        let worst = direct.fields[0]
            .iter()
            .zip(&leg2.fields[0])
            .map(|(&x, &y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(direct.steps.len(), 20);
        assert!(worst <= 1e-6 * scale, "composition defect {worst} vs scale {scale}");
    }

    #[test]
    fn delta_columns_snap_to_the_nearest_node() {
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.25);
        let y = [0.21, -0.13, 0.0];
        let opts = HeatOptions::default();
        let col = heat_kernel_column(&grid, &a, y, &[0.02, 0.05], &opts).unwrap();
        let node = col.source.unwrap().node;
        let col_snapped =
            heat_kernel_column(&grid, &a, grid.nodes[node], &[0.02, 0.05], &opts).unwrap();
        assert_eq!(col_snapped.source.unwrap().node, node);
        let scale: f64 = col.fields[1].iter().cloned().fold(0.0, f64::max);
        for (u, v) in col.fields.iter().zip(&col_snapped.fields) {
            let worst = u
                .iter()
                .zip(v)
                .map(|(&x, &y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(worst <= 1e-13 * scale);
        }
    }

    #[test]
    fn kernel_columns_stay_nonnegative_and_submarkov() {
        // μ = 0: pure Dirichlet heat flow is sub-Markov, so the plain
        // quadrature of each kernel slice stays at or below 1.
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.0);
        let col = heat_kernel_column(
            &grid,
            &a,
            [0.3, 0.1, 0.0],
            &[0.01, 0.05, 0.2],
            &HeatOptions::default(),
        )
        .unwrap();
        for (u, &t) in col.fields.iter().zip(&col.times) {
            let mass = grid.integrate(u);
            assert!(
                mass <= 1.0 + 1e-9,
                "kernel mass {mass} at t = {t} exceeds 1"
            );
            assert!(u.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn kernel_columns_are_symmetric_in_source_and_target() {
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.25);
        let y1 = [0.25, 0.05, 0.0];
        let y2 = [-0.15, -0.35, 0.0];
        let times = [0.03, 0.1];
        let opts = HeatOptions::default();
        let c1 = heat_kernel_column(&grid, &a, y1, &times, &opts).unwrap();
        let c2 = heat_kernel_column(&grid, &a, y2, &times, &opts).unwrap();
        let n1 = c1.source.unwrap().node;
        let n2 = c2.source.unwrap().node;
        for j in 0..times.len() {
            let a_val = c1.fields[j][n2];
            let b_val = c2.fields[j][n1];
            assert!(
                (a_val - b_val).abs() <= 0.01 * a_val.abs(),
                "h(t, x, y) = {a_val} vs h(t, y, x) = {b_val}"
            );
        }
    }

    #[test]
    fn weighted_mass_is_conserved_within_two_percent() {
        let (grid, a, eig) = disk_setup(1.0 / 16.0, 0.25);
        let col = heat_kernel_column(
            &grid,
            &a,
            [0.4, -0.2, 0.0],
            &[0.05, 0.2, 1.0],
            &HeatOptions::default(),
        )
        .unwrap();
        let kernel = weighted_kernel(&grid, &col, &eig).unwrap();
        for (t, mass) in conservation_profile(&grid, &kernel, &eig) {
            assert!(
                (mass - 1.0).abs() <= 0.02,
                "weighted mass {mass} at t = {t}"
            );
        }
    }

    #[test]
    fn small_time_report_fits_a_negative_gaussian_slope() {
        let (grid, a, eig) = disk_setup(1.0 / 16.0, 0.25);
        let opts = HeatOptions::default();
        let times = [0.01, 0.02, 0.05, 0.1];
        let columns: Vec<HeatColumn> = [[0.03, 0.03, 0.0], [0.35, 0.25, 0.0]]
            .iter()
            .map(|&y| heat_kernel_column(&grid, &a, y, &times, &opts).unwrap())
            .collect();
        let report =
            heat_estimate_report(&grid, &eig, &columns, &HeatReportOptions::default()).unwrap();
        let slope = report.fitted_constants["gauss_slope"];
        assert!(slope < 0.0, "gauss slope {slope} should be negative");
        assert!(report.spread.is_finite() && report.spread >= 1.0);
        assert!(report.sample_count > 100);
    }

    #[test]
    fn large_time_weighted_kernel_is_flat() {
        let (grid, a, eig) = disk_setup(1.0 / 12.0, 0.25);
        let col = heat_kernel_column(
            &grid,
            &a,
            [0.1, 0.2, 0.0],
            &[0.05, 1.0, 1.5, 2.0],
            &HeatOptions::default(),
        )
        .unwrap();
        let report = heat_estimate_report(&grid, &eig, &[col], &HeatReportOptions::default())
            .unwrap();
        let drift = report.fitted_constants["large_time_log_drift"];
        assert!(drift <= 0.05, "log k drifts by {drift} over t ∈ [1, 2]");
    }

    #[test]
    fn constant_solution_has_unit_harnack_ratio() {
        let (grid, a, eig) = disk_setup(1.0 / 12.0, 0.25);
        let opts = HarnackOptions {
            params: GeoParams {
                beta1: 0.5,
                ..GeoParams::default()
            },
            ..HarnackOptions::default()
        };
        let check = harnack_check(
            &grid,
            &a,
            &eig,
            [0.2, -0.1, 0.0],
            0.25,
            HarnackSource::ConstantOne,
            &opts,
        )
        .unwrap();
        assert!((check.ratio - 1.0).abs() <= 1e-12);
        assert!(check.node_count >= 4);
    }

    #[test]
    fn kernel_harnack_ratio_is_finite_and_at_least_one() {
        let (grid, a, eig) = disk_setup(1.0 / 16.0, 0.25);
        let opts = HarnackOptions {
            params: GeoParams {
                beta1: 0.5,
                ..GeoParams::default()
            },
            ..HarnackOptions::default()
        };
        let check = harnack_check(
            &grid,
            &a,
            &eig,
            [0.15, -0.05, 0.0],
            0.25,
            HarnackSource::WeightedKernel {
                source: [-0.55, 0.35, 0.0],
            },
            &opts,
        )
        .unwrap();
        assert!(check.ratio.is_finite());
        assert!(
            check.ratio >= 1.0 && check.ratio <= 50.0,
            "harnack ratio {} outside the plausible band",
            check.ratio
        );
    }

    #[test]
    fn harnack_check_rejects_thin_balls_and_near_sources() {
        let (grid, a, eig) = disk_setup(1.0 / 12.0, 0.25);
        let opts = HarnackOptions {
            params: GeoParams {
                beta1: 0.5,
                ..GeoParams::default()
            },
            ..HarnackOptions::default()
        };
        // a ball of radius r/2 = 1/64 is thinner than one cell at h = 1/12
        let thin = harnack_check(
            &grid,
            &a,
            &eig,
            [0.2, 0.1, 0.0],
            1.0 / 32.0,
            HarnackSource::ConstantOne,
            &opts,
        );
        assert!(matches!(thin, Err(Error::Validation(_))));
        // a source inside 𝓑(x, 2r) is rejected before any evolution
        let near = harnack_check(
            &grid,
            &a,
            &eig,
            [0.2, 0.1, 0.0],
            0.25,
            HarnackSource::WeightedKernel {
                source: [0.3, 0.2, 0.0],
            },
            &opts,
        );
        assert!(matches!(near, Err(Error::Validation(_))));
    }

    #[test]
    fn evolve_validates_times_and_schedule() {
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.25);
        let u0 = vec![1.0; grid.node_count()];
        let opts = HeatOptions::default();
        assert!(heat_evolve(&grid, &a, &u0, &[], &opts).is_err());
        assert!(heat_evolve(&grid, &a, &u0, &[0.1, 0.1], &opts).is_err());
        assert!(heat_evolve(&grid, &a, &u0, &[-0.1], &opts).is_err());
        let bad = HeatOptions {
            step_growth: 0.5,
            ..HeatOptions::default()
        };
        assert!(heat_evolve(&grid, &a, &u0, &[0.1], &bad).is_err());
    }

    #[test]
    fn warmup_steps_are_implicit_euler_then_crank_nicolson() {
        let (grid, a, _) = disk_setup(1.0 / 12.0, 0.25);
        let u0 = vec![1.0; grid.node_count()];
        let warmup_end = 10.0 * grid.h * grid.h;
        let col = heat_evolve(
            &grid,
            &a,
            &u0,
            &[2.0 * warmup_end],
            &HeatOptions::default(),
        )
        .unwrap();
        let mut t = 0.0;
        for step in &col.steps {
            // every step fully inside the warmup horizon is backward Euler
            if t < warmup_end * (1.0 - 1e-12) {
                assert!(!step.crank_nicolson, "warmup step at t = {t} used CN");
            } else {
                assert!(step.crank_nicolson, "post-warmup step at t = {t} used IE");
            }
            t += step.dt;
        }
        assert!(col.steps.iter().any(|s| s.crank_nicolson));
    }
}
