//! Jacobi-preconditioned conjugate gradients.
//!
//! Every linear solve in the crate — eigenvalue inner iterations, implicit
//! time steps, Green columns, boundary-value problems — goes through this
//! one routine. The operators are symmetric positive definite by
//! construction (subcritical Hardy coupling keeps the discretized quadratic
//! form positive), so plain CG with a diagonal preconditioner is reliable;
//! a curvature guard turns any loss of definiteness into an explicit error
//! instead of a silent wrong answer.

use super::sparse::{dot, nrm2, LinearOperator};
use crate::{Error, Result};

/// Options for the conjugate-gradient solver.
#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when ‖b − Ax‖ ≤ rel_tol·‖b‖.
    pub rel_tol: f64,
    /// Iteration budget before declaring non-convergence.
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            max_iter: 50_000,
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual ‖b − Ax‖/‖b‖.
    pub residual: f64,
}

/// Solve A x = b for a symmetric positive definite operator.
///
/// Fails with a numerical error if the diagonal is not strictly positive or
/// a search direction exhibits non-positive curvature (either way the
/// operator is not SPD), and with a non-convergence error if the iteration
/// budget runs out.
pub fn cg_solve(
    op: &impl LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &CgOptions,
) -> Result<CgResult> {
    let n = op.dim();
    debug_assert_eq!(b.len(), n);
    let norm_b = nrm2(b);
    if norm_b == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let diag = op.diagonal();
    let mut inv_diag = Vec::with_capacity(n);
    for (i, &d) in diag.iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::Numerical(format!(
                "operator diagonal entry {i} is {d} ≤ 0: not positive definite"
            )));
        }
        inv_diag.push(1.0 / d);
    }

    let mut x = match x0 {
        Some(v) => {
            debug_assert_eq!(v.len(), n);
            v.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = nrm2(&r) / norm_b;
    if res <= opts.rel_tol {
        return Ok(CgResult {
            x,
            iterations: 0,
            residual: res,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for iter in 1..=opts.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Numerical(format!(
                "non-positive curvature pᵀAp = {pap} at iteration {iter}: \
                 operator is not positive definite"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = nrm2(&r) / norm_b;
        if res <= opts.rel_tol {
            return Ok(CgResult {
                x,
                iterations: iter,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rz = rz_new;
    }
    Err(Error::NonConvergence {
        what: "conjugate gradients".into(),
        residual: res,
        iterations: opts.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::super::sparse::SparseSymOp;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tridiag(n: usize) -> SparseSymOp {
        SparseSymOp::from_rows(n, |i, push| {
            if i > 0 {
                push((i - 1) as u32, -1.0);
            }
            push(i as u32, 2.0);
            if i + 1 < n {
                push((i + 1) as u32, -1.0);
            }
        })
    }

    #[test]
    fn recovers_known_solution() {
        let a = tridiag(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 50];
        a.apply(&x_true, &mut b);
        let sol = cg_solve(&a, &b, None, &CgOptions::default()).unwrap();
        for i in 0..50 {
            assert_abs_diff_eq!(sol.x[i], x_true[i], epsilon = 1e-7);
        }
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn warm_start_at_solution_returns_immediately() {
        let a = tridiag(80);
        let b: Vec<f64> = (0..80).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let cold = cg_solve(&a, &b, None, &CgOptions::default()).unwrap();
        assert!(cold.iterations > 0);
        let warm = cg_solve(&a, &b, Some(&cold.x), &CgOptions::default()).unwrap();
        assert_eq!(warm.iterations, 0);
        assert!(warm.residual <= 1e-10);
    }

    #[test]
    fn zero_rhs_yields_zero_solution() {
        let a = tridiag(10);
        let sol = cg_solve(&a, &[0.0; 10], None, &CgOptions::default()).unwrap();
        assert!(sol.x.iter().all(|&v| v == 0.0));
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn rejects_indefinite_operators() {
        // negative diagonal entry
        let a = SparseSymOp::from_rows(2, |i, push| {
            push(i as u32, if i == 0 { 1.0 } else { -1.0 });
        });
        assert!(cg_solve(&a, &[1.0, 1.0], None, &CgOptions::default()).is_err());
        // indefinite with positive diagonal: [[1, 3], [3, 1]]
        let a = SparseSymOp::from_rows(2, |i, push| {
            if i == 0 {
                push(0, 1.0);
                push(1, 3.0);
            } else {
                push(0, 3.0);
                push(1, 1.0);
            }
        });
        assert!(cg_solve(&a, &[1.0, 0.0], None, &CgOptions::default()).is_err());
    }

    #[test]
    fn reports_nonconvergence_on_tiny_budget() {
        let a = tridiag(200);
        let b = vec![1.0; 200];
        let res = cg_solve(
            &a,
            &b,
            None,
            &CgOptions {
                rel_tol: 1e-12,
                max_iter: 3,
            },
        );
        match res {
            Err(crate::Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
