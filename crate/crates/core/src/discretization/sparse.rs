//! Compressed sparse row storage for the symmetric operators of the lattice
//! discretization, plus the thin affine/scaled wrappers the solvers need.
//!
//! Everything here is deliberately sequential and allocation-light: matrix
//! application is the inner loop of every eigenvalue solve and time step,
//! and a fixed traversal order keeps results bit-reproducible across runs.

/// Anything that can be applied as a linear map on nodal vectors and expose
/// its diagonal (for Jacobi preconditioning).
pub trait LinearOperator {
    /// Dimension of the (square) operator.
    fn dim(&self) -> usize;
    /// y ← A·x.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// A copy of the diagonal of A.
    fn diagonal(&self) -> Vec<f64>;
}

/// Symmetric sparse matrix in CSR layout with u32 column indices.
#[derive(Debug, Clone)]
pub struct SparseSymOp {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl SparseSymOp {
    /// Build from per-row entries pushed in ascending column order via the
    /// callback. `emit(row, push)` must push (col, val) pairs sorted by
    /// column; rows are visited 0..n in order.
    pub fn from_rows(n: usize, mut emit: impl FnMut(usize, &mut dyn FnMut(u32, f64))) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let mut push = |c: u32, v: f64| {
                debug_assert!((c as usize) < n);
                col.push(c);
                val.push(v);
            };
            emit(i, &mut push);
            debug_assert!(
                col[row_ptr[i]..].windows(2).all(|w| w[0] < w[1]),
                "row {i} columns not strictly ascending"
            );
            row_ptr.push(col.len());
        }
        SparseSymOp {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Entries of row i as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col[lo..hi]
            .iter()
            .zip(&self.val[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Largest |a_ij − a_ji| over all stored entries (0 for an exactly
    /// symmetric matrix; missing transposed entries count as 0).
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let vt = self.entry(j, i);
                defect = defect.max((v - vt).abs());
            }
        }
        defect
    }

    /// Value at (i, j), 0 if not stored. Binary search within the row.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col[lo..hi].binary_search(&(j as u32)) {
            Ok(k) => self.val[lo + k],
            Err(_) => 0.0,
        }
    }

    /// min_i (a_ii − Σ_{j≠i} |a_ij|): every eigenvalue of the symmetric
    /// matrix lies above this number.
    pub fn gershgorin_lower_bound(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    diag = v;
                } else {
                    off += v.abs();
                }
            }
            bound = bound.min(diag - off);
        }
        bound
    }

    /// Restriction to the principal submatrix on `keep` (ascending node
    /// ids). Returns the submatrix and the map from new ids to old ids.
    pub fn principal_submatrix(&self, keep: &[usize]) -> (SparseSymOp, Vec<usize>) {
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let mut new_id = vec![u32::MAX; self.n];
        for (ni, &oi) in keep.iter().enumerate() {
            new_id[oi] = ni as u32;
        }
        let sub = SparseSymOp::from_rows(keep.len(), |ni, push| {
            for (j, v) in self.row(keep[ni]) {
                let nj = new_id[j];
                if nj != u32::MAX {
                    push(nj, v);
                }
            }
        });
        (sub, keep.to_vec())
    }
}

impl LinearOperator for SparseSymOp {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = acc;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }
}

/// c·A + diag(v): covers A + σI, I + Δt·A, M ± (Δt/2)·Q and friends without
/// materializing a new matrix.
pub struct AffineOp<'a> {
    pub a: &'a SparseSymOp,
    pub a_coeff: f64,
    pub diag_add: Vec<f64>,
}

impl<'a> AffineOp<'a> {
    /// c·A + σI.
    pub fn shifted(a: &'a SparseSymOp, a_coeff: f64, sigma: f64) -> Self {
        AffineOp {
            a,
            a_coeff,
            diag_add: vec![sigma; a.dim()],
        }
    }

    /// c·A + diag(v).
    pub fn with_diagonal(a: &'a SparseSymOp, a_coeff: f64, diag_add: Vec<f64>) -> Self {
        debug_assert_eq!(diag_add.len(), a.dim());
        AffineOp {
            a,
            a_coeff,
            diag_add,
        }
    }
}

impl LinearOperator for AffineOp<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.a.apply(x, y);
        for i in 0..y.len() {
            y[i] = self.a_coeff * y[i] + self.diag_add[i] * x[i];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.a.diagonal();
        for i in 0..d.len() {
            d[i] = self.a_coeff * d[i] + self.diag_add[i];
        }
        d
    }
}

/// S·A·S for a diagonal S: the symmetrized form of diagonal-weighted
/// eigenproblems (e.g. the Hardy pencil A v = θ D v via S = D^{−1/2}).
pub struct DiagScaledOp<'a> {
    pub a: &'a SparseSymOp,
    pub scale: Vec<f64>,
}

impl LinearOperator for DiagScaledOp<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sx: Vec<f64> = x.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        self.a.apply(&sx, y);
        for i in 0..y.len() {
            y[i] *= self.scale[i];
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.a.diagonal();
        for i in 0..d.len() {
            d[i] *= self.scale[i] * self.scale[i];
        }
        d
    }
}

/// Euclidean inner product (sequential, fixed order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Euclidean norm.
pub fn nrm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
