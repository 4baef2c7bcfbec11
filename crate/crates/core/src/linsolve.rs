//! Compressed sparse column storage and the direct solver.
//!
//! Factorization is a sparse LU with partial pivoting and a fill-reducing
//! column ordering, provided by `faer`. Saddle-point systems with a zero
//! block go through the same path.

use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square or rectangular complex matrix in compressed column form, with
/// sorted row indices and no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CscMatrix {
    /// Sums duplicate entries. The summation order only depends on the
    /// order of `triplets`, so equal inputs give bitwise equal matrices.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Result<Self> {
        let mut count = vec![0usize; ncols + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {nrows} x {ncols} matrix"
                )));
            }
            count[j + 1] += 1;
        }
        for j in 0..ncols {
            count[j + 1] += count[j];
        }
        // Stable bucket sort by column, then by row within each column.
        let mut order = vec![0usize; triplets.len()];
        let mut next = count.clone();
        for (k, &(_, j, _)) in triplets.iter().enumerate() {
            order[next[j]] = k;
            next[j] += 1;
        }
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for j in 0..ncols {
            let slice = &mut order[count[j]..count[j + 1]];
            slice.sort_by_key(|&k| (triplets[k].0, k));
            for &k in slice.iter() {
                let (i, _, v) = triplets[k];
                if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == i {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(Self { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of column `j` as `(row, value)`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(k) => self.values[r.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                rows[i] += v.norm();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<(usize, usize, C64)> =
            (0..self.ncols).flat_map(|j| self.column(j).map(move |(i, v)| (j, i, v))).collect();
        Self::from_triplets(self.ncols, self.nrows, &t).expect("transpose indices are in range")
    }

    /// Whether `A = Aᵀ` entry by entry (not Hermitian) up to `tol` absolute.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                if (v - t.get(i, j)).norm() > tol {
                    return false;
                }
            }
            for (i, v) in t.column(j) {
                if (v - self.get(i, j)).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::new(0.0, 0.0); self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                d[i][j] = v;
            }
        }
        d
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, C64> {
        let sym = SymbolicSparseColMatRef::new_checked(self.nrows, self.ncols, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

/// A factorized matrix, reusable for several right-hand sides.
pub struct Factorization<'a> {
    matrix: &'a CscMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
}

impl std::fmt::Debug for Factorization<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Factorization({} x {})", self.matrix.nrows, self.matrix.ncols)
    }
}

pub fn factorize(a: &CscMatrix) -> Result<Factorization<'_>> {
    if a.nrows != a.ncols {
        return Err(Error::InvalidArgument(format!("matrix is {} x {}, not square", a.nrows, a.ncols)));
    }
    if a.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let lu = a.as_faer().sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => Error::Singular { pivot: index },
        LuError::Generic(e) => Error::Solver(format!("{e:?}")),
    })?;
    Ok(Factorization { matrix: a, lu })
}

/// `‖Ax - b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
pub fn relative_residual(a: &CscMatrix, x: &[C64], b: &[C64]) -> f64 {
    let ax = a.matvec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let scale = a.norm_inf() * xn + bn;
    if scale == 0.0 {
        0.0
    } else {
        r / scale
    }
}

const RESIDUAL_TOL: f64 = 1e-10;

impl Factorization<'_> {
    fn raw_solve(&self, b: &[C64]) -> Vec<C64> {
        use faer::linalg::solvers::Solve;
        let rhs = Mat::<C64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = b`, with one step of iterative refinement when the
    /// first residual misses the tolerance.
    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let a = self.matrix;
        if b.len() != a.nrows {
            return Err(Error::InvalidArgument(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                a.nrows
            )));
        }
        let mut x = self.raw_solve(b);
        if let Some(k) = x.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular { pivot: k });
        }
        let mut res = relative_residual(a, &x, b);
        if res > RESIDUAL_TOL {
            let ax = a.matvec(&x);
            let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            res = relative_residual(a, &x, b);
        }
        if !(res <= RESIDUAL_TOL) {
            return Err(Error::Solver(format!(
                "relative residual {res:e} exceeds {RESIDUAL_TOL:e}; the system is numerically singular"
            )));
        }
        Ok(x)
    }
}

/// Factorizes and solves in one call.
pub fn solve(a: &CscMatrix, b: &[C64]) -> Result<Vec<C64>> {
    factorize(a)?.solve(b)
}
