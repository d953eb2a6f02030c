//! Dense real matrices and the handful of factorizations the rest of the
//! crate needs.
//!
//! [`Mat`] is a row-major carrier that refuses non-finite entries at its
//! public constructors. Decompositions (SVD, symmetric eigen, Cholesky, LU)
//! are delegated to `nalgebra`; everything built on top of them (Kronecker
//! and Hadamard products, the pseudo-inverse and rank with a relative cutoff,
//! the definiteness test) lives here.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by [`pinv`] and [`rank`] when callers
/// have no better information.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by [`is_positive_definite`] and [`sym_eig`]:
/// `‖A − Aᵀ‖_F ≤ SYM_TOL · max(1, ‖A‖_F)`.
pub const SYM_TOL: f64 = 1e-9;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatRepr", into = "MatRepr")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Serialized form: a list of rows.
#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct MatRepr(Vec<Vec<f64>>);

impl TryFrom<MatRepr> for Mat {
    type Error = Error;

    fn try_from(repr: MatRepr) -> Result<Self> {
        Mat::from_rows(&repr.0)
    }
}

impl From<Mat> for MatRepr {
    fn from(m: Mat) -> Self {
        MatRepr(m.to_rows())
    }
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Mat::new",
                format!("{} entries for a {rows}x{cols} matrix", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Mat::new"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::dim(
                    "Mat::from_rows",
                    format!("row {i} has {} entries, expected {c}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Mat::new(r, c, data)
    }

    pub fn column(v: &[f64]) -> Result<Self> {
        Mat::new(v.len(), 1, v.to_vec())
    }

    pub fn row_vector(v: &[f64]) -> Result<Self> {
        Mat::new(1, v.len(), v.to_vec())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Mat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "Mat::from_fn produced {v} at ({i}, {j})");
                data.push(v);
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::dim(
                "matmul",
                format!("{:?} times {:?}", self.shape(), rhs.shape()),
            ));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dim(
                "mul_vec",
                format!("{:?} times vector of length {}", self.shape(), v.len()),
            ));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, rhs: &Mat, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn try_add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `‖A − Aᵀ‖_F ≤ SYM_TOL · max(1, ‖A‖_F)`.
    pub fn is_symmetric(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        let mut asym = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                asym += 2.0 * d * d;
            }
        }
        asym.sqrt() <= SYM_TOL * self.frobenius_norm().max(1.0)
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn remove_row(&self, r: usize) -> Mat {
        let data = (0..self.rows)
            .filter(|&i| i != r)
            .flat_map(|i| self.row(i).iter().copied())
            .collect();
        Mat {
            rows: self.rows - 1,
            cols: self.cols,
            data,
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Overwrites the sub-block starting at `(r0, c0)` with `b`.
    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(
            r0 + b.rows <= self.rows && c0 + b.cols <= self.cols,
            "block {:?} at ({r0}, {c0}) exceeds {:?}",
            b.shape(),
            self.shape()
        );
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(b.row(i));
        }
    }

    /// Writes `b` at `(r0, c0)` and `bᵀ` at `(c0, r0)`.
    pub fn set_block_sym(&mut self, r0: usize, c0: usize, b: &Mat) {
        self.set_block(r0, c0, b);
        if r0 != c0 {
            self.set_block(c0, r0, &b.transpose());
        }
    }

    pub fn inverse(&self) -> Result<Mat> {
        if !self.is_square() {
            return Err(Error::dim("inverse", format!("{:?}", self.shape())));
        }
        self.to_na()
            .try_inverse()
            .map(|m| Mat::from_na(&m))
            .ok_or_else(|| Error::Domain {
                op: "inverse",
                detail: "matrix is singular".into(),
            })
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_na(m: &DMatrix<f64>) -> Mat {
        Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; the `try_*` / `matmul` methods are
// the checked versions.
impl Mul for &Mat {
    type Output = Mat;

    fn mul(self, rhs: &Mat) -> Mat {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &Mat {
    type Output = Mat;

    fn add(self, rhs: &Mat) -> Mat {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &Mat {
    type Output = Mat;

    fn sub(self, rhs: &Mat) -> Mat {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl Neg for &Mat {
    type Output = Mat;

    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in self.row(i) {
                write!(f, "{v:>12.6} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[i, j] · b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Entrywise product.
pub fn hadamard(a: &Mat, b: &Mat) -> Result<Mat> {
    a.zip_with(b, "hadamard", |x, y| x * y)
}

/// `kron(a, I_n)`: expands a graph-level matrix to act on stacked
/// n-dimensional agent states.
pub fn kron_eye(a: &Mat, n: usize) -> Mat {
    kron(a, &Mat::identity(n))
}

/// Singular values in descending order.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.to_na().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Moore–Penrose pseudo-inverse via SVD. Singular values at or below
/// `tol · σ_max` are treated as zero.
pub fn pinv(a: &Mat, tol: f64) -> Mat {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Mat::zeros(c, r);
    }
    let svd = a.to_na().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested U");
    let v_t = svd.v_t.as_ref().expect("svd requested Vᵀ");
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let cutoff = tol * smax;
    let mut out = Mat::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..c {
            let vik = v_t[(k, i)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..r {
                out[(i, j)] += vik * u[(j, k)];
            }
        }
    }
    out
}

/// Number of singular values above `tol · σ_max`.
pub fn rank(a: &Mat, tol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// True iff `a` is symmetric to [`SYM_TOL`] and its symmetrized form admits a
/// Cholesky factorization.
pub fn is_positive_definite(a: &Mat) -> Result<bool> {
    if !a.is_square() {
        return Err(Error::dim(
            "is_positive_definite",
            format!("{:?} is not square", a.shape()),
        ));
    }
    if !a.is_symmetric() {
        return Ok(false);
    }
    Ok(a.symmetrized().to_na().cholesky().is_some())
}

/// Symmetric eigendecomposition with eigenvalues in ascending order and the
/// matching orthonormal eigenvectors as columns.
pub fn sym_eig(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if !a.is_square() {
        return Err(Error::dim("sym_eig", format!("{:?} is not square", a.shape())));
    }
    if !a.is_symmetric() {
        return Err(Error::Domain {
            op: "sym_eig",
            detail: "input is not symmetric".into(),
        });
    }
    let n = a.rows;
    let eig = a.symmetrized().to_na().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(a: &Mat) -> Result<(f64, f64)> {
    let (vals, _) = sym_eig(a)?;
    Ok((vals[0], vals[vals.len() - 1]))
}
