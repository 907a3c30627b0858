//! Dense complex matrices and the Hermitian calculus used everywhere else.
//!
//! Eigenvalues come from cyclic complex Jacobi rotations. Singular values are
//! read off the Gram matrix, which is accurate enough for the norms and
//! polar factors the optimisers need.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative threshold below which singular values count as zero.
pub const RANK_TOL: f64 = 1e-12;
/// Relative slack for PSD membership.
pub const PSD_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    /// Builds a real matrix from row slices. Panics on ragged input.
    pub fn from_real(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| {
            assert_eq!(rows[i].len(), c, "ragged rows");
            C64::new(rows[i][j], 0.0)
        })
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(values[i], 0.0) } else { ZERO })
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { values[i] } else { ZERO })
    }

    /// Matrix unit E_ij of shape rows x cols.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m[(i, j)] = ONE;
        m
    }

    /// Column vector from entries.
    pub fn column(entries: &[C64]) -> Self {
        CMatrix { rows: entries.len(), cols: 1, data: entries.to_vec() }
    }

    /// Standard basis column vector.
    pub fn basis_vector(n: usize, i: usize) -> Self {
        Self::unit(n, 1, i, 0)
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, a: C64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn scale_real(&self, a: f64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hilbert-Schmidt inner product tr(B* A) = <A, B>.
    pub fn hs_inner(&self, other: &CMatrix) -> C64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b.conj()).sum()
    }

    /// (A + A*)/2.
    pub fn hermitian_part(&self) -> Self {
        debug_assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        let (p, q) = other.shape();
        Self::from_fn(self.rows * p, self.cols * q, |r, c| self[(r / p, c / q)] * other[(r % p, c % q)])
    }

    /// A ⊗ I_m.
    pub fn kron_identity(&self, m: usize) -> Self {
        if m == 1 {
            return self.clone();
        }
        self.kron(&Self::identity(m))
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self[(r0 + r, c0 + c)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] = b[(r, c)];
            }
        }
    }

    pub fn add_block(&mut self, r0: usize, c0: usize, b: &CMatrix) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                self[(r0 + r, c0 + c)] += b[(r, c)];
            }
        }
    }

    pub fn col(&self, c: usize) -> CMatrix {
        Self::from_fn(self.rows, 1, |r, _| self[(r, c)])
    }

    pub fn set_col(&mut self, c: usize, v: &CMatrix) {
        for r in 0..self.rows {
            self[(r, c)] = v[(r, 0)];
        }
    }

    /// Block matrix assembled from a grid of equally shaped blocks.
    pub fn from_blocks(blocks: &[Vec<CMatrix>]) -> Result<Self> {
        let br = blocks.len();
        let bc = blocks.first().map_or(0, |r| r.len());
        if br == 0 || bc == 0 {
            return Ok(Self::zeros(0, 0));
        }
        let (p, q) = blocks[0][0].shape();
        let mut out = Self::zeros(br * p, bc * q);
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != bc {
                return Err(Error::ShapeMismatch("ragged block grid".into()));
            }
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (p, q) {
                    return Err(Error::ShapeMismatch("unequal block shapes".into()));
                }
                out.set_block(i * p, j * q, b);
            }
        }
        Ok(out)
    }

    pub fn hstack(parts: &[CMatrix]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::ShapeMismatch("hstack row mismatch".into()));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            out.set_block(0, c0, p);
            c0 += p.cols;
        }
        Ok(out)
    }

    pub fn vstack(parts: &[CMatrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return Err(Error::ShapeMismatch("vstack column mismatch".into()));
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            out.set_block(r0, 0, p);
            r0 += p.rows;
        }
        Ok(out)
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(parts: &[CMatrix]) -> Self {
        let rows = parts.iter().map(|p| p.rows).sum();
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for p in parts {
            out.set_block(r0, c0, p);
            r0 += p.rows;
            c0 += p.cols;
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch {:?} * {:?}", self.shape(), other.shape());
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for r in 0..self.rows {
            let orow = &mut out.data[r * n..(r + 1) * n];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// A* B without forming A*.
    pub fn adjoint_mul(&self, other: &CMatrix) -> Self {
        assert_eq!(self.rows, other.rows, "adjoint_mul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        let n = other.cols;
        for k in 0..self.rows {
            let brow = &other.data[k * n..(k + 1) * n];
            for r in 0..self.cols {
                let a = self.data[k * self.cols + r].conj();
                if a == ZERO {
                    continue;
                }
                let orow = &mut out.data[r * n..(r + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Row-major vectorisation as a column.
    pub fn vectorize(&self) -> CMatrix {
        CMatrix { rows: self.data.len(), cols: 1, data: self.data.clone() }
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self> {
        Self::from_vec(rows, cols, self.data.clone())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && (self - &self.adjoint()).frobenius_norm() <= tol * self.frobenius_norm().max(1.0)
    }

    pub fn approx_eq(&self, other: &CMatrix, tol: f64) -> bool {
        self.shape() == other.shape() && (self - other).max_abs() <= tol
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

macro_rules! elementwise {
    ($tr:ident, $f:ident, $op:tt) => {
        impl $tr<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: &CMatrix) -> CMatrix {
                assert_eq!(self.shape(), rhs.shape(), "elementwise shape mismatch");
                CMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $tr<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: CMatrix) -> CMatrix {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $f(self, rhs: &CMatrix) -> CMatrix {
                (&self).$f(rhs)
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape(), "sub_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Mul<CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        self.matmul(&rhs)
    }
}

impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Mul<CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        self.matmul(&rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

/// Wire form of a matrix.
#[derive(Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<CMatrix> for MatrixJson {
    fn from(m: CMatrix) -> Self {
        let re = (0..m.rows).map(|r| (0..m.cols).map(|c| m[(r, c)].re).collect()).collect();
        let im = (0..m.rows).map(|r| (0..m.cols).map(|c| m[(r, c)].im).collect()).collect();
        MatrixJson { rows: m.rows, cols: m.cols, re, im }
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        let ok = j.re.len() == j.rows
            && j.im.len() == j.rows
            && j.re.iter().chain(&j.im).all(|row| row.len() == j.cols);
        if !ok {
            return Err(Error::Parse(format!("matrix arrays do not match {}x{}", j.rows, j.cols)));
        }
        Ok(CMatrix::from_fn(j.rows, j.cols, |r, c| C64::new(j.re[r][c], j.im[r][c])))
    }
}

/// Eigendecomposition A = V diag(values) V* with ascending values.
#[derive(Clone, Debug)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Rebuilds V f(Λ) V*.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (c, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for r in 0..n {
                scaled[(r, c)] *= w;
            }
        }
        scaled.matmul(&self.vectors.adjoint())
    }
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!("eigenproblem on {}x{} matrix", a.rows, a.cols)));
    }
    let skew = (a - &a.adjoint()).frobenius_norm();
    let scale = a.frobenius_norm().max(1.0);
    if skew > 1e-9 * scale {
        return Err(Error::NotHermitian(skew));
    }
    Ok(jacobi(a.hermitian_part()))
}

/// Eigendecomposition of the Hermitian part, never fails on square input.
pub(crate) fn herm_eig_of_part(a: &CMatrix) -> HermEig {
    jacobi(a.hermitian_part())
}

fn jacobi(mut h: CMatrix) -> HermEig {
    let n = h.rows;
    let mut v = CMatrix::identity(n);
    let total = h.frobenius_norm().max(1.0);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += h[(p, q)].norm_sqr();
                }
            }
        }
        if off.sqrt() <= JACOBI_TOL * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = h[(p, q)];
                let abs_b = b.norm();
                if abs_b <= 1e-300 || abs_b <= 1e-18 * total {
                    h[(p, q)] = ZERO;
                    h[(q, p)] = ZERO;
                    continue;
                }
                let a_pp = h[(p, p)].re;
                let a_qq = h[(q, q)].re;
                let w = (b / abs_b).conj();
                let tau = (a_qq - a_pp) / (2.0 * abs_b);
                let t = if tau >= 0.0 { 1.0 } else { -1.0 } / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = [[c, s], [-s w, c w]] on the (p, q) plane.
                let u_qp = -w * s;
                let u_qq = w * c;
                for k in 0..n {
                    let hp = h[(k, p)];
                    let hq = h[(k, q)];
                    h[(k, p)] = hp * c + hq * u_qp;
                    h[(k, q)] = hp * s + hq * u_qq;
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = vp * c + vq * u_qp;
                    v[(k, q)] = vp * s + vq * u_qq;
                }
                let u_qp_c = u_qp.conj();
                let u_qq_c = u_qq.conj();
                for k in 0..n {
                    let hp = h[(p, k)];
                    let hq = h[(q, k)];
                    h[(p, k)] = hp * c + hq * u_qp_c;
                    h[(q, k)] = hp * s + hq * u_qq_c;
                }
                h[(p, q)] = ZERO;
                h[(q, p)] = ZERO;
                h[(p, p)] = C64::new(h[(p, p)].re, 0.0);
                h[(q, q)] = C64::new(h[(q, q)].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| h[(i, i)].re.total_cmp(&h[(j, j)].re));
    let values = order.iter().map(|&i| h[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    HermEig { values, vectors }
}

/// Singular value decomposition A = U diag(s) V*, values descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Number of singular values above the relative rank threshold.
    pub fn rank(&self) -> usize {
        let top = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&x| x > RANK_TOL * top && x > 0.0).count()
    }

    /// Reassembles U f(Σ) V* on the leading min(m, n) pairs.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let m = self.u.rows();
        let n = self.v.rows();
        let mut out = CMatrix::zeros(m, n);
        for (i, &sv) in self.s.iter().enumerate() {
            let w = f(sv);
            if w == 0.0 {
                continue;
            }
            for r in 0..m {
                let a = self.u[(r, i)] * w;
                for c in 0..n {
                    out[(r, c)] += a * self.v[(c, i)].conj();
                }
            }
        }
        out
    }
}

/// SVD through the eigendecomposition of the smaller Gram matrix.
pub fn svd(a: &CMatrix) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    // m >= n: eigen of A*A (n x n)
    let gram = a.adjoint_mul(a);
    let eig = jacobi(gram.hermitian_part());
    let mut s = Vec::with_capacity(n);
    let mut v = CMatrix::zeros(n, n);
    for i in 0..n {
        let idx = n - 1 - i;
        s.push(eig.values[idx].max(0.0).sqrt());
        for r in 0..n {
            v[(r, i)] = eig.vectors[(r, idx)];
        }
    }
    let top = s.first().copied().unwrap_or(0.0);
    let mut u = CMatrix::zeros(m, m);
    let mut filled = 0;
    for i in 0..n {
        if s[i] <= RANK_TOL * top || s[i] == 0.0 {
            break;
        }
        let mut col = a.matmul(&v.col(i)).scale_real(1.0 / s[i]);
        orthogonalize_against(&mut col, &u, filled);
        let nrm = col.frobenius_norm();
        if nrm < 0.5 {
            break;
        }
        u.set_col(filled, &col.scale_real(1.0 / nrm));
        filled += 1;
    }
    complete_basis(&mut u, filled);
    Svd { u, s, v }
}

fn orthogonalize_against(col: &mut CMatrix, basis: &CMatrix, count: usize) {
    for _ in 0..2 {
        for j in 0..count {
            let mut dot = ZERO;
            for r in 0..col.rows() {
                dot += basis[(r, j)].conj() * col[(r, 0)];
            }
            for r in 0..col.rows() {
                let b = basis[(r, j)];
                col[(r, 0)] -= dot * b;
            }
        }
    }
}

/// Fills columns `filled..` of `u` with an orthonormal completion.
fn complete_basis(u: &mut CMatrix, mut filled: usize) {
    let m = u.rows();
    let mut e = 0;
    while filled < u.cols() && e < m {
        let mut col = CMatrix::basis_vector(m, e);
        orthogonalize_against(&mut col, u, filled);
        let nrm = col.frobenius_norm();
        if nrm > 1e-6 {
            u.set_col(filled, &col.scale_real(1.0 / nrm));
            filled += 1;
        }
        e += 1;
    }
}

/// Orthonormal basis of the column space (rank by relative threshold).
pub fn range_basis(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let r = d.rank();
    d.u.block(0, 0, a.rows(), r)
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    let gram = if m >= n { a.adjoint_mul(a) } else { a.matmul(&a.adjoint()) };
    jacobi(gram.hermitian_part()).max().max(0.0).sqrt()
}

/// Leading singular triple (sigma, left vector, right vector).
pub fn top_singular(a: &CMatrix) -> (f64, CMatrix, CMatrix) {
    let d = svd(a);
    (d.s.first().copied().unwrap_or(0.0), d.u.col(0), d.v.col(0))
}

pub fn trace_norm(a: &CMatrix) -> f64 {
    svd(a).s.iter().sum()
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    herm_eig_of_part(a).min()
}

/// PSD test with the relative slack `PSD_TOL`.
pub fn is_psd(a: &CMatrix) -> bool {
    if !a.is_hermitian(1e-9) {
        return false;
    }
    let eig = herm_eig_of_part(a);
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    eig.min() >= -PSD_TOL * scale.max(1.0)
}

/// Square root of the PSD part of a Hermitian matrix.
pub fn psd_sqrt(a: &CMatrix) -> CMatrix {
    herm_eig_of_part(a).apply(|l| l.max(0.0).sqrt())
}

/// Pseudo-inverse square root: inverse square roots of eigenvalues above
/// `rel_tol` times the largest, zero elsewhere.
pub fn psd_pinv_sqrt(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let eig = herm_eig_of_part(a);
    let cut = rel_tol * eig.max().max(0.0);
    eig.apply(|l| if l > cut && l > 0.0 { 1.0 / l.sqrt() } else { 0.0 })
}

/// Moore-Penrose pseudo-inverse.
pub fn pinv(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let top = d.s.first().copied().unwrap_or(0.0);
    let inv = CMatrix::from_fn(a.cols(), a.rows(), |_, _| ZERO);
    let mut out = inv;
    for (i, &sv) in d.s.iter().enumerate() {
        if sv <= RANK_TOL * top || sv == 0.0 {
            continue;
        }
        for r in 0..a.cols() {
            let vr = d.v[(r, i)] / sv;
            for c in 0..a.rows() {
                out[(r, c)] += vr * d.u[(c, i)].conj();
            }
        }
    }
    out
}

/// Nearest contraction in operator norm: clips singular values at one.
pub fn clip_to_contraction(a: &CMatrix) -> CMatrix {
    if op_norm(a) <= 1.0 {
        return a.clone();
    }
    svd(a).rebuild(|s| s.min(1.0))
}

/// Partial isometry U V* from the SVD, the maximiser of Re tr(T* A)
/// over contractions T.
pub fn polar_isometry(a: &CMatrix) -> CMatrix {
    let d = svd(a);
    let top = d.s.first().copied().unwrap_or(0.0);
    d.rebuild(|s| if s > RANK_TOL * top && s > 0.0 { 1.0 } else { 0.0 })
}

/// Result of maximising Re tr(T M) over 0 ⪯ T ⪯ I.
#[derive(Clone, Debug)]
pub struct PsdLinearMax {
    pub value: f64,
    pub projection: CMatrix,
}

pub fn psd_linear_max(m: &CMatrix) -> PsdLinearMax {
    let eig = herm_eig_of_part(m);
    let value = eig.values.iter().filter(|&&l| l > 0.0).sum();
    let projection = eig.apply(|l| if l > 0.0 { 1.0 } else { 0.0 });
    PsdLinearMax { value, projection }
}

/// Inner product <v, w> = w* v for column vectors.
pub fn inner(v: &CMatrix, w: &CMatrix) -> C64 {
    v.hs_inner(w)
}

pub fn vec_norm(v: &CMatrix) -> f64 {
    v.frobenius_norm()
}

/// Orthonormalises the columns of `a` with modified Gram-Schmidt and drops
/// dependent columns.
pub fn orthonormal_columns(a: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.rows(), a.cols());
    let mut filled = 0;
    let scale = a.max_abs().max(1e-300);
    for c in 0..a.cols() {
        let mut col = a.col(c);
        orthogonalize_against(&mut col, &out, filled);
        let nrm = col.frobenius_norm();
        if nrm > 1e-10 * scale {
            out.set_col(filled, &col.scale_real(1.0 / nrm));
            filled += 1;
        }
    }
    out.block(0, 0, a.rows(), filled)
}

/// Least-squares solve of min ‖A c − b‖ via the pseudo-inverse.
pub fn lstsq(a: &CMatrix, b: &CMatrix) -> CMatrix {
    pinv(a).matmul(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_gaussian, random_hermitian, random_real, random_unitary, seeded};

    #[test]
    fn eig_trivial_cases() {
        let e = herm_eig(&CMatrix::identity(2)).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let e = herm_eig(&CMatrix::diag_real(&[3.0, -1.0])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let a = CMatrix::unit(2, 2, 0, 1);
        assert!(matches!(herm_eig(&a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn eig_reconstructs_random() {
        let mut rng = seeded(7, 0);
        for n in [1, 2, 5, 8, 13] {
            let a = random_hermitian(&mut rng, n);
            let e = herm_eig(&a).unwrap();
            let rec = e.apply(|l| l);
            let scale = op_norm(&a).max(1.0);
            assert!(op_norm(&(&a - &rec)) <= 1e-10 * scale);
            let vv = e.vectors.adjoint_mul(&e.vectors);
            assert!(op_norm(&(&vv - &CMatrix::identity(n))) <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        let mut rng = seeded(11, 0);
        for (m, n) in [(3, 5), (5, 3), (4, 4), (1, 6)] {
            let a = random_gaussian(&mut rng, m, n);
            let d = svd(&a);
            assert!((&a - &d.rebuild(|s| s)).max_abs() < 1e-10);
            let uu = d.u.adjoint_mul(&d.u);
            assert!((&uu - &CMatrix::identity(m)).max_abs() < 1e-10);
        }
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&CMatrix::unit(2, 2, 0, 1)) - 1.0).abs() < 1e-14);
        let mut rng = seeded(3, 0);
        let u = random_unitary(&mut rng, 4);
        assert!((op_norm(&u) - 1.0).abs() < 1e-12);
        let p = CMatrix::from_real(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let q = CMatrix::unit(3, 3, 1, 1);
        assert!((op_norm(&p.kron(&q)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psd_linear_max_examples() {
        let r = psd_linear_max(&CMatrix::identity(2));
        assert!((r.value - 2.0).abs() < 1e-14);
        assert!(r.projection.approx_eq(&CMatrix::identity(2), 1e-12));
        let r = psd_linear_max(&CMatrix::diag_real(&[1.0, -1.0]));
        assert!((r.value - 1.0).abs() < 1e-14);
        assert!(r.projection.approx_eq(&CMatrix::unit(2, 2, 0, 0), 1e-12));
    }

    #[test]
    fn psd_linear_max_rank_one_matches_two_by_two_oracle() {
        let mut rng = seeded(5, 0);
        for trial in 0..40 {
            let (v, w) = if trial % 2 == 0 {
                (random_real(&mut rng, 4, 1), random_real(&mut rng, 4, 1))
            } else {
                (random_gaussian(&mut rng, 4, 1), random_gaussian(&mut rng, 4, 1))
            };
            let m = v.matmul(&w.adjoint());
            // The Hermitian part of v w* lives on span{v, w}; its eigenvalues
            // are (Re z ± sqrt(‖v‖²‖w‖² − (Im z)²))/2 with z = <v, w>.
            let z = inner(&v, &w);
            let a = vec_norm(&v) * vec_norm(&w);
            let expect = ((z.re + (a * a - z.im * z.im).max(0.0).sqrt()) / 2.0).max(0.0);
            assert!((psd_linear_max(&m).value - expect).abs() < 1e-10);
            if trial % 2 == 0 {
                assert!((expect - ((a + z.re) / 2.0).max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pinv_and_sqrt() {
        let mut rng = seeded(9, 0);
        let g = random_gaussian(&mut rng, 5, 3);
        let p = g.matmul(&g.adjoint());
        let s = psd_sqrt(&p);
        assert!(op_norm(&(&s.matmul(&s) - &p)) < 1e-9);
        let pi = pinv(&g);
        assert!((&g.matmul(&pi).matmul(&g) - &g).max_abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = seeded(1, 0);
        let a = random_gaussian(&mut rng, 3, 2);
        let s = serde_json::to_string(&a).unwrap();
        let b: CMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
