// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra: row-major matrices, LU with partial
//! pivoting, Padé scaling-and-squaring exponential and a Jacobi solver for
//! Hermitian eigenproblems.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, found: row.len() });
            }
            data.extend(row.iter().map(|&v| C64::new(v, 0.0)));
        }
        Ok(DenseMatrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(ZERO, |acc, (a, b)| acc + a * b))
            .collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: C64) -> DenseMatrix {
        DenseMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn scale_real(&self, c: f64) -> DenseMatrix {
        self.scale(C64::new(c, 0.0))
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(C64, C64) -> C64) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// `self + c * other`, in place.
    pub fn add_scaled_in_place(&mut self, c: C64, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v.norm_sqr()).sum())
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `(A + A*) / 2`.
    pub fn hermitian_part(&self) -> DenseMatrix {
        assert!(self.is_square());
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization `P A = L U` with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.rows, found: a.cols });
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let floor = a.norm_max() * f64::EPSILON * (n.max(1) as f64);
        for k in 0..n {
            let (p, pivot_abs) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs > floor) || pivot_abs == 0.0 {
                return Err(Error::SingularMatrix);
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= factor * u;
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Solves `A x = b`.
    #[allow(clippy::needless_range_loop)] // triangular sweeps read best indexed
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * y[j];
            }
            y[i] = acc / self.lu[(i, i)];
        }
        y
    }

    /// Solves `A* x = b` from the same factors.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // A* = U* L* P, so solve U* y = b, then L* z = y, then x = P^T z.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[(j, i)].conj() * y[j];
            }
            y[i] = acc / self.lu[(i, i)].conj();
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[(j, i)].conj() * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![ZERO; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    pub fn solve_matrix(&self, b: &DenseMatrix) -> DenseMatrix {
        let n = self.dim();
        assert_eq!(b.rows, n);
        let mut out = DenseMatrix::zeros(n, b.cols);
        for j in 0..b.cols {
            let col = self.solve(&b.column(j));
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068e0),
];
const THETA_13: f64 = 5.371_920_351_148_152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with diagonal Padé
/// approximants of degree 3, 5, 7, 9 or 13 (Higham 2005).
pub fn expm(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.rows, found: a.cols });
    }
    if !a.is_finite() {
        return Err(Error::InvalidArgument("matrix exponential of a non-finite matrix"));
    }
    let n = a.rows;
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let norm = a.norm_one();
    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            return pade_low(a, m);
        }
    }
    let squarings = if norm > THETA_13 { libm::ceil(libm::log2(norm / THETA_13)) as i32 } else { 0 };
    let scaled = a.scale_real(libm::exp2(-(squarings as f64)));
    let mut r = pade13(&scaled)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    Ok(r)
}

fn pade_low(a: &DenseMatrix, m: usize) -> Result<DenseMatrix> {
    let b: &[f64] = match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let n = a.rows;
    let a2 = a.matmul(a);
    // powers[k] = A^(2k)
    let mut powers = vec![DenseMatrix::identity(n), a2.clone()];
    while powers.len() <= m / 2 {
        let next = powers.last().unwrap().matmul(&a2);
        powers.push(next);
    }
    let mut u_inner = DenseMatrix::zeros(n, n);
    let mut v = DenseMatrix::zeros(n, n);
    for k in 0..=m / 2 {
        v.add_scaled_in_place(C64::new(b[2 * k], 0.0), &powers[k]);
        u_inner.add_scaled_in_place(C64::new(b[2 * k + 1], 0.0), &powers[k]);
    }
    let u = a.matmul(&u_inner);
    pade_solve(&u, &v)
}

fn pade13(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows;
    let b = |k: usize| C64::new(B13[k], 0.0);
    let id = DenseMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut u_hi = a6.scale(b(13));
    u_hi.add_scaled_in_place(b(11), &a4);
    u_hi.add_scaled_in_place(b(9), &a2);
    let mut u_inner = a6.matmul(&u_hi);
    u_inner.add_scaled_in_place(b(7), &a6);
    u_inner.add_scaled_in_place(b(5), &a4);
    u_inner.add_scaled_in_place(b(3), &a2);
    u_inner.add_scaled_in_place(b(1), &id);
    let u = a.matmul(&u_inner);

    let mut v_hi = a6.scale(b(12));
    v_hi.add_scaled_in_place(b(10), &a4);
    v_hi.add_scaled_in_place(b(8), &a2);
    let mut v = a6.matmul(&v_hi);
    v.add_scaled_in_place(b(6), &a6);
    v.add_scaled_in_place(b(4), &a4);
    v.add_scaled_in_place(b(2), &a2);
    v.add_scaled_in_place(b(0), &id);
    pade_solve(&u, &v)
}

fn pade_solve(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let lu = LuFactors::new(&v.sub(u))?;
    Ok(lu.solve_matrix(&v.add(u)))
}

/// Cyclic Jacobi on a real symmetric matrix stored row-major.
/// Returns eigenvalues (unsorted) and eigenvectors as columns of `vecs`.
fn jacobi_symmetric(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut vecs = vec![0.0; n * n];
    for i in 0..n {
        vecs[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|v| v * v).sum();
    let target = total * 1e-30;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= target || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..n).map(|i| a[i * n + i]).collect();
    (eig, vecs)
}

/// Real symmetric embedding `[[X, -Y], [Y, X]]` of a Hermitian `X + iY`.
fn real_embedding(h: &DenseMatrix) -> Vec<f64> {
    let n = h.rows;
    let m = 2 * n;
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            out[i * m + j] = v.re;
            out[i * m + n + j] = -v.im;
            out[(n + i) * m + j] = v.im;
            out[(n + i) * m + n + j] = v.re;
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the Hermitian
/// part of the input is used.
pub fn hermitian_eigenvalues(h: &DenseMatrix) -> Vec<f64> {
    let herm = h.hermitian_part();
    let n = herm.rows;
    let (mut eig, _) = jacobi_symmetric(real_embedding(&herm), 2 * n);
    eig.sort_by(f64::total_cmp);
    // every eigenvalue appears twice in the embedding
    eig.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect()
}

/// Largest eigenvalue of the Hermitian part of `h` with a unit eigenvector.
pub fn hermitian_max_eigenpair(h: &DenseMatrix) -> (f64, Vec<C64>) {
    let herm = h.hermitian_part();
    let n = herm.rows;
    if n == 0 {
        return (f64::NEG_INFINITY, Vec::new());
    }
    let m = 2 * n;
    let (eig, vecs) = jacobi_symmetric(real_embedding(&herm), m);
    let (best, &lambda) = eig.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let mut v: Vec<C64> = (0..n).map(|i| C64::new(vecs[i * m + best], vecs[(n + i) * m + best])).collect();
    let norm = libm::sqrt(v.iter().map(|c| c.norm_sqr()).sum());
    for c in v.iter_mut() {
        *c /= norm;
    }
    (lambda, v)
}

/// Operator 2-norm via the largest eigenvalue of `A* A`.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let gram = a.adjoint().matmul(a);
    let lambda = hermitian_eigenvalues(&gram).last().copied().unwrap_or(0.0);
    libm::sqrt(lambda.max(0.0))
}
