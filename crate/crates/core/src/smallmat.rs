//! Fixed-size dense linear algebra for the four-state problem.
//!
//! Everything here works on stack values (`Copy`) so the filters can pass
//! matrices around freely. Only the operations the estimators need are
//! provided: products, sums, transposes, a pivoted Gauss-Jordan inverse,
//! a scaled-and-squared Taylor exponential and a norm-of-powers spectral
//! radius estimate.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

/// Pivots whose magnitude falls below this are treated as zero by [`Matrix4::invert`].
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Upper bound on the number of squarings in [`Matrix4::spectral_radius`].
pub const MAX_SQUARINGS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("matrix is singular: pivot {pivot:e} in column {column}")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("spectral radius estimate did not settle after {squarings} squarings (last {last})")]
    NoConvergence { squarings: usize, last: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// A 4-vector, used for states, gains, and per-state statistics.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Vector4(pub [f64; 4]);

/// A 1x4 row, the scalar observation map.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct RowVector4(pub [f64; 4]);

/// A 4x4 matrix stored row-major.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Matrix4(pub [[f64; 4]; 4]);

impl Vector4 {
    pub const ZERO: Vector4 = Vector4([0.0; 4]);

    pub const fn new(v: [f64; 4]) -> Self {
        Vector4(v)
    }

    pub fn try_new(v: [f64; 4]) -> Result<Self, MatError> {
        match v.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(MatError::NonFinite { row: i, col: 0 }),
            None => Ok(Vector4(v)),
        }
    }

    pub fn splat(x: f64) -> Self {
        Vector4([x; 4])
    }

    pub fn dot(&self, other: &Vector4) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> Vector4 {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector4 {
        Vector4(self.0.map(f))
    }

    /// Elementwise combination of two vectors.
    pub fn zip_with(&self, other: &Vector4, f: impl Fn(f64, f64) -> f64) -> Vector4 {
        Vector4(std::array::from_fn(|i| f(self.0[i], other.0[i])))
    }

    pub fn abs(&self) -> Vector4 {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> RowVector4 {
        RowVector4(self.0)
    }

    /// `v vᵀ`-style outer product `self · otherᵀ`.
    pub fn outer(&self, other: &Vector4) -> Matrix4 {
        Matrix4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i] * other.0[j])))
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }
}

impl RowVector4 {
    pub const fn new(v: [f64; 4]) -> Self {
        RowVector4(v)
    }

    pub fn transpose(&self) -> Vector4 {
        Vector4(self.0)
    }

    pub fn dot(&self, v: &Vector4) -> f64 {
        self.transpose().dot(v)
    }

    /// Row times matrix.
    pub fn mul_mat(&self, m: &Matrix4) -> RowVector4 {
        RowVector4(std::array::from_fn(|j| (0..4).map(|k| self.0[k] * m.0[k][j]).sum()))
    }

    /// The quadratic form `h M hᵀ`.
    pub fn quad(&self, m: &Matrix4) -> f64 {
        self.mul_mat(m).dot(&self.transpose())
    }
}

impl Matrix4 {
    pub const fn new(rows: [[f64; 4]; 4]) -> Self {
        Matrix4(rows)
    }

    /// Constructs a matrix, rejecting NaN or infinite entries.
    pub fn try_new(rows: [[f64; 4]; 4]) -> Result<Self, MatError> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(MatError::NonFinite { row: i, col: j });
            }
        }
        Ok(Matrix4(rows))
    }

    pub const fn zeros() -> Self {
        Matrix4([[0.0; 4]; 4])
    }

    pub fn identity() -> Self {
        Self::scalar(1.0)
    }

    /// `c·I`
    pub fn scalar(c: f64) -> Self {
        Self::diag([c; 4])
    }

    pub fn diag(d: [f64; 4]) -> Self {
        let mut m = Self::zeros();
        for (i, x) in d.into_iter().enumerate() {
            m.0[i][i] = x;
        }
        m
    }

    pub fn rows(&self) -> &[[f64; 4]; 4] {
        &self.0
    }

    pub fn row(&self, i: usize) -> RowVector4 {
        RowVector4(self.0[i])
    }

    pub fn col(&self, j: usize) -> Vector4 {
        Vector4(std::array::from_fn(|i| self.0[i][j]))
    }

    pub fn transpose(&self) -> Matrix4 {
        Matrix4(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn mat_mul(&self, other: &Matrix4) -> Matrix4 {
        Matrix4(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..4).map(|k| self.0[i][k] * other.0[k][j]).sum())
        }))
    }

    pub fn mat_vec(&self, v: &Vector4) -> Vector4 {
        Vector4(std::array::from_fn(|i| self.row(i).dot(v)))
    }

    pub fn mat_add(&self, other: &Matrix4) -> Matrix4 {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mat_sub(&self, other: &Matrix4) -> Matrix4 {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix4 {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix4 {
        Matrix4(self.0.map(|row| row.map(&f)))
    }

    fn zip_with(&self, other: &Matrix4, f: impl Fn(f64, f64) -> f64) -> Matrix4 {
        Matrix4(std::array::from_fn(|i| std::array::from_fn(|j| f(self.0[i][j], other.0[i][j]))))
    }

    /// `A M Aᵀ`
    pub fn congruence(&self, m: &Matrix4) -> Matrix4 {
        self.mat_mul(m).mat_mul(&self.transpose())
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrize(&self) -> Matrix4 {
        self.mat_add(&self.transpose()).scale(0.5)
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest elementwise difference, the max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix4) -> f64 {
        self.mat_sub(other).max_abs()
    }

    /// Largest elementwise asymmetry `|m_ij - m_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.max_abs_diff(&self.transpose())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn determinant(&self) -> f64 {
        let mut a = self.0;
        let mut det = 1.0;
        for c in 0..4 {
            let p = (c..4)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap_or(c);
            if a[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..4 {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }

    /// Gauss-Jordan inverse with partial pivoting.
    ///
    /// Fails with [`MatError::SingularMatrix`] when the best available pivot
    /// in some column is smaller than [`SINGULAR_PIVOT`] in magnitude.
    pub fn invert(&self) -> Result<Matrix4, MatError> {
        let mut a = self.0;
        let mut inv = Matrix4::identity().0;
        for c in 0..4 {
            let p = (c..4)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap_or(c);
            let pivot = a[p][c];
            if !(pivot.abs() >= SINGULAR_PIVOT) {
                return Err(MatError::SingularMatrix { column: c, pivot });
            }
            a.swap(p, c);
            inv.swap(p, c);
            let recip = 1.0 / pivot;
            for k in 0..4 {
                a[c][k] *= recip;
                inv[c][k] *= recip;
            }
            for r in 0..4 {
                if r == c {
                    continue;
                }
                let f = a[r][c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..4 {
                    a[r][k] -= f * a[c][k];
                    inv[r][k] -= f * inv[c][k];
                }
            }
        }
        Ok(Matrix4(inv))
    }

    /// Matrix exponential by scaling and squaring around a truncated Taylor series.
    ///
    /// The argument is scaled by `2^-s` until its infinity norm is at most 1/2,
    /// the series is summed until the next term's largest entry drops below
    /// `1e-16`, and the result is squared `s` times.
    pub fn expm(&self) -> Matrix4 {
        let norm = self.inf_norm();
        let mut squarings = 0u32;
        if norm > 0.5 {
            squarings = (norm / 0.5).log2().ceil() as u32;
        }
        let scaled = self.scale(0.5f64.powi(squarings as i32));

        let mut sum = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..=64 {
            term = term.mat_mul(&scaled).scale(1.0 / k as f64);
            sum = sum.mat_add(&term);
            if term.max_abs() < 1e-16 {
                break;
            }
        }
        for _ in 0..squarings {
            sum = sum.mat_mul(&sum);
        }
        sum
    }

    fn inf_norm(&self) -> f64 {
        self.0
            .iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    ///
    /// Only the upper triangle is read.
    pub fn symmetric_eigenvalues(&self) -> Vector4 {
        let mut a = self.0;
        for i in 0..4 {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
        for _sweep in 0..50 {
            let off: f64 = (0..4)
                .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            let diag: f64 = (0..4).map(|i| a[i][i] * a[i][i]).sum();
            if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) || off == 0.0 {
                break;
            }
            for p in 0..4 {
                for q in p + 1..4 {
                    if a[p][q] == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..4 {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..4 {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev = [a[0][0], a[1][1], a[2][2], a[3][3]];
        ev.sort_by(f64::total_cmp);
        Vector4(ev)
    }

    /// Estimates the spectral radius as `‖M^(2^k)‖^(1/2^k)`.
    ///
    /// The power is renormalized after every squaring and its scale is kept
    /// in log space, so large or tiny radii neither overflow nor underflow.
    /// Returns once two consecutive estimates differ by less than `tol`.
    pub fn spectral_radius(&self, tol: f64) -> Result<f64, MatError> {
        let n0 = self.frobenius();
        if n0 == 0.0 {
            return Ok(0.0);
        }
        let mut unit = self.scale(1.0 / n0);
        let mut log_scale = n0.ln();
        let mut estimate = n0;
        for k in 1..=MAX_SQUARINGS {
            let sq = unit.mat_mul(&unit);
            let n = sq.frobenius();
            if n == 0.0 {
                // nilpotent
                return Ok(0.0);
            }
            unit = sq.scale(1.0 / n);
            log_scale = 2.0 * log_scale + n.ln();
            let next = (log_scale / 2f64.powi(k as i32)).exp();
            if (next - estimate).abs() < tol {
                return Ok(next);
            }
            estimate = next;
        }
        Err(MatError::NoConvergence { squarings: MAX_SQUARINGS, last: estimate })
    }
}

impl Index<(usize, usize)> for Matrix4 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Matrix4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.0[i][j]
    }
}

impl Index<usize> for Vector4 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector4 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Matrix4 {
    type Output = Matrix4;
    fn add(self, rhs: Matrix4) -> Matrix4 {
        self.mat_add(&rhs)
    }
}

impl Sub for Matrix4 {
    type Output = Matrix4;
    fn sub(self, rhs: Matrix4) -> Matrix4 {
        self.mat_sub(&rhs)
    }
}

impl Mul for Matrix4 {
    type Output = Matrix4;
    fn mul(self, rhs: Matrix4) -> Matrix4 {
        self.mat_mul(&rhs)
    }
}

impl Mul<Vector4> for Matrix4 {
    type Output = Vector4;
    fn mul(self, rhs: Vector4) -> Vector4 {
        self.mat_vec(&rhs)
    }
}

impl Mul<f64> for Matrix4 {
    type Output = Matrix4;
    fn mul(self, rhs: f64) -> Matrix4 {
        self.scale(rhs)
    }
}

impl Neg for Matrix4 {
    type Output = Matrix4;
    fn neg(self) -> Matrix4 {
        self.scale(-1.0)
    }
}

impl Add for Vector4 {
    type Output = Vector4;
    fn add(self, rhs: Vector4) -> Vector4 {
        self.zip_with(&rhs, |a, b| a + b)
    }
}

impl AddAssign for Vector4 {
    fn add_assign(&mut self, rhs: Vector4) {
        *self = *self + rhs;
    }
}

impl Sub for Vector4 {
    type Output = Vector4;
    fn sub(self, rhs: Vector4) -> Vector4 {
        self.zip_with(&rhs, |a, b| a - b)
    }
}

impl Mul<f64> for Vector4 {
    type Output = Vector4;
    fn mul(self, rhs: f64) -> Vector4 {
        self.scale(rhs)
    }
}

impl Neg for Vector4 {
    type Output = Vector4;
    fn neg(self) -> Vector4 {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Vector4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Debug for RowVector4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Debug for Matrix4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl fmt::Display for Matrix4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.0 {
            writeln!(f, "[{:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}]", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }
}
