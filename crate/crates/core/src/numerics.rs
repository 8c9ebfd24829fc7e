//! Dense linear algebra on small column-major matrices.
//!
//! Everything here is sized for frames with a few hundred vectors at most:
//! a one-sided Jacobi SVD, the unit polar factor, Householder least squares
//! and a Cholesky solver for the interior-point Newton systems.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sweep cap for the one-sided Jacobi SVD.
pub const SVD_MAX_SWEEPS: usize = 60;
/// Rotation threshold below which a column pair counts as orthogonal.
pub const SVD_ROTATION_TOL: f64 = 1e-12;
/// Singular values below `RANK_TOL * s_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Dense real matrix stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Wraps column-major data, checking shape and finiteness.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; convenient in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let mut data = vec![0.0; r * c];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                data[j * r + i] = *v;
            }
        }
        Self::from_col_major(r, c, data)
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::InvalidInput("columns of unequal length".into()));
        }
        Self::from_col_major(rows, cols, columns.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[j * rows + i] = f(i, j);
            }
        }
        m
    }

    /// Matrix with i.i.d. standard normal entries, filled column by column.
    pub fn random_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(rows, cols);
        for v in m.data.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        m
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

    /// Column-major backing storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn set_col(&mut self, j: usize, values: &[f64]) {
        self.col_mut(j).copy_from_slice(values);
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::InvalidInput(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let oc = other.col(j);
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in oc.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (d, a) in dst.iter_mut().zip(self.col(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other`; entries are plain column dot products.
    pub fn tr_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::InvalidInput(format!(
                "cannot form AᵀB with A {}x{} and B {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j))))
    }

    /// `self * otherᵀ`.
    pub fn matmul_tr(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::InvalidInput(format!(
                "cannot form ABᵀ with A {}x{} and B {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for k in 0..self.cols {
            let a = self.col(k);
            let b = other.col(k);
            for (j, &bj) in b.iter().enumerate() {
                if bj == 0.0 {
                    continue;
                }
                let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
                for (d, ai) in dst.iter_mut().zip(a) {
                    *d += ai * bj;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            axpy(xj, self.col(j), &mut y);
        }
        y
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "vector length mismatch");
        self.columns().map(|c| dot(c, x)).collect()
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidInput("shape mismatch in subtraction".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.columns().map(norm2).collect()
    }

    /// Scales each column to unit Euclidean norm. Fails on a zero column.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for j in 0..self.cols {
            let n = norm2(self.col(j));
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::NumericsFailure(format!("column {j} has norm {n}, cannot normalize")));
            }
            self.col_mut(j).iter_mut().for_each(|v| *v /= n);
        }
        Ok(())
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len().max(1));
        for (k, &j) in idx.iter().enumerate() {
            out.set_col(k, self.col(j));
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin singular value decomposition `A = U diag(S) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// rows × k, orthonormal columns.
    pub u: DenseMatrix,
    /// k values, descending, non-negative.
    pub s: Vec<f64>,
    /// cols × k, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (k, &sk) in self.s.iter().enumerate() {
            us.col_mut(k).iter_mut().for_each(|v| *v *= sk);
        }
        us.matmul_tr(&self.v).expect("consistent svd shapes")
    }

    /// Numerical rank under [`RANK_TOL`].
    pub fn rank(&self) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("svd input has non-finite entries".into()));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(SvdResult { u: t.v, s: t.s, v: t.u })
    }
}

fn jacobi_tall(a: &DenseMatrix) -> Result<SvdResult> {
    let (rows, n) = a.shape();
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let mut converged = n == 1;

    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == 0.0 || gamma.abs() <= SVD_ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericsFailure(format!("Jacobi SVD did not converge in {SVD_MAX_SWEEPS} sweeps")));
    }

    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, norm2(w.col(j)))).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let smax = order[0].1;

    let mut u = DenseMatrix::zeros(rows, n);
    let mut vs = DenseMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &(j, sj)) in order.iter().enumerate() {
        s.push(sj);
        vs.set_col(k, v.col(j));
        if sj > RANK_TOL * smax && sj > 0.0 {
            let src = w.col(j);
            u.col_mut(k).iter_mut().zip(src).for_each(|(d, x)| *d = x / sj);
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(SvdResult { u, s, v: vs })
}

#[inline]
fn rotate_columns(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    let (lo, hi) = m.data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns. Candidates are standard basis vectors, picking the one
/// with the largest residual, so the completion is deterministic.
fn complete_orthonormal(u: &mut DenseMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let rows = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|k| !missing.contains(k)).collect();
    for &k in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..rows {
            let mut cand = vec![0.0; rows];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &f in &filled {
                    let proj = dot(u.col(f), &cand);
                    axpy(-proj, u.col(f), &mut cand);
                }
            }
            let nrm = norm2(&cand);
            if best.as_ref().is_none_or(|(b, _)| nrm > *b + 1e-12) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, mut cand) = best.expect("rows >= 1");
        cand.iter_mut().for_each(|x| *x /= nrm);
        u.set_col(k, &cand);
        filled.push(k);
    }
}

/// Unit polar factor `U Vᵀ` of a wide, full-row-rank matrix: the closest
/// matrix with orthonormal rows in Frobenius norm.
pub fn unit_polar(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() > a.cols() {
        return Err(Error::InvalidInput(format!("unit_polar expects rows <= cols, got {}x{}", a.rows(), a.cols())));
    }
    let d = svd(a)?;
    let largest = d.s[0];
    let smallest = *d.s.last().expect("k >= 1");
    if !(smallest > RANK_TOL * largest) {
        return Err(Error::RankDeficient { smallest, largest });
    }
    d.u.matmul_tr(&d.v)
}

/// Orthonormal `U Vᵀ` for a square matrix, completing null directions
/// deterministically. The flag reports whether the input was rank deficient.
pub fn orthogonal_factor(a: &DenseMatrix) -> Result<(DenseMatrix, bool)> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidInput("orthogonal_factor expects a square matrix".into()));
    }
    let d = svd(a)?;
    let deficient = d.rank() < a.rows();
    Ok((d.u.matmul_tr(&d.v)?, deficient))
}

/// Minimizes `‖A x − b‖₂` by Householder QR. `A` must be tall with full
/// column rank.
pub fn least_squares(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let (m, k) = a.shape();
    if k > m {
        return Err(Error::InvalidInput(format!("least squares needs rows >= cols, got {m}x{k}")));
    }
    if b.len() != m {
        return Err(Error::InvalidInput("right-hand side length mismatch".into()));
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite least squares input".into()));
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let x = &r.col(j)[j..];
        let xnorm = norm2(x);
        if xnorm == 0.0 {
            return Err(Error::RankDeficient {
                smallest: 0.0,
                largest: diag.iter().fold(0.0f64, |a, d: &f64| a.max(d.abs())),
            });
        }
        let alpha = if x[0] > 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        for c in j..k {
            let col = &mut r.col_mut(c)[j..];
            let f = 2.0 * dot(&v, col) / vnorm2;
            axpy(-f, &v, col);
        }
        let f = 2.0 * dot(&v, &qtb[j..]) / vnorm2;
        axpy(-f, &v, &mut qtb[j..]);
        diag[j] = alpha;
    }
    let largest = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |a, d| a.min(d.abs()));
    if smallest < RANK_TOL * largest {
        return Err(Error::RankDeficient { smallest, largest });
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = qtb[i];
        for c in (i + 1)..k {
            s -= r[(i, c)] * x[c];
        }
        x[i] = s / r[(i, i)];
    }
    Ok(x)
}

/// In-place Cholesky factorization of a symmetric positive definite matrix
/// stored densely (n×n, column-major). Only the lower triangle is read.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[k * n + j] * a[k * n + j];
        }
        if !(d > 0.0) {
            return Err(Error::NumericsFailure(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[j * n + i];
            for k in 0..j {
                s -= a[k * n + i] * a[k * n + j];
            }
            a[j * n + i] = s / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthonormality_error(m: &DenseMatrix) -> f64 {
        let g = m.tr_matmul(m).unwrap();
        g.sub(&DenseMatrix::identity(m.cols())).unwrap().max_abs()
    }

    #[test]
    fn svd_identity() {
        let d = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(d.s, vec![1.0, 1.0, 1.0]);
        assert!(d.reconstruct().sub(&DenseMatrix::identity(3)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn svd_diagonal() {
        let a = DenseMatrix::from_rows(&[&[3.0, 0.0], &[0.0, 2.0]]).unwrap();
        let d = svd(&a).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-14 && (d.s[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn svd_sorts_descending_and_handles_rank_deficiency() {
        // rank one 4x3
        let a = DenseMatrix::from_fn(4, 3, |i, j| (i + 1) as f64 * (j as f64 - 1.5));
        let d = svd(&a).unwrap();
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(d.rank(), 1);
        assert!(orthonormality_error(&d.u) < 1e-10);
        assert!(orthonormality_error(&d.v) < 1e-10);
        assert!(d.reconstruct().sub(&a).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut a = DenseMatrix::identity(2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unit_polar_fixed_point_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMatrix::random_gaussian(3, 7, &mut rng);
        let p = unit_polar(&a).unwrap();
        let pp = unit_polar(&p).unwrap();
        assert!(pp.sub(&p).unwrap().max_abs() < 1e-9);
        let mut scaled = p.clone();
        scaled.scale(4.5);
        assert!(unit_polar(&scaled).unwrap().sub(&p).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn unit_polar_rank_deficient() {
        let a = DenseMatrix::from_fn(2, 4, |_, j| j as f64 + 1.0);
        assert!(matches!(unit_polar(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn least_squares_small_cases() {
        let x = least_squares(&DenseMatrix::identity(3), &[1.0, -2.0, 5.0]).unwrap();
        assert!(x.iter().zip([1.0, -2.0, 5.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        let a = DenseMatrix::from_rows(&[&[1.0], &[1.0]]).unwrap();
        let x = least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares(&a, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn orthogonal_factor_completes_null_space() {
        let a = DenseMatrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 0.0]]).unwrap();
        let (q, deficient) = orthogonal_factor(&a).unwrap();
        assert!(deficient);
        assert!(orthonormality_error(&q) < 1e-12);
    }

    #[test]
    fn cholesky_roundtrip() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let mut l = a;
        cholesky(&mut l, 2).unwrap();
        let mut b = [2.0, 1.0];
        cholesky_solve(&l, 2, &mut b);
        // 4x + 2y = 2, 2x + 3y = 1
        assert!((4.0 * b[0] + 2.0 * b[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * b[0] + 3.0 * b[1] - 1.0).abs() < 1e-14);
    }
}
