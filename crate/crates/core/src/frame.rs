//! Unit-norm frames, their coherence metrics and the simplex ETF.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm2, svd, DenseMatrix};

/// Allowed deviation of a column norm from one.
pub const UNIT_NORM_TOL: f64 = 1e-10;
/// Default relative tolerance when testing for equiangularity.
pub const EQUIANGULAR_TOL: f64 = 1e-6;

/// `N` unit vectors in `R^m` stored as the columns of an m×N matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    vectors: DenseMatrix,
}

impl Frame {
    pub fn new(vectors: DenseMatrix) -> Result<Self> {
        Self::with_tolerance(vectors, UNIT_NORM_TOL)
    }

    /// Validates shape and unit column norms within `tol`.
    pub fn with_tolerance(vectors: DenseMatrix, tol: f64) -> Result<Self> {
        let (m, n) = vectors.shape();
        if m < 2 || n < m {
            return Err(Error::InvalidInput(format!("a frame needs m >= 2 and N >= m, got m={m}, N={n}")));
        }
        if !vectors.is_finite() {
            return Err(Error::InvalidInput("frame has non-finite entries".into()));
        }
        for (j, c) in vectors.columns().enumerate() {
            let err = (norm2(c) - 1.0).abs();
            if err > tol {
                return Err(Error::InvalidInput(format!("column {j} is not unit norm (|‖f‖-1| = {err:.3e})")));
            }
        }
        Ok(Self { vectors })
    }

    /// Normalizes the columns of `vectors` and wraps the result.
    pub fn from_unnormalized(mut vectors: DenseMatrix) -> Result<Self> {
        vectors.normalize_columns()?;
        Self::new(vectors)
    }

    pub fn m(&self) -> usize {
        self.vectors.rows()
    }

    pub fn n(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        self.vectors.col(i)
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.vectors
    }

    /// Replaces column `i` with the unit vector `v`. Crate-internal so the
    /// unit-norm invariant is maintained by the callers.
    pub(crate) fn set_vector(&mut self, i: usize, v: &[f64]) {
        self.vectors.set_col(i, v);
    }

    pub fn gram(&self) -> DenseMatrix {
        self.vectors.tr_matmul(&self.vectors).expect("gram of a well-formed frame")
    }

    /// Correlations `h_jᵀ h_i` of vector `i` with every column (including itself).
    pub fn correlations_with(&self, i: usize) -> Vec<f64> {
        self.vectors.tr_mul_vec(self.vector(i))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.vectors.data().iter().all(|&v| v >= 0.0)
    }
}

/// Largest absolute inner product between distinct frame vectors.
pub fn mutual_coherence(f: &Frame) -> f64 {
    let n = f.n();
    let mut mu: f64 = 0.0;
    for i in 0..n {
        let hi = f.vector(i);
        for j in (i + 1)..n {
            mu = mu.max(dot(hi, f.vector(j)).abs());
        }
    }
    mu
}

/// Welch lower bound `sqrt((N-m) / (m (N-1)))` on the coherence of any
/// unit-norm frame of `N` vectors in `R^m`.
pub fn welch_bound(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n < m {
        return Err(Error::InvalidInput(format!("Welch bound needs N >= m >= 1, got m={m}, N={n}")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let (m, n) = (m as f64, n as f64);
    Ok(((n - m) / (m * (n - 1.0))).sqrt())
}

/// Summary metrics of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    /// Mutual coherence.
    pub mu: f64,
    /// Mean absolute inner product over distinct pairs.
    pub mu_bar: f64,
    /// Frame potential `‖FᵀF‖_F²`.
    pub fp: f64,
    pub welch: f64,
    /// `floor((1/mu + 1) / 2)`; `None` when the frame is orthonormal.
    pub sparsity_cap: Option<u64>,
}

impl FrameMetrics {
    /// Minimum of the frame potential over unit-norm frames of this size.
    pub fn fp_minimum(m: usize, n: usize) -> f64 {
        (n * n) as f64 / m as f64
    }
}

/// Coherence below this is reported as an orthonormal frame.
const ZERO_COHERENCE: f64 = 1e-12;

pub fn sparsity_cap(mu: f64) -> Option<u64> {
    (mu > ZERO_COHERENCE).then(|| (0.5 * (1.0 / mu + 1.0)).floor() as u64)
}

pub fn frame_metrics(f: &Frame) -> FrameMetrics {
    let n = f.n();
    let g = f.gram();
    let mut mu: f64 = 0.0;
    let mut sum_abs = 0.0;
    let mut fp = 0.0;
    for j in 0..n {
        let col = g.col(j);
        for (i, &v) in col.iter().enumerate() {
            fp += v * v;
            if i < j {
                mu = mu.max(v.abs());
                sum_abs += v.abs();
            }
        }
    }
    let pairs = (n * (n - 1) / 2).max(1) as f64;
    FrameMetrics {
        mu,
        mu_bar: sum_abs / pairs,
        fp,
        welch: welch_bound(f.m(), n).expect("frame shape is valid"),
        sparsity_cap: sparsity_cap(mu),
    }
}

/// Flips the sign of every vector negatively correlated with vector `i`.
/// Returns the flipped frame and the ±1 sign per column; applying the same
/// signs again restores the original.
pub fn canonicalize_signs(f: &Frame, i: usize) -> (Frame, Vec<f64>) {
    assert!(i < f.n(), "column index {i} out of range");
    let corr = f.correlations_with(i);
    let signs: Vec<f64> = corr.iter().enumerate().map(|(j, &c)| if j != i && c < 0.0 { -1.0 } else { 1.0 }).collect();
    (apply_signs(f, &signs), signs)
}

pub fn apply_signs(f: &Frame, signs: &[f64]) -> Frame {
    let mut out = f.clone();
    for (j, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            out.vectors.col_mut(j).iter_mut().for_each(|v| *v = -*v);
        }
    }
    out
}

/// The `(m, m+1)` simplex ETF: every pairwise inner product is `-1/m`.
///
/// Built from the rank-m square root of the centering projector
/// `I - 11ᵀ/(m+1)`, with columns rescaled to unit norm.
pub fn make_simplex_etf(m: usize) -> Result<Frame> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("simplex ETF needs m >= 2, got {m}")));
    }
    let n = m + 1;
    let inv = 1.0 / n as f64;
    let centering = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv });
    let d = svd(&centering)?;
    let f = DenseMatrix::from_fn(m, n, |r, c| d.s[r].sqrt() * d.u[(c, r)]);
    Frame::from_unnormalized(f)
}

/// Outcome of the ETF checks on a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtfCertificate {
    pub is_equiangular: bool,
    pub is_tight: bool,
    pub mu_attained: f64,
    /// Worst deviation of `(H_iᵀH_i)·1` from `((N-m)/m)·1` over all `i`,
    /// after canonicalizing signs around `i`. Only for equiangular tight frames.
    pub eigen_residual: Option<f64>,
    /// `N⁺_j − N⁻_j` per column after canonicalizing around column 0.
    pub sign_balance: Option<Vec<i64>>,
    /// Whether `(N-2m)/(m mu) + 1` is an integer within tolerance.
    pub balance_integral: Option<bool>,
}

impl EtfCertificate {
    pub fn is_etf(&self) -> bool {
        self.is_equiangular && self.is_tight
    }
}

pub fn certify_etf(f: &Frame, tol: f64) -> EtfCertificate {
    let (m, n) = (f.m(), f.n());
    let g = f.gram();

    let mut hi: f64 = 0.0;
    let mut lo = f64::INFINITY;
    for j in 0..n {
        for i in 0..j {
            let a = g[(i, j)].abs();
            hi = hi.max(a);
            lo = lo.min(a);
        }
    }
    let is_equiangular = n < 2 || hi - lo <= tol * hi.max(f64::MIN_POSITIVE);

    let ratio = n as f64 / m as f64;
    let fft = f.vectors().matmul_tr(f.vectors()).expect("frame shapes agree");
    let tight_err = fft.sub(&DenseMatrix::identity(m).scaled(ratio)).expect("square").max_abs();
    let is_tight = tight_err <= tol * ratio;

    let mut cert = EtfCertificate {
        is_equiangular,
        is_tight,
        mu_attained: hi,
        eigen_residual: None,
        sign_balance: None,
        balance_integral: None,
    };
    if !(is_equiangular && is_tight) || n < 2 || hi <= ZERO_COHERENCE {
        return cert;
    }

    let target = (n - m) as f64 / m as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let s: Vec<f64> = (0..n).map(|j| if j != i && g[(i, j)] < 0.0 { -1.0 } else { 1.0 }).collect();
        // (H_iᵀH_i 1)_j = s_j (Σ_{k≠i} G_jk s_k)
        for j in (0..n).filter(|&j| j != i) {
            let col = g.col(j);
            let row_sum: f64 = (0..n).filter(|&k| k != i).map(|k| col[k] * s[k]).sum();
            worst = worst.max((s[j] * row_sum - target).abs());
        }
    }
    cert.eigen_residual = Some(worst);

    let s0: Vec<f64> = (0..n).map(|j| if j != 0 && g[(0, j)] < 0.0 { -1.0 } else { 1.0 }).collect();
    let balance = (0..n)
        .map(|j| (0..n).filter(|&k| k != j).map(|k| if s0[j] * s0[k] * g[(j, k)] > 0.0 { 1i64 } else { -1 }).sum())
        .collect();
    cert.sign_balance = Some(balance);
    let predicted = (n as f64 - 2.0 * m as f64) / (m as f64 * hi) + 1.0;
    cert.balance_integral = Some((predicted - predicted.round()).abs() <= tol.max(1e-9) * n as f64);
    cert
}

/// Sorted (ascending) absolute inner products over all distinct pairs.
pub fn sorted_unique_correlations(f: &Frame) -> Vec<f64> {
    let g = f.gram();
    let n = f.n();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in 0..j {
            out.push(g[(i, j)].abs());
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Fraction of `correlations` that are at least `level`.
pub fn fraction_at_least(correlations: &[f64], level: f64) -> f64 {
    if correlations.is_empty() {
        return 0.0;
    }
    correlations.iter().filter(|&&c| c >= level).count() as f64 / correlations.len() as f64
}

impl DenseMatrix {
    pub(crate) fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frame(m: usize, n: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_unnormalized(DenseMatrix::random_gaussian(m, n, &mut rng)).unwrap()
    }

    #[test]
    fn orthonormal_frame_metrics() {
        let f = Frame::new(DenseMatrix::identity(3)).unwrap();
        assert_eq!(mutual_coherence(&f), 0.0);
        let mm = frame_metrics(&f);
        assert_eq!(mm.mu, 0.0);
        assert_eq!(mm.mu_bar, 0.0);
        assert!((mm.fp - 3.0).abs() < 1e-15);
        assert_eq!(mm.sparsity_cap, None);
    }

    #[test]
    fn duplicated_column_has_unit_coherence() {
        let mut v = DenseMatrix::identity(3);
        let c0 = v.col(0).to_vec();
        v.set_col(2, &c0);
        let f = Frame::new(v).unwrap();
        assert!((mutual_coherence(&f) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn welch_bound_reference_values() {
        assert!((welch_bound(15, 30).unwrap() - 0.1857).abs() < 5e-5);
        assert!((welch_bound(64, 128).unwrap() - 0.0887).abs() < 5e-5);
        assert_eq!(welch_bound(7, 7).unwrap(), 0.0);
        assert!(matches!(welch_bound(5, 4), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sparsity_cap_reference() {
        assert_eq!(sparsity_cap(0.0979), Some(5));
        assert_eq!(sparsity_cap(0.0), None);
    }

    #[test]
    fn simplex_small_cases() {
        let f2 = make_simplex_etf(2).unwrap();
        assert!((mutual_coherence(&f2) - 0.5).abs() < 1e-12);
        let f3 = make_simplex_etf(3).unwrap();
        let g = f3.gram();
        for j in 0..4 {
            for i in 0..j {
                assert!((g[(i, j)] + 1.0 / 3.0).abs() < 1e-12);
            }
        }
        let mm = frame_metrics(&f3);
        assert!((mm.mu - 1.0 / 3.0).abs() < 1e-12);
        assert!((mm.mu_bar - 1.0 / 3.0).abs() < 1e-12);
        assert!((mm.fp - 16.0 / 3.0).abs() < 1e-10);
        assert!((mm.mu - welch_bound(3, 4).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn simplex_certifies() {
        for m in 2..=12 {
            let c = certify_etf(&make_simplex_etf(m).unwrap(), 1e-9);
            assert!(c.is_etf(), "m={m}: {c:?}");
            assert!(c.eigen_residual.unwrap() < 1e-9);
            assert_eq!(c.balance_integral, Some(true));
        }
    }

    #[test]
    fn simplex_3_4_eigen_and_balance() {
        let c = certify_etf(&make_simplex_etf(3).unwrap(), 1e-9);
        assert!(c.eigen_residual.unwrap() < 1e-9);
        // (N-2m)/(m mu) + 1 = -1 for every column except the reference one.
        let bal = c.sign_balance.unwrap();
        assert_eq!(bal[0], 3);
        assert!(bal[1..].iter().all(|&b| b == -1));
    }

    #[test]
    fn random_frame_is_not_etf() {
        let c = certify_etf(&random_frame(10, 20, 11), EQUIANGULAR_TOL);
        assert!(!c.is_equiangular);
        assert!(c.sign_balance.is_none());
    }

    #[test]
    fn sign_canonicalization() {
        let f = random_frame(8, 20, 5);
        let i = 4;
        let (g, signs) = canonicalize_signs(&f, i);
        let corr = g.correlations_with(i);
        assert!(corr.iter().all(|&c| c >= 0.0));
        let (ga, gb) = (f.gram(), g.gram());
        for (a, b) in ga.data().iter().zip(gb.data()) {
            assert!((a.abs() - b.abs()).abs() < 1e-15);
        }
        assert_eq!(mutual_coherence(&f), mutual_coherence(&g));
        assert_eq!(apply_signs(&g, &signs), f);
    }

    #[test]
    fn sign_canonicalization_single_flip() {
        let f = make_simplex_etf(3).unwrap();
        let (g, signs) = canonicalize_signs(&f, 0);
        assert_eq!(signs, vec![1.0, -1.0, -1.0, -1.0]);
        let (_, again) = canonicalize_signs(&g, 0);
        assert!(again.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn frame_rejects_bad_shapes() {
        assert!(Frame::new(DenseMatrix::identity(1)).is_err());
        let mut v = DenseMatrix::identity(3);
        v[(0, 0)] = 2.0;
        assert!(Frame::new(v).is_err());
        assert!(Frame::new(DenseMatrix::zeros(3, 2)).is_err());
    }
}
