//! Sparse recovery with designed frames: orthogonal matching pursuit, a
//! compressed sensing benchmark and dictionary adaptation by rotations.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::numerics::{axpy, dot, least_squares, norm2, orthogonal_factor, DenseMatrix};

/// OMP stops once the residual norm drops below this.
pub const OMP_RESIDUAL_TOL: f64 = 1e-12;
const ATOM_NORM_TOL: f64 = 1e-8;

/// Output of [`omp`]: selected atoms in selection order and their coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpResult {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// Set when a selected atom made the support rank deficient and was dropped.
    pub truncated: bool,
}

impl OmpResult {
    /// Coefficients scattered into a length-`n` vector.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            x[j] = c;
        }
        x
    }
}

/// Orthogonal matching pursuit with at most `s` atoms. Ties in the
/// correlation step go to the lowest index.
pub fn omp(d: &DenseMatrix, y: &[f64], s: usize) -> Result<OmpResult> {
    let (m, n) = d.shape();
    if y.len() != m {
        return Err(Error::InvalidInput(format!("signal has length {} but dictionary has {m} rows", y.len())));
    }
    if s > m {
        return Err(Error::InvalidInput(format!("sparsity {s} exceeds signal dimension {m}")));
    }
    if let Some(j) = d.columns().position(|c| (norm2(c) - 1.0).abs() > ATOM_NORM_TOL) {
        return Err(Error::InvalidInput(format!("atom {j} is not unit norm")));
    }
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut coefficients = Vec::new();
    let mut residual = y.to_vec();
    let mut truncated = false;
    let mut selected = vec![false; n];
    for _ in 0..s {
        if norm2(&residual) < OMP_RESIDUAL_TOL {
            break;
        }
        let mut best = None;
        let mut best_val = -1.0;
        for (j, col) in d.columns().enumerate() {
            if selected[j] {
                continue;
            }
            let c = dot(col, &residual).abs();
            if c > best_val {
                best_val = c;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        support.push(j);
        match least_squares(&d.select_columns(&support), y) {
            Ok(c) => {
                selected[j] = true;
                coefficients = c;
            }
            Err(Error::RankDeficient { .. }) => {
                support.pop();
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
        residual.copy_from_slice(y);
        for (&k, &c) in support.iter().zip(&coefficients) {
            axpy(-c, d.col(k), &mut residual);
        }
    }
    Ok(OmpResult { support, coefficients, residual_norm: norm2(&residual), truncated })
}

/// Sparse codes of every column of `y` in dictionary `d`, as an N×M matrix.
pub fn sparse_code(d: &DenseMatrix, y: &DenseMatrix, s: usize) -> Result<DenseMatrix> {
    let mut x = DenseMatrix::zeros(d.cols(), y.cols());
    for j in 0..y.cols() {
        let r = omp(d, y.col(j), s)?;
        x.set_col(j, &r.dense(d.cols()));
    }
    Ok(x)
}

/// Where the sensing matrix of a compressed sensing trial comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SensingSource {
    /// A fresh m×N matrix with i.i.d. standard normal entries for every trial.
    RandomGaussian,
    /// A fixed m×N matrix, e.g. a designed frame.
    Fixed(DenseMatrix),
}

/// Trial grid for the compressed sensing benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsExperiment {
    /// Number of measurements.
    pub m: usize,
    /// Signal dimension.
    pub n: usize,
    /// Dictionary atoms.
    pub atoms: usize,
    pub sparsity: usize,
    pub trials: usize,
    pub seed: u64,
    pub keep_trials: bool,
}

impl CsExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity <= self.m && self.m <= self.n && self.n <= self.atoms) {
            return Err(Error::InvalidInput(format!(
                "need s <= m <= N <= M, got s={}, m={}, N={}, M={}",
                self.sparsity, self.m, self.n, self.atoms
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("at least one trial is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsResult {
    pub mean_error: f64,
    /// 10th, 50th and 90th percentile of the relative error.
    pub quantiles: [f64; 3],
    pub max_error: f64,
    pub support_recovery_rate: f64,
    pub trials: usize,
    /// True for the `s = 0` edge case, where every error is zero by convention.
    pub degenerate: bool,
    pub errors: Option<Vec<f64>>,
}

/// Runs `e.trials` recovery trials. Each trial draws a Gaussian dictionary
/// `D` (unit columns), an `s`-sparse Gaussian code `a` on a random support,
/// measures `y = F D a` and recovers `a` by OMP on the column-normalized
/// `F D`. Trial data depends only on `(e.seed, trial)`, so different
/// sensing sources see identical signals.
pub fn run_cs_experiment(e: &CsExperiment, sensing: &SensingSource) -> Result<CsResult> {
    e.validate()?;
    if let SensingSource::Fixed(f) = sensing {
        if f.shape() != (e.m, e.n) {
            return Err(Error::InvalidInput(format!(
                "sensing matrix is {}x{} but the experiment needs {}x{}",
                f.rows(),
                f.cols(),
                e.m,
                e.n
            )));
        }
    }
    if e.sparsity == 0 {
        return Ok(CsResult {
            mean_error: 0.0,
            quantiles: [0.0; 3],
            max_error: 0.0,
            support_recovery_rate: 1.0,
            trials: e.trials,
            degenerate: true,
            errors: e.keep_trials.then(|| vec![0.0; e.trials]),
        });
    }

    let mut errors = Vec::with_capacity(e.trials);
    let mut recovered = 0usize;
    for trial in 0..e.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
        rng.set_stream(2 * trial as u64);
        let mut dict = DenseMatrix::random_gaussian(e.n, e.atoms, &mut rng);
        dict.normalize_columns()?;
        let mut truth: Vec<usize> = sample(&mut rng, e.atoms, e.sparsity).into_vec();
        truth.sort_unstable();
        let mut a = vec![0.0; e.atoms];
        for &j in &truth {
            a[j] = rng.sample(StandardNormal);
        }

        let f_owned;
        let f = match sensing {
            SensingSource::Fixed(f) => f,
            SensingSource::RandomGaussian => {
                let mut srng = ChaCha8Rng::seed_from_u64(e.seed);
                srng.set_stream(2 * trial as u64 + 1);
                f_owned = DenseMatrix::random_gaussian(e.m, e.n, &mut srng);
                &f_owned
            }
        };
        let mut fd = f.matmul(&dict)?;
        let scales = fd.column_norms();
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::NumericsFailure("sensing annihilates a dictionary atom".into()));
        }
        for (j, &sc) in scales.iter().enumerate() {
            fd.col_mut(j).iter_mut().for_each(|v| *v /= sc);
        }
        let x = dict.mul_vec(&a);
        let y = f.mul_vec(&x);
        let rec = omp(&fd, &y, e.sparsity)?;
        let mut a_rec = vec![0.0; e.atoms];
        for (&j, &c) in rec.support.iter().zip(&rec.coefficients) {
            a_rec[j] = c / scales[j];
        }
        let num: f64 = a.iter().zip(&a_rec).map(|(u, v)| (u - v) * (u - v)).sum();
        let den: f64 = a.iter().map(|u| u * u).sum();
        errors.push(if den > 0.0 { num / den } else { 0.0 });

        let mut found = rec.support.clone();
        found.sort_unstable();
        if found == truth {
            recovered += 1;
        }
    }

    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(CsResult {
        mean_error,
        quantiles: [quantile(&sorted, 0.1), quantile(&sorted, 0.5), quantile(&sorted, 0.9)],
        max_error: *sorted.last().expect("trials >= 1"),
        support_recovery_rate: recovered as f64 / e.trials as f64,
        trials: e.trials,
        degenerate: false,
        errors: e.keep_trials.then_some(errors),
    })
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// State and trace of a rotation-only dictionary adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRun {
    pub frame: Frame,
    /// Accumulated rotation `Q_K ⋯ Q_1`.
    pub rotation: DenseMatrix,
    pub sparsity: usize,
    /// `‖Y − F_i X_i‖_F / ‖Y‖_F` for `i = 0..=K`.
    pub errors: Vec<f64>,
    /// `‖Y − F_{i−1} X_{i−1}‖_F` before each rotation.
    pub alignment_before: Vec<f64>,
    /// `‖Y − Q_i F_{i−1} X_{i−1}‖_F` after each rotation.
    pub alignment_after: Vec<f64>,
    /// Iterations (1-based) where `Y Xᵀ Fᵀ` was rank deficient.
    pub rank_deficient_steps: Vec<usize>,
}

/// Alternates OMP coding and orthogonal Procrustes rotations of the frame.
/// The frame only ever rotates, so its Gram matrix and coherence are kept.
pub fn adapt_dictionary(y: &DenseMatrix, f0: &Frame, s: usize, iterations: usize) -> Result<AdaptationRun> {
    let m = f0.m();
    if y.rows() != m {
        return Err(Error::InvalidInput(format!("data has {} rows but the frame lives in R^{m}", y.rows())));
    }
    if s > m {
        return Err(Error::InvalidInput(format!("sparsity {s} exceeds dimension {m}")));
    }
    let ynorm = y.frobenius_norm();
    if !(ynorm > 0.0) {
        return Err(Error::InvalidInput("data matrix is empty or zero".into()));
    }
    let rel = |f: &DenseMatrix, x: &DenseMatrix| -> Result<f64> { Ok(y.sub(&f.matmul(x)?)?.frobenius_norm() / ynorm) };

    let mut f = f0.vectors().clone();
    let mut x = sparse_code(&f, y, s)?;
    let mut run = AdaptationRun {
        frame: f0.clone(),
        rotation: DenseMatrix::identity(m),
        sparsity: s,
        errors: vec![rel(&f, &x)?],
        alignment_before: Vec::new(),
        alignment_after: Vec::new(),
        rank_deficient_steps: Vec::new(),
    };
    for it in 1..=iterations {
        let fx = f.matmul(&x)?;
        let cross = y.matmul_tr(&fx)?;
        let (q, deficient) = orthogonal_factor(&cross)?;
        if deficient {
            run.rank_deficient_steps.push(it);
        }
        run.alignment_before.push(y.sub(&fx)?.frobenius_norm());
        run.alignment_after.push(y.sub(&q.matmul(&fx)?)?.frobenius_norm());
        run.rotation = q.matmul(&run.rotation)?;
        f = q.matmul(&f)?;
        x = sparse_code(&f, y, s)?;
        run.errors.push(rel(&f, &x)?);
    }
    run.frame = Frame::new(f)?;
    Ok(run)
}

/// Synthetic data `Y = Q* F0 X + noise` for a hidden rotation `Q*`, with
/// `s`-sparse Gaussian columns of `X`. Returns the data and `Q*`.
pub fn planted_rotation_data(
    f0: &Frame,
    s: usize,
    samples: usize,
    noise: f64,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = (f0.m(), f0.n());
    if s > m || samples == 0 {
        return Err(Error::InvalidInput("need s <= m and at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q, _) = orthogonal_factor(&DenseMatrix::random_gaussian(m, m, &mut rng))?;
    let rotated = q.matmul(f0.vectors())?;
    let mut y = DenseMatrix::zeros(m, samples);
    for j in 0..samples {
        let col = y.col_mut(j);
        for k in sample(&mut rng, n, s).into_iter() {
            let c: f64 = rng.sample(StandardNormal);
            axpy(c, rotated.col(k), col);
        }
        for v in col.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += noise * e;
        }
    }
    Ok((y, q))
}
