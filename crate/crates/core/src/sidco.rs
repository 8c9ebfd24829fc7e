//! The frame design loop.
//!
//! Starting from a random tight-ish frame, every sweep visits the vectors in
//! a fresh random order. Each vector is replaced by the normalized solution
//! of its trust-region subproblem, with the largest radius that cannot
//! create a collinear pair. When progress over three sweeps falls below
//! `eps_stop`, the frame is replaced by its unit polar factor (columns
//! renormalized) to leave the local minimum.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{frame_metrics, mutual_coherence, Frame, FrameMetrics};
use crate::numerics::{dot, norm2, svd, unit_polar, DenseMatrix};
use crate::subproblem::{solve, TrustSubproblem, DEFAULT_TIE_TOL};

/// Number of initialization attempts when the polar step hits a rank-deficient draw.
pub const INIT_ATTEMPTS: u64 = 5;
/// Width of the convergence window, in sweeps.
pub const CONVERGENCE_WINDOW: usize = 3;

/// Run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidcoConfig {
    pub m: usize,
    pub n: usize,
    /// Maximum number of sweeps.
    pub max_sweeps: usize,
    pub seed: u64,
    pub eps_stop: f64,
    /// Multiplicative slack keeping the trust radius strictly inside the bound.
    pub radius_slack: f64,
    pub solver_tol: f64,
    pub tie_tol: f64,
    pub nonneg: bool,
    pub escape_enabled: bool,
}

impl SidcoConfig {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            max_sweeps: 200,
            seed: 0,
            eps_stop: 1e-5,
            radius_slack: 1e-4,
            solver_tol: 1e-8,
            tie_tol: DEFAULT_TIE_TOL,
            nonneg: false,
            escape_enabled: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_sweeps(mut self, k: usize) -> Self {
        self.max_sweeps = k;
        self
    }

    pub fn with_nonneg(mut self, nonneg: bool) -> Self {
        self.nonneg = nonneg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < self.m {
            return Err(Error::InvalidInput(format!("need N >= m >= 2, got m={}, N={}", self.m, self.n)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::InvalidInput("eps_stop must be positive".into()));
        }
        if !(self.radius_slack > 0.0 && self.radius_slack < 1.0) {
            return Err(Error::InvalidInput("radius_slack must lie in (0, 1)".into()));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol <= 1e-4) {
            return Err(Error::InvalidInput("solver_tol must lie in (0, 1e-4]".into()));
        }
        if !(self.tie_tol >= 0.0) {
            return Err(Error::InvalidInput("tie_tol must be non-negative".into()));
        }
        Ok(())
    }

    /// The polar escape cannot preserve nonnegativity, so it is off in that mode.
    pub fn escape_active(&self) -> bool {
        self.escape_enabled && !self.nonneg
    }
}

/// Counters for one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    pub updated: usize,
    /// Vectors skipped because at least `m` neighbors tie for the maximum.
    pub gated: usize,
    /// Gated vectors whose tied neighbors do not span `R^m`.
    pub gated_rank_deficient: usize,
    pub solver_stalls: usize,
    pub degenerate: usize,
    /// Solutions discarded because rounding would have raised coherence.
    pub rejected: usize,
}

impl SweepStats {
    pub fn stalled(&self) -> usize {
        self.gated + self.solver_stalls
    }
}

/// Trace of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub initial_coherence: f64,
    /// Coherence of the column-normalized Gaussian draw before the polar
    /// step. Only set by [`run`].
    pub raw_initial_coherence: Option<f64>,
    /// Coherence after each sweep, before any escape step.
    pub trace: Vec<f64>,
    /// Sweeps (1-based) after which the escape step was applied.
    pub escapes: Vec<usize>,
    /// Coherence right after each escape step.
    pub escape_coherence: Vec<f64>,
    pub sweep_seconds: Vec<f64>,
    pub stats: Vec<SweepStats>,
    /// Sweep that produced the returned frame (0 = initial frame).
    pub best_sweep: usize,
    pub final_metrics: FrameMetrics,
}

impl SweepReport {
    /// Count of consecutive sweeps without an escape in between where the
    /// coherence went up by more than `slack`.
    pub fn monotonicity_violations(&self, slack: f64) -> usize {
        let mut prev = self.initial_coherence;
        let mut violations = 0;
        for (k, &mu) in self.trace.iter().enumerate() {
            if mu > prev + slack {
                violations += 1;
            }
            prev = match self.escapes.iter().position(|&e| e == k + 1) {
                Some(pos) => self.escape_coherence[pos],
                None => mu,
            };
        }
        violations
    }

    pub fn total_seconds(&self) -> f64 {
        self.sweep_seconds.iter().sum()
    }
}

/// Random starting frame: Gaussian entries, columns normalized, replaced by
/// the unit polar factor and normalized again. Nonnegative mode uses
/// absolute values and skips the polar step.
pub fn initialize(cfg: &SidcoConfig) -> Result<Frame> {
    initialize_with_raw(cfg).map(|(f, _)| f)
}

/// Like [`initialize`], also returning the coherence of the normalized
/// Gaussian draw that was fed to the polar step.
pub fn initialize_with_raw(cfg: &SidcoConfig) -> Result<(Frame, f64)> {
    cfg.validate()?;
    let mut last = None;
    for attempt in 0..INIT_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(attempt));
        let mut h = DenseMatrix::random_gaussian(cfg.m, cfg.n, &mut rng);
        if cfg.nonneg {
            h = DenseMatrix::from_fn(cfg.m, cfg.n, |i, j| h[(i, j)].abs());
            let f = Frame::from_unnormalized(h)?;
            let mu = mutual_coherence(&f);
            return Ok((f, mu));
        }
        h.normalize_columns()?;
        let raw = mutual_coherence(&Frame::with_tolerance(h.clone(), 1e-8)?);
        match unit_polar(&h) {
            Ok(p) => return Ok((Frame::from_unnormalized(p)?, raw)),
            Err(e @ Error::RankDeficient { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Squared trust radius `(1 − δ)(1 − max_j g_ij²)` for vector `i`.
pub fn choose_radius(f: &Frame, i: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput("radius slack must lie in (0, 1)".into()));
    }
    let corr = f.correlations_with(i);
    let gmax = corr.iter().enumerate().filter(|&(j, _)| j != i).fold(0.0f64, |a, (_, c)| a.max(c.abs()));
    radius_from_max(gmax, delta).ok_or(Error::DegenerateVector(i))
}

fn radius_from_max(gmax: f64, delta: f64) -> Option<f64> {
    let room = 1.0 - gmax * gmax;
    (room > 1e-14).then_some((1.0 - delta) * room)
}

/// Neighbors of `i` that can still become maximally correlated with the
/// updated vector: those with angle `φ_j ≤ 3 φ_min`. Angles are taken on
/// absolute correlations, so the frame need not be canonicalized.
pub fn reduce_neighbors(f: &Frame, i: usize) -> Vec<usize> {
    let corr = f.correlations_with(i);
    let abs: Vec<(usize, f64)> = corr.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, c)| (j, c.abs())).collect();
    retain_by_angle(&abs)
}

fn retain_by_angle(abs_corr: &[(usize, f64)]) -> Vec<usize> {
    let cmax = abs_corr.iter().fold(0.0f64, |a, &(_, c)| a.max(c));
    let phi_min = cmax.min(1.0).acos();
    let limit = 3.0 * phi_min;
    abs_corr.iter().filter(|&&(_, c)| c == cmax || c.min(1.0).acos() <= limit).map(|&(j, _)| j).collect()
}

/// One pass over the vectors in random order. Vector 0 stays fixed unless
/// the frame is nonnegative (rotations cannot be used to pin it there).
pub fn sweep(frame: &mut Frame, cfg: &SidcoConfig, rng: &mut ChaCha8Rng) -> SweepStats {
    let n = frame.n();
    let m = frame.m();
    let first = if cfg.nonneg { 0 } else { 1 };
    let mut order: Vec<usize> = (first..n).collect();
    order.shuffle(rng);

    let mut stats = SweepStats::default();
    for i in order {
        match update_vector(frame, i, cfg) {
            Update::Moved => stats.updated += 1,
            Update::Gated { rank_deficient } => {
                stats.gated += 1;
                if rank_deficient {
                    stats.gated_rank_deficient += 1;
                }
            }
            Update::Stall => stats.solver_stalls += 1,
            Update::Degenerate => stats.degenerate += 1,
            Update::Rejected => stats.rejected += 1,
        }
        debug_assert!(m == frame.m());
    }
    stats
}

enum Update {
    Moved,
    Gated { rank_deficient: bool },
    Stall,
    Degenerate,
    Rejected,
}

fn update_vector(frame: &mut Frame, i: usize, cfg: &SidcoConfig) -> Update {
    let m = frame.m();
    let corr = frame.correlations_with(i);
    let abs: Vec<(usize, f64)> = corr
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, c)| (j, if cfg.nonneg { *c } else { c.abs() }))
        .collect();
    let cmax = abs.iter().fold(0.0f64, |a, &(_, c)| a.max(c));
    let Some(radius) = radius_from_max(cmax, cfg.radius_slack) else {
        return Update::Degenerate;
    };

    let tied: Vec<usize> = abs.iter().filter(|&&(_, c)| c >= cmax - cfg.tie_tol).map(|&(j, _)| j).collect();
    if tied.len() >= m {
        let rank_deficient = svd(&frame.vectors().select_columns(&tied)).map(|d| d.rank() < m).unwrap_or(true);
        return Update::Gated { rank_deficient };
    }

    let keep = retain_by_angle(&abs);
    let mut neighbors = DenseMatrix::zeros(m, keep.len());
    for (k, &j) in keep.iter().enumerate() {
        let flip = !cfg.nonneg && corr[j] < 0.0;
        let dst = neighbors.col_mut(k);
        for (d, v) in dst.iter_mut().zip(frame.vector(j)) {
            *d = if flip { -v } else { *v };
        }
    }
    let problem = match TrustSubproblem::new(frame.vector(i).to_vec(), neighbors, radius, cfg.nonneg) {
        Ok(p) => p,
        Err(_) => return Update::Degenerate,
    };
    let sol = match solve(&problem, cfg.solver_tol) {
        Ok(s) => s,
        Err(_) => return Update::Stall,
    };

    let mut f = sol.f;
    if cfg.nonneg {
        f.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let nrm = norm2(&f);
    if !(nrm > 0.0) {
        return Update::Stall;
    }
    f.iter_mut().for_each(|v| *v /= nrm);

    // Exact arithmetic guarantees no increase; guard against rounding.
    let new_max = (0..frame.n()).filter(|&j| j != i).fold(0.0f64, |a, j| a.max(dot(frame.vector(j), &f).abs()));
    if new_max > cmax + 1e-12 {
        return Update::Rejected;
    }
    frame.set_vector(i, &f);
    Update::Moved
}

/// Unit polar factor of the frame with columns renormalized.
pub fn escape_step(frame: &Frame) -> Result<Frame> {
    Frame::from_unnormalized(unit_polar(frame.vectors())?)
}

/// Runs the full design loop from a random initial frame.
pub fn run(cfg: &SidcoConfig) -> Result<(Frame, SweepReport)> {
    let (init, raw) = initialize_with_raw(cfg)?;
    let (frame, mut report) = run_from(init, cfg)?;
    report.raw_initial_coherence = Some(raw);
    Ok((frame, report))
}

/// Runs the design loop from a given starting frame. The sweep order is
/// drawn from a generator seeded with `cfg.seed`.
pub fn run_from(start: Frame, cfg: &SidcoConfig) -> Result<(Frame, SweepReport)> {
    cfg.validate()?;
    if start.m() != cfg.m || start.n() != cfg.n {
        return Err(Error::InvalidInput(format!(
            "starting frame is {}x{} but config asks for {}x{}",
            start.m(),
            start.n(),
            cfg.m,
            cfg.n
        )));
    }
    if cfg.nonneg && !start.is_nonnegative() {
        return Err(Error::InvalidInput("nonnegative mode needs a nonnegative start".into()));
    }
    // Separate stream from the one used by `initialize`.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let initial_coherence = mutual_coherence(&start);
    let mut report = SweepReport {
        initial_coherence,
        raw_initial_coherence: None,
        trace: Vec::new(),
        escapes: Vec::new(),
        escape_coherence: Vec::new(),
        sweep_seconds: Vec::new(),
        stats: Vec::new(),
        best_sweep: 0,
        final_metrics: frame_metrics(&start),
    };
    let mut best = start.clone();
    let mut best_mu = initial_coherence;
    if cfg.n == cfg.m && initial_coherence <= 1e-12 {
        // An orthonormal basis is already optimal.
        return Ok((best, report));
    }

    let mut frame = start;
    let mut window: Vec<f64> = Vec::new();
    for k in 1..=cfg.max_sweeps {
        let clock = Instant::now();
        let stats = sweep(&mut frame, cfg, &mut rng);
        let mu = mutual_coherence(&frame);
        report.trace.push(mu);
        report.stats.push(stats);
        if mu < best_mu {
            best_mu = mu;
            best = frame.clone();
            report.best_sweep = k;
        }
        window.push(mu);

        let stuck = window.len() > CONVERGENCE_WINDOW
            && (window[window.len() - 1 - CONVERGENCE_WINDOW] - mu) / (CONVERGENCE_WINDOW as f64) < cfg.eps_stop;
        if cfg.escape_active() && stuck && k < cfg.max_sweeps {
            if let Ok(escaped) = escape_step(&frame) {
                frame = escaped;
                report.escapes.push(k);
                report.escape_coherence.push(mutual_coherence(&frame));
            }
            window.clear();
        }
        report.sweep_seconds.push(clock.elapsed().as_secs_f64());

        if !cfg.escape_active() && stats.updated == 0 {
            // Nothing moved, so later sweeps would see the same frame.
            break;
        }
    }
    report.final_metrics = frame_metrics(&best);
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{canonicalize_signs, make_simplex_etf};

    #[test]
    fn config_validation() {
        assert!(SidcoConfig::new(3, 2).validate().is_err());
        assert!(SidcoConfig::new(1, 4).validate().is_err());
        assert!(SidcoConfig::new(3, 6).with_sweeps(0).validate().is_err());
        let mut c = SidcoConfig::new(3, 6);
        c.radius_slack = 1.0;
        assert!(c.validate().is_err());
        assert!(SidcoConfig::new(3, 6).validate().is_ok());
        assert!(!SidcoConfig::new(3, 6).with_nonneg(true).escape_active());
    }

    #[test]
    fn radius_rules() {
        let id = Frame::new(DenseMatrix::identity(3)).unwrap();
        let t = choose_radius(&id, 0, 1e-4).unwrap();
        assert!((t - (1.0 - 1e-4)).abs() < 1e-15);

        let etf = make_simplex_etf(3).unwrap();
        let t = choose_radius(&etf, 2, 1e-4).unwrap();
        assert!((t - (1.0 - 1e-4) * 8.0 / 9.0).abs() < 1e-12);

        let a = 0.99f64;
        let v = DenseMatrix::from_rows(&[&[1.0, a, 0.0], &[0.0, (1.0 - a * a).sqrt(), 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        let f = Frame::new(v).unwrap();
        let t = choose_radius(&f, 0, 1e-4).unwrap();
        assert!((t - (1.0 - 1e-4) * 0.0199).abs() < 1e-12);

        let mut dup = DenseMatrix::identity(3);
        let c0 = dup.col(0).to_vec();
        dup.set_col(1, &c0);
        let f = Frame::new(dup).unwrap();
        assert!(matches!(choose_radius(&f, 0, 1e-4), Err(Error::DegenerateVector(0))));
    }

    #[test]
    fn reduction_keeps_everything_for_etf() {
        let etf = make_simplex_etf(5).unwrap();
        let (g, _) = canonicalize_signs(&etf, 2);
        assert_eq!(reduce_neighbors(&g, 2).len(), 5);
    }

    #[test]
    fn reduction_drops_far_neighbor() {
        let deg = std::f64::consts::PI / 180.0;
        let v = DenseMatrix::from_rows(&[
            &[1.0, (10.0 * deg).cos(), (80.0 * deg).cos()],
            &[0.0, (10.0 * deg).sin(), 0.0],
            &[0.0, 0.0, (80.0 * deg).sin()],
        ])
        .unwrap();
        let f = Frame::new(v).unwrap();
        assert_eq!(reduce_neighbors(&f, 0), vec![1]);
    }

    #[test]
    fn initialization_is_unit_norm_and_deterministic() {
        let cfg = SidcoConfig::new(6, 14).with_seed(9);
        let a = initialize(&cfg).unwrap();
        let b = initialize(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.vectors().column_norms().iter().all(|n| (n - 1.0).abs() < 1e-10));
        let nn = initialize(&cfg.clone().with_nonneg(true)).unwrap();
        assert!(nn.is_nonnegative());
    }

    #[test]
    fn etf_is_a_fixed_point_of_a_sweep() {
        let etf = make_simplex_etf(4).unwrap();
        let mut f = etf.clone();
        let cfg = SidcoConfig::new(4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats = sweep(&mut f, &cfg, &mut rng);
        assert_eq!(stats.updated, 0);
        assert_eq!(stats.gated, 4);
        assert!(f.vectors().sub(etf.vectors()).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn first_vector_never_moves() {
        let cfg = SidcoConfig::new(5, 12).with_seed(2).with_sweeps(5);
        let init = initialize(&cfg).unwrap();
        let mut f = init.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            sweep(&mut f, &cfg, &mut rng);
        }
        assert_eq!(f.vector(0), init.vector(0));
        assert_ne!(f, init);
    }

    #[test]
    fn square_config_is_trivial() {
        let (f, rep) = run(&SidcoConfig::new(5, 5).with_seed(3)).unwrap();
        assert!(rep.trace.is_empty());
        assert!(mutual_coherence(&f) < 1e-12);
    }
}
