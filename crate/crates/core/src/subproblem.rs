//! The per-vector convex trust-region problem
//!
//! ```text
//! minimize_f  max_j h_jᵀ f    subject to  ‖f − h_i‖² ≤ T   (and f ≥ 0)
//! ```
//!
//! written in epigraph form over `x = (f, t)` with `k` linear constraints
//! `h_jᵀf − t ≤ 0`, one convex quadratic constraint and optional bounds.
//! It is solved with a primal-dual interior-point method (Mehrotra
//! predictor-corrector). When the active set is clear the iterate is then
//! polished with the exact solution for that active set: `f = h_i − H_J w`
//! with `H_Jᵀ f = t·1` and `‖H_J w‖² = T`, which also yields exact
//! multipliers `λ = w / Σw`, `λ_ball = 1 / (2 Σw)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, cholesky, cholesky_solve, dot, norm2, DenseMatrix};

/// Interior-point iteration cap.
pub const MAX_IPM_ITERATIONS: usize = 100;
/// Default tie tolerance for active-set membership.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

const UNIT_TOL: f64 = 1e-10;
const STEP_TO_BOUNDARY: f64 = 0.99;

/// One instance of the trust-region minimax problem around a reference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustSubproblem {
    reference: Vec<f64>,
    neighbors: DenseMatrix,
    radius_sq: f64,
    nonneg: bool,
}

impl TrustSubproblem {
    /// `neighbors` holds the (sign-canonicalized) retained vectors `h_j` as
    /// columns; `radius_sq` is the squared trust radius `T`.
    pub fn new(reference: Vec<f64>, neighbors: DenseMatrix, radius_sq: f64, nonneg: bool) -> Result<Self> {
        let m = reference.len();
        if m == 0 || neighbors.rows() != m {
            return Err(Error::InvalidInput(format!(
                "reference has length {m} but neighbors have {} rows",
                neighbors.rows()
            )));
        }
        if !(radius_sq > 0.0 && radius_sq < 1.0) {
            return Err(Error::InvalidInput(format!("trust radius squared must lie in (0, 1), got {radius_sq}")));
        }
        if (norm2(&reference) - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput("reference vector is not unit norm".into()));
        }
        let mut max_corr: f64 = 0.0;
        for (j, c) in neighbors.columns().enumerate() {
            if (norm2(c) - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidInput(format!("neighbor {j} is not unit norm")));
            }
            let g = dot(c, &reference);
            if g < -1e-12 {
                return Err(Error::InvalidInput(format!(
                    "neighbor {j} has negative correlation {g:.3e}; canonicalize signs first"
                )));
            }
            max_corr = max_corr.max(g);
        }
        if radius_sq >= 1.0 - max_corr * max_corr {
            return Err(Error::InvalidInput(format!(
                "trust radius {radius_sq} reaches a collinear neighbor (max correlation {max_corr})"
            )));
        }
        if nonneg && reference.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("nonnegative mode needs a nonnegative reference".into()));
        }
        Ok(Self { reference, neighbors, radius_sq, nonneg })
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn neighbors(&self) -> &DenseMatrix {
        &self.neighbors
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbors.cols()
    }

    /// `h_jᵀ h_i` for each neighbor.
    pub fn correlations(&self) -> Vec<f64> {
        self.neighbors.tr_mul_vec(&self.reference)
    }

    /// Objective `max_j h_jᵀ f`.
    pub fn objective(&self, f: &[f64]) -> f64 {
        self.neighbors.tr_mul_vec(f).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Max-norm KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖H λ + 2 λ_ball (f − h) − ν‖∞` together with `|1 − Σλ|`.
    pub stationarity: f64,
    /// Largest `|multiplier × constraint|`, plus any negative multiplier.
    pub complementarity: f64,
    /// Largest constraint violation.
    pub primal_feasibility: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.primal_feasibility)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    /// Optimizer before normalization.
    pub f: Vec<f64>,
    /// Attained objective `max_j h_jᵀ f`.
    pub t: f64,
    /// Multipliers of the linear constraints, one per neighbor.
    pub lambda: Vec<f64>,
    /// Multiplier of the trust-region constraint.
    pub lambda_ball: f64,
    /// Multipliers of `f ≥ 0`; empty unless the problem is nonnegative.
    pub lambda_bounds: Vec<f64>,
    pub kkt_residuals: KktResiduals,
    /// Duality gap of the final interior-point iterate.
    pub gap: f64,
    pub iterations: usize,
    /// Whether the closed-form active-set polish was applied.
    pub polished: bool,
}

impl SubproblemSolution {
    pub fn normalized(&self) -> Vec<f64> {
        let n = norm2(&self.f);
        self.f.iter().map(|v| v / n).collect()
    }
}

/// Evaluates the KKT system of `p` at `s` directly from the problem data.
pub fn kkt_residuals(p: &TrustSubproblem, s: &SubproblemSolution) -> KktResiduals {
    let h = &p.reference;
    let m = p.dim();
    let corr = p.neighbors.tr_mul_vec(&s.f);
    let diff: Vec<f64> = s.f.iter().zip(h).map(|(a, b)| a - b).collect();
    let ball = dot(&diff, &diff) - p.radius_sq;

    let mut grad = p.neighbors.mul_vec(&s.lambda);
    axpy(2.0 * s.lambda_ball, &diff, &mut grad);
    for (g, nu) in grad.iter_mut().zip(&s.lambda_bounds) {
        *g -= nu;
    }
    let sum: f64 = s.lambda.iter().sum();
    let stationarity = grad.iter().fold((1.0 - sum).abs(), |a, v| a.max(v.abs()));

    let mut comp: f64 = (s.lambda_ball * ball).abs();
    let mut neg: f64 = (-s.lambda_ball).max(0.0);
    let mut feas: f64 = ball.max(0.0);
    for (l, c) in s.lambda.iter().zip(&corr) {
        comp = comp.max((l * (c - s.t)).abs());
        neg = neg.max(-l);
        feas = feas.max(c - s.t);
    }
    if p.nonneg {
        for l in 0..m {
            let nu = s.lambda_bounds.get(l).copied().unwrap_or(0.0);
            comp = comp.max((nu * s.f[l]).abs());
            neg = neg.max(-nu);
            feas = feas.max(-s.f[l]);
        }
    }
    KktResiduals { stationarity, complementarity: comp.max(neg), primal_feasibility: feas }
}

/// Active set of a solution and whether the vector is stuck.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallReport {
    /// True when the step `h_i − f` points along `h_i`: the solution is a
    /// pure shrink and the vector cannot move.
    pub stalled: bool,
    /// Neighbors attaining the maximum within the tie tolerance.
    pub active: Vec<usize>,
}

pub fn stall_detect(p: &TrustSubproblem, s: &SubproblemSolution, tie_tol: f64) -> StallReport {
    let corr = p.neighbors.tr_mul_vec(&s.f);
    let active = corr.iter().enumerate().filter(|(_, &c)| c >= s.t - tie_tol).map(|(j, _)| j).collect();
    let step: Vec<f64> = p.reference.iter().zip(&s.f).map(|(h, f)| h - f).collect();
    let along = dot(&step, &p.reference);
    let mut orth = step.clone();
    axpy(-along, &p.reference, &mut orth);
    StallReport { stalled: along > 0.0 && norm2(&orth) <= tie_tol, active }
}

/// Solves `p` to duality gap `tol`.
pub fn solve(p: &TrustSubproblem, tol: f64) -> Result<SubproblemSolution> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::InvalidInput(format!("solver tolerance must lie in (0, 1e-4], got {tol}")));
    }
    let mut ipm = Ipm::new(p);
    let outcome = ipm.run(tol);
    let mut sol = ipm.finish(tol);
    match outcome {
        Ok(()) => Ok(sol),
        Err(gap) => {
            sol.gap = gap;
            if sol.kkt_residuals.max() <= 10.0 * tol {
                // The polish recovered an exact KKT point anyway.
                Ok(sol)
            } else {
                Err(Error::SolverStall { iterations: sol.iterations, gap, best: Box::new(sol) })
            }
        }
    }
}

/// Interior-point state over `x = (f, t)`, slacks `s` and duals `z`.
/// Constraint order: `k` linear, the ball, then `m` bounds when nonnegative.
struct Ipm<'a> {
    p: &'a TrustSubproblem,
    m: usize,
    k: usize,
    nc: usize,
    f: Vec<f64>,
    t: f64,
    s: Vec<f64>,
    z: Vec<f64>,
    iterations: usize,
    gap: f64,
}

struct Direction {
    df: Vec<f64>,
    dt: f64,
    ds: Vec<f64>,
    dz: Vec<f64>,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a TrustSubproblem) -> Self {
        let m = p.dim();
        let k = p.neighbor_count();
        let nc = k + 1 + if p.nonneg { m } else { 0 };
        let h = &p.reference;
        let f: Vec<f64> = if p.nonneg {
            // Pull slightly toward the positive diagonal so every bound is strict.
            let eta = 0.25 * p.radius_sq.sqrt();
            let u = 1.0 / (m as f64).sqrt();
            h.iter().map(|v| (1.0 - eta) * v + eta * u).collect()
        } else {
            h.clone()
        };
        let corr = p.neighbors.tr_mul_vec(&f);
        let t = corr.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) + 1.0;
        let mut ipm = Self { p, m, k, nc, f, t, s: vec![0.0; nc], z: vec![0.0; nc], iterations: 0, gap: f64::INFINITY };
        let g = ipm.constraints();
        for i in 0..nc {
            ipm.s[i] = (-g[i]).max(1e-8);
        }
        for j in 0..k {
            ipm.z[j] = 1.0 / k as f64;
        }
        ipm.z[k] = 1.0;
        for l in (k + 1)..nc {
            ipm.z[l] = 1.0 / m as f64;
        }
        ipm
    }

    fn diff(&self) -> Vec<f64> {
        self.f.iter().zip(&self.p.reference).map(|(a, b)| a - b).collect()
    }

    fn constraints(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.nc);
        g.extend(self.p.neighbors.tr_mul_vec(&self.f).iter().map(|c| c - self.t));
        let d = self.diff();
        g.push(dot(&d, &d) - self.p.radius_sq);
        if self.p.nonneg {
            g.extend(self.f.iter().map(|v| -v));
        }
        g
    }

    /// Dual residual: `c + Jᵀ z`, f-part then t-part.
    fn dual_residual(&self, d: &[f64]) -> (Vec<f64>, f64) {
        let k = self.k;
        let mut rf = self.p.neighbors.mul_vec(&self.z[..k]);
        axpy(2.0 * self.z[k], d, &mut rf);
        if self.p.nonneg {
            for (r, zl) in rf.iter_mut().zip(&self.z[k + 1..]) {
                *r -= zl;
            }
        }
        let rt = 1.0 - self.z[..k].iter().sum::<f64>();
        (rf, rt)
    }

    fn mu(&self) -> f64 {
        dot(&self.s, &self.z) / self.nc as f64
    }

    fn run(&mut self, tol: f64) -> std::result::Result<(), f64> {
        let gap_target = 0.1 * tol;
        let feas_target = 1e-2 * tol;
        for it in 0..MAX_IPM_ITERATIONS {
            self.iterations = it;
            let d = self.diff();
            let g = self.constraints();
            let rp: Vec<f64> = g.iter().zip(&self.s).map(|(a, b)| a + b).collect();
            let (rf, rt) = self.dual_residual(&d);
            let gap = dot(&self.s, &self.z);
            self.gap = gap;
            let rp_norm = rp.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let rd_norm = rf.iter().fold(rt.abs(), |a, v| a.max(v.abs()));
            if gap <= gap_target && rp_norm <= feas_target && rd_norm <= feas_target {
                return Ok(());
            }

            let mu = self.mu();
            let Some(factor) = self.factor(&d) else {
                return Err(gap);
            };

            let rc_aff: Vec<f64> = self.s.iter().zip(&self.z).map(|(s, z)| s * z).collect();
            let aff = self.direction(&factor, &d, &rf, rt, &rp, &rc_aff);
            let alpha_aff = self.max_step(&aff);
            let mu_aff = self
                .s
                .iter()
                .zip(&self.z)
                .zip(aff.ds.iter().zip(&aff.dz))
                .map(|((s, z), (ds, dz))| (s + alpha_aff * ds) * (z + alpha_aff * dz))
                .sum::<f64>()
                / self.nc as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let rc: Vec<f64> =
                (0..self.nc).map(|i| self.s[i] * self.z[i] + aff.ds[i] * aff.dz[i] - sigma * mu).collect();
            let dir = self.direction(&factor, &d, &rf, rt, &rp, &rc);
            let alpha = (STEP_TO_BOUNDARY * self.max_step(&dir)).min(1.0);

            axpy(alpha, &dir.df, &mut self.f);
            self.t += alpha * dir.dt;
            axpy(alpha, &dir.ds, &mut self.s);
            axpy(alpha, &dir.dz, &mut self.z);
        }
        self.iterations = MAX_IPM_ITERATIONS;
        Err(dot(&self.s, &self.z))
    }

    /// Builds and factors the reduced Newton matrix `W + Jᵀ (Z/S) J`.
    fn factor(&self, d: &[f64]) -> Option<Vec<f64>> {
        let (m, k) = (self.m, self.k);
        let n = m + 1;
        let mut a = vec![0.0; n * n];
        let w: Vec<f64> = self.z.iter().zip(&self.s).map(|(z, s)| z / s).collect();
        let h = &self.p.neighbors;
        let mut tcol = vec![0.0; m];
        let mut tt = 0.0;
        for j in 0..k {
            let hj = h.col(j);
            let wj = w[j];
            for c in 0..m {
                let v = wj * hj[c];
                if v == 0.0 {
                    continue;
                }
                let col = &mut a[c * n..c * n + m];
                for r in c..m {
                    col[r] += v * hj[r];
                }
            }
            axpy(-wj, hj, &mut tcol);
            tt += wj;
        }
        let wb = w[k];
        let zb2 = 2.0 * self.z[k];
        for c in 0..m {
            let v = 4.0 * wb * d[c];
            let col = &mut a[c * n..c * n + m];
            col[c] += zb2;
            for r in c..m {
                col[r] += v * d[r];
            }
        }
        if self.p.nonneg {
            for l in 0..m {
                a[l * n + l] += w[k + 1 + l];
            }
        }
        for c in 0..m {
            a[c * n + m] = tcol[c];
        }
        a[m * n + m] = tt;

        let mut reg = 0.0;
        for _ in 0..6 {
            let mut l = a.clone();
            if reg > 0.0 {
                for i in 0..n {
                    l[i * n + i] += reg;
                }
            }
            if cholesky(&mut l, n).is_ok() {
                return Some(l);
            }
            let scale = (0..n).fold(0.0f64, |acc, i| acc.max(a[i * n + i].abs())).max(1.0);
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        None
    }

    fn direction(&self, factor: &[f64], d: &[f64], rf: &[f64], rt: f64, rp: &[f64], rc: &[f64]) -> Direction {
        let (m, k, nc) = (self.m, self.k, self.nc);
        let h = &self.p.neighbors;
        // u = S⁻¹ (Z r_p − r_c); rhs = −r_d − Jᵀ u
        let u: Vec<f64> = (0..nc).map(|i| (self.z[i] * rp[i] - rc[i]) / self.s[i]).collect();
        let mut rhs = vec![0.0; m + 1];
        for (r, v) in rhs.iter_mut().zip(rf) {
            *r = -v;
        }
        rhs[m] = -rt;
        let hu = h.mul_vec(&u[..k]);
        for c in 0..m {
            rhs[c] -= hu[c] + 2.0 * u[k] * d[c];
        }
        rhs[m] += u[..k].iter().sum::<f64>();
        if self.p.nonneg {
            for l in 0..m {
                rhs[l] += u[k + 1 + l];
            }
        }
        cholesky_solve(factor, m + 1, &mut rhs);
        let dt = rhs[m];
        let df = rhs[..m].to_vec();

        let mut jdx = Vec::with_capacity(nc);
        jdx.extend(h.tr_mul_vec(&df).iter().map(|v| v - dt));
        jdx.push(2.0 * dot(d, &df));
        if self.p.nonneg {
            jdx.extend(df.iter().map(|v| -v));
        }
        let ds: Vec<f64> = (0..nc).map(|i| -rp[i] - jdx[i]).collect();
        let dz: Vec<f64> = (0..nc).map(|i| (-rc[i] - self.z[i] * ds[i]) / self.s[i]).collect();
        Direction { df, dt, ds, dz }
    }

    fn max_step(&self, dir: &Direction) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.nc {
            if dir.ds[i] < 0.0 {
                alpha = alpha.min(-self.s[i] / dir.ds[i]);
            }
            if dir.dz[i] < 0.0 {
                alpha = alpha.min(-self.z[i] / dir.dz[i]);
            }
        }
        alpha
    }

    /// Converts the final iterate into a solution, polishing when possible.
    fn finish(&self, tol: f64) -> SubproblemSolution {
        let p = self.p;
        let (m, k) = (self.m, self.k);
        let bounds_active = p.nonneg && (0..m).any(|l| self.z[k + 1 + l] >= self.s[k + 1 + l]);
        let mut active: Vec<usize> = (0..k).filter(|&j| self.z[j] >= self.s[j]).collect();
        if active.is_empty() {
            // The max is always attained; fall back to the largest dual.
            let jmax = (0..k).max_by(|&a, &b| self.z[a].total_cmp(&self.z[b])).unwrap_or(0);
            active.push(jmax);
        }

        if !bounds_active {
            if let Some(mut sol) = polish(p, &active, tol).or_else(|| active_set_search(p, tol)) {
                sol.gap = self.gap;
                sol.iterations = self.iterations;
                return sol;
            }
        }

        // Fallback: move the iterate onto the trust-region sphere and keep
        // the interior-point multipliers of the clearly active constraints.
        let mut f = self.f.clone();
        project_to_sphere(p, &mut f);
        let t = p.objective(&f);
        let mut lambda: Vec<f64> =
            (0..k).map(|j| if self.z[j] >= self.s[j] { self.z[j].max(0.0) } else { 0.0 }).collect();
        let sum: f64 = lambda.iter().sum();
        if sum > 0.0 {
            lambda.iter_mut().for_each(|l| *l /= sum);
        }
        let lambda_bounds: Vec<f64> = if p.nonneg {
            (0..m)
                .map(|l| {
                    let (zl, sl) = (self.z[k + 1 + l], self.s[k + 1 + l]);
                    if zl >= sl {
                        zl.max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        let diff: Vec<f64> = f.iter().zip(&p.reference).map(|(a, b)| a - b).collect();
        let mut lin = p.neighbors.mul_vec(&lambda);
        for (v, nu) in lin.iter_mut().zip(&lambda_bounds) {
            *v -= nu;
        }
        let dd = dot(&diff, &diff);
        let lambda_ball = if dd > 0.0 { (-dot(&diff, &lin) / (2.0 * dd)).max(0.0) } else { self.z[k].max(0.0) };
        let mut sol = SubproblemSolution {
            f,
            t,
            lambda,
            lambda_ball,
            lambda_bounds,
            kkt_residuals: KktResiduals { stationarity: 0.0, complementarity: 0.0, primal_feasibility: 0.0 },
            gap: self.gap,
            iterations: self.iterations,
            polished: false,
        };
        sol.kkt_residuals = kkt_residuals(p, &sol);
        sol
    }
}

/// Places `f` exactly on the trust-region sphere without raising the
/// objective (shrinking toward the origin when correlations are positive).
fn project_to_sphere(p: &TrustSubproblem, f: &mut [f64]) {
    let h = &p.reference;
    let tr = p.radius_sq;
    let t = p.objective(f);
    let ff = dot(f, f);
    let fh = dot(f, h);
    if t >= 0.0 && ff > 0.0 {
        // smallest gamma with ‖γ f − h‖² = T
        let disc = fh * fh - ff * (1.0 - tr);
        if disc >= 0.0 {
            let gamma = (fh - disc.sqrt()) / ff;
            if gamma > 0.0 && gamma <= 1.0 + 1e-12 {
                f.iter_mut().for_each(|v| *v *= gamma);
                return;
            }
        }
    }
    let mut d: Vec<f64> = f.iter().zip(h).map(|(a, b)| a - b).collect();
    let dn = norm2(&d);
    if dn > 0.0 {
        d.iter_mut().for_each(|v| *v *= tr.sqrt() / dn);
        for ((fi, hi), di) in f.iter_mut().zip(h).zip(&d) {
            *fi = hi + di;
        }
    }
}

/// Exact solution for a guessed active set `J`. Indices whose weight comes
/// out negative are dropped and the system re-solved.
fn polish(p: &TrustSubproblem, active: &[usize], tol: f64) -> Option<SubproblemSolution> {
    let corr_h = p.correlations();
    let mut set: Vec<usize> = active.to_vec();
    while !set.is_empty() && set.len() <= p.dim() {
        let (t, w) = active_set_point(p, &set, &corr_h)?;
        if let Some(worst) = most_negative(&w) {
            set.remove(worst);
            continue;
        }
        let f = active_set_f(p, &set, &w);
        let obj = p.objective(&f);
        if obj > t + 1e-12 {
            return None;
        }
        return certify(p, &set, &w, f, obj, tol);
    }
    None
}

/// Primal active-set search started from the most correlated neighbor:
/// drop negative weights, add the most violated neighbor, repeat. Used when
/// the interior-point iterate gives no usable active set.
fn active_set_search(p: &TrustSubproblem, tol: f64) -> Option<SubproblemSolution> {
    let corr_h = p.correlations();
    let k = p.neighbor_count();
    let first = (0..k).max_by(|&a, &b| corr_h[a].total_cmp(&corr_h[b]))?;
    let mut set = vec![first];
    for _ in 0..4 * k + 8 {
        let (t, w) = active_set_point(p, &set, &corr_h)?;
        if let Some(worst) = most_negative(&w) {
            set.remove(worst);
            if set.is_empty() {
                return None;
            }
            continue;
        }
        let f = active_set_f(p, &set, &w);
        let corr = p.neighbors.tr_mul_vec(&f);
        let violated = (0..k)
            .filter(|j| !set.contains(j))
            .max_by(|&a, &b| corr[a].total_cmp(&corr[b]))
            .filter(|&j| corr[j] > t + 1e-12);
        match violated {
            Some(j) if set.len() < p.dim() => set.push(j),
            Some(_) => return None,
            None => {
                let obj = p.objective(&f);
                return certify(p, &set, &w, f, obj, tol);
            }
        }
    }
    None
}

fn most_negative(w: &[f64]) -> Option<usize> {
    (0..w.len()).filter(|&a| w[a] < -1e-12).min_by(|&a, &b| w[a].total_cmp(&w[b]))
}

fn active_set_f(p: &TrustSubproblem, set: &[usize], w: &[f64]) -> Vec<f64> {
    let mut f = p.reference.clone();
    for (&j, &wj) in set.iter().zip(w) {
        axpy(-wj.max(0.0), p.neighbors.col(j), &mut f);
    }
    f
}

/// Builds the solution for active set `set` with weights `w` and keeps it
/// only if its KKT residuals are within `tol`.
fn certify(
    p: &TrustSubproblem,
    set: &[usize],
    w: &[f64],
    f: Vec<f64>,
    obj: f64,
    tol: f64,
) -> Option<SubproblemSolution> {
    let m = p.dim();
    if p.nonneg && f.iter().any(|&v| v < 0.0) {
        return None;
    }
    let wsum: f64 = w.iter().map(|x| x.max(0.0)).sum();
    if !(wsum > 0.0) {
        return None;
    }
    let mut lambda = vec![0.0; p.neighbor_count()];
    for (&j, &wj) in set.iter().zip(w) {
        lambda[j] = wj.max(0.0) / wsum;
    }
    let mut sol = SubproblemSolution {
        f,
        t: obj,
        lambda,
        lambda_ball: 0.5 / wsum,
        lambda_bounds: if p.nonneg { vec![0.0; m] } else { Vec::new() },
        kkt_residuals: KktResiduals { stationarity: 0.0, complementarity: 0.0, primal_feasibility: 0.0 },
        gap: 0.0,
        iterations: 0,
        polished: true,
    };
    sol.kkt_residuals = kkt_residuals(p, &sol);
    (sol.kkt_residuals.max() <= tol).then_some(sol)
}

/// Solves `G w = c_J − t·1`, `wᵀ G w = T` for the smaller root `t`, where
/// `G = H_JᵀH_J`.
fn active_set_point(p: &TrustSubproblem, set: &[usize], corr_h: &[f64]) -> Option<(f64, Vec<f64>)> {
    let q = set.len();
    let h = &p.neighbors;
    let mut g = vec![0.0; q * q];
    for (a, &ja) in set.iter().enumerate() {
        for (b, &jb) in set.iter().enumerate().skip(a) {
            let v = dot(h.col(ja), h.col(jb));
            g[a * q + b] = v;
            g[b * q + a] = v;
        }
    }
    // Reject nearly singular active sets; the interior-point answer is kept.
    let diag_max = (0..q).fold(0.0f64, |acc, i| acc.max(g[i * q + i]));
    cholesky(&mut g, q).ok()?;
    let min_pivot = (0..q).fold(f64::INFINITY, |acc, i| acc.min(g[i * q + i]));
    if min_pivot * min_pivot < 1e-10 * diag_max {
        return None;
    }
    let c: Vec<f64> = set.iter().map(|&j| corr_h[j]).collect();
    let mut gc = c.clone();
    cholesky_solve(&g, q, &mut gc);
    let mut g1 = vec![1.0; q];
    cholesky_solve(&g, q, &mut g1);
    let b1: f64 = g1.iter().sum();
    let b2: f64 = gc.iter().sum();
    let b3 = dot(&c, &gc);
    let disc = b2 * b2 - b1 * (b3 - p.radius_sq);
    if !(disc >= 0.0) || !(b1 > 0.0) {
        return None;
    }
    let t = (b2 - disc.sqrt()) / b1;
    let w: Vec<f64> = gc.iter().zip(&g1).map(|(a, b)| a - t * b).collect();
    Some((t, w))
}
