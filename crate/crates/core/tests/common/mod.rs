#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidco::frame::Frame;
use sidco::numerics::{dot, norm2, DenseMatrix};
use sidco::subproblem::TrustSubproblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(m: usize, n: usize, seed: u64) -> Frame {
    Frame::from_unnormalized(DenseMatrix::random_gaussian(m, n, &mut rng(seed))).unwrap()
}

/// Subproblem around a random unit vector with `k` random neighbors,
/// sign-flipped to nonnegative correlation, and the maximal admissible radius.
pub fn random_subproblem(m: usize, k: usize, seed: u64) -> TrustSubproblem {
    let mut a = DenseMatrix::random_gaussian(m, k + 1, &mut rng(seed));
    a.normalize_columns().unwrap();
    let h = a.col(0).to_vec();
    let mut nb = a.select_columns(&(1..=k).collect::<Vec<_>>());
    let mut gmax: f64 = 0.0;
    for j in 0..k {
        let g = dot(nb.col(j), &h);
        if g < 0.0 {
            nb.col_mut(j).iter_mut().for_each(|v| *v = -*v);
        }
        gmax = gmax.max(g.abs());
    }
    TrustSubproblem::new(h, nb, (1.0 - 1e-4) * (1.0 - gmax * gmax), false).unwrap()
}

/// Like [`random_subproblem`] but with a radius drawn uniformly below the maximum.
pub fn random_subproblem_scaled(m: usize, k: usize, seed: u64) -> TrustSubproblem {
    let p = random_subproblem(m, k, seed);
    let u: f64 = rng(seed ^ 0xabcdef).random_range(0.05..1.0);
    TrustSubproblem::new(p.reference().to_vec(), p.neighbors().clone(), p.radius_sq() * u, false).unwrap()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn max_abs_corr(p: &TrustSubproblem, v: &[f64]) -> f64 {
    let n = norm2(v);
    p.neighbors().columns().map(|c| (dot(c, v) / n).abs()).fold(0.0, f64::max)
}

/// Exhaustive search over the boundary of the cap around `h` in R^2.
pub fn brute_force_cap_2d(p: &TrustSubproblem, step: f64) -> f64 {
    let h = p.reference();
    let r = p.radius_sq().sqrt();
    let steps = (std::f64::consts::TAU / step).ceil() as usize;
    (0..steps)
        .map(|k| {
            let a = k as f64 * step;
            p.objective(&[h[0] + r * a.cos(), h[1] + r * a.sin()])
        })
        .fold(f64::INFINITY, f64::min)
}
