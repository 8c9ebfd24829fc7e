#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;
use sidco::numerics::{dot, least_squares, svd, unit_polar, DenseMatrix};

use common::rng;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(a: &DenseMatrix) -> Vec<f64> {
    let n = a.rows();
    let mut s: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[i][j] * s[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[k][p], s[k][q]);
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[p][k], s[q][k]);
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| s[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Solves the normal equations by Gaussian elimination with partial pivoting.
fn normal_equations(a: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let k = a.cols();
    let ata = a.tr_matmul(a).unwrap();
    let atb = a.tr_mul_vec(b);
    let mut m: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| ata[(i, j)]).chain([atb[i]]).collect()).collect();
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        for r in c + 1..k {
            let f = m[r][c] / m[c][c];
            for j in c..=k {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][k] - s) / m[i][i];
    }
    x
}

fn max_entry_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).unwrap().max_abs()
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::random_gaussian(rows, cols, &mut rng(seed))
}

#[test]
fn singular_values_match_jacobi_eigen_oracle() {
    for seed in 0..10 {
        let a = gaussian(5, 8, seed);
        let s = svd(&a).unwrap();
        assert!(max_entry_diff(&s.reconstruct(), &a) <= 1e-8 * a.max_abs().max(1.0));
        let ev = jacobi_eigenvalues(&a.matmul_tr(&a).unwrap());
        for (sv, e) in s.s.iter().zip(&ev) {
            assert!((sv * sv - e).abs() < 1e-9 * ev[0], "{sv} vs {}", e.sqrt());
        }
    }
}

#[test]
fn least_squares_matches_normal_equations() {
    for seed in 0..10 {
        let a = gaussian(12, 5, seed);
        let b = gaussian(12, 1, seed + 100).data().to_vec();
        let x = least_squares(&a, &b).unwrap();
        let oracle = normal_equations(&a, &b);
        for (u, v) in x.iter().zip(&oracle) {
            assert!((u - v).abs() < 1e-9, "{u} vs {v}");
        }
        let mut r = b.clone();
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, v)| *ri -= v);
        for c in a.columns() {
            assert!(dot(c, &r).abs() < 1e-8);
        }
    }
}

#[test]
fn polar_factor_is_closest_among_perturbed_candidates() {
    let a = gaussian(4, 10, 11);
    let p = unit_polar(&a).unwrap();
    let best = a.sub(&p).unwrap().frobenius_norm();
    let mut r = rng(12);
    for _ in 0..100 {
        let eps: f64 = rand::Rng::random_range(&mut r, 1e-3..0.5);
        let mut e = DenseMatrix::random_gaussian(4, 10, &mut r);
        e.scale(eps);
        let mut cand = p.clone();
        for (c, d) in (0..10).map(|j| (j, e.col(j).to_vec())) {
            let col: Vec<f64> = cand.col(c).iter().zip(&d).map(|(x, y)| x + y).collect();
            cand.set_col(c, &col);
        }
        let q = unit_polar(&cand).unwrap();
        assert!(a.sub(&q).unwrap().frobenius_norm() >= best - 1e-12);
    }
}

#[test]
fn polar_scale_invariance() {
    let b = unit_polar(&gaussian(3, 7, 5)).unwrap();
    let mut a = b.clone();
    a.scale(4.5);
    assert!(max_entry_diff(&unit_polar(&a).unwrap(), &b) < 1e-9);
}

fn matrix_strategy() -> impl Strategy<Value = DenseMatrix> {
    (1usize..7, 1usize..7, any::<u64>()).prop_map(|(r, c, seed)| gaussian(r, c, seed))
}

fn wide_strategy() -> impl Strategy<Value = DenseMatrix> {
    (1usize..6, 0usize..6, any::<u64>()).prop_map(|(r, extra, seed)| gaussian(r, r + extra, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs(a in matrix_strategy()) {
        let s = svd(&a).unwrap();
        prop_assert!(max_entry_diff(&s.reconstruct(), &a) <= 1e-8 * a.max_abs().max(1.0));
        prop_assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.s.iter().all(|&v| v >= 0.0));
        let k = s.s.len();
        let utu = s.u.tr_matmul(&s.u).unwrap();
        let vtv = s.v.tr_matmul(&s.v).unwrap();
        prop_assert!(max_entry_diff(&utu, &DenseMatrix::identity(k)) < 1e-9);
        prop_assert!(max_entry_diff(&vtv, &DenseMatrix::identity(k)) < 1e-9);
    }

    #[test]
    fn polar_is_tight_and_idempotent(a in wide_strategy()) {
        let p = unit_polar(&a).unwrap();
        let ppt = p.matmul_tr(&p).unwrap();
        prop_assert!(max_entry_diff(&ppt, &DenseMatrix::identity(a.rows())) < 1e-9);
        let pp = unit_polar(&p).unwrap();
        prop_assert!(max_entry_diff(&pp, &p) < 1e-9);
    }

    #[test]
    fn least_squares_residual_is_orthogonal(seed in any::<u64>(), k in 1usize..5, extra in 0usize..5) {
        let a = gaussian(k + extra, k, seed);
        let b = gaussian(k + extra, 1, seed.wrapping_add(1)).data().to_vec();
        let x = least_squares(&a, &b).unwrap();
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        for c in a.columns() {
            prop_assert!(dot(c, &r).abs() < 1e-8);
        }
    }
}
