#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wishart_minors::{CovarianceMatrix, Matrix, MinorSpec};

/// `|a − b| ≤ tol · max(1, |reference|)`.
pub fn rel_close(value: f64, reference: f64, tol: f64) -> bool {
    (value - reference).abs() <= tol * reference.abs().max(1.0)
}

pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1.0)
}

/// `A·Aᵀ/r + 0.3·I` with Gaussian `A`: SPD with distinct, asymmetric entries.
pub fn random_spd(r: usize, seed: u64) -> CovarianceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..r * r).map(|_| rng.sample(StandardNormal)).collect();
    let a = Matrix::new(r, r, data).unwrap();
    let mut rows = a.matmul(&a.transpose()).scale(1.0 / r as f64).to_rows();
    for (i, row) in rows.iter_mut().enumerate() {
        row[i] += 0.3;
    }
    CovarianceMatrix::from_rows(&rows).unwrap()
}

pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Every `(I, J)` with `|I| = |J| = m` in dimension `r`.
pub fn all_specs(r: usize, m: usize) -> Vec<MinorSpec> {
    let subsets = combinations(r, m);
    let mut out = Vec::new();
    for rows in &subsets {
        for cols in &subsets {
            out.push(MinorSpec::from_indices(rows, cols, r).unwrap());
        }
    }
    out
}
