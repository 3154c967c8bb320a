//! Exact `E[det(S_{I×J})²]` by Isserlis/Wick expansion.
//!
//! With `S = Σ_t X_t X_tᵀ` and `X_1, …, X_n` iid `N(0, Σ)`,
//!
//! ```text
//! det(S_IJ)² = Σ_{σ,τ} sgn σ sgn τ Π_a S[i_a, j_σ(a)] Π_b S[i_b, j_τ(b)]
//! ```
//!
//! and each of the `2m` factors `S[u, v]` expands to `Σ_t X_t[u] X_t[v]`. An
//! assignment of sample indices to the `2m` factors induces a set partition
//! of the factors; Gaussians with different sample indices are independent,
//! so the expectation factors over the blocks, and each block's expectation
//! is the hafnian of `Σ` restricted to the block's `2|B|` coordinates. Exactly
//! `n(n−1)…(n−|π|+1)` assignments induce a given partition `π`, hence
//!
//! ```text
//! E[Π S_f] = Σ_π ff(n, |π|) Π_{B∈π} haf(Σ[B])
//! ```
//!
//! Hafnians are memoized on the sorted coordinate multiset and skip pairs
//! with zero covariance.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{falling_factorial, CovarianceMatrix};
use crate::moments::{MinorSpec, WishartModel};

/// Tractability guard for [`wick_second_moment`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WickBudget {
    /// Largest accepted minor order `m`.
    pub max_order: usize,
    /// Largest accepted `n·m`.
    pub max_dof_times_order: u64,
}

impl Default for WickBudget {
    fn default() -> Self {
        Self {
            max_order: 3,
            max_dof_times_order: 18,
        }
    }
}

impl WickBudget {
    pub fn check(&self, dof: u64, order: usize) -> Result<()> {
        if order > self.max_order {
            return Err(Error::WickRefused(format!(
                "minor order m = {order} exceeds the bound m <= {}",
                self.max_order
            )));
        }
        let nm = dof.saturating_mul(order as u64);
        if nm > self.max_dof_times_order {
            return Err(Error::WickRefused(format!(
                "n*m = {nm} exceeds the bound n*m <= {}",
                self.max_dof_times_order
            )));
        }
        Ok(())
    }
}

/// `E[det(S_{I×J})²]` under the default [`WickBudget`].
pub fn wick_second_moment(model: &WishartModel, spec: &MinorSpec) -> Result<f64> {
    wick_second_moment_with_budget(model, spec, WickBudget::default())
}

pub fn wick_second_moment_with_budget(
    model: &WishartModel,
    spec: &MinorSpec,
    budget: WickBudget,
) -> Result<f64> {
    if spec.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "minor indexes dimension {}, model has dimension {}",
            spec.dim(),
            model.dim()
        )));
    }
    let m = spec.order();
    budget.check(model.dof(), m)?;

    let rows = spec.rows().as_slice();
    let cols = spec.cols().as_slice();
    let perms = signed_permutations(m);
    let partitions = set_partitions(2 * m);
    let n = model.dof() as f64;
    let block_weights: Vec<f64> = (0..=2 * m).map(|b| falling_factorial(n, b as u32)).collect();

    let mut hafnians = Hafnian::new(model.sigma());
    let mut total = 0.0;
    let mut factors = Vec::with_capacity(2 * m);
    for (sigma, sign_s) in &perms {
        for (tau, sign_t) in &perms {
            factors.clear();
            factors.extend((0..m).map(|a| (rows[a], cols[sigma[a]])));
            factors.extend((0..m).map(|b| (rows[b], cols[tau[b]])));
            let mut expectation = 0.0;
            for partition in &partitions {
                let weight = block_weights[partition.len()];
                if weight == 0.0 {
                    continue;
                }
                let mut product = weight;
                for block in partition {
                    let mut coords: Vec<usize> =
                        block.iter().flat_map(|&f| [factors[f].0, factors[f].1]).collect();
                    coords.sort_unstable();
                    product *= hafnians.get(coords);
                    if product == 0.0 {
                        break;
                    }
                }
                expectation += product;
            }
            total += sign_s * sign_t * expectation;
        }
    }
    Ok(total)
}

/// All permutations of `0..m` with their signs.
pub(crate) fn signed_permutations(m: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, f64)>) {
        let m = used.len();
        if prefix.len() == m {
            let inversions = (0..m)
                .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
                .filter(|&(i, j)| prefix[i] > prefix[j])
                .count();
            out.push((prefix.clone(), if inversions % 2 == 0 { 1.0 } else { -1.0 }));
            return;
        }
        for v in 0..m {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(m), &mut vec![false; m], &mut out);
    out
}

/// All set partitions of `0..size` (Bell number many), via restricted
/// growth strings.
pub(crate) fn set_partitions(size: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(labels: &mut Vec<usize>, max_label: usize, size: usize, out: &mut Vec<Vec<Vec<usize>>>) {
        if labels.len() == size {
            let blocks = labels.iter().copied().max().map_or(0, |b| b + 1);
            let mut partition = vec![Vec::new(); blocks];
            for (item, &label) in labels.iter().enumerate() {
                partition[label].push(item);
            }
            out.push(partition);
            return;
        }
        let next = if labels.is_empty() { 0 } else { max_label + 1 };
        for label in 0..=next {
            labels.push(label);
            rec(labels, max_label.max(label), size, out);
            labels.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(size), 0, size, &mut out);
    out
}

/// Memoized `E[Π_k X[u_k]]` for one centered Gaussian vector `X ~ N(0, Σ)`.
struct Hafnian<'a> {
    sigma: &'a CovarianceMatrix,
    memo: HashMap<Vec<usize>, f64>,
}

impl<'a> Hafnian<'a> {
    fn new(sigma: &'a CovarianceMatrix) -> Self {
        Self {
            sigma,
            memo: HashMap::new(),
        }
    }

    /// `coords` must be sorted.
    fn get(&mut self, coords: Vec<usize>) -> f64 {
        if coords.is_empty() {
            return 1.0;
        }
        if coords.len() % 2 == 1 {
            return 0.0;
        }
        if let Some(&v) = self.memo.get(&coords) {
            return v;
        }
        let first = coords[0];
        let mut total = 0.0;
        for k in 1..coords.len() {
            let cov = self.sigma.get(first, coords[k]);
            if cov == 0.0 {
                continue;
            }
            let rest: Vec<usize> = coords[1..]
                .iter()
                .enumerate()
                .filter(|&(i, _)| i + 1 != k)
                .map(|(_, &c)| c)
                .collect();
            total += cov * self.get(rest);
        }
        self.memo.insert(coords, total);
        total
    }
}
