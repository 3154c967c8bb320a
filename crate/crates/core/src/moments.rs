//! Exact mean and variance of a minor `det(S_{I×J})` of a Wishart matrix
//! `S ~ W_r(n, Σ)`.
//!
//! Notation used throughout: `C = I ∩ J` with `c = |C|`, `Ī = I ∖ C`,
//! `J̄ = J ∖ C`, `U = Ī ∪ J̄`, `m = |I| = |J|`, and `Σ̄` the Schur complement
//! of `Σ_{C×C}` in `Σ`, i.e. the covariance of the remaining coordinates
//! conditional on `C`.
//!
//! The variance is the sum of two terms,
//!
//! ```text
//! term1 = det(Σ_{I×J})² · ff(n, m) · [ff(n+2, m) − ff(n, m)]
//! term2 = det(Σ_{C×C})² · det(Σ̄_{U×U}) · ff(n+2, c) · ff(n, m)
//!         · Σ_{k=0}^{m−c−1} (m−c−k)! · ff(n+2−c, k) · (−1)^k · tr Λ_k(T)
//! ```
//!
//! where `ff` is the falling factorial, `Λ_k` the k-th compound and `T` the
//! trace argument selected by a [`TraceConvention`]. The default convention,
//! [`TraceConvention::InverseBlockJI`], is `T = Σ̄_{Ī×J̄} · (Σ̄_{U×U}⁻¹)_{J̄×Ī}`,
//! the one that agrees with exact Wick-theorem evaluation of `E[det(S_{I×J})²]`
//! (see [`crate::oracles::calibrate_trace_convention`]).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{
    compound_trace, determinant, factorial, falling_factorial, inverse_spd, schur_complement,
    submatrix, CovarianceMatrix, IndexSet, Matrix,
};

/// The pair of index sets `(I, J)` selecting the minor, with the derived
/// overlap bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinorSpec {
    rows: IndexSet,
    cols: IndexSet,
    common: IndexSet,
    rows_only: IndexSet,
    cols_only: IndexSet,
    disjoint_union: IndexSet,
}

impl MinorSpec {
    pub fn new(rows: IndexSet, cols: IndexSet) -> Result<Self> {
        if rows.dim() != cols.dim() {
            return Err(invalid(format!(
                "row and column sets live in dimensions {} and {}",
                rows.dim(),
                cols.dim()
            )));
        }
        if rows.len() != cols.len() {
            return Err(invalid(format!(
                "minor needs |I| = |J|, got {} and {}",
                rows.len(),
                cols.len()
            )));
        }
        if rows.is_empty() {
            return Err(invalid("minor needs at least one row and column"));
        }
        let common = rows.intersection(&cols);
        let rows_only = rows.difference(&common);
        let cols_only = cols.difference(&common);
        let disjoint_union = rows_only.union(&cols_only);
        Ok(Self {
            rows,
            cols,
            common,
            rows_only,
            cols_only,
            disjoint_union,
        })
    }

    /// Convenience constructor from 0-based index lists.
    pub fn from_indices(rows: &[usize], cols: &[usize], dim: usize) -> Result<Self> {
        Self::new(IndexSet::new(rows.to_vec(), dim)?, IndexSet::new(cols.to_vec(), dim)?)
    }

    /// `I`
    pub fn rows(&self) -> &IndexSet {
        &self.rows
    }

    /// `J`
    pub fn cols(&self) -> &IndexSet {
        &self.cols
    }

    /// `C = I ∩ J`
    pub fn common(&self) -> &IndexSet {
        &self.common
    }

    /// `Ī = I ∖ C`
    pub fn rows_only(&self) -> &IndexSet {
        &self.rows_only
    }

    /// `J̄ = J ∖ C`
    pub fn cols_only(&self) -> &IndexSet {
        &self.cols_only
    }

    /// `Ī ∪ J̄`
    pub fn disjoint_union(&self) -> &IndexSet {
        &self.disjoint_union
    }

    /// `m`
    pub fn order(&self) -> usize {
        self.rows.len()
    }

    /// `c`
    pub fn overlap(&self) -> usize {
        self.common.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.dim()
    }

    /// `(J, I)`.
    pub fn swapped(&self) -> MinorSpec {
        MinorSpec::new(self.cols.clone(), self.rows.clone()).expect("swap of a valid spec")
    }

    fn check_against(&self, model: &WishartModel) -> Result<()> {
        if self.dim() != model.dim() {
            return Err(invalid(format!(
                "minor indexes dimension {}, model has dimension {}",
                self.dim(),
                model.dim()
            )));
        }
        Ok(())
    }
}

/// `S ~ W_r(n, Σ)` with integer degrees of freedom `n ≥ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WishartModel {
    dof: u64,
    sigma: CovarianceMatrix,
}

impl WishartModel {
    pub fn new(dof: u64, sigma: CovarianceMatrix) -> Result<Self> {
        if dof == 0 {
            return Err(invalid("degrees of freedom must be a positive integer"));
        }
        Ok(Self { dof, sigma })
    }

    pub fn dof(&self) -> u64 {
        self.dof
    }

    pub fn sigma(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    fn n(&self) -> f64 {
        self.dof as f64
    }
}

/// Parsing of the trace argument in the second variance term.
///
/// All candidates use `Σ̄_{U×U}⁻¹`, the inverse of the conditional covariance
/// of the coordinates actually involved in the minor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceConvention {
    /// `Σ̄_{Ī×J̄} · (Σ̄_{U×U}⁻¹)_{Ī×J̄}`
    #[serde(rename = "inverse_block_ij")]
    InverseBlockIJ,
    /// `Σ̄_{Ī×J̄} · (Σ̄_{U×U}⁻¹)_{J̄×Ī}`
    #[default]
    #[serde(rename = "inverse_block_ji")]
    InverseBlockJI,
    /// `Σ̄_{U×U} · Σ̄_{U×U}⁻¹` over the union, a `2(m−c)`-square matrix.
    UnionSquare,
}

impl TraceConvention {
    pub const ALL: [TraceConvention; 3] = [
        TraceConvention::InverseBlockIJ,
        TraceConvention::InverseBlockJI,
        TraceConvention::UnionSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraceConvention::InverseBlockIJ => "inverse_block_ij",
            TraceConvention::InverseBlockJI => "inverse_block_ji",
            TraceConvention::UnionSquare => "union_square",
        }
    }
}

impl std::fmt::Display for TraceConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Signed contribution of the `k`-th summand to `term2`, prefactor included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTerm {
    pub k: usize,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    pub term1: f64,
    pub term2: f64,
    pub trace_terms: Vec<TraceTerm>,
}

/// `E[det(S_{I×J})] = det(Σ_{I×J}) · n(n−1)…(n−m+1)`.
pub fn minor_mean(model: &WishartModel, spec: &MinorSpec) -> Result<f64> {
    spec.check_against(model)?;
    let det = determinant(&submatrix(model.sigma().as_matrix(), spec.rows(), spec.cols())?);
    Ok(det * falling_factorial(model.n(), spec.order() as u32))
}

/// Full variance report with the default trace convention.
pub fn minor_variance(model: &WishartModel, spec: &MinorSpec) -> Result<MomentReport> {
    minor_variance_with(model, spec, TraceConvention::default())
}

pub fn minor_variance_with(
    model: &WishartModel,
    spec: &MinorSpec,
    convention: TraceConvention,
) -> Result<MomentReport> {
    spec.check_against(model)?;
    let n = model.n();
    let m = spec.order() as u32;
    let c = spec.overlap() as u32;
    let sigma = model.sigma().as_matrix();

    let mean = minor_mean(model, spec)?;
    let det_ij = determinant(&submatrix(sigma, spec.rows(), spec.cols())?);
    let ff_n_m = falling_factorial(n, m);
    let term1 = det_ij * det_ij * ff_n_m * (falling_factorial(n + 2.0, m) - ff_n_m);

    let mut trace_terms = Vec::new();
    if c < m {
        let det_cc = determinant(&submatrix(sigma, spec.common(), spec.common())?);

        let schur = schur_complement(model.sigma(), spec.common())?;
        let reduced_dim = schur.kept.len();
        let rows_only = spec.rows_only().reindex(&schur.remap, reduced_dim)?;
        let cols_only = spec.cols_only().reindex(&schur.remap, reduced_dim)?;
        let union = spec.disjoint_union().reindex(&schur.remap, reduced_dim)?;

        let cond = schur.matrix.principal(&union)?;
        let cond_inv = inverse_spd(&cond)?;
        let det_union = determinant(cond.as_matrix());

        // Ī and J̄ as positions inside U.
        let u_len = union.len();
        let u_remap = position_table(&union, reduced_dim);
        let rows_in_u = rows_only.reindex(&u_remap, u_len)?;
        let cols_in_u = cols_only.reindex(&u_remap, u_len)?;

        let argument = trace_argument(convention, cond.as_matrix(), &cond_inv, &rows_in_u, &cols_in_u)?;

        let prefactor = det_cc * det_cc * det_union * falling_factorial(n + 2.0, c) * ff_n_m;
        for k in 0..(m - c) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let summand = factorial(m - c - k)
                * falling_factorial(n + 2.0 - f64::from(c), k)
                * sign
                * compound_trace(&argument, k as usize)?;
            trace_terms.push(TraceTerm {
                k: k as usize,
                contribution: prefactor * summand,
            });
        }
    }
    let term2: f64 = trace_terms.iter().map(|t| t.contribution).sum();
    let variance = term1 + term2;
    Ok(MomentReport {
        mean,
        variance,
        second_moment: variance + mean * mean,
        term1,
        term2,
        trace_terms,
    })
}

/// `E[det(S_{I×J})²] = mean² + variance`.
pub fn minor_second_moment(model: &WishartModel, spec: &MinorSpec) -> Result<f64> {
    Ok(minor_variance(model, spec)?.second_moment)
}

/// Variance through the factorization `det(S_{I×J}) = det(S_{C×C}) ·
/// det(S̄_{Ī×J̄})` into independent factors, with `S̄ ~ W(n − c, Σ̄)`:
///
/// ```text
/// Var = (Var[A] + E[A]²)·Var[B] + Var[A]·E[B]²
/// ```
///
/// where `A` is the principal minor on `C` and `B` the disjoint minor of the
/// conditional Wishart matrix. Either factor is the constant 1 when its
/// index set is empty.
pub fn variance_via_decomposition(model: &WishartModel, spec: &MinorSpec) -> Result<f64> {
    spec.check_against(model)?;
    let c = spec.overlap();
    let m = spec.order();
    if c < m && model.dof() <= c as u64 {
        return Err(invalid(format!(
            "decomposition needs n > c, got n = {} and c = {c}",
            model.dof()
        )));
    }

    let (mean_a, var_a) = if c == 0 {
        (1.0, 0.0)
    } else {
        let principal = MinorSpec::new(spec.common().clone(), spec.common().clone())?;
        let report = minor_variance(model, &principal)?;
        (report.mean, report.variance)
    };

    let (mean_b, var_b) = if c == m {
        (1.0, 0.0)
    } else {
        let schur = schur_complement(model.sigma(), spec.common())?;
        let reduced_dim = schur.kept.len();
        let reduced = WishartModel::new(model.dof() - c as u64, schur.matrix)?;
        let disjoint = MinorSpec::new(
            spec.rows_only().reindex(&schur.remap, reduced_dim)?,
            spec.cols_only().reindex(&schur.remap, reduced_dim)?,
        )?;
        let report = minor_variance(&reduced, &disjoint)?;
        (report.mean, report.variance)
    };

    Ok((var_a + mean_a * mean_a) * var_b + var_a * mean_b * mean_b)
}

fn position_table(set: &IndexSet, dim: usize) -> Vec<Option<usize>> {
    let mut table = vec![None; dim];
    for (pos, i) in set.iter().enumerate() {
        table[i] = Some(pos);
    }
    table
}

fn trace_argument(
    convention: TraceConvention,
    cond: &Matrix,
    cond_inv: &Matrix,
    rows_only: &IndexSet,
    cols_only: &IndexSet,
) -> Result<Matrix> {
    let block = submatrix(cond, rows_only, cols_only)?;
    Ok(match convention {
        TraceConvention::InverseBlockIJ => block.matmul(&submatrix(cond_inv, rows_only, cols_only)?),
        TraceConvention::InverseBlockJI => block.matmul(&submatrix(cond_inv, cols_only, rows_only)?),
        TraceConvention::UnionSquare => cond.matmul(cond_inv),
    })
}
