//! Exact first and second moments of minors `det(S_{I×J})` of Wishart
//! matrices `S ~ W_r(n, Σ)`, together with two independent oracles (Monte
//! Carlo and exact Wick expansion) that verify them.
//!
//! ```
//! use wishart_minors::{minor_variance, CovarianceMatrix, MinorSpec, WishartModel};
//!
//! let model = WishartModel::new(5, CovarianceMatrix::identity(4)).unwrap();
//! let tetrad = MinorSpec::from_indices(&[0, 1], &[2, 3], 4).unwrap();
//! let report = minor_variance(&model, &tetrad).unwrap();
//! assert!((report.variance - 40.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod error;
pub mod linalg;
pub mod moments;
pub mod oracles;

pub use error::{Error, Result};
pub use linalg::{
    compound_trace, determinant, falling_factorial, inverse_spd, schur_complement, submatrix,
    CovarianceMatrix, IndexSet, Matrix, SchurComplement,
};
pub use moments::{
    minor_mean, minor_second_moment, minor_variance, minor_variance_with,
    variance_via_decomposition, MinorSpec, MomentReport, TraceConvention, TraceTerm, WishartModel,
};
