use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::moments::{minor_mean, minor_variance_with, MinorSpec, TraceConvention, WishartModel};
use crate::oracles::wick::{wick_second_moment_with_budget, WickBudget};

/// Relative agreement required between a candidate and the Wick variance.
pub const CALIBRATION_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub convention: TraceConvention,
    pub variance: f64,
    pub relative_error: f64,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// `E[det²] − E[det]²` with the second moment from the Wick expander.
    pub wick_variance: f64,
    pub candidates: Vec<CandidateOutcome>,
}

impl CalibrationReport {
    /// The unique matching candidate.
    pub fn selected(&self) -> Result<TraceConvention> {
        let matching: Vec<TraceConvention> = self
            .candidates
            .iter()
            .filter(|c| c.matches)
            .map(|c| c.convention)
            .collect();
        match matching.as_slice() {
            [only] => Ok(*only),
            [] => Err(Error::CalibrationFailed(
                "no trace convention reproduces the Wick variance; the formula implementation is defective"
                    .into(),
            )),
            many => Err(Error::CalibrationFailed(format!(
                "{} conventions agree ({}); the test covariance is too symmetric to discriminate, use an asymmetric SPD matrix",
                many.len(),
                many.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

/// Evaluates every [`TraceConvention`] against the exact Wick variance.
/// Requires `m − c = 2` so that the first-order trace term is present.
pub fn calibration_report(model: &WishartModel, spec: &MinorSpec) -> Result<CalibrationReport> {
    if spec.order() - spec.overlap() != 2 {
        return Err(invalid(format!(
            "calibration needs m - c = 2, got m = {} and c = {}",
            spec.order(),
            spec.overlap()
        )));
    }
    let budget = WickBudget {
        max_dof_times_order: u64::MAX,
        ..WickBudget::default()
    };
    let mean = minor_mean(model, spec)?;
    let wick_variance = wick_second_moment_with_budget(model, spec, budget)? - mean * mean;
    let scale = wick_variance.abs().max(1.0);
    let candidates = TraceConvention::ALL
        .iter()
        .map(|&convention| {
            let variance = minor_variance_with(model, spec, convention)?.variance;
            let relative_error = (variance - wick_variance).abs() / scale;
            Ok(CandidateOutcome {
                convention,
                variance,
                relative_error,
                matches: relative_error <= CALIBRATION_TOLERANCE,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CalibrationReport {
        wick_variance,
        candidates,
    })
}

/// The unique trace convention that reproduces the Wick variance for
/// `(model, spec)`.
pub fn calibrate_trace_convention(model: &WishartModel, spec: &MinorSpec) -> Result<TraceConvention> {
    calibration_report(model, spec)?.selected()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CovarianceMatrix;

    fn asymmetric4() -> CovarianceMatrix {
        CovarianceMatrix::from_rows(&[
            [2.0, 0.3, 0.5, -0.2],
            [0.3, 1.5, 0.1, 0.4],
            [0.5, 0.1, 1.2, 0.2],
            [-0.2, 0.4, 0.2, 1.8],
        ])
        .unwrap()
    }

    #[test]
    fn identity_sigma_is_refused() {
        let model = WishartModel::new(6, CovarianceMatrix::identity(4)).unwrap();
        let spec = MinorSpec::from_indices(&[0, 1], &[2, 3], 4).unwrap();
        let err = calibrate_trace_convention(&model, &spec).unwrap_err();
        assert!(matches!(err, Error::CalibrationFailed(ref msg) if msg.contains("asymmetric")), "{err}");
    }

    #[test]
    fn asymmetric_sigma_selects_one() {
        let model = WishartModel::new(6, asymmetric4()).unwrap();
        let spec = MinorSpec::from_indices(&[0, 1], &[2, 3], 4).unwrap();
        let report = calibration_report(&model, &spec).unwrap();
        assert_eq!(report.candidates.iter().filter(|c| c.matches).count(), 1);
        assert_eq!(report.selected().unwrap(), TraceConvention::InverseBlockJI);
    }

    #[test]
    fn wrong_overlap_rejected() {
        let model = WishartModel::new(6, asymmetric4()).unwrap();
        let spec = MinorSpec::from_indices(&[0], &[2], 4).unwrap();
        assert!(matches!(calibration_report(&model, &spec), Err(Error::InvalidInput(_))));
    }
}
