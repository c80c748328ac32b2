//! Regression quality metrics used for fitness and reporting.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and target lengths differ: {pred} vs {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("metrics are undefined on empty inputs")]
    Empty,
    #[error("R² is undefined: fewer than two samples")]
    TooFewSamples,
    #[error("R² is undefined: the target is constant")]
    ConstantTarget,
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != target.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, target)?;
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Coefficient of determination, the residual-based definition
/// `1 - SS_res / SS_tot` with `SS_tot` about the target mean.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, target)?;
    if pred.len() < 2 {
        return Err(MetricsError::TooFewSamples);
    }
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ConstantTarget);
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error.
pub fn mean_abs_error(pred: &[f64], target: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// The reported metric triple plus sample count. `r2` is NaN when the
/// coefficient is undefined (constant target or a single sample).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub r2: f64,
    pub avg_error: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<MetricReport, MetricsError> {
        Ok(MetricReport {
            rmse: rmse(pred, target)?,
            r2: r2(pred, target).unwrap_or(f64::NAN),
            avg_error: mean_abs_error(pred, target)?,
            n: pred.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_relative_eq!(
            rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            12.5f64.sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn rmse_of_mean_predictor_is_population_std() {
        let target = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let mean = target.iter().sum::<f64>() / target.len() as f64;
        let pred = vec![mean; target.len()];
        let sigma = (target.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / target.len() as f64)
            .sqrt();
        assert_relative_eq!(rmse(&pred, &target).unwrap(), sigma, max_relative = 1e-12);
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        // the mean predictor scores zero
        assert_relative_eq!(
            r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(),
            0.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mean_abs_error(&[5.0, 5.0], &[5.0, 5.0]).unwrap(), 0.0);
        assert_relative_eq!(
            mean_abs_error(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            3.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn error_cases() {
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]).unwrap_err(),
            MetricsError::LengthMismatch { pred: 1, target: 2 }
        );
        assert_eq!(rmse(&[], &[]).unwrap_err(), MetricsError::Empty);
        assert_eq!(r2(&[1.0], &[1.0]).unwrap_err(), MetricsError::TooFewSamples);
        assert_eq!(
            r2(&[1.0, 2.0], &[3.0, 3.0]).unwrap_err(),
            MetricsError::ConstantTarget
        );
    }

    #[test]
    fn report_carries_nan_r2_when_undefined() {
        let report = MetricReport::compute(&[1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert!(report.r2.is_nan());
        assert_eq!(report.n, 2);
    }
}
