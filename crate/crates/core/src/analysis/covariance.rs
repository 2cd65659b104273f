use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::AnalysisError;
use crate::linalg::{serialize_matrix, serialize_opt_matrix, serialize_vector};

/// Sample mean and Bessel-corrected covariance of a set of `d`-vectors, with
/// jackknife standard errors for every covariance entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    #[serde(serialize_with = "serialize_vector")]
    pub mean: DVector<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub cov: DMatrix<f64>,
    pub n_samples: usize,
    /// Jackknife standard errors; needs at least three samples.
    #[serde(serialize_with = "serialize_opt_matrix")]
    pub std_errors: Option<DMatrix<f64>>,
}

pub fn empirical_covariance(samples: &[Vec<f64>]) -> Result<CovarianceEstimate, AnalysisError> {
    let n = samples.len();
    if n < 2 {
        return Err(AnalysisError::Argument(format!("need at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(AnalysisError::Argument(
            "samples must be non-empty vectors of equal length".into(),
        ));
    }
    let nf = n as f64;
    let mut mean = DVector::zeros(d);
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean /= nf;

    let centered: Vec<DVector<f64>> = samples
        .iter()
        .map(|s| DVector::from_iterator(d, s.iter().zip(mean.iter()).map(|(v, m)| v - m)))
        .collect();
    let scatter = centered
        .iter()
        .fold(DMatrix::zeros(d, d), |acc, c| acc + c * c.transpose());
    let cov = &scatter / (nf - 1.0);

    // Leave-one-out covariance of centered data: (S − c_k c_kᵀ · n/(n−1)) / (n−2).
    let std_errors = (n >= 3).then(|| {
        let loo: Vec<DMatrix<f64>> = centered
            .iter()
            .map(|c| (&scatter - c * c.transpose() * (nf / (nf - 1.0))) / (nf - 2.0))
            .collect();
        let loo_mean = loo.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m) / nf;
        let ss = loo.iter().fold(DMatrix::zeros(d, d), |acc, m| {
            let diff = m - &loo_mean;
            acc + diff.component_mul(&diff)
        });
        (ss * ((nf - 1.0) / nf)).map(f64::sqrt)
    });

    Ok(CovarianceEstimate {
        mean,
        cov,
        n_samples: n,
        std_errors,
    })
}
