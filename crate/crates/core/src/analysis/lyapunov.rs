//! Continuous Lyapunov equations and the closed-form asymptotic covariances
//! built on them.
//!
//! Two normalizations appear for the critical step `γ_n = γ★ / n`: the
//! covariance of `√n (θ_n − θ★)` (returned by [`solve_lyapunov_critical`])
//! and that of `γ_n^{-1/2} (θ_n − θ★)`, which is smaller by a factor `γ★`.

use nalgebra::DMatrix;

use super::AnalysisError;
use crate::linalg;

/// Symmetry tolerance on `Υ` (absolute, scaled by `max(1, |Υ|_max)`).
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue floor for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;
/// Condition number above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

fn check_square(name: &str, m: &DMatrix<f64>, d: usize) -> Result<(), AnalysisError> {
    if m.nrows() != d || m.ncols() != d {
        return Err(AnalysisError::Argument(format!(
            "{name} must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_upsilon(upsilon: &DMatrix<f64>, d: usize) -> Result<(), AnalysisError> {
    check_square("noise covariance", upsilon, d)?;
    let scale = upsilon.amax().max(1.0);
    if linalg::asymmetry(upsilon) > SYMMETRY_TOL * scale {
        return Err(AnalysisError::Argument("noise covariance must be symmetric".into()));
    }
    if !linalg::is_psd(upsilon, PSD_TOL * scale) {
        return Err(AnalysisError::Argument(
            "noise covariance must be positive semidefinite".into(),
        ));
    }
    Ok(())
}

fn invert(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    if !(linalg::condition_number(m) < SINGULAR_CONDITION) {
        return Err(AnalysisError::Singular(name.to_string()));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| AnalysisError::Singular(name.to_string()))
}

/// Max-norm residual `|HΣ + ΣHᵀ + Υ|_max`.
pub fn lyapunov_residual(h: &DMatrix<f64>, sigma: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> f64 {
    (h * sigma + sigma * h.transpose() + upsilon).amax()
}

/// Solves `HΣ + ΣHᵀ = −Υ` for Hurwitz `H` through the vectorized system
/// `(I ⊗ H + H ⊗ I) vec(Σ) = −vec(Υ)`, then symmetrizes.
pub fn solve_lyapunov(h: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let d = h.nrows();
    check_square("drift matrix", h, d)?;
    if d == 0 {
        return Err(AnalysisError::Argument("empty drift matrix".into()));
    }
    check_upsilon(upsilon, d)?;
    if !linalg::is_hurwitz(h) {
        return Err(AnalysisError::NotHurwitz(linalg::spectral_abscissa(h)));
    }
    let eye = DMatrix::<f64>::identity(d, d);
    let system = eye.kronecker(h) + h.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(d * d, 1, upsilon.as_slice());
    let vec_sigma = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AnalysisError::Singular("Lyapunov operator".into()))?;
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(
        d,
        d,
        vec_sigma.as_slice(),
    )))
}

/// Covariance of `√n (θ_n − θ★)` for steps `γ_n = γ★ / n`: the solution of
/// `(2γ★H + I)Σ + Σ(2γ★H + I)ᵀ = −2γ★² Υ`.
///
/// Requires `γ★ > 1 / (2L)` where `−L` is the spectral abscissa of `H`.
pub fn solve_lyapunov_critical(
    h: &DMatrix<f64>,
    upsilon: &DMatrix<f64>,
    gamma_star: f64,
) -> Result<DMatrix<f64>, AnalysisError> {
    let d = h.nrows();
    check_square("drift matrix", h, d)?;
    if !(gamma_star > 0.0 && gamma_star.is_finite()) {
        return Err(AnalysisError::Argument(format!(
            "gamma_star must be positive, got {gamma_star}"
        )));
    }
    let abscissa = linalg::spectral_abscissa(h);
    if abscissa >= 0.0 {
        return Err(AnalysisError::NotHurwitz(abscissa));
    }
    let margin = -abscissa;
    if gamma_star <= 1.0 / (2.0 * margin) {
        return Err(AnalysisError::StabilityMargin {
            gamma_star,
            required: 1.0 / (2.0 * margin),
        });
    }
    let shifted = h * (2.0 * gamma_star) + DMatrix::identity(d, d);
    solve_lyapunov(&shifted, &(upsilon * (2.0 * gamma_star * gamma_star)))
}

/// Covariance of `√n (θ̄_n − θ★)` for the averaged iterates: `H⁻¹ Υ H⁻ᵀ`.
pub fn averaged_covariance(h: &DMatrix<f64>, upsilon: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    let d = h.nrows();
    check_square("drift matrix", h, d)?;
    check_square("noise covariance", upsilon, d)?;
    let inv = invert("drift matrix", h)?;
    Ok(linalg::symmetrize(&(&inv * upsilon * inv.transpose())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalGain {
    /// `Γ★ = −γ★⁻¹ H⁻¹`.
    pub gain: DMatrix<f64>,
    /// `Σ★ = γ★⁻¹ H⁻¹ Υ H⁻ᵀ`, covariance of `γ_n^{-1/2}(θ_n − θ★)` under `Γ★`.
    pub sigma_star: DMatrix<f64>,
}

pub fn optimal_gain(h: &DMatrix<f64>, upsilon: &DMatrix<f64>, gamma_star: f64) -> Result<OptimalGain, AnalysisError> {
    if !(gamma_star > 0.0 && gamma_star.is_finite()) {
        return Err(AnalysisError::Argument(format!(
            "gamma_star must be positive, got {gamma_star}"
        )));
    }
    let d = h.nrows();
    check_square("drift matrix", h, d)?;
    check_square("noise covariance", upsilon, d)?;
    let inv = invert("drift matrix", h)?;
    let gain = -&inv / gamma_star;
    let sigma_star = linalg::symmetrize(&(&inv * upsilon * inv.transpose())) / gamma_star;
    Ok(OptimalGain { gain, sigma_star })
}

/// Covariance of `γ_n^{-1/2}(θ_n − θ★)` in the critical regime when every
/// increment is premultiplied by `gain`: drift `ΓH`, noise `ΓΥΓᵀ`.
pub fn critical_covariance_with_gain(
    h: &DMatrix<f64>,
    upsilon: &DMatrix<f64>,
    gamma_star: f64,
    gain: &DMatrix<f64>,
) -> Result<DMatrix<f64>, AnalysisError> {
    let gh = gain * h;
    let gu = gain * upsilon * gain.transpose();
    Ok(solve_lyapunov_critical(&gh, &linalg::symmetrize(&gu), gamma_star)? / gamma_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_solution() {
        let sigma = solve_lyapunov(&s(-2.0), &s(4.0)).unwrap();
        assert!((sigma[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_identity() {
        let h = DMatrix::identity(3, 3) * -0.5;
        let sigma = solve_lyapunov(&h, &DMatrix::identity(3, 3)).unwrap();
        assert!((sigma - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn non_hurwitz_rejected() {
        assert!(matches!(
            solve_lyapunov(&s(0.5), &s(1.0)),
            Err(AnalysisError::NotHurwitz(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(solve_lyapunov(&(-DMatrix::identity(2, 2)), &asym).is_err());
    }

    #[test]
    fn residual_of_nonnormal_system() {
        let h = DMatrix::from_row_slice(3, 3, &[-1.0, 4.0, 0.0, 0.0, -0.5, 2.0, 0.05, 0.0, -2.0]);
        let u = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 0.5]);
        let sigma = solve_lyapunov(&h, &u).unwrap();
        assert!(lyapunov_residual(&h, &sigma, &u) < 1e-10);
        assert!(linalg::is_psd(&sigma, PSD_TOL));
    }

    #[test]
    fn critical_scalar() {
        // γ★² v / (2γ★a − 1) with a = v = γ★ = 1
        let sigma = solve_lyapunov_critical(&s(-1.0), &s(1.0), 1.0).unwrap();
        assert!((sigma[(0, 0)] - 1.0).abs() < 1e-14);
        let sigma = solve_lyapunov_critical(&s(-2.0), &s(3.0), 0.75).unwrap();
        assert!((sigma[(0, 0)] - 0.75 * 0.75 * 3.0 / (2.0 * 0.75 * 2.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn critical_margin() {
        assert!(matches!(
            solve_lyapunov_critical(&s(-1.0), &s(1.0), 0.5),
            Err(AnalysisError::StabilityMargin { .. })
        ));
    }

    #[test]
    fn averaged_examples() {
        assert!((averaged_covariance(&s(-2.0), &s(3.0)).unwrap()[(0, 0)] - 0.75).abs() < 1e-15);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let out = averaged_covariance(&(-DMatrix::identity(2, 2)), &q).unwrap();
        assert!((out - q).amax() < 1e-15);
        assert!(matches!(
            averaged_covariance(&s(0.0), &s(1.0)),
            Err(AnalysisError::Singular(_))
        ));
    }

    #[test]
    fn optimal_gain_scalar() {
        let g = optimal_gain(&s(-2.0), &s(1.0), 1.0).unwrap();
        assert_eq!(g.gain[(0, 0)], 0.5);
        let avg = averaged_covariance(&s(-2.0), &s(1.0)).unwrap();
        assert!((g.sigma_star - avg).amax() < 1e-15);
    }

    #[test]
    fn optimal_gain_attains_sigma_star() {
        let h = DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.1, -1.0]);
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let g = optimal_gain(&h, &u, 0.8).unwrap();
        let with_gain = critical_covariance_with_gain(&h, &u, 0.8, &g.gain).unwrap();
        assert!((with_gain - &g.sigma_star).amax() < 1e-12);
    }
}
