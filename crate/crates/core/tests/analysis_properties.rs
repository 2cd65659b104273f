mod common;

use gossip_sa::analysis::{
    averaged_covariance, critical_covariance_with_gain, efficiency_gap, empirical_covariance, lyapunov_residual,
    optimal_gain, predict_clt, solve_lyapunov, solve_lyapunov_critical, AnalysisError, PSD_TOL,
};
use gossip_sa::engine::{Gain, StepRegime};
use gossip_sa::linalg;
use gossip_sa::problems::{CltData, LocalizationProblem, ProblemModel, QuadraticGaussianProblem};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lyapunov_matches_quadrature(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_hurwitz(d, &mut rng);
        let u = common::random_psd(d, d, &mut rng);
        let sigma = solve_lyapunov(&h, &u).unwrap();
        let oracle = common::lyapunov_quadrature(&h, &u);
        prop_assert!((&sigma - &oracle).amax() < 1e-6, "error {}", (&sigma - &oracle).amax());
        prop_assert!(lyapunov_residual(&h, &sigma, &u) < 1e-10);
        prop_assert!(linalg::asymmetry(&sigma) < 1e-10);
        prop_assert!(linalg::is_psd(&sigma, PSD_TOL));
    }

    #[test]
    fn critical_never_beats_averaged_scalar(a in 0.1f64..5.0, v in 0.01f64..10.0, excess in 1e-3f64..20.0) {
        let gamma_star = (1.0 + excess) / (2.0 * a);
        let h = DMatrix::from_element(1, 1, -a);
        let u = DMatrix::from_element(1, 1, v);
        let crit = solve_lyapunov_critical(&h, &u, gamma_star).unwrap()[(0, 0)];
        let expected = gamma_star * gamma_star * v / (2.0 * gamma_star * a - 1.0);
        prop_assert!((crit - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert!(crit - v / (a * a) >= -1e-12 * crit.max(1.0));
        let avg = averaged_covariance(&h, &u).unwrap()[(0, 0)];
        prop_assert!((avg - v / (a * a)).abs() <= 1e-12 * avg);
    }

    #[test]
    fn optimal_gain_is_no_worse_than_alternatives(
        seed in any::<u64>(), gamma_star in 0.5f64..3.0, scale in 0.2f64..3.0,
    ) {
        // scalar problem: H = −a, alternative gains Γ scaled from Γ★
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: f64 = rng.random_range(0.5..4.0);
        let v: f64 = rng.random_range(0.1..4.0);
        let h = DMatrix::from_element(1, 1, -a);
        let u = DMatrix::from_element(1, 1, v);
        let opt = optimal_gain(&h, &u, gamma_star).unwrap();
        let gain = &opt.gain * scale;
        // the Γ-scaled drift must leave the critical margin satisfied
        prop_assume!(gamma_star * scale * opt.gain[(0, 0)] * a > 0.5 + 1e-6);
        let with_gain = critical_covariance_with_gain(&h, &u, gamma_star, &gain).unwrap();
        prop_assert!(with_gain[(0, 0)] - opt.sigma_star[(0, 0)] >= -1e-12);
    }

    #[test]
    fn optimal_gain_is_no_worse_in_two_dimensions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = common::random_hurwitz(2, &mut rng);
        let u = common::random_psd(2, 2, &mut rng);
        let gamma_star = 1.5;
        let opt = optimal_gain(&h, &u, gamma_star).unwrap();
        let perturb = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.2..0.2));
        let gain = &opt.gain + &opt.gain * perturb;
        match critical_covariance_with_gain(&h, &u, gamma_star, &gain) {
            Ok(sigma) => prop_assert!(linalg::is_psd(&(sigma - &opt.sigma_star), 1e-9)),
            Err(AnalysisError::StabilityMargin { .. }) | Err(AnalysisError::NotHurwitz(_)) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn efficiency_gap_is_psd_and_factorizes(seed in any::<u64>(), n_agents in 1usize..50, excess in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = common::random_psd(2, 2, &mut rng) * 100.0 + DMatrix::identity(2, 2);
        let lmin = linalg::min_symmetric_eigenvalue(&f);
        let gamma_star = n_agents as f64 / (2.0 * lmin) * (1.0 + excess);
        let rep = efficiency_gap(&f, n_agents, gamma_star).unwrap();
        prop_assert!(rep.min_eigenvalue >= -1e-10);
        let scale = rep.sigma.amax().max(1.0);
        prop_assert!(rep.factorization_error < 1e-8 * scale);
        prop_assert!(rep.closed_form_error < 1e-8 * scale);
    }

    #[test]
    fn subcritical_predictions_are_symmetric_psd(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = CltData { jacobian: common::random_hurwitz(d, &mut rng), upsilon: common::random_psd(d, 2, &mut rng) };
        let p = predict_clt(&data, StepRegime::Subcritical, None).unwrap();
        let avg = p.sigma_avg.unwrap();
        for m in [&p.sigma, &avg] {
            prop_assert!(linalg::asymmetry(m) < 1e-10);
            prop_assert!(linalg::is_psd(m, PSD_TOL * m.amax().max(1.0)));
        }
        prop_assert!(lyapunov_residual(&data.jacobian, &p.sigma, &data.upsilon) < 1e-10 * data.upsilon.amax().max(1.0));
    }
}

#[test]
fn localization_averaged_covariance_is_fisher_inverse() {
    let sensors = vec![[0.0, 0.0], [20.0, 3.0], [5.0, 18.0], [16.0, 16.0]];
    let p = LocalizationProblem::new(sensors, [8.0, 7.0], 1e-2).unwrap();
    let data = p.clt_data().unwrap();
    let f = p.fisher_information(&[8.0, 7.0]).unwrap();
    let avg = averaged_covariance(&data.jacobian, &data.upsilon).unwrap();
    let inv = f.try_inverse().unwrap();
    assert!((avg - &inv).amax() < 1e-10 * inv.amax());
    // subcritical: (−F/N)Σ + Σ(−F/N) = −F/N² gives Σ = I/(2N)
    let sub = solve_lyapunov(&data.jacobian, &data.upsilon).unwrap();
    assert!((sub - DMatrix::identity(2, 2) / 8.0).amax() < 1e-12);
}

#[test]
fn localization_critical_closed_form() {
    let sensors = vec![[0.0, 0.0], [20.0, 3.0], [5.0, 18.0]];
    let p = LocalizationProblem::new(sensors, [8.0, 7.0], 1e-2).unwrap();
    let n = 3.0;
    let f = p.fisher_information(&[8.0, 7.0]).unwrap();
    let data = p.clt_data().unwrap();
    let gamma_star = 2.0 * n / linalg::min_symmetric_eigenvalue(&f);
    let sigma = solve_lyapunov_critical(&data.jacobian, &data.upsilon, gamma_star).unwrap();
    let eye = DMatrix::<f64>::identity(2, 2);
    let closed = &f * (gamma_star * gamma_star / (n * n)) * (&f * (2.0 * gamma_star / n) - &eye).try_inverse().unwrap();
    assert!((&sigma - &closed).amax() < 1e-10 * closed.amax());
    let gap = sigma - f.try_inverse().unwrap();
    assert!(linalg::is_psd(&gap, PSD_TOL));
    assert!(gap.trace() > 0.0);
}

#[test]
fn centralized_and_distributed_predictions_coincide() {
    let one = QuadraticGaussianProblem::scalar(1.0, 0.0, 1.0, 1).unwrap();
    let five = QuadraticGaussianProblem::scalar(1.0, 0.0, 5.0, 5).unwrap();
    let a = one.clt_data().unwrap();
    let b = five.clt_data().unwrap();
    assert_eq!(a, b);
    for regime in [StepRegime::Subcritical, StepRegime::Critical { gamma_star: 1.0 }] {
        assert_eq!(
            predict_clt(&a, regime, None).unwrap(),
            predict_clt(&b, regime, None).unwrap()
        );
    }
}

#[test]
fn gain_enters_prediction_through_drift_and_noise() {
    let data = CltData {
        jacobian: DMatrix::from_element(1, 1, -2.0),
        upsilon: DMatrix::from_element(1, 1, 1.0),
    };
    let gain = Gain::scalar(0.5).unwrap();
    let p = predict_clt(&data, StepRegime::Critical { gamma_star: 1.0 }, Some(&gain)).unwrap();
    // Γ★ = 0.5 gives Σ★ = 1/4
    assert!((p.sigma[(0, 0)] - 0.25).abs() < 1e-12);
    assert_eq!(p.sigma_star.unwrap()[(0, 0)], 0.25);
}

#[test]
fn standard_normal_sample_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let samples: Vec<Vec<f64>> = (0..100_000)
        .map(|_| vec![rng.sample::<f64, _>(StandardNormal)])
        .collect();
    let est = empirical_covariance(&samples).unwrap();
    let c = est.cov[(0, 0)];
    assert!((0.97..=1.03).contains(&c), "{c}");
    let se = est.std_errors.unwrap()[(0, 0)];
    // √(2/n) for Gaussian data
    assert!((se / (2.0f64 / 1e5).sqrt() - 1.0).abs() < 0.1);
}
