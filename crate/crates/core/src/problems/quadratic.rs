use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{check_len, CltData, ProblemError, ProblemModel};
use crate::linalg;

/// Linear-Gaussian test problem:
/// `Y_{n,i} = −A(θ_{n−1,i} − θ★) + √v ξ_{n,i}` with `ξ` i.i.d. standard normal.
///
/// The mean field is `h(θ) = −A(θ − θ★)`, `V(θ) = |θ − θ★|²`, and the noise
/// of the averaged increment has covariance `Υ = v I / N`. `V` is a
/// Lyapunov function whenever `A + Aᵀ` is positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticGaussianProblem {
    a: DMatrix<f64>,
    theta_star: Vec<f64>,
    noise_var: f64,
    noise_std: f64,
    n_agents: usize,
}

impl QuadraticGaussianProblem {
    /// Requires `−A` Hurwitz.
    pub fn new(a: DMatrix<f64>, theta_star: Vec<f64>, noise_var: f64, n_agents: usize) -> Result<Self, ProblemError> {
        if !a.is_square() || a.nrows() != theta_star.len() || theta_star.is_empty() {
            return Err(ProblemError::Config(format!(
                "A is {}x{} but theta_star has {} coordinates",
                a.nrows(),
                a.ncols(),
                theta_star.len()
            )));
        }
        if !linalg::is_hurwitz(&(-&a)) {
            return Err(ProblemError::Config("-A must be Hurwitz".into()));
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(ProblemError::Config(format!(
                "noise variance must be non-negative, got {noise_var}"
            )));
        }
        if n_agents == 0 {
            return Err(ProblemError::Config("at least one agent required".into()));
        }
        Ok(Self {
            a,
            theta_star,
            noise_var,
            noise_std: noise_var.sqrt(),
            n_agents,
        })
    }

    /// Scalar problem `Y = −a(θ − θ★) + √v ξ`.
    pub fn scalar(a: f64, theta_star: f64, noise_var: f64, n_agents: usize) -> Result<Self, ProblemError> {
        Self::new(DMatrix::from_element(1, 1, a), vec![theta_star], noise_var, n_agents)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Per-agent noise variance `v`.
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn drift(&self, theta: &[f64]) -> DVector<f64> {
        let diff = DVector::from_iterator(theta.len(), theta.iter().zip(&self.theta_star).map(|(t, s)| t - s));
        -(&self.a * diff)
    }
}

impl ProblemModel for QuadraticGaussianProblem {
    fn dim(&self) -> usize {
        self.theta_star.len()
    }

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn sample_observations(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError> {
        let d = self.dim();
        check_len(d * self.n_agents, theta.len())?;
        check_len(d * self.n_agents, out.len())?;
        for (block, y) in theta.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let drift = self.drift(block);
            for (yk, hk) in y.iter_mut().zip(drift.iter()) {
                let xi: f64 = StandardNormal.sample(rng);
                *yk = hk + self.noise_std * xi;
            }
        }
        Ok(())
    }

    fn mean_field(&self, theta: &[f64]) -> Result<Vec<f64>, ProblemError> {
        check_len(self.dim(), theta.len())?;
        Ok(self.drift(theta).iter().copied().collect())
    }

    fn lyapunov(&self, theta: &[f64]) -> Result<f64, ProblemError> {
        check_len(self.dim(), theta.len())?;
        Ok(theta.iter().zip(&self.theta_star).map(|(t, s)| (t - s) * (t - s)).sum())
    }

    fn equilibrium(&self) -> Option<&[f64]> {
        Some(&self.theta_star)
    }

    fn clt_data(&self) -> Result<CltData, ProblemError> {
        let d = self.dim();
        Ok(CltData {
            jacobian: -self.a.clone(),
            upsilon: DMatrix::identity(d, d) * (self.noise_var / self.n_agents as f64),
        })
    }
}
