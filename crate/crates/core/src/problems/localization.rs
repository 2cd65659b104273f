use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::{check_len, CltData, ProblemError, ProblemModel, SINGULARITY_EPS};
use crate::gossip::connectivity_radius;
use crate::seeding::setup_stream;

/// Received signal strength constant: `g(θ) = SIGNAL_GAIN / |θ − r|²`.
pub const SIGNAL_GAIN: f64 = 1000.0;
pub const DEFAULT_OBS_VARIANCE: f64 = 1e-2;

/// Placement of the sensors in the plane.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorLayout {
    Explicit(Vec<[f64; 2]>),
    /// `count` points uniform on `[lo, hi]²`, drawn from [`setup_stream`]`(seed)`.
    Uniform {
        count: usize,
        lo: f64,
        hi: f64,
        seed: u64,
    },
}

impl SensorLayout {
    pub fn positions(&self) -> Vec<[f64; 2]> {
        match self {
            SensorLayout::Explicit(p) => p.clone(),
            SensorLayout::Uniform { count, lo, hi, seed } => {
                let mut rng = setup_stream(*seed);
                (0..*count)
                    .map(|_| [rng.random_range(*lo..*hi), rng.random_range(*lo..*hi)])
                    .collect()
            }
        }
    }
}

/// Source localization from received signal strength. Agent `i` is a sensor
/// at `r_i` observing `X_i ~ N(g_i(θ★), σ²)` with `g_i(θ) = 1000 / |θ − r_i|²`
/// and climbs its local log-likelihood: `Y_i = σ⁻² (X_i − g_i(θ_i)) ∇g_i(θ_i)`.
#[derive(Debug, Clone)]
pub struct LocalizationProblem {
    sensors: Vec<[f64; 2]>,
    source: [f64; 2],
    obs_variance: f64,
}

impl LocalizationProblem {
    pub fn new(sensors: Vec<[f64; 2]>, source: [f64; 2], obs_variance: f64) -> Result<Self, ProblemError> {
        if sensors.is_empty() {
            return Err(ProblemError::Config("at least one sensor required".into()));
        }
        if !(obs_variance > 0.0 && obs_variance.is_finite()) {
            return Err(ProblemError::Config(format!(
                "observation variance must be positive, got {obs_variance}"
            )));
        }
        for (i, a) in sensors.iter().enumerate() {
            for (j, b) in sensors.iter().enumerate().skip(i + 1) {
                if dist(*a, *b) < SINGULARITY_EPS {
                    return Err(ProblemError::Config(format!("sensors {i} and {j} coincide")));
                }
            }
            let d = dist(*a, source);
            if d < SINGULARITY_EPS {
                return Err(ProblemError::Singularity {
                    agent: i,
                    sensor: i,
                    distance: d,
                });
            }
        }
        Ok(Self {
            sensors,
            source,
            obs_variance,
        })
    }

    pub fn sensors(&self) -> &[[f64; 2]] {
        &self.sensors
    }

    pub fn source(&self) -> [f64; 2] {
        self.source
    }

    pub fn obs_variance(&self) -> f64 {
        self.obs_variance
    }

    /// Smallest disk-graph radius connecting all sensors.
    pub fn connectivity_radius(&self) -> f64 {
        connectivity_radius(&self.sensors)
    }

    /// `g_i(θ)` and `∇g_i(θ)`.
    pub fn signal(&self, sensor: usize, theta: [f64; 2]) -> Result<(f64, [f64; 2]), ProblemError> {
        self.signal_for(sensor, sensor, theta)
    }

    fn signal_for(&self, agent: usize, sensor: usize, theta: [f64; 2]) -> Result<(f64, [f64; 2]), ProblemError> {
        let r = self.sensors[sensor];
        let dx = theta[0] - r[0];
        let dy = theta[1] - r[1];
        let sq = dx * dx + dy * dy;
        if sq.sqrt() < SINGULARITY_EPS {
            return Err(ProblemError::Singularity {
                agent,
                sensor,
                distance: sq.sqrt(),
            });
        }
        let g = SIGNAL_GAIN / sq;
        let scale = -2.0 * SIGNAL_GAIN / (sq * sq);
        Ok((g, [scale * dx, scale * dy]))
    }

    /// `F(θ) = σ⁻² Σ_i ∇g_i(θ) ∇g_i(θ)ᵀ`.
    pub fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>, ProblemError> {
        check_len(2, theta.len())?;
        let t = [theta[0], theta[1]];
        let mut f = DMatrix::zeros(2, 2);
        for i in 0..self.sensors.len() {
            let (_, g) = self.signal_for(0, i, t)?;
            f[(0, 0)] += g[0] * g[0];
            f[(0, 1)] += g[0] * g[1];
            f[(1, 1)] += g[1] * g[1];
        }
        f[(1, 0)] = f[(0, 1)];
        Ok(f / self.obs_variance)
    }

    /// Score of one observation: `σ⁻² (x − g_i(θ)) ∇g_i(θ)`.
    pub fn score(&self, agent: usize, theta: [f64; 2], x: f64) -> Result<[f64; 2], ProblemError> {
        let (g, grad) = self.signal(agent, theta)?;
        let w = (x - g) / self.obs_variance;
        Ok([w * grad[0], w * grad[1]])
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl ProblemModel for LocalizationProblem {
    fn dim(&self) -> usize {
        2
    }

    fn n_agents(&self) -> usize {
        self.sensors.len()
    }

    fn sample_observations(&self, theta: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError> {
        let n = self.sensors.len();
        check_len(2 * n, theta.len())?;
        check_len(2 * n, out.len())?;
        let sd = self.obs_variance.sqrt();
        for i in 0..n {
            let (g_star, _) = self.signal(i, self.source)?;
            let noise: f64 = StandardNormal.sample(rng);
            let x = g_star + sd * noise;
            let y = self.score(i, [theta[2 * i], theta[2 * i + 1]], x)?;
            out[2 * i] = y[0];
            out[2 * i + 1] = y[1];
        }
        Ok(())
    }

    /// `h(θ) = N⁻¹ σ⁻² Σ_i (g_i(θ★) − g_i(θ)) ∇g_i(θ)`.
    fn mean_field(&self, theta: &[f64]) -> Result<Vec<f64>, ProblemError> {
        check_len(2, theta.len())?;
        let t = [theta[0], theta[1]];
        let mut h = [0.0; 2];
        for i in 0..self.sensors.len() {
            let (g_star, _) = self.signal(i, self.source)?;
            let (g, grad) = self.signal_for(0, i, t)?;
            h[0] += (g_star - g) * grad[0];
            h[1] += (g_star - g) * grad[1];
        }
        let scale = 1.0 / (self.obs_variance * self.sensors.len() as f64);
        Ok(vec![h[0] * scale, h[1] * scale])
    }

    /// Kullback-Leibler divergence to the true model up to a constant:
    /// `Σ_i (g_i(θ★) − g_i(θ))² / (2σ²)`; its gradient is `−N h(θ)`.
    fn lyapunov(&self, theta: &[f64]) -> Result<f64, ProblemError> {
        check_len(2, theta.len())?;
        let t = [theta[0], theta[1]];
        let mut v = 0.0;
        for i in 0..self.sensors.len() {
            let (g_star, _) = self.signal(i, self.source)?;
            let (g, _) = self.signal_for(0, i, t)?;
            v += (g_star - g) * (g_star - g);
        }
        Ok(v / (2.0 * self.obs_variance))
    }

    fn equilibrium(&self) -> Option<&[f64]> {
        Some(&self.source)
    }

    /// `(−F(θ★)/N, F(θ★)/N²)`.
    fn clt_data(&self) -> Result<CltData, ProblemError> {
        let f = self.fisher_information(&self.source)?;
        let n = self.sensors.len() as f64;
        Ok(CltData {
            jacobian: -&f / n,
            upsilon: f / (n * n),
        })
    }

    fn agent_positions(&self) -> Option<&[[f64; 2]]> {
        Some(&self.sensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::problems::{finite_difference_gradient, finite_difference_jacobian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single() -> LocalizationProblem {
        LocalizationProblem::new(vec![[0.0, 0.0]], [10.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn score_worked_example() {
        // g = 1000/100 = 10, ∇g = −2000·(10,0)/10⁴ = (−2, 0)
        let p = single();
        let (g, grad) = p.signal(0, [10.0, 0.0]).unwrap();
        assert!((g - 10.0).abs() < 1e-12);
        assert!((grad[0] + 2.0).abs() < 1e-12 && grad[1] == 0.0);
        let y = p.score(0, [10.0, 0.0], 11.0).unwrap();
        assert!((y[0] + 2.0).abs() < 1e-12 && y[1] == 0.0);
        assert_eq!(p.score(0, [10.0, 0.0], 10.0).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn signal_gradient_matches_finite_differences() {
        let p = single();
        let at = [7.0, -3.0];
        let fd = finite_difference_gradient(|t| Ok(p.signal(0, [t[0], t[1]])?.0), &at, 1e-6).unwrap();
        let (_, grad) = p.signal(0, at).unwrap();
        assert!((fd[0] - grad[0]).abs() < 1e-7 && (fd[1] - grad[1]).abs() < 1e-7);
    }

    #[test]
    fn singularity_is_reported() {
        let p = single();
        let mut out = [0.0; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = p.sample_observations(&[0.0, 0.0], &mut rng, &mut out).unwrap_err();
        assert!(matches!(
            err,
            ProblemError::Singularity {
                agent: 0,
                sensor: 0,
                ..
            }
        ));
        assert!(LocalizationProblem::new(vec![[1.0, 1.0], [1.0, 1.0]], [5.0, 5.0], 1.0).is_err());
    }

    #[test]
    fn fisher_single_sensor() {
        let p = LocalizationProblem::new(vec![[0.0, 0.0]], [10.0, 0.0], 1e-2).unwrap();
        let f = p.fisher_information(&[10.0, 0.0]).unwrap();
        assert!((f.clone() - DMatrix::from_row_slice(2, 2, &[400.0, 0.0, 0.0, 0.0])).amax() < 1e-9);
        let ev = linalg::symmetric_eigenvalues(&f);
        assert!(ev[0].abs() < 1e-9 && ev[1] > 0.0);
        let data = p.clt_data().unwrap();
        assert_eq!(data.jacobian, -f.clone());
        assert_eq!(data.upsilon, f);
    }

    #[test]
    fn fisher_orthogonal_sensors_is_diagonal() {
        let p = LocalizationProblem::new(vec![[-5.0, 0.0], [0.0, 5.0]], [3.0, 3.0], 1e-2).unwrap();
        let f = p.fisher_information(&[0.0, 0.0]).unwrap();
        assert!(f[(0, 1)].abs() < 1e-12);
        assert!(linalg::min_symmetric_eigenvalue(&f) > 0.0);
    }

    #[test]
    fn mean_field_vanishes_at_source_and_matches_fisher() {
        let sensors = SensorLayout::Uniform {
            count: 6,
            lo: 0.0,
            hi: 50.0,
            seed: 4,
        }
        .positions();
        let p = LocalizationProblem::new(sensors, [22.0, 31.0], 1e-2).unwrap();
        let h = p.mean_field(&[22.0, 31.0]).unwrap();
        assert!(h[0].abs() < 1e-12 && h[1].abs() < 1e-12);
        let jac = finite_difference_jacobian(|t| p.mean_field(t), &[22.0, 31.0], 1e-5).unwrap();
        let expected = p.clt_data().unwrap().jacobian;
        assert!((jac - &expected).amax() < 1e-5 * expected.amax().max(1.0));
    }

    #[test]
    fn lyapunov_descends_along_the_mean_field() {
        let sensors = SensorLayout::Uniform {
            count: 5,
            lo: 0.0,
            hi: 50.0,
            seed: 11,
        }
        .positions();
        let p = LocalizationProblem::new(sensors, [25.0, 25.0], 1e-2).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let t = [21.0 + i as f64, 21.0 + j as f64];
                let grad = finite_difference_gradient(|x| p.lyapunov(x), &t, 1e-6).unwrap();
                let h = p.mean_field(&t).unwrap();
                let dot = grad[0] * h[0] + grad[1] * h[1];
                let scale = (grad[0].hypot(grad[1]) * h[0].hypot(h[1])).max(1e-300);
                assert!(dot <= 1e-6 * scale, "{dot} at {t:?}");
            }
        }
    }

    #[test]
    fn layout_is_seeded() {
        let a = SensorLayout::Uniform {
            count: 40,
            lo: 0.0,
            hi: 50.0,
            seed: 1,
        }
        .positions();
        let b = SensorLayout::Uniform {
            count: 40,
            lo: 0.0,
            hi: 50.0,
            seed: 1,
        }
        .positions();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.iter().all(|c| (0.0..50.0).contains(c))));
    }
}
