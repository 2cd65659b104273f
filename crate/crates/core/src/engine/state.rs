use super::EngineError;

/// The stacked agent vector `θ ∈ R^{dN}`: agent `i` owns the contiguous block
/// `[i*d, (i+1)*d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    theta: Vec<f64>,
    n_agents: usize,
    dim: usize,
}

impl StackedState {
    pub fn new(theta: Vec<f64>, n_agents: usize, dim: usize) -> Result<Self, EngineError> {
        if n_agents == 0 || dim == 0 {
            return Err(EngineError::Argument(
                "state needs at least one agent and one coordinate".into(),
            ));
        }
        if theta.len() != n_agents * dim {
            return Err(EngineError::Dimension {
                expected: n_agents * dim,
                got: theta.len(),
            });
        }
        Ok(Self { theta, n_agents, dim })
    }

    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self {
            theta: vec![0.0; n_agents * dim],
            n_agents,
            dim,
        }
    }

    /// `𝟙 ⊗ v`: every agent holds `v`.
    pub fn consensus(value: &[f64], n_agents: usize) -> Self {
        Self {
            theta: value.repeat(n_agents),
            n_agents,
            dim: value.len(),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.theta[i * self.dim..(i + 1) * self.dim]
    }

    pub fn agents(&self) -> std::slice::ChunksExact<'_, f64> {
        self.theta.chunks_exact(self.dim)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// `⟨θ⟩ = (θ_1 + … + θ_N) / N`.
    pub fn consensus_mean(&self) -> Vec<f64> {
        consensus_mean_of(&self.theta, self.n_agents, self.dim)
    }

    /// `θ_⊥ = θ − 𝟙 ⊗ ⟨θ⟩`.
    pub fn disagreement(&self) -> StackedState {
        let mean = self.consensus_mean();
        let theta = self
            .theta
            .iter()
            .enumerate()
            .map(|(k, x)| x - mean[k % self.dim])
            .collect();
        Self {
            theta,
            n_agents: self.n_agents,
            dim: self.dim,
        }
    }

    /// `|θ_⊥|` without allocating the disagreement vector.
    pub fn disagreement_norm(&self) -> f64 {
        disagreement_norm_of(&self.theta, self.n_agents, self.dim)
    }
}

pub fn consensus_mean(state: &StackedState) -> Vec<f64> {
    state.consensus_mean()
}

pub fn disagreement(state: &StackedState) -> StackedState {
    state.disagreement()
}

pub(crate) fn consensus_mean_of(x: &[f64], n_agents: usize, dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for block in x.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(block) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_agents as f64;
    }
    mean
}

pub(crate) fn disagreement_norm_of(x: &[f64], n_agents: usize, dim: usize) -> f64 {
    let mean = consensus_mean_of(x, n_agents, dim);
    x.chunks_exact(dim)
        .flat_map(|block| block.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_is_checked() {
        assert!(matches!(
            StackedState::new(vec![1.0; 5], 2, 2),
            Err(EngineError::Dimension { expected: 4, got: 5 })
        ));
    }

    #[test]
    fn consensus_mean_examples() {
        let x = StackedState::new(vec![1.0, 2.0, 3.0], 3, 1).unwrap();
        assert_eq!(x.consensus_mean(), vec![2.0]);
        let y = StackedState::new(vec![1.0, 0.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(y.consensus_mean(), vec![2.0, 2.0]);
        let c = StackedState::consensus(&[0.3, -7.0], 4);
        assert_eq!(c.consensus_mean(), vec![0.3, -7.0]);
    }

    #[test]
    fn disagreement_examples() {
        let x = StackedState::new(vec![1.0, 2.0, 3.0], 3, 1).unwrap();
        assert_eq!(x.disagreement().as_slice(), &[-1.0, 0.0, 1.0]);
        let c = StackedState::consensus(&[5.0, 1.0], 3);
        assert!(c.disagreement().as_slice().iter().all(|&v| v == 0.0));
        let y = StackedState::new(vec![0.0, 4.0], 2, 1).unwrap();
        let d = y.disagreement();
        assert_eq!(d.as_slice(), &[-2.0, 2.0]);
        assert!((d.norm() - 8f64.sqrt()).abs() < 1e-15);
        assert!((y.disagreement_norm() - 8f64.sqrt()).abs() < 1e-15);
    }
}
