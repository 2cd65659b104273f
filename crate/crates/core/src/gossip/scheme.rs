use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{GossipError, GossipMatrix, NetworkGraph};

/// How a single gossip round is generated. Wrappers (`Dropout`,
/// `VanishingRate`) nest around a base scheme and share the scheme's graph.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeKind {
    /// No communication: `W = I`.
    Identity,
    /// One edge wakes up and its endpoints average.
    Pairwise,
    /// One node wakes up and its neighbours move a fraction `beta` towards it.
    Broadcast { beta: f64 },
    /// With probability `p` run the inner scheme, otherwise `W = I`.
    Dropout { p: f64, inner: Box<SchemeKind> },
    /// Dropout with step-dependent probability `p_n = min(1, p0 / n^eta)`.
    VanishingRate { p0: f64, eta: f64, inner: Box<SchemeKind> },
}

impl SchemeKind {
    fn validate(&self) -> Result<(), GossipError> {
        match self {
            SchemeKind::Identity | SchemeKind::Pairwise => Ok(()),
            SchemeKind::Broadcast { beta } => {
                if *beta > 0.0 && *beta < 1.0 {
                    Ok(())
                } else {
                    Err(GossipError::Config(format!(
                        "broadcast beta must lie in (0, 1), got {beta}"
                    )))
                }
            }
            SchemeKind::Dropout { p, inner } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(GossipError::Config(format!(
                        "dropout probability must lie in (0, 1], got {p}"
                    )));
                }
                inner.validate()
            }
            SchemeKind::VanishingRate { p0, eta, inner } => {
                if !(*p0 > 0.0 && p0.is_finite()) {
                    return Err(GossipError::Config(format!(
                        "vanishing-rate p0 must be positive, got {p0}"
                    )));
                }
                if !(*eta >= 0.0 && eta.is_finite()) {
                    return Err(GossipError::Config(format!(
                        "vanishing-rate eta must be non-negative, got {eta}"
                    )));
                }
                inner.validate()
            }
        }
    }

    /// The innermost non-wrapper kind.
    pub fn base(&self) -> &SchemeKind {
        match self {
            SchemeKind::Dropout { inner, .. } | SchemeKind::VanishingRate { inner, .. } => inner.base(),
            other => other,
        }
    }
}

/// A distribution over gossip matrices on a fixed graph.
///
/// Pairwise activation is uniform over edges and broadcast activation is
/// uniform over nodes unless explicit activation weights are supplied.
#[derive(Debug, Clone)]
pub struct GossipScheme {
    kind: SchemeKind,
    graph: NetworkGraph,
    activation: Option<Vec<f64>>,
    sampler: Option<WeightedIndex<f64>>,
}

impl GossipScheme {
    pub fn new(kind: SchemeKind, graph: NetworkGraph) -> Result<Self, GossipError> {
        kind.validate()?;
        if matches!(kind.base(), SchemeKind::Pairwise) && graph.edges().is_empty() {
            return Err(GossipError::Config(
                "pairwise gossip needs a graph with at least one edge".into(),
            ));
        }
        Ok(Self {
            kind,
            graph,
            activation: None,
            sampler: None,
        })
    }

    pub fn identity(node_count: usize) -> Result<Self, GossipError> {
        Self::new(SchemeKind::Identity, NetworkGraph::new(node_count, [])?)
    }

    pub fn pairwise(graph: NetworkGraph) -> Result<Self, GossipError> {
        Self::new(SchemeKind::Pairwise, graph)
    }

    pub fn broadcast(graph: NetworkGraph, beta: f64) -> Result<Self, GossipError> {
        Self::new(SchemeKind::Broadcast { beta }, graph)
    }

    /// Wraps the current scheme in a Bernoulli(`p`) dropout.
    pub fn with_dropout(self, p: f64) -> Result<Self, GossipError> {
        let kind = SchemeKind::Dropout {
            p,
            inner: Box::new(self.kind.clone()),
        };
        kind.validate()?;
        Ok(Self { kind, ..self })
    }

    /// Wraps the current scheme so that gossip happens with probability
    /// `min(1, p0 / n^eta)` at step `n`.
    pub fn with_vanishing_rate(self, p0: f64, eta: f64) -> Result<Self, GossipError> {
        let kind = SchemeKind::VanishingRate {
            p0,
            eta,
            inner: Box::new(self.kind.clone()),
        };
        kind.validate()?;
        Ok(Self { kind, ..self })
    }

    /// Non-uniform activation probabilities: one weight per edge for pairwise
    /// gossip, one per node for broadcast. Weights are normalized to sum to 1.
    pub fn with_activation_weights(mut self, weights: Vec<f64>) -> Result<Self, GossipError> {
        let expected = match self.kind.base() {
            SchemeKind::Pairwise => self.graph.edges().len(),
            SchemeKind::Broadcast { .. } => self.graph.node_count(),
            _ => {
                return Err(GossipError::Config(
                    "activation weights only apply to pairwise or broadcast".into(),
                ))
            }
        };
        if weights.len() != expected {
            return Err(GossipError::Config(format!(
                "expected {expected} activation weights, got {}",
                weights.len()
            )));
        }
        let sampler = WeightedIndex::new(&weights)
            .map_err(|e| GossipError::Config(format!("invalid activation weights: {e}")))?;
        let total: f64 = weights.iter().sum();
        self.activation = Some(weights.iter().map(|w| w / total).collect());
        self.sampler = Some(sampler);
        Ok(self)
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Draws one gossip matrix for step `step` (1-based).
    pub fn sample<R: Rng + ?Sized>(&self, step: u64, rng: &mut R) -> Result<GossipMatrix, GossipError> {
        let mut out = GossipMatrix::identity(self.node_count());
        self.sample_into(step, rng, &mut out)?;
        Ok(out)
    }

    /// Same as [`sample`](Self::sample) but overwrites a caller-owned buffer.
    ///
    /// Random draws per round, in order: for each wrapper from the outside
    /// in, one uniform for the Bernoulli gate (stopping at the first closed
    /// gate), then one activation index for the base scheme.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        step: u64,
        rng: &mut R,
        out: &mut GossipMatrix,
    ) -> Result<(), GossipError> {
        check_step(step)?;
        if out.size() != self.node_count() {
            return Err(GossipError::Dimension {
                expected: self.node_count(),
                got: out.size(),
            });
        }
        self.sample_kind(&self.kind, step, rng, out);
        Ok(())
    }

    fn sample_kind<R: Rng + ?Sized>(&self, kind: &SchemeKind, step: u64, rng: &mut R, out: &mut GossipMatrix) {
        match kind {
            SchemeKind::Identity => out.reset_identity(),
            SchemeKind::Pairwise => {
                let (i, j) = self.graph.edges()[self.draw_activation(self.graph.edges().len(), rng)];
                out.set_pairwise(i, j);
            }
            SchemeKind::Broadcast { beta } => {
                let node = self.draw_activation(self.node_count(), rng);
                out.set_broadcast(node, self.graph.neighbors(node), *beta);
            }
            SchemeKind::Dropout { p, inner } => self.gate(*p, inner, step, rng, out),
            SchemeKind::VanishingRate { p0, eta, inner } => {
                self.gate(vanishing_probability(*p0, *eta, step), inner, step, rng, out)
            }
        }
    }

    fn gate<R: Rng + ?Sized>(&self, p: f64, inner: &SchemeKind, step: u64, rng: &mut R, out: &mut GossipMatrix) {
        if rng.random::<f64>() < p {
            self.sample_kind(inner, step, rng, out);
        } else {
            out.reset_identity();
        }
    }

    fn draw_activation<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> usize {
        match &self.sampler {
            Some(w) => w.sample(rng),
            None => rng.random_range(0..len),
        }
    }

    /// The exact finite distribution of `W_n` as `(probability, matrix)`
    /// pairs. Entries with zero probability are dropped.
    pub fn support(&self, step: u64) -> Result<Vec<(f64, GossipMatrix)>, GossipError> {
        check_step(step)?;
        let mut out = Vec::new();
        self.support_kind(&self.kind, step, 1.0, &mut out);
        Ok(out)
    }

    fn support_kind(&self, kind: &SchemeKind, step: u64, mass: f64, out: &mut Vec<(f64, GossipMatrix)>) {
        let n = self.node_count();
        match kind {
            SchemeKind::Identity => out.push((mass, GossipMatrix::identity(n))),
            SchemeKind::Pairwise => {
                let m = self.graph.edges().len();
                for (k, &(i, j)) in self.graph.edges().iter().enumerate() {
                    let p = self.activation_probability(k, m);
                    if p > 0.0 {
                        out.push((mass * p, GossipMatrix::pairwise(n, i, j)));
                    }
                }
            }
            SchemeKind::Broadcast { beta } => {
                for node in 0..n {
                    let p = self.activation_probability(node, n);
                    if p > 0.0 {
                        out.push((
                            mass * p,
                            GossipMatrix::broadcast(n, node, self.graph.neighbors(node), *beta),
                        ));
                    }
                }
            }
            SchemeKind::Dropout { p, inner } => self.support_gate(*p, inner, step, mass, out),
            SchemeKind::VanishingRate { p0, eta, inner } => {
                self.support_gate(vanishing_probability(*p0, *eta, step), inner, step, mass, out)
            }
        }
    }

    fn support_gate(&self, p: f64, inner: &SchemeKind, step: u64, mass: f64, out: &mut Vec<(f64, GossipMatrix)>) {
        self.support_kind(inner, step, mass * p, out);
        if p < 1.0 {
            out.push((mass * (1.0 - p), GossipMatrix::identity(self.node_count())));
        }
    }

    fn activation_probability(&self, index: usize, count: usize) -> f64 {
        match &self.activation {
            Some(w) => w[index],
            None => 1.0 / count as f64,
        }
    }
}

/// `min(1, p0 / n^eta)`.
pub fn vanishing_probability(p0: f64, eta: f64, step: u64) -> f64 {
    (p0 / (step as f64).powf(eta)).min(1.0)
}

fn check_step(step: u64) -> Result<(), GossipError> {
    if step == 0 {
        Err(GossipError::Argument("gossip steps are numbered from 1".into()))
    } else {
        Ok(())
    }
}
