use nalgebra::DMatrix;

use super::GossipError;

/// Absolute tolerance on row and column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One realization of the communication matrix: `N × N`, entries in `[0, 1]`,
/// rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipMatrix(DMatrix<f64>);

impl GossipMatrix {
    /// Validates entries in `[0, 1]` and unit row sums within [`STOCHASTIC_TOL`].
    pub fn new(entries: DMatrix<f64>) -> Result<Self, GossipError> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(GossipError::InvalidMatrix(format!(
                "gossip matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if let Some(bad) = entries
            .iter()
            .find(|&&w| !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&w))
        {
            return Err(GossipError::InvalidMatrix(format!("entry {bad} outside [0, 1]")));
        }
        let m = Self(entries);
        let err = m.row_sum_error();
        if err > STOCHASTIC_TOL {
            return Err(GossipError::InvalidMatrix(format!(
                "row sums deviate from 1 by {err:e}"
            )));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// `I − (e_i − e_j)(e_i − e_j)ᵀ / 2`.
    pub fn pairwise(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::identity(n);
        m.set_pairwise(i, j);
        m
    }

    /// Node `source` broadcasts to its neighbours, each of which moves a
    /// fraction `beta` of the way towards the broadcast value.
    pub fn broadcast(n: usize, source: usize, neighbors: &[usize], beta: f64) -> Self {
        let mut m = Self::identity(n);
        m.set_broadcast(source, neighbors, beta);
        m
    }

    pub(crate) fn reset_identity(&mut self) {
        self.0.fill_with_identity();
    }

    pub(crate) fn set_pairwise(&mut self, i: usize, j: usize) {
        self.reset_identity();
        self.0[(i, i)] = 0.5;
        self.0[(j, j)] = 0.5;
        self.0[(i, j)] = 0.5;
        self.0[(j, i)] = 0.5;
    }

    pub(crate) fn set_broadcast(&mut self, source: usize, neighbors: &[usize], beta: f64) {
        self.reset_identity();
        for &k in neighbors {
            self.0[(k, k)] = 1.0 - beta;
            self.0[(k, source)] = beta;
        }
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_sum_error(&self) -> f64 {
        self.0.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn column_sum_error(&self) -> f64 {
        column_sum_error(&self.0)
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.row_sum_error() <= tol && self.column_sum_error() <= tol
    }
}

pub(crate) fn column_sum_error(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_three_nodes() {
        let w = GossipMatrix::pairwise(3, 0, 1);
        let expected = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(w.as_matrix(), &expected);
        assert!(w.is_doubly_stochastic(STOCHASTIC_TOL));
    }

    #[test]
    fn broadcast_on_path() {
        // path 0–1–2, node 1 broadcasts with beta = 0.5
        let w = GossipMatrix::broadcast(3, 1, &[0, 2], 0.5);
        let expected = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5]);
        assert_eq!(w.as_matrix(), &expected);
        assert!(w.row_sum_error() < STOCHASTIC_TOL);
        assert!(!w.is_doubly_stochastic(STOCHASTIC_TOL));
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(GossipMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0])).is_err());
        assert!(GossipMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.0, 1.0])).is_err());
        assert!(GossipMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }
}
