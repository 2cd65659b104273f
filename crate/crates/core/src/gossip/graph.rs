use std::collections::BTreeSet;

use rand::Rng;

use super::GossipError;

/// Undirected communication graph over `N` agents, nodes indexed `0..N`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted. Optional planar
/// coordinates are carried along for geometric constructions and for the
/// localization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    coordinates: Option<Vec<[f64; 2]>>,
}

impl NetworkGraph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are merged; self-loops and out-of-range nodes are errors.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GossipError> {
        if node_count == 0 {
            return Err(GossipError::Config("graph must have at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(GossipError::Config(format!("self-loop at node {i}")));
            }
            if i >= node_count || j >= node_count {
                return Err(GossipError::Config(format!(
                    "edge ({i}, {j}) references a node outside 0..{node_count}"
                )));
            }
            set.insert((i.min(j), i.max(j)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            neighbors,
            coordinates: None,
        })
    }

    pub fn complete(node_count: usize) -> Result<Self, GossipError> {
        let edges = (0..node_count).flat_map(|i| (i + 1..node_count).map(move |j| (i, j)));
        Self::new(node_count, edges)
    }

    pub fn path(node_count: usize) -> Result<Self, GossipError> {
        Self::new(node_count, (1..node_count).map(|i| (i - 1, i)))
    }

    /// `rows × cols` lattice with 4-neighbour connectivity, row-major numbering.
    pub fn grid(rows: usize, cols: usize) -> Result<Self, GossipError> {
        let id = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        let coords = (0..rows * cols)
            .map(|k| [(k % cols) as f64, (k / cols) as f64])
            .collect();
        Self::new(rows * cols, edges)?.with_coordinates(coords)
    }

    /// Disk graph: nodes `i`, `j` are adjacent when `|p_i - p_j| <= radius`.
    pub fn geometric(points: Vec<[f64; 2]>, radius: f64) -> Result<Self, GossipError> {
        if !(radius >= 0.0) {
            return Err(GossipError::Config(format!(
                "geometric radius must be non-negative, got {radius}"
            )));
        }
        let n = points.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if distance(points[i], points[j]) <= radius {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)?.with_coordinates(points)
    }

    /// Random geometric graph on `node_count` points drawn uniformly in the
    /// unit square.
    pub fn random_geometric<R: Rng + ?Sized>(node_count: usize, radius: f64, rng: &mut R) -> Result<Self, GossipError> {
        let points = (0..node_count)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        Self::geometric(points, radius)
    }

    pub fn with_coordinates(mut self, coordinates: Vec<[f64; 2]>) -> Result<Self, GossipError> {
        if coordinates.len() != self.node_count {
            return Err(GossipError::Config(format!(
                "{} coordinates supplied for {} nodes",
                coordinates.len(),
                self.node_count
            )));
        }
        self.coordinates = Some(coordinates);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn coordinates(&self) -> Option<&[[f64; 2]]> {
        self.coordinates.as_deref()
    }

    /// Connected-component label of every node (labels are `0..k` in order of
    /// first appearance).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.node_count];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.node_count {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in &self.neighbors[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Smallest radius for which the disk graph on `points` is connected: the
/// longest edge of a Euclidean minimum spanning tree (Prim, O(n²)).
pub fn connectivity_radius(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut longest: f64 = 0.0;
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .expect("at least one node outside the tree");
        in_tree[v] = true;
        longest = longest.max(best[v]);
        for w in 0..n {
            if !in_tree[w] {
                best[w] = best[w].min(distance(points[v], points[w]));
            }
        }
    }
    longest
}
