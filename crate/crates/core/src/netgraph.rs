//! Communication graphs and the stochastic weight matrices matching them.
//!
//! Node indices are 0-based in this API. The JSON graph schema in [`crate::io`]
//! uses 1-based indices and converts on load.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;

use crate::{Error, Real, Result};

/// Tolerance on row/column sums of the stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected graph in which every node is its own neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Builds the symmetric closure of `edges` and inserts all self-loops.
    /// Duplicate and reversed edges are merged.
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Dimension("a graph needs at least one node".into()));
        }
        let mut neighbors: Vec<BTreeSet<usize>> = (0..n_nodes).map(|i| BTreeSet::from([i])).collect();
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n_nodes {
                    return Err(Error::NodeOutOfRange { index, n_nodes });
                }
            }
            neighbors[i].insert(j);
            neighbors[j].insert(i);
        }
        Ok(Self { neighbors })
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn cycle(n: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new(n, &edges)
    }

    /// Star centered at node 0.
    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    /// Random connected graph: a random spanning tree (each node attaches to
    /// an earlier one) plus every remaining pair with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.random_range(0..i), i));
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(extra_edge_prob.clamp(0.0, 1.0)) {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Neighbor set of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors.get(i).is_some_and(|s| s.contains(&j))
    }

    /// Number of neighbors other than the node itself.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len() - 1
    }

    /// Undirected edges `(i, j)` with `i < j`, self-loops excluded.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }
}

/// Row-stochastic `A` (mixing estimates) and column-stochastic `Ã`
/// (mixing trackers) sharing the sparsity of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair<T: Real> {
    pub a: DMatrix<T>,
    pub a_tilde: DMatrix<T>,
    pub graph: Graph,
}

impl<T: Real> WeightPair<T> {
    /// Validates sparsity and stochasticity of an explicit pair.
    pub fn new(graph: Graph, a: DMatrix<T>, a_tilde: DMatrix<T>) -> Result<Self> {
        check_sparsity(&graph, &a, "A")?;
        check_sparsity(&graph, &a_tilde, "A_tilde")?;
        let tol = T::lit(STOCHASTIC_TOL);
        let row_defect = row_sum_defect(&a);
        if row_defect > tol {
            return Err(Error::Sparsity(format!("A is not row stochastic (defect {row_defect:e})")));
        }
        let col_defect = row_sum_defect(&a_tilde.transpose());
        if col_defect > tol {
            return Err(Error::Sparsity(format!("A_tilde is not column stochastic (defect {col_defect:e})")));
        }
        Ok(Self { a, a_tilde, graph })
    }

    /// Skips every check. Meant for fault-injection experiments, e.g. a
    /// tracker matrix that is row- but not column-stochastic.
    pub fn from_parts_unchecked(graph: Graph, a: DMatrix<T>, a_tilde: DMatrix<T>) -> Self {
        Self { a, a_tilde, graph }
    }

    /// Metropolis weights `a_ij = 1 / (1 + max(deg_i, deg_j))` off the
    /// diagonal, with the diagonal absorbing the remainder. Degrees exclude
    /// the self-loop. The result is symmetric, so `Ã = A`.
    pub fn metropolis(graph: &Graph) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        let n = graph.n_nodes();
        let mut a = DMatrix::<T>::zeros(n, n);
        for (i, j) in graph.edges() {
            let w = T::one() / T::from_usize(1 + graph.degree(i).max(graph.degree(j))).unwrap();
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        for i in 0..n {
            let off: T = a.row(i).iter().copied().fold(T::zero(), |acc, v| acc + v);
            a[(i, i)] = T::one() - off;
        }
        Ok(Self { a: a.clone(), a_tilde: a, graph: graph.clone() })
    }

    /// Row-normalizes `raw` into `A` and column-normalizes it into `Ã`.
    pub fn normalized(graph: &Graph, raw: &DMatrix<T>) -> Result<Self> {
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        check_sparsity(graph, raw, "raw")?;
        let n = graph.n_nodes();
        let mut a = raw.clone();
        let mut a_tilde = raw.clone();
        for i in 0..n {
            let row_sum = raw.row(i).sum();
            if row_sum <= T::zero() {
                return Err(Error::ZeroLine(i));
            }
            a.row_mut(i).unscale_mut(row_sum);
            let col_sum = raw.column(i).sum();
            if col_sum <= T::zero() {
                return Err(Error::ZeroLine(i));
            }
            a_tilde.column_mut(i).unscale_mut(col_sum);
        }
        Ok(Self { a, a_tilde, graph: graph.clone() })
    }

    /// Raw weights drawn uniformly from `[0.5, 1.5]` on the sparsity pattern,
    /// then normalized as in [`WeightPair::normalized`]. Generically `A ≠ Ã`.
    pub fn random_normalized<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> Result<Self> {
        let n = graph.n_nodes();
        let mut raw = DMatrix::<T>::zeros(n, n);
        for i in 0..n {
            for &j in graph.neighbors(i) {
                raw[(i, j)] = T::lit(rng.random_range(0.5..1.5));
            }
        }
        Self::normalized(graph, &raw)
    }

    /// Both matrices row-normalized from `raw`: `Ã` loses column
    /// stochasticity. Used to show that the tracker conservation law breaks.
    pub fn row_only(graph: &Graph, raw: &DMatrix<T>) -> Result<Self> {
        let pair = Self::normalized(graph, raw)?;
        Ok(Self::from_parts_unchecked(graph.clone(), pair.a.clone(), pair.a))
    }

    pub fn n_agents(&self) -> usize {
        self.a.nrows()
    }

    /// Kronecker lifting to agents with `d`-dimensional states.
    pub fn lift(&self, d: usize) -> LiftedWeights<T> {
        let eye = DMatrix::<T>::identity(d, d);
        let ones = DMatrix::<T>::from_element(self.n_agents(), 1, T::one());
        LiftedWeights {
            a: self.a.kronecker(&eye),
            a_tilde: self.a_tilde.kronecker(&eye),
            ones: ones.kronecker(&eye),
            n_agents: self.n_agents(),
            dim: d,
        }
    }
}

/// Block forms `A ⊗ I_d`, `Ã ⊗ I_d` and the stacked identity `1_N ⊗ I_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedWeights<T: Real> {
    pub a: DMatrix<T>,
    pub a_tilde: DMatrix<T>,
    pub ones: DMatrix<T>,
    pub n_agents: usize,
    pub dim: usize,
}

impl<T: Real> LiftedWeights<T> {
    pub fn size(&self) -> usize {
        self.n_agents * self.dim
    }
}

fn check_sparsity<T: Real>(graph: &Graph, m: &DMatrix<T>, name: &str) -> Result<()> {
    let n = graph.n_nodes();
    if m.shape() != (n, n) {
        return Err(Error::Dimension(format!("{name} is {:?}, graph has {n} nodes", m.shape())));
    }
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            let linked = graph.has_edge(i, j);
            if linked && v <= T::zero() {
                return Err(Error::Sparsity(format!("{name}[{i},{j}] must be positive on an edge")));
            }
            if !linked && v != T::zero() {
                return Err(Error::Sparsity(format!("{name}[{i},{j}] must be zero off the graph")));
            }
        }
    }
    Ok(())
}

fn row_sum_defect<T: Real>(m: &DMatrix<T>) -> T {
    m.row_iter().map(|r| (r.sum() - T::one()).abs()).fold(T::zero(), |acc, v| acc.max(v))
}
