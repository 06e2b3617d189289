//! JSON files for graphs, problems and weight pairs.
//!
//! Matrices are stored as row-major nested arrays and node indices are
//! 1-based on disk. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::netgraph::{Graph, WeightPair};
use crate::quadprob::QuadraticProblem;
use crate::{Error, Result};

pub type Rows = Vec<Vec<f64>>;

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Dense matrix from nested rows; `cols` is needed for empty row lists.
pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Format(format!("{what}: row {} has {} entries, expected {cols}", bad + 1, rows[bad].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
}

impl GraphFile {
    pub fn from_graph(g: &Graph) -> Self {
        Self { n: g.n_nodes(), edges: g.edges().into_iter().map(|(i, j)| [i + 1, j + 1]).collect() }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for &[i, j] in &self.edges {
            for k in [i, j] {
                if k == 0 || k > self.n {
                    return Err(Error::NodeOutOfRange { index: k, n_nodes: self.n });
                }
            }
            edges.push((i - 1, j - 1));
        }
        Graph::new(self.n, &edges)
    }
}

/// Named topology: `path`, `cycle`, `complete` or `star`.
pub fn graph_preset(name: &str, n: usize) -> Result<Graph> {
    match name {
        "path" => Graph::path(n),
        "cycle" => Graph::cycle(n),
        "complete" => Graph::complete(n),
        "star" => Graph::star(n),
        other => Err(Error::Format(format!("unknown graph preset '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n_agents: usize,
    pub d: usize,
    pub p: usize,
    /// Curvatures `C_i`, each `d×d`.
    pub c: Vec<Rows>,
    /// Offset maps `Γ_i`, each `d×p`.
    pub gamma: Vec<Rows>,
    pub theta0: Vec<f64>,
}

impl ProblemFile {
    pub fn from_problem(prob: &QuadraticProblem<f64>) -> Self {
        Self {
            n_agents: prob.n_agents(),
            d: prob.dim(),
            p: prob.offset_dim(),
            c: prob.curvatures().iter().map(matrix_to_rows).collect(),
            gamma: prob.offset_maps().iter().map(matrix_to_rows).collect(),
            theta0: prob.theta0().iter().copied().collect(),
        }
    }

    pub fn to_problem(&self) -> Result<QuadraticProblem<f64>> {
        if self.c.len() != self.n_agents || self.gamma.len() != self.n_agents {
            return Err(Error::Format(format!(
                "expected {} curvatures and offset maps, found {} and {}",
                self.n_agents,
                self.c.len(),
                self.gamma.len()
            )));
        }
        if self.theta0.len() != self.p {
            return Err(Error::Format(format!("theta0 has {} entries, expected {}", self.theta0.len(), self.p)));
        }
        let check_rows = |m: &Rows, what: String| {
            if m.len() == self.d {
                Ok(())
            } else {
                Err(Error::Format(format!("{what} has {} rows, expected {}", m.len(), self.d)))
            }
        };
        let mut c = Vec::with_capacity(self.n_agents);
        let mut gamma = Vec::with_capacity(self.n_agents);
        for i in 0..self.n_agents {
            check_rows(&self.c[i], format!("c[{}]", i + 1))?;
            check_rows(&self.gamma[i], format!("gamma[{}]", i + 1))?;
            c.push(matrix_from_rows(&self.c[i], self.d, "c")?);
            gamma.push(matrix_from_rows(&self.gamma[i], self.p, "gamma")?);
        }
        QuadraticProblem::new(c, gamma, DVector::from_vec(self.theta0.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub graph: GraphFile,
    pub a: Rows,
    pub a_tilde: Rows,
}

impl WeightsFile {
    pub fn from_weights(w: &WeightPair<f64>) -> Self {
        Self { graph: GraphFile::from_graph(&w.graph), a: matrix_to_rows(&w.a), a_tilde: matrix_to_rows(&w.a_tilde) }
    }

    /// Validated weight pair; sparsity and stochasticity are checked.
    pub fn to_weights(&self) -> Result<WeightPair<f64>> {
        let graph = self.graph.to_graph()?;
        let n = graph.n_nodes();
        for (m, what) in [(&self.a, "a"), (&self.a_tilde, "a_tilde")] {
            if m.len() != n {
                return Err(Error::Format(format!("{what} has {} rows, expected {n}", m.len())));
            }
        }
        let a = matrix_from_rows(&self.a, n, "a")?;
        let a_tilde = matrix_from_rows(&self.a_tilde, n, "a_tilde")?;
        WeightPair::new(graph, a, a_tilde)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip_is_one_based() {
        let g = Graph::path(3).unwrap();
        let f = GraphFile::from_graph(&g);
        assert_eq!(f.edges, vec![[1, 2], [2, 3]]);
        assert_eq!(f.to_graph().unwrap().edges(), g.edges());
        let bad = GraphFile { n: 3, edges: vec![[0, 1]] };
        assert!(matches!(bad.to_graph(), Err(Error::NodeOutOfRange { index: 0, .. })));
        let bad = GraphFile { n: 3, edges: vec![[1, 4]] };
        assert!(matches!(bad.to_graph(), Err(Error::NodeOutOfRange { index: 4, .. })));
    }

    #[test]
    fn problem_round_trip_is_bit_exact() {
        let p = QuadraticProblem::random(3, 2, 2, 11).unwrap();
        let text = serde_json::to_string(&ProblemFile::from_problem(&p)).unwrap();
        let back: ProblemFile = serde_json::from_str(&text).unwrap();
        let q = back.to_problem().unwrap();
        for i in 0..3 {
            assert_eq!(p.curvature(i), q.curvature(i));
            assert_eq!(p.offset_map(i), q.offset_map(i));
        }
        assert_eq!(p.theta0(), q.theta0());
        assert_eq!(p.optimal_solution(), q.optimal_solution());
    }

    #[test]
    fn weights_round_trip() {
        let w = WeightPair::metropolis(&Graph::star(4).unwrap()).unwrap();
        let text = serde_json::to_string(&WeightsFile::from_weights(&w)).unwrap();
        let back: WeightsFile = serde_json::from_str(&text).unwrap();
        let v = back.to_weights().unwrap();
        assert_eq!(w.a, v.a);
        assert_eq!(w.a_tilde, v.a_tilde);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(serde_json::from_str::<GraphFile>(r#"{"n": 2, "edges": [], "extra": 1}"#).is_err());
        let f = ProblemFile { n_agents: 1, d: 1, p: 1, c: vec![vec![vec![1.0, 2.0]]], gamma: vec![vec![vec![1.0]]], theta0: vec![0.0] };
        assert!(matches!(f.to_problem(), Err(Error::Format(_))));
        assert!(graph_preset("wheel", 4).is_err());
    }
}
