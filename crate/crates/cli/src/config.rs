//! Experiment configuration: a single JSON file, validated in full before
//! anything is computed. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use gtlab_core::io::{self, GraphFile, ProblemFile, WeightsFile};
use gtlab_core::simulator::{InitialEstimate, InitialTracker};
use gtlab_core::{closedloop, GainSet, Graph, InitSpec, QuadraticProblem, Stepsize, WeightPair};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub weights: WeightSpec,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub gains: GainSpec,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_t_max() -> usize {
    2000
}

fn default_stop_tol() -> f64 {
    1e-10
}

/// Preset topology, explicit 1-based edge list, or a graph file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    Metropolis,
    /// Row-normalize `raw` into `A`, column-normalize it into `Ã`.
    Normalized { raw: Vec<Vec<f64>> },
    /// Raw weights uniform in `[0.5, 1.5]` on the graph pattern.
    RandomNormalized { seed: u64 },
    /// `Ã` row-normalized like `A`: deliberately breaks column stochasticity.
    RowOnly { raw: Vec<Vec<f64>> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Random { n: usize, d: usize, p: usize, seed: u64 },
    File(PathBuf),
    Inline(ProblemFile),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    Gamma(f64),
    /// Diagonal of `Λ`, one entry per agent coordinate.
    Lambda(Vec<f64>),
    /// `K_z = 0`, `K_y = -β C⁻¹`: internally stable but with no optimal equilibrium.
    LocalNewton { beta: f64 },
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec::Gamma(0.05)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    Zeros,
    Random(u64),
    Given(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default = "default_x0")]
    pub x0: X0Spec,
    #[serde(default)]
    pub z0: Option<Vec<f64>>,
    #[serde(default)]
    pub s0: Option<Vec<f64>>,
    #[serde(default)]
    pub perturbation: Option<Vec<f64>>,
}

fn default_x0() -> X0Spec {
    X0Spec::Zeros
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { x0: default_x0(), z0: None, s0: None, perturbation: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_bracket_hi")]
    pub bracket_hi: f64,
    /// Explicit stepsizes; when absent, multiples of the bisected threshold.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_sweep_t_max")]
    pub t_max: usize,
}

fn default_bracket_hi() -> f64 {
    2.0
}

fn default_sweep_t_max() -> usize {
    2000
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { bracket_hi: default_bracket_hi(), grid: None, t_max: default_sweep_t_max() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Seeded random instances checked alongside the configured one.
    #[serde(default = "default_random_instances")]
    pub random_instances: usize,
    #[serde(default = "default_verify_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Stepsize for the simulation checks when the gains are not gradient
    /// tracking, and the cap on the random-instance stepsize `min(γ, γ*/2)`.
    #[serde(default = "default_verify_gamma")]
    pub gamma: f64,
}

fn default_random_instances() -> usize {
    3
}

fn default_verify_steps() -> usize {
    1000
}

fn default_verify_gamma() -> f64 {
    0.05
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            random_instances: default_random_instances(),
            steps: default_verify_steps(),
            seed: 0,
            gamma: default_verify_gamma(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub t_max: Option<usize>,
    pub gamma: Option<f64>,
}

/// Fully validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub weights: WeightPair,
    pub problem: QuadraticProblem,
    pub init: InitSpec,
    pub out: PathBuf,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    apply_overrides(&mut config, overrides);
    let base = path.parent().unwrap_or(Path::new("."));
    Experiment::build(config, base)
}

fn apply_overrides(config: &mut ExperimentConfig, o: &Overrides) {
    if let Some(seed) = o.seed {
        if let ProblemSpec::Random { seed: s, .. } = &mut config.problem {
            *s = seed;
        }
        if let WeightSpec::RandomNormalized { seed: s } = &mut config.weights {
            *s = seed;
        }
        if let X0Spec::Random(s) = &mut config.init.x0 {
            *s = seed;
        }
        config.verify.seed = seed;
        if let Some(noise) = &mut config.noise {
            noise.seed = seed;
        }
    }
    if let Some(out) = &o.out {
        config.out = Some(out.clone());
    }
    if let Some(t) = o.t_max {
        config.t_max = t;
    }
    if let Some(g) = o.gamma {
        config.gains = GainSpec::Gamma(g);
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_graph(spec: &GraphSpec, base: &Path) -> Result<Graph> {
    match spec {
        GraphSpec { preset: Some(name), n: Some(n), edges: None, file: None } => Ok(io::graph_preset(name, *n)?),
        GraphSpec { preset: None, n: Some(n), edges: Some(edges), file: None } => {
            Ok(GraphFile { n: *n, edges: edges.clone() }.to_graph()?)
        }
        GraphSpec { preset: None, n: None, edges: None, file: Some(f) } => {
            let file: GraphFile = io::read_json(&resolve(base, f))?;
            Ok(file.to_graph()?)
        }
        _ => bail!("graph needs exactly one of {{preset, n}}, {{n, edges}} or {{file}}"),
    }
}

fn dense(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    ensure!(rows.len() == n, "{what} has {} rows, expected {n}", rows.len());
    Ok(io::matrix_from_rows(rows, n, what)?)
}

impl Experiment {
    pub fn build(config: ExperimentConfig, base: &Path) -> Result<Self> {
        let problem = match &config.problem {
            ProblemSpec::Random { n, d, p, seed } => QuadraticProblem::random(*n, *d, *p, *seed)?,
            ProblemSpec::File(f) => io::read_json::<ProblemFile>(&resolve(base, f))?.to_problem()?,
            ProblemSpec::Inline(file) => file.to_problem()?,
        };

        let (graph, weights) = match (&config.weights, &config.graph) {
            (WeightSpec::File { path }, graph) => {
                let weights = io::read_json::<WeightsFile>(&resolve(base, path))?.to_weights()?;
                if let Some(spec) = graph {
                    let g = build_graph(spec, base)?;
                    ensure!(g.edges() == weights.graph.edges(), "graph does not match the weights file");
                }
                (weights.graph.clone(), weights)
            }
            (rule, Some(spec)) => {
                let graph = build_graph(spec, base)?;
                let n = graph.n_nodes();
                let weights = match rule {
                    WeightSpec::Metropolis => WeightPair::metropolis(&graph)?,
                    WeightSpec::Normalized { raw } => WeightPair::normalized(&graph, &dense(raw, n, "raw")?)?,
                    WeightSpec::RandomNormalized { seed } => {
                        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(*seed);
                        WeightPair::random_normalized(&graph, &mut rng)?
                    }
                    WeightSpec::RowOnly { raw } => WeightPair::row_only(&graph, &dense(raw, n, "raw")?)?,
                    WeightSpec::File { .. } => unreachable!(),
                };
                (graph, weights)
            }
            (_, None) => bail!("a graph is required unless the weights come from a file"),
        };
        ensure!(
            graph.n_nodes() == problem.n_agents(),
            "graph has {} nodes but the problem has {} agents",
            graph.n_nodes(),
            problem.n_agents()
        );
        ensure!(graph.is_connected(), "graph is not connected");

        let nd = problem.n_agents() * problem.dim();
        match &config.gains {
            GainSpec::Gamma(g) => ensure!(*g > 0.0, "gamma must be positive"),
            GainSpec::Lambda(l) => {
                ensure!(l.len() == nd, "lambda has {} entries, expected {nd}", l.len());
                ensure!(l.iter().all(|v| *v > 0.0), "lambda entries must be positive");
            }
            GainSpec::LocalNewton { beta } => ensure!(*beta > 0.0, "beta must be positive"),
        }
        ensure!(config.stop_tol >= 0.0, "stop_tol must be nonnegative");
        if let Some(noise) = &config.noise {
            ensure!(noise.level >= 0.0, "noise level must be nonnegative");
        }
        ensure!(
            config.sweep.bracket_hi > closedloop::GAMMA_LO,
            "sweep.bracket_hi must exceed {:e}",
            closedloop::GAMMA_LO
        );
        if let Some(grid) = &config.sweep.grid {
            ensure!(grid.iter().all(|g| *g > 0.0), "sweep grid entries must be positive");
        }

        let init = init_spec(&config.init)?;
        init.resolve(&problem).context("init")?;

        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("gtlab-out"));
        Ok(Self { config, graph, weights, problem, init, out })
    }

    pub fn stepsize(&self) -> Option<Stepsize> {
        match &self.config.gains {
            GainSpec::Gamma(g) => Some(Stepsize::Scalar(*g)),
            GainSpec::Lambda(l) => Some(Stepsize::Diagonal(DVector::from_vec(l.clone()))),
            GainSpec::LocalNewton { .. } => None,
        }
    }

    pub fn gains(&self) -> Result<GainSet> {
        let lifted = self.weights.lift(self.problem.dim());
        Ok(match &self.config.gains {
            GainSpec::Gamma(g) => GainSet::gradient_tracking(&lifted, *g)?,
            GainSpec::Lambda(l) => {
                GainSet::gradient_tracking_diag(&lifted, &DMatrix::from_diagonal(&DVector::from_vec(l.clone())))?
            }
            GainSpec::LocalNewton { beta } => GainSet::local_newton(&self.problem, &lifted, *beta)?,
        })
    }
}

fn init_spec(c: &InitConfig) -> Result<InitSpec> {
    let x0 = match &c.x0 {
        X0Spec::Zeros => InitialEstimate::Zeros,
        X0Spec::Random(seed) => InitialEstimate::Random { seed: *seed },
        X0Spec::Given(v) => InitialEstimate::Given(DVector::from_vec(v.clone())),
    };
    let tracker = match (&c.z0, &c.s0) {
        (None, None) => InitialTracker::Consistent,
        (Some(z), None) => InitialTracker::Z(DVector::from_vec(z.clone())),
        (None, Some(s)) => InitialTracker::S(DVector::from_vec(s.clone())),
        (Some(_), Some(_)) => bail!("init: give at most one of z0 and s0"),
    };
    Ok(InitSpec { x0, tracker, perturbation: c.perturbation.clone().map(DVector::from_vec) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Experiment> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Experiment::build(config, Path::new("."))
    }

    #[test]
    fn minimal_config() {
        let e = parse(r#"{"graph": {"preset": "path", "n": 3}, "problem": {"random": {"n": 3, "d": 2, "p": 1, "seed": 1}}}"#)
            .unwrap();
        assert_eq!(e.problem.n_agents(), 3);
        assert!(matches!(e.config.gains, GainSpec::Gamma(g) if g == 0.05));
        assert_eq!(e.config.t_max, 2000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"graph": {"preset": "path", "n": 3}, "problem": {"random": {"n": 3, "d": 2, "p": 1, "seed": 1}}, "tmax": 5}"#;
        assert!(parse(bad).is_err());
        let bad = r#"{"graph": {"preset": "path", "n": 3, "colour": 1}, "problem": {"random": {"n": 3, "d": 2, "p": 1, "seed": 1}}}"#;
        assert!(parse(bad).is_err());
    }

    #[test]
    fn inconsistent_sizes_are_rejected() {
        let bad = r#"{"graph": {"preset": "path", "n": 4}, "problem": {"random": {"n": 3, "d": 2, "p": 1, "seed": 1}}}"#;
        assert!(parse(bad).is_err());
        let bad = r#"{"graph": {"n": 3, "edges": [[1, 4]]}, "problem": {"random": {"n": 3, "d": 1, "p": 1, "seed": 1}}}"#;
        assert!(parse(bad).is_err());
        let bad = r#"{"graph": {"preset": "path", "n": 3}, "problem": {"random": {"n": 3, "d": 1, "p": 1, "seed": 1}},
                      "init": {"z0": [0, 0, 0], "s0": [0, 0, 0]}}"#;
        assert!(parse(bad).is_err());
    }

    #[test]
    fn overrides_replace_seeds_and_gains() {
        let mut config: ExperimentConfig = serde_json::from_str(
            r#"{"graph": {"preset": "cycle", "n": 4}, "problem": {"random": {"n": 4, "d": 1, "p": 1, "seed": 1}},
                "init": {"x0": {"random": 3}}}"#,
        )
        .unwrap();
        apply_overrides(&mut config, &Overrides { seed: Some(9), gamma: Some(0.2), ..Default::default() });
        assert!(matches!(config.problem, ProblemSpec::Random { seed: 9, .. }));
        assert!(matches!(config.init.x0, X0Spec::Random(9)));
        assert!(matches!(config.gains, GainSpec::Gamma(g) if g == 0.2));
    }
}
