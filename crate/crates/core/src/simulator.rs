//! Synchronous multi-agent execution of gradient tracking.
//!
//! Each round has a read phase, in which every agent broadcasts its state at
//! time `t`, and a write phase, in which every agent computes its state at
//! `t + 1` from the messages of its neighbors only. Agents never see `θ₀`,
//! `θ*` or the costs of other agents; gradients are evaluated through the
//! local oracle of each agent.
//!
//! Two equivalent forms are supported. The s-form keeps the tracker `s_i`:
//!
//! ```text
//! x_i⁺ = Σ_j a_ij x_j − γ_i s_i
//! s_i⁺ = Σ_j ã_ij s_j + ∇f_i(x_i⁺) − ∇f_i(x_i)
//! ```
//!
//! The z-form keeps `z_i = s_i − ∇f_i(x_i)`, which turns the iteration into
//! a proper state-space system and is the reference path of [`run`]:
//!
//! ```text
//! x_i⁺ = Σ_j a_ij x_j − γ_i (z_i + ∇f_i(x_i))
//! z_i⁺ = Σ_j ã_ij z_j + Σ_j ã_ij ∇f_j(x_j) − ∇f_i(x_i)
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::netgraph::WeightPair;
use crate::quadprob::QuadraticProblem;
use crate::{Error, Real, Result};

/// `‖x(t)‖` above which a run is declared divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// Tracker `s_i`.
    S,
    /// Shifted tracker `z_i = s_i − ∇f_i(x_i)`.
    Z,
}

/// Scalar stepsize `γ`, or the diagonal of `Λ` (one entry per agent coordinate).
#[derive(Debug, Clone, PartialEq)]
pub enum Stepsize<T: Real> {
    Scalar(T),
    Diagonal(DVector<T>),
}

impl<T: Real> Stepsize<T> {
    fn validate(&self, size: usize) -> Result<()> {
        match self {
            Stepsize::Scalar(g) if !(*g > T::zero()) => Err(Error::Stepsize(format!("gamma must be positive, got {g}"))),
            Stepsize::Diagonal(l) if l.len() != size => {
                Err(Error::Dimension(format!("Lambda has {} entries, expected {size}", l.len())))
            }
            Stepsize::Diagonal(l) if l.iter().any(|v| !(*v > T::zero())) => {
                Err(Error::Stepsize("Lambda entries must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn scale(&self, agent: usize, v: &DVector<T>) -> DVector<T> {
        match self {
            Stepsize::Scalar(g) => v * *g,
            Stepsize::Diagonal(l) => v.component_mul(&l.rows(agent * v.len(), v.len())),
        }
    }

    /// `Λ` as a dense matrix of size `n`.
    pub fn as_matrix(&self, n: usize) -> DMatrix<T> {
        match self {
            Stepsize::Scalar(g) => DMatrix::identity(n, n) * *g,
            Stepsize::Diagonal(l) => DMatrix::from_diagonal(l),
        }
    }
}

/// What an agent holds and broadcasts: its estimate, its tracker (`s_i` or
/// `z_i` depending on the form) and its last local gradient `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T: Real> {
    pub x: DVector<T>,
    pub tracker: DVector<T>,
    pub gradient: DVector<T>,
}

/// Gradient oracle of one agent: `∇f_i(x) = C_i x + Q_iθ₀`. The offset is
/// stored pre-multiplied, so the agent never holds `θ₀` itself.
#[derive(Debug, Clone)]
pub struct LocalOracle<T: Real> {
    curvature: DMatrix<T>,
    offset: DVector<T>,
}

impl<T: Real> LocalOracle<T> {
    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        &self.curvature * x + &self.offset
    }
}

pub fn oracles<T: Real>(problem: &QuadraticProblem<T>) -> Vec<LocalOracle<T>> {
    (0..problem.n_agents())
        .map(|i| LocalOracle { curvature: problem.curvature(i).clone(), offset: problem.gradient_offset(i) })
        .collect()
}

/// Messages an agent received in one round, together with the weights it
/// applies to them. Only neighbors appear.
#[derive(Debug, Clone)]
pub struct NeighborView<T: Real> {
    pub agent: usize,
    /// `(j, a_ij, ã_ij, message from j)` in ascending `j`.
    pub entries: Vec<(usize, T, T, AgentState<T>)>,
}

/// Perturbs every message crossing a link `j → i` with `j ≠ i`.
#[derive(Debug)]
pub struct LinkNoise {
    level: f64,
    rng: ChaCha8Rng,
}

impl LinkNoise {
    pub fn new(level: f64, seed: u64) -> Self {
        Self { level, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn perturb<T: Real>(&mut self, v: &mut DVector<T>) {
        for e in v.iter_mut() {
            let u: f64 = self.rng.random_range(-1.0..=1.0);
            *e += T::lit(u * self.level);
        }
    }
}

/// Gathers the messages agent `i` reads. Non-neighbor entries of `messages`
/// are never touched.
pub fn neighbor_view<T: Real>(
    weights: &WeightPair<T>,
    i: usize,
    messages: &[AgentState<T>],
    noise: Option<&mut LinkNoise>,
) -> NeighborView<T> {
    let mut noise = noise;
    let entries = weights
        .graph
        .neighbors(i)
        .iter()
        .map(|&j| {
            let mut msg = messages[j].clone();
            if j != i {
                if let Some(n) = noise.as_deref_mut() {
                    n.perturb(&mut msg.x);
                    n.perturb(&mut msg.tracker);
                    n.perturb(&mut msg.gradient);
                }
            }
            (j, weights.a[(i, j)], weights.a_tilde[(i, j)], msg)
        })
        .collect();
    NeighborView { agent: i, entries }
}

/// New state of agent `view.agent` computed from its neighbor view only.
pub fn agent_update<T: Real>(
    form: Form,
    oracle: &LocalOracle<T>,
    stepsize: &Stepsize<T>,
    own: &AgentState<T>,
    view: &NeighborView<T>,
) -> AgentState<T> {
    let d = own.x.len();
    let mut mixed_x = DVector::zeros(d);
    let mut mixed_tracker = DVector::zeros(d);
    let mut mixed_gradient = DVector::zeros(d);
    for (_, a, a_tilde, msg) in &view.entries {
        mixed_x.axpy(*a, &msg.x, T::one());
        mixed_tracker.axpy(*a_tilde, &msg.tracker, T::one());
        if form == Form::Z {
            mixed_gradient.axpy(*a_tilde, &msg.gradient, T::one());
        }
    }
    match form {
        Form::S => {
            let x = mixed_x - stepsize.scale(view.agent, &own.tracker);
            let gradient = oracle.gradient(&x);
            let tracker = mixed_tracker + &gradient - &own.gradient;
            AgentState { x, tracker, gradient }
        }
        Form::Z => {
            let x = mixed_x - stepsize.scale(view.agent, &(&own.tracker + &own.gradient));
            let tracker = mixed_tracker + mixed_gradient - &own.gradient;
            let gradient = oracle.gradient(&x);
            AgentState { x, tracker, gradient }
        }
    }
}

/// One synchronous round. `order` is the sequence in which agents are
/// updated; every agent reads the round-`t` messages, so the order has no
/// effect on the result.
#[allow(clippy::too_many_arguments)]
pub fn round_ordered<T: Real>(
    form: Form,
    oracles: &[LocalOracle<T>],
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    states: &[AgentState<T>],
    order: &[usize],
    mut noise: Option<&mut LinkNoise>,
) -> Vec<AgentState<T>> {
    let mut next: Vec<Option<AgentState<T>>> = vec![None; states.len()];
    for &i in order {
        let view = neighbor_view(weights, i, states, noise.as_deref_mut());
        next[i] = Some(agent_update(form, &oracles[i], stepsize, &states[i], &view));
    }
    next.into_iter().map(|s| s.expect("every agent appears in the update order")).collect()
}

fn check_network<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    states: &[AgentState<T>],
) -> Result<()> {
    let (n, d) = (problem.n_agents(), problem.dim());
    if weights.n_agents() != n || states.len() != n {
        return Err(Error::Dimension(format!(
            "{n} agents in the problem, {} in the weights, {} states",
            weights.n_agents(),
            states.len()
        )));
    }
    if states.iter().any(|s| s.x.len() != d || s.tracker.len() != d || s.gradient.len() != d) {
        return Err(Error::Dimension(format!("agent states must have dimension {d}")));
    }
    stepsize.validate(n * d)
}

pub fn step_s_form<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    states: &[AgentState<T>],
) -> Result<Vec<AgentState<T>>> {
    check_network(problem, weights, stepsize, states)?;
    let order: Vec<usize> = (0..states.len()).collect();
    Ok(round_ordered(Form::S, &oracles(problem), weights, stepsize, states, &order, None))
}

pub fn step_z_form<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    states: &[AgentState<T>],
) -> Result<Vec<AgentState<T>>> {
    check_network(problem, weights, stepsize, states)?;
    let order: Vec<usize> = (0..states.len()).collect();
    Ok(round_ordered(Form::Z, &oracles(problem), weights, stepsize, states, &order, None))
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate<T: Real> {
    Zeros,
    /// Standard normal entries from a seeded generator.
    Random { seed: u64 },
    Given(DVector<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialTracker<T: Real> {
    /// `z(0) = 0`, equivalently `s_i(0) = ∇f_i(x_i(0))`.
    Consistent,
    Z(DVector<T>),
    S(DVector<T>),
}

/// Initial condition of a run. `perturbation` is added to `z(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec<T: Real> {
    pub x0: InitialEstimate<T>,
    pub tracker: InitialTracker<T>,
    pub perturbation: Option<DVector<T>>,
}

impl<T: Real> Default for InitSpec<T> {
    fn default() -> Self {
        Self { x0: InitialEstimate::Zeros, tracker: InitialTracker::Consistent, perturbation: None }
    }
}

impl<T: Real> InitSpec<T> {
    /// Stacked `(x(0), z(0))`.
    pub fn resolve(&self, problem: &QuadraticProblem<T>) -> Result<(DVector<T>, DVector<T>)> {
        let size = problem.n_agents() * problem.dim();
        let check = |v: &DVector<T>, what: &str| {
            if v.len() == size {
                Ok(())
            } else {
                Err(Error::Init(format!("{what} has length {}, expected {size}", v.len())))
            }
        };
        let x0 = match &self.x0 {
            InitialEstimate::Zeros => DVector::zeros(size),
            InitialEstimate::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                DVector::from_fn(size, |_, _| T::lit(StandardNormal.sample(&mut rng)))
            }
            InitialEstimate::Given(v) => {
                check(v, "x0")?;
                v.clone()
            }
        };
        let mut z0 = match &self.tracker {
            InitialTracker::Consistent => DVector::zeros(size),
            InitialTracker::Z(z) => {
                check(z, "z0")?;
                z.clone()
            }
            InitialTracker::S(s) => {
                check(s, "s0")?;
                s - problem.stacked_output(&x0)?
            }
        };
        if let Some(p) = &self.perturbation {
            check(p, "perturbation")?;
            z0 += p;
        }
        Ok((x0, z0))
    }

    /// Agent states at `t = 0` for the given form.
    pub fn states(&self, problem: &QuadraticProblem<T>, form: Form) -> Result<Vec<AgentState<T>>> {
        let (x0, z0) = self.resolve(problem)?;
        let y0 = problem.stacked_output(&x0)?;
        Ok(states_from_stacked(problem.dim(), &x0, &z0, &y0, form))
    }
}

fn states_from_stacked<T: Real>(
    d: usize,
    x: &DVector<T>,
    z: &DVector<T>,
    y: &DVector<T>,
    form: Form,
) -> Vec<AgentState<T>> {
    (0..x.len() / d)
        .map(|i| {
            let xi = x.rows(i * d, d).clone_owned();
            let zi = z.rows(i * d, d).clone_owned();
            let yi = y.rows(i * d, d).clone_owned();
            let tracker = match form {
                Form::S => &zi + &yi,
                Form::Z => zi,
            };
            AgentState { x: xi, tracker, gradient: yi }
        })
        .collect()
}

/// Stacked `(x, z, s, y)` of a network state.
pub fn stacked<T: Real>(states: &[AgentState<T>], form: Form) -> [DVector<T>; 4] {
    let d = states.first().map_or(0, |s| s.x.len());
    let size = states.len() * d;
    let (mut x, mut z, mut s, mut y) =
        (DVector::zeros(size), DVector::zeros(size), DVector::zeros(size), DVector::zeros(size));
    for (i, a) in states.iter().enumerate() {
        x.rows_mut(i * d, d).copy_from(&a.x);
        y.rows_mut(i * d, d).copy_from(&a.gradient);
        match form {
            Form::S => {
                s.rows_mut(i * d, d).copy_from(&a.tracker);
                z.rows_mut(i * d, d).copy_from(&(&a.tracker - &a.gradient));
            }
            Form::Z => {
                z.rows_mut(i * d, d).copy_from(&a.tracker);
                s.rows_mut(i * d, d).copy_from(&(&a.tracker + &a.gradient));
            }
        }
    }
    [x, z, s, y]
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Maximum number of rounds.
    pub t_max: usize,
    /// Stop once the optimality error drops below this value.
    pub stop_tol: f64,
    pub form: Form,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { t_max: 2000, stop_tol: 1e-10, form: Form::Z }
    }
}

/// Stacked states for `t = 0, 1, …` and the error series derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub n_agents: usize,
    pub dim: usize,
    pub form: Form,
    pub theta_star: DVector<T>,
    pub x: Vec<DVector<T>>,
    pub z: Vec<DVector<T>>,
    pub s: Vec<DVector<T>>,
    pub y: Vec<DVector<T>>,
    /// `max_i ‖x_i − x̄‖`.
    pub consensus_error: Vec<T>,
    /// `max_i ‖x_i − θ*‖`.
    pub optimality_error: Vec<T>,
    /// `‖(Σs_i − Σ∇f_i)(t) − (Σs_i − Σ∇f_i)(0)‖`.
    pub conservation_residual: Vec<T>,
    /// `‖Σs_i/N − Σ∇f_i(x_i)/N‖`.
    pub tracker_mean: Vec<T>,
    /// `max_i ‖s_i‖`.
    pub tracker_norm: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    fn new(n_agents: usize, dim: usize, form: Form, theta_star: DVector<T>) -> Self {
        Self {
            n_agents,
            dim,
            form,
            theta_star,
            x: Vec::new(),
            z: Vec::new(),
            s: Vec::new(),
            y: Vec::new(),
            consensus_error: Vec::new(),
            optimality_error: Vec::new(),
            conservation_residual: Vec::new(),
            tracker_mean: Vec::new(),
            tracker_norm: Vec::new(),
        }
    }

    fn agent_sum(&self, v: &DVector<T>) -> DVector<T> {
        (0..self.n_agents).fold(DVector::zeros(self.dim), |acc, i| acc + v.rows(i * self.dim, self.dim))
    }

    fn imbalance(&self, t: usize) -> DVector<T> {
        self.agent_sum(&self.s[t]) - self.agent_sum(&self.y[t])
    }

    fn push(&mut self, states: &[AgentState<T>]) {
        let [x, z, s, y] = stacked(states, self.form);
        let d = self.dim;
        let n = T::from_usize(self.n_agents).unwrap();
        let mean = self.agent_sum(&x) / n;
        let per_agent_max = |v: &DVector<T>, center: &DVector<T>| {
            (0..self.n_agents).map(|i| (v.rows(i * d, d) - center).norm()).fold(T::zero(), |a, b| a.max(b))
        };
        self.consensus_error.push(per_agent_max(&x, &mean));
        self.optimality_error.push(per_agent_max(&x, &self.theta_star));
        self.tracker_norm.push(per_agent_max(&s, &DVector::zeros(d)));
        self.x.push(x);
        self.z.push(z);
        self.s.push(s);
        self.y.push(y);
        let t = self.x.len() - 1;
        let imbalance = self.imbalance(t);
        self.tracker_mean.push(imbalance.norm() / n);
        let residual = if t == 0 { T::zero() } else { (imbalance - self.imbalance(0)).norm() };
        self.conservation_residual.push(residual);
    }

    /// Number of recorded time steps.
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Last recorded time index.
    pub fn final_step(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn final_optimality_error(&self) -> T {
        self.optimality_error.last().copied().unwrap_or(T::zero())
    }

    /// Estimate of agent `i` at step `t`.
    pub fn agent_x(&self, t: usize, i: usize) -> DVector<T> {
        self.x[t].rows(i * self.dim, self.dim).clone_owned()
    }

    pub fn conservation_residual_at(&self, t: usize) -> Result<T> {
        if t == 0 || t >= self.len() {
            return Err(Error::StepOutOfRange { t, len: self.len() });
        }
        Ok(self.conservation_residual[t])
    }

    fn tail_start(&self, tail_fraction: f64) -> usize {
        let frac = tail_fraction.clamp(0.0, 1.0);
        let tail = ((self.len() as f64) * frac).ceil().max(1.0) as usize;
        self.len().saturating_sub(tail)
    }

    /// Largest `max_i ‖s_i(t)‖` over the last `tail_fraction` of the run.
    pub fn tracker_limit_check(&self, tail_fraction: f64) -> T {
        self.tracker_norm[self.tail_start(tail_fraction)..].iter().fold(T::zero(), |a, b| a.max(*b))
    }

    /// Mean local gradient `Σ∇f_i(x_i)/N` at the last step.
    pub fn final_mean_gradient(&self) -> DVector<T> {
        let last = self.final_step();
        self.agent_sum(&self.y[last]) / T::from_usize(self.n_agents).unwrap()
    }

    /// Mean initial shifted tracker `Σz_i(0)/N`.
    pub fn initial_mean_z(&self) -> DVector<T> {
        self.agent_sum(&self.z[0]) / T::from_usize(self.n_agents).unwrap()
    }

    /// Geometric decay rate fitted by least squares to `ln e(t)` over the
    /// window where the optimality error has left its initial transient
    /// (below `1e-2·e(0)`) and is still above `floor`.
    pub fn fitted_decay_rate(&self, floor: T) -> Option<T> {
        let e = &self.optimality_error;
        let e0 = *e.first()?;
        let start = e.iter().position(|v| *v < e0 * T::lit(1e-2)).unwrap_or(0);
        let end = e.iter().rposition(|v| *v > floor)?;
        if end <= start + 5 {
            return None;
        }
        let pts: Vec<(T, T)> = (start..=end).map(|t| (T::from_usize(t).unwrap(), e[t].ln())).collect();
        let m = T::from_usize(pts.len()).unwrap();
        let (sx, sy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + *x, b + *y));
        let (mx, my) = (sx / m, sy / m);
        let (sxy, sxx) = pts
            .iter()
            .fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + (*x - mx) * (*y - my), b + (*x - mx) * (*x - mx)));
        Some((sxy / sxx).exp())
    }

    /// Per-agent CSV: `t,agent,x_1..x_d,z_1..z_d,s_1..s_d,y_1..y_d`.
    pub fn write_states_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write_states_header(out, self.dim)?;
        let d = self.dim;
        for t in 0..self.len() {
            for i in 0..self.n_agents {
                write!(out, "{t},{}", i + 1)?;
                for series in [&self.x, &self.z, &self.s, &self.y] {
                    for k in 0..d {
                        write!(out, ",{}", fmt17(series[t][i * d + k]))?;
                    }
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Summary CSV: `t,consensus_error,optimality_error,conservation_residual,tracker_norm`.
    pub fn write_summary_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write_summary_header(out)?;
        for t in 0..self.len() {
            writeln!(
                out,
                "{t},{},{},{},{}",
                fmt17(self.consensus_error[t]),
                fmt17(self.optimality_error[t]),
                fmt17(self.conservation_residual[t]),
                fmt17(self.tracker_norm[t])
            )?;
        }
        Ok(())
    }
}

pub fn write_states_header<W: Write>(out: &mut W, d: usize) -> Result<()> {
    write!(out, "t,agent")?;
    for name in ["x", "z", "s", "y"] {
        for k in 1..=d {
            write!(out, ",{name}_{k}")?;
        }
    }
    writeln!(out)?;
    Ok(())
}

pub fn write_summary_header<W: Write>(out: &mut W) -> Result<()> {
    writeln!(out, "t,consensus_error,optimality_error,conservation_residual,tracker_norm")?;
    Ok(())
}

/// 17 significant digits.
fn fmt17<T: Real>(v: T) -> String {
    format!("{:.16e}", v)
}

fn simulate<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    init: &InitSpec<T>,
    options: &RunOptions,
    mut noise: Option<LinkNoise>,
) -> Result<Trajectory<T>> {
    let form = options.form;
    let mut states = init.states(problem, form)?;
    check_network(problem, weights, stepsize, &states)?;
    let oracles = oracles(problem);
    let order: Vec<usize> = (0..states.len()).collect();
    let mut traj = Trajectory::new(problem.n_agents(), problem.dim(), form, problem.optimal_solution());
    traj.push(&states);
    let stop = T::lit(options.stop_tol);
    let guard = T::lit(DIVERGENCE_GUARD);
    for t in 0..options.t_max {
        if traj.final_optimality_error() < stop {
            break;
        }
        states = round_ordered(form, &oracles, weights, stepsize, &states, &order, noise.as_mut());
        let norm = states.iter().fold(T::zero(), |a, s| a + s.x.norm_squared()).sqrt();
        if !(norm <= guard) {
            return Err(Error::Diverged { last_good_step: t, norm: norm.as_f64() });
        }
        traj.push(&states);
    }
    Ok(traj)
}

/// Runs gradient tracking until `t_max` rounds or until the optimality
/// error falls below `stop_tol`.
pub fn run<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    init: &InitSpec<T>,
    options: &RunOptions,
) -> Result<Trajectory<T>> {
    simulate(problem, weights, stepsize, init, options, None)
}

/// z-form run over the full horizon with i.i.d. uniform `±noise_level`
/// perturbations on every message exchanged between distinct agents.
pub fn noise_probe<T: Real>(
    problem: &QuadraticProblem<T>,
    weights: &WeightPair<T>,
    stepsize: &Stepsize<T>,
    init: &InitSpec<T>,
    noise_level: f64,
    t_max: usize,
    seed: u64,
) -> Result<Trajectory<T>> {
    if !(noise_level >= 0.0) {
        return Err(Error::Init(format!("noise level must be nonnegative, got {noise_level}")));
    }
    let options = RunOptions { t_max, stop_tol: 0.0, form: Form::Z };
    simulate(problem, weights, stepsize, init, &options, Some(LinkNoise::new(noise_level, seed)))
}
