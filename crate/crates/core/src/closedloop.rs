//! Gradient tracking as a closed-loop linear system.
//!
//! The estimates `x` are the state of the trivial plant `x⁺ = u` measured
//! through `y = Cx + Qθ₀`, and the tracker `z` is the state of a dynamic
//! controller
//!
//! ```text
//! z⁺ = Φz + B_x x + B_y y
//! u  = K_z z + K_x x + K_y y
//! ```
//!
//! Closing the loop gives `[x; z]⁺ = F[x; z] + Gθ₀`. The gradient tracking
//! family fixes `Φ = Ã ⊗ I`, `B_x = 0`, `B_y = Ã ⊗ I − I`, `K_x = A ⊗ I`
//! and leaves `K_y`, `K_z` free. This module assembles `F` and `G`, splits
//! `F = F0 + B0[K_yC, K_z]`, builds the orthonormal change of basis
//! `T = [T1 T2]` that separates the reachable subspace of `(F0, B0)` from
//! the conserved tracker-sum direction, and checks stability and the
//! regulator equations on top of it.

use nalgebra::{Complex, DMatrix, DVector};

use crate::lingebra::{
    self, block_diagonal, least_squares, max_abs, modulus, ones_complement, reachable_subspace, similarity_blocks,
    stack_columns, stack_rows, ClassCounts, Spectrum, SubspaceBasis,
};
use crate::netgraph::LiftedWeights;
use crate::quadprob::QuadraticProblem;
use crate::{Error, Real, Result};

/// Largest `|λ − 1|` allowed for the `d` unit eigenvalues of an admissible `F`.
pub const UNIT_EIGEN_TOL: f64 = 1e-9;
/// Radius used to count the multiplicity of the eigenvalue 1.
pub const UNIT_CLUSTER_RADIUS: f64 = 1e-7;
/// Bound on `‖T2ᵀFT1‖` for the reachable subspace to count as F-invariant.
pub const INVARIANCE_TOL: f64 = 1e-9;
/// Smallest stepsize probed by [`find_critical_stepsize`].
pub const GAMMA_LO: f64 = 1e-6;
/// Absolute width at which the stepsize bisection stops.
pub const BISECTION_TOL: f64 = 1e-6;
const GRID_POINTS: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub enum GainProvenance<T: Real> {
    /// `K_y = K_z = −γI`.
    GradientTracking { gamma: T },
    /// `K_y = K_z = −Λ` with `Λ` diagonal positive.
    GradientTrackingDiag { lambda: DVector<T> },
    Custom,
}

/// Controller matrices with `n_z = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T: Real> {
    pub phi: DMatrix<T>,
    pub b_x: DMatrix<T>,
    pub b_y: DMatrix<T>,
    pub k_x: DMatrix<T>,
    pub k_y: DMatrix<T>,
    pub k_z: DMatrix<T>,
    pub provenance: GainProvenance<T>,
}

impl<T: Real> GainSet<T> {
    pub fn gradient_tracking(lifted: &LiftedWeights<T>, gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            return Err(Error::Stepsize(format!("gamma must be positive, got {gamma}")));
        }
        let n = lifted.size();
        let k = DMatrix::identity(n, n) * -gamma;
        let mut gains = Self::with_feedback(lifted, k.clone(), k)?;
        gains.provenance = GainProvenance::GradientTracking { gamma };
        Ok(gains)
    }

    /// Per-coordinate stepsizes, `K_y = K_z = −Λ`. `lambda` must be a
    /// diagonal matrix with positive diagonal.
    pub fn gradient_tracking_diag(lifted: &LiftedWeights<T>, lambda: &DMatrix<T>) -> Result<Self> {
        let n = lifted.size();
        if lambda.shape() != (n, n) {
            return Err(Error::Dimension(format!("Lambda is {:?}, expected ({n}, {n})", lambda.shape())));
        }
        for i in 0..n {
            for j in 0..n {
                let v = lambda[(i, j)];
                if i == j && !(v > T::zero()) {
                    return Err(Error::Stepsize(format!("Lambda[{i},{i}] = {v} is not positive")));
                }
                if i != j && v != T::zero() {
                    return Err(Error::Stepsize(format!("Lambda[{i},{j}] = {v}: Lambda must be diagonal")));
                }
            }
        }
        let k = -lambda.clone();
        let mut gains = Self::with_feedback(lifted, k.clone(), k)?;
        gains.provenance = GainProvenance::GradientTrackingDiag { lambda: lambda.diagonal() };
        Ok(gains)
    }

    /// Gradient tracking structure with arbitrary feedback gains `K_y`, `K_z`.
    pub fn with_feedback(lifted: &LiftedWeights<T>, k_y: DMatrix<T>, k_z: DMatrix<T>) -> Result<Self> {
        let n = lifted.size();
        let eye = DMatrix::identity(n, n);
        Self::custom(
            lifted.a_tilde.clone(),
            DMatrix::zeros(n, n),
            &lifted.a_tilde - eye,
            lifted.a.clone(),
            k_y,
            k_z,
        )
    }

    pub fn custom(
        phi: DMatrix<T>,
        b_x: DMatrix<T>,
        b_y: DMatrix<T>,
        k_x: DMatrix<T>,
        k_y: DMatrix<T>,
        k_z: DMatrix<T>,
    ) -> Result<Self> {
        let n = phi.nrows();
        for (name, m) in [("Phi", &phi), ("B_x", &b_x), ("B_y", &b_y), ("K_x", &k_x), ("K_y", &k_y), ("K_z", &k_z)] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!("{name} is {:?}, expected ({n}, {n})", m.shape())));
            }
        }
        Ok(Self { phi, b_x, b_y, k_x, k_y, k_z, provenance: GainProvenance::Custom })
    }

    /// `K_z = 0`, `K_y = −β·C⁻¹`: `A ⊗ I + K_yC = A ⊗ I − βI` can be Schur,
    /// yet no optimal equilibrium exists because `K_z ≠ K_y`.
    pub fn local_newton(problem: &QuadraticProblem<T>, lifted: &LiftedWeights<T>, beta: T) -> Result<Self> {
        let inverses = problem
            .curvatures()
            .iter()
            .map(|c| c.clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY }))
            .collect::<Result<Vec<_>>>()?;
        let n = lifted.size();
        Self::with_feedback(lifted, block_diagonal(&inverses) * -beta, DMatrix::zeros(n, n))
    }

    pub fn size(&self) -> usize {
        self.phi.nrows()
    }

    /// `max|K_z − K_y|`.
    pub fn gain_mismatch(&self) -> T {
        max_abs(&(&self.k_z - &self.k_y))
    }
}

/// `F`, `G`, the open-loop pair `(F0, B0)` and the basis `T = [T1 T2]`.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem<T: Real> {
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
    pub f0: DMatrix<T>,
    pub b0: DMatrix<T>,
    /// `diag(I, R)` with `R` an orthonormal basis of the complement of `1_N ⊗ I_d`.
    pub t1: SubspaceBasis<T>,
    /// `[0; 1_N ⊗ I_d]/√N`.
    pub t2: SubspaceBasis<T>,
    /// Reachable subspace of `(F0, B0)` computed by Krylov iteration.
    pub reachable: SubspaceBasis<T>,
    /// `1_N ⊗ I_d`.
    pub ones: DMatrix<T>,
    pub problem: QuadraticProblem<T>,
    pub gains: GainSet<T>,
}

impl<T: Real> ClosedLoopSystem<T> {
    pub fn assemble(problem: &QuadraticProblem<T>, gains: &GainSet<T>) -> Result<Self> {
        let (n_agents, d) = (problem.n_agents(), problem.dim());
        let nd = n_agents * d;
        if gains.size() != nd {
            return Err(Error::Dimension(format!("gains act on {} states, problem has {nd}", gains.size())));
        }
        let c = problem.c_block();
        let q = problem.q_stacked();

        let top = stack_columns(&(&gains.k_x + &gains.k_y * c), &gains.k_z);
        let bottom = stack_columns(&(&gains.b_x + &gains.b_y * c), &gains.phi);
        let f = stack_rows(&top, &bottom);
        let g = stack_rows(&(&gains.k_y * q), &(&gains.b_y * q));

        let f0 = stack_rows(
            &stack_columns(&gains.k_x, &DMatrix::zeros(nd, nd)),
            &stack_columns(&(&gains.b_x + &gains.b_y * c), &gains.phi),
        );
        let b0 = stack_rows(&DMatrix::identity(nd, nd), &DMatrix::zeros(nd, nd));

        let ones = DMatrix::<T>::from_element(n_agents, 1, T::one()).kronecker(&DMatrix::identity(d, d));
        let r = ones_complement::<T>(n_agents, d);
        let t1 = SubspaceBasis { columns: block_diagonal(&[DMatrix::identity(nd, nd), r.columns]) };
        let scale = T::one() / T::from_usize(n_agents).unwrap().sqrt();
        let t2 = SubspaceBasis { columns: stack_rows(&DMatrix::zeros(nd, d), &(&ones * scale)) };
        let reachable = reachable_subspace(&f0, &b0)?;

        Ok(Self { f, g, f0, b0, t1, t2, reachable, ones, problem: problem.clone(), gains: gains.clone() })
    }

    pub fn n_agents(&self) -> usize {
        self.problem.n_agents()
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// Total state dimension `N(d + n_z) = 2Nd`.
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    /// `F0 + B0[K_yC, K_z]`, which must reproduce `F`.
    pub fn recomposed(&self) -> DMatrix<T> {
        let feedback = stack_columns(&(&self.gains.k_y * self.problem.c_block()), &self.gains.k_z);
        &self.f0 + &self.b0 * feedback
    }

    /// One step of `[x; z]⁺ = F[x; z] + Gθ₀`.
    pub fn step(&self, state: &DVector<T>) -> DVector<T> {
        &self.f * state + &self.g * self.problem.theta0()
    }

    /// Iterates from `state` until successive iterates differ by less than
    /// `tol·(1 + ‖state‖)` or `max_steps` is reached. Returns the final
    /// state and the number of steps taken.
    pub fn iterate_to_rest(&self, mut state: DVector<T>, max_steps: usize, tol: T) -> (DVector<T>, usize) {
        for k in 0..max_steps {
            let next = self.step(&state);
            let delta = (&next - &state).norm();
            state = next;
            if delta <= tol * (T::one() + state.norm()) {
                return (state, k + 1);
            }
        }
        (state, max_steps)
    }

    pub fn analyze_stability(&self) -> Result<StabilityReport<T>> {
        let d = self.dim();
        let n = self.state_dim();
        let spectrum = lingebra::spectrum(&self.f)?;
        let blocks = similarity_blocks(&self.f, &self.t1, &self.t2)?;
        let internal_spectrum = lingebra::spectrum(&blocks.internal)?;
        let external_spectrum = lingebra::spectrum(&blocks.external)?;
        let counts = spectrum.counts();

        let one = Complex::new(T::one(), T::zero());
        let unit_cluster = spectrum.cluster_size(one, T::tol(UNIT_CLUSTER_RADIUS));
        let mut by_distance: Vec<(T, T)> =
            spectrum.eigenvalues.iter().map(|l| (modulus(&(*l - one)), modulus(l))).collect();
        by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let unit_deviation = by_distance.iter().take(d).fold(T::zero(), |a, p| a.max(p.0));
        let subdominant_radius = by_distance.iter().skip(d).fold(T::zero(), |a, p| a.max(p.1));

        let tol = spectrum.tol;
        let v_invariant = blocks.residual <= T::tol(INVARIANCE_TOL);
        let internally_stable = internal_spectrum.spectral_radius() < T::one() - tol;
        let externally_antistable = external_spectrum.eigenvalues.iter().all(|l| modulus(l) >= T::one() - tol);
        let admissible = counts.on_circle == d
            && counts.outside == 0
            && counts.inside == n - d
            && unit_cluster == d
            && unit_deviation <= T::tol(UNIT_EIGEN_TOL);

        Ok(StabilityReport {
            spectrum,
            internal_spectrum,
            external_spectrum,
            external_block: blocks.external,
            counts,
            unit_cluster,
            unit_deviation,
            subdominant_radius,
            invariance_residual: blocks.residual,
            reachable_dim: self.reachable.dim(),
            unreachable_dim: n - self.reachable.dim(),
            v_invariant,
            internally_stable,
            externally_antistable,
            admissible,
        })
    }

    /// Closed-form solution of the regulator equations for `K_z = K_y`:
    /// `Π_x = 𝐈Σ`, `Π_z = −(C𝐈Σ + Q)`, `P = T2T2ᵀΠ`.
    pub fn solve_regulator(&self) -> Result<RegulatorSolution<T>> {
        let mismatch = self.gains.gain_mismatch();
        let scale = max_abs(&self.gains.k_y).max(T::one());
        if mismatch > T::lit(1e-12) * scale {
            return Err(Error::GainMismatch(mismatch.as_f64()));
        }
        let sigma = self.problem.sigma();
        let pi_x = &self.ones * sigma;
        let pi_z = -(self.problem.c_block() * &pi_x + self.problem.q_stacked());
        let pi = stack_rows(&pi_x, &pi_z);
        Ok(self.regulator_from(pi))
    }

    /// Evaluates every regulator residual for a candidate `Π`.
    pub fn regulator_from(&self, pi: DMatrix<T>) -> RegulatorSolution<T> {
        let nd = self.n_agents() * self.dim();
        let p = self.t2.projector() * &pi;
        let pi_x = pi.rows(0, nd).clone_owned();
        let pi_z = pi.rows(nd, nd).clone_owned();
        let fixed_point_residual = (&pi - &self.f * &pi - &self.g).norm();
        let output_residual = (&self.ones * self.problem.sigma() - &pi_x).norm();
        let complement_residual = (self.t2.columns.transpose() * (&pi - &p)).norm();
        let tracker_sum = (self.ones.transpose() * &pi_z).norm();
        let p_norm = p.norm();
        RegulatorSolution {
            pi,
            pi_x,
            pi_z,
            p,
            fixed_point_residual,
            output_residual,
            complement_residual,
            tracker_sum,
            p_norm,
        }
    }

    /// Minimum-norm least-squares `Π` for `Π = FΠ + G` together with
    /// `[I 0]Π = 𝐈Σ`, and the Frobenius residual. A residual bounded away
    /// from zero means no optimal equilibrium exists.
    pub fn regulator_least_squares(&self) -> Result<(DMatrix<T>, T)> {
        let n = self.state_dim();
        let nd = n / 2;
        let lhs = stack_rows(
            &(DMatrix::identity(n, n) - &self.f),
            &stack_columns(&DMatrix::identity(nd, nd), &DMatrix::zeros(nd, nd)),
        );
        let rhs = stack_rows(&self.g, &(&self.ones * self.problem.sigma()));
        least_squares(&lhs, &rhs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T: Real> {
    pub spectrum: Spectrum<T>,
    /// Spectrum of `T1ᵀFT1`, the restriction to the reachable subspace.
    pub internal_spectrum: Spectrum<T>,
    /// Spectrum of `T2ᵀFT2`.
    pub external_spectrum: Spectrum<T>,
    pub external_block: DMatrix<T>,
    pub counts: ClassCounts,
    /// Eigenvalues of `F` within [`UNIT_CLUSTER_RADIUS`] of 1.
    pub unit_cluster: usize,
    /// Largest distance from 1 among the `d` eigenvalues closest to 1.
    pub unit_deviation: T,
    /// Largest modulus once the `d` eigenvalues closest to 1 are removed.
    pub subdominant_radius: T,
    /// `‖T2ᵀFT1‖_max`.
    pub invariance_residual: T,
    pub reachable_dim: usize,
    pub unreachable_dim: usize,
    pub v_invariant: bool,
    pub internally_stable: bool,
    pub externally_antistable: bool,
    /// Exactly `d` eigenvalues at 1 and all others strictly inside the unit disc.
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorSolution<T: Real> {
    pub pi: DMatrix<T>,
    pub pi_x: DMatrix<T>,
    pub pi_z: DMatrix<T>,
    pub p: DMatrix<T>,
    /// `‖Π − FΠ − G‖`.
    pub fixed_point_residual: T,
    /// `‖𝐈Σ − [I 0]Π‖`.
    pub output_residual: T,
    /// `‖T2ᵀ(Π − P)‖`.
    pub complement_residual: T,
    /// `‖𝐈ᵀΠ_z‖`, zero when the equilibrium tracker sum vanishes.
    pub tracker_sum: T,
    pub p_norm: T,
}

impl<T: Real> RegulatorSolution<T> {
    pub fn max_residual(&self) -> T {
        self.fixed_point_residual.max(self.output_residual).max(self.complement_residual)
    }

    /// `(x_eq, z_eq) = Πθ₀`.
    pub fn equilibrium(&self, theta0: &DVector<T>) -> (DVector<T>, DVector<T>) {
        (&self.pi_x * theta0, &self.pi_z * theta0)
    }
}

/// Result of the stepsize threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizeSearch<T: Real> {
    /// Largest admissible stepsize found; equals `bracket_hi` when that is admissible.
    pub gamma_star: T,
    /// Smallest probed inadmissible stepsize above `gamma_star`, if any.
    pub gamma_reject: Option<T>,
    pub bracket_hi: T,
    pub hi_admissible: bool,
    /// Log-spaced admissibility samples taken before bisecting.
    pub samples: Vec<(T, bool)>,
    /// False when an admissible sample follows an inadmissible one.
    pub interval_pattern: bool,
    pub bisection_steps: usize,
}

pub fn gt_admissible<T: Real>(problem: &QuadraticProblem<T>, lifted: &LiftedWeights<T>, gamma: T) -> Result<bool> {
    let gains = GainSet::gradient_tracking(lifted, gamma)?;
    Ok(ClosedLoopSystem::assemble(problem, &gains)?.analyze_stability()?.admissible)
}

/// Largest `γ ≤ bracket_hi` keeping `K_y = K_z = −γI` admissible.
///
/// A log-spaced grid over `[GAMMA_LO, bracket_hi]` is sampled first; the
/// bisection then resolves the first admissible-to-inadmissible transition
/// to [`BISECTION_TOL`].
pub fn find_critical_stepsize<T: Real>(
    problem: &QuadraticProblem<T>,
    lifted: &LiftedWeights<T>,
    bracket_hi: T,
) -> Result<StepsizeSearch<T>> {
    let lo = T::lit(GAMMA_LO);
    if !(bracket_hi > lo) {
        return Err(Error::Stepsize(format!("bracket_hi {bracket_hi} must exceed {GAMMA_LO:e}")));
    }
    if !gt_admissible(problem, lifted, lo)? {
        return Err(Error::NotAdmissibleAtLowerBracket(GAMMA_LO));
    }
    let (log_lo, log_hi) = (lo.ln(), bracket_hi.ln());
    let mut samples = Vec::with_capacity(GRID_POINTS);
    for k in 0..GRID_POINTS {
        let gamma = if k + 1 == GRID_POINTS {
            bracket_hi
        } else {
            let frac = T::from_usize(k).unwrap() / T::from_usize(GRID_POINTS - 1).unwrap();
            (log_lo + (log_hi - log_lo) * frac).exp()
        };
        samples.push((gamma, gt_admissible(problem, lifted, gamma)?));
    }
    let first_reject = samples.iter().position(|s| !s.1);
    let interval_pattern = match first_reject {
        Some(k) => samples[k..].iter().all(|s| !s.1),
        None => true,
    };
    let Some(k) = first_reject else {
        return Ok(StepsizeSearch {
            gamma_star: bracket_hi,
            gamma_reject: None,
            bracket_hi,
            hi_admissible: true,
            samples,
            interval_pattern,
            bisection_steps: 0,
        });
    };
    let (mut good, mut bad) = (if k == 0 { lo } else { samples[k - 1].0 }, samples[k].0);
    let mut steps = 0;
    while bad - good > T::lit(BISECTION_TOL) {
        let mid = (good + bad) * T::lit(0.5);
        if gt_admissible(problem, lifted, mid)? {
            good = mid;
        } else {
            bad = mid;
        }
        steps += 1;
    }
    Ok(StepsizeSearch {
        gamma_star: good,
        gamma_reject: Some(bad),
        bracket_hi,
        hi_admissible: false,
        samples,
        interval_pattern,
        bisection_steps: steps,
    })
}

/// Outcome of the `K_z = 0`, `K_y = −βC⁻¹` experiment.
#[derive(Debug, Clone)]
pub struct LocalNewtonReport<T: Real> {
    pub beta: T,
    pub stability: StabilityReport<T>,
    /// Least-squares residual of the fixed-point and output equations.
    pub least_squares_residual: T,
    /// Same residual for `K_z = K_y = −γI` on the same instance.
    pub control_residual: T,
    pub control_gamma: T,
    /// `max_i ‖x_i − θ*‖` at the simulated rest point.
    pub limit_error: T,
    pub limit_steps: usize,
}

pub fn local_newton_counterexample<T: Real>(
    problem: &QuadraticProblem<T>,
    lifted: &LiftedWeights<T>,
    beta: T,
) -> Result<LocalNewtonReport<T>> {
    let gains = GainSet::local_newton(problem, lifted, beta)?;
    let cl = ClosedLoopSystem::assemble(problem, &gains)?;
    let stability = cl.analyze_stability()?;
    let (_, least_squares_residual) = cl.regulator_least_squares()?;

    let control_gamma = T::lit(0.05);
    let control = ClosedLoopSystem::assemble(problem, &GainSet::gradient_tracking(lifted, control_gamma)?)?;
    let control_residual = control.solve_regulator()?.max_residual();

    let n = cl.state_dim();
    let (rest, limit_steps) = cl.iterate_to_rest(DVector::zeros(n), 100_000, T::lit(1e-14));
    let star = problem.optimal_solution();
    let d = problem.dim();
    let limit_error = (0..problem.n_agents())
        .map(|i| (rest.rows(i * d, d) - &star).norm())
        .fold(T::zero(), |a, b| a.max(b));

    Ok(LocalNewtonReport {
        beta,
        stability,
        least_squares_residual,
        control_residual,
        control_gamma,
        limit_error,
        limit_steps,
    })
}

/// Rank of the reachability matrix of `(F, B)`, via the Krylov basis.
pub fn reachability_rank<T: Real>(f: &DMatrix<T>, b: &DMatrix<T>) -> Result<usize> {
    Ok(reachable_subspace(f, b)?.dim())
}

/// Transformed reachable pair `(T1ᵀF0T1, T1ᵀB0)`.
pub fn transformed_reachable_pair<T: Real>(cl: &ClosedLoopSystem<T>) -> (DMatrix<T>, DMatrix<T>) {
    let t1t = cl.t1.columns.transpose();
    (&t1t * &cl.f0 * &cl.t1.columns, t1t * &cl.b0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingebra::{greedy_match_distance, pbh_unreachable_left_kernel, spectrum};
    use crate::netgraph::{Graph, WeightPair};
    use nalgebra::{dmatrix, dvector};

    fn p3_setup(seed: u64) -> (QuadraticProblem<f64>, LiftedWeights<f64>) {
        let w = WeightPair::metropolis(&Graph::path(3).unwrap()).unwrap();
        let p = QuadraticProblem::random(3, 2, 2, seed).unwrap();
        (p, w.lift(2))
    }

    #[test]
    fn gt_gains_structure() {
        let (_, lifted) = p3_setup(1);
        let g = GainSet::gradient_tracking(&lifted, 0.1).unwrap();
        assert_eq!(g.k_y, DMatrix::identity(6, 6) * -0.1);
        assert_eq!(g.k_z, g.k_y);
        assert_eq!(g.b_x, DMatrix::zeros(6, 6));
        assert_eq!(g.phi, lifted.a_tilde);
        assert_eq!(g.k_x, lifted.a);
        assert!(max_abs(&(lifted.ones.transpose() * &g.phi - lifted.ones.transpose())) <= 1e-12);
        assert!(GainSet::gradient_tracking(&lifted, 0.0).is_err());
        assert!(GainSet::gradient_tracking(&lifted, -1.0).is_err());
    }

    #[test]
    fn diag_gains() {
        let w = WeightPair::metropolis(&Graph::complete(2).unwrap()).unwrap();
        let lifted = w.lift(1);
        let g = GainSet::gradient_tracking_diag(&lifted, &dmatrix![0.05, 0.0; 0.0, 0.1]).unwrap();
        assert_eq!(g.k_y, dmatrix![-0.05, 0.0; 0.0, -0.1]);
        let scalar = GainSet::gradient_tracking(&lifted, 0.1).unwrap();
        let same = GainSet::gradient_tracking_diag(&lifted, &(DMatrix::identity(2, 2) * 0.1)).unwrap();
        assert_eq!(scalar.k_y, same.k_y);
        assert!(GainSet::gradient_tracking_diag(&lifted, &dmatrix![0.0, 0.0; 0.0, 0.1]).is_err());
        assert!(GainSet::gradient_tracking_diag(&lifted, &dmatrix![0.1, 0.01; 0.0, 0.1]).is_err());
    }

    #[test]
    fn assembly_blocks_and_split() {
        let (p, lifted) = p3_setup(3);
        let gains = GainSet::gradient_tracking(&lifted, 0.1).unwrap();
        let cl = ClosedLoopSystem::assemble(&p, &gains).unwrap();
        let top_left = cl.f.view((0, 0), (6, 6)).clone_owned();
        assert!(max_abs(&(top_left - (&gains.k_x + &gains.k_y * p.c_block()))) <= 1e-15);
        assert!(max_abs(&(cl.recomposed() - &cl.f)) <= 1e-12);
        let t = stack_columns(&cl.t1.columns, &cl.t2.columns);
        assert!(max_abs(&(t.transpose() * &t - DMatrix::identity(12, 12))) <= 1e-12);
    }

    fn asymmetric_setup(seed: u64) -> (QuadraticProblem<f64>, LiftedWeights<f64>) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::random_connected(4, 0.4, &mut rng).unwrap();
        let w = WeightPair::random_normalized(&g, &mut rng).unwrap();
        (QuadraticProblem::random(4, 2, 2, seed).unwrap(), w.lift(2))
    }

    #[test]
    fn open_loop_spectrum_is_union() {
        let (p, lifted) = asymmetric_setup(4);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.1).unwrap()).unwrap();
        let s0 = spectrum(&cl.f0).unwrap();
        let mut union = spectrum(&lifted.a).unwrap().eigenvalues;
        union.extend(spectrum(&lifted.a_tilde).unwrap().eigenvalues);
        assert!(greedy_match_distance(&s0.eigenvalues, &union).unwrap() <= 1e-8);
        assert_eq!(s0.cluster_size(Complex::new(1.0, 0.0), 1e-7), 4);
    }

    #[test]
    fn open_loop_spectrum_with_shared_weights_is_defective() {
        // A = Ã doubles every eigenvalue of F0 into a Jordan pair, so the
        // computed values only agree to about the square root of epsilon.
        let (p, lifted) = p3_setup(4);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.1).unwrap()).unwrap();
        let s0 = spectrum(&cl.f0).unwrap();
        let mut union = spectrum(&lifted.a).unwrap().eigenvalues;
        union.extend(spectrum(&lifted.a_tilde).unwrap().eigenvalues);
        assert!(greedy_match_distance(&s0.eigenvalues, &union).unwrap() <= 1e-6);
        assert_eq!(s0.cluster_size(Complex::new(1.0, 0.0), 1e-7), 4);
    }

    #[test]
    fn reachability_deficiency_is_d() {
        let (p, lifted) = p3_setup(5);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.1).unwrap()).unwrap();
        assert_eq!(cl.reachable.dim(), 12 - 2);
        assert!(cl.t1.distance_of(&cl.reachable.columns) <= 1e-9);
        let kernel = pbh_unreachable_left_kernel(&cl.f0, &cl.b0).unwrap();
        assert_eq!(kernel.dim(), 2);
        assert!(kernel.distance_of(&cl.t2.columns) <= 1e-9);
        assert!(cl.t2.distance_of(&kernel.columns) <= 1e-9);
        let (fi, bi) = transformed_reachable_pair(&cl);
        assert_eq!(reachability_rank(&fi, &bi).unwrap(), 10);
    }

    #[test]
    fn left_eigenvectors_of_open_loop() {
        let (p, lifted) = asymmetric_setup(6);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.1).unwrap()).unwrap();
        let v11 = crate::lingebra::left_null_space(&(&lifted.a - DMatrix::identity(8, 8))).columns;
        assert_eq!(v11.ncols(), 2);
        let v1 = stack_rows(&v11, &DMatrix::zeros(8, 2));
        let v2 = stack_rows(&DMatrix::zeros(8, 2), &lifted.ones);
        assert!(max_abs(&(v1.transpose() * &cl.f0 - v1.transpose())) <= 1e-9);
        assert!(max_abs(&(v2.transpose() * &cl.f0 - v2.transpose())) <= 1e-9);
    }

    #[test]
    fn small_gamma_is_admissible_and_external_block_identity() {
        let (p, lifted) = p3_setup(7);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.02).unwrap()).unwrap();
        let r = cl.analyze_stability().unwrap();
        assert!(r.admissible && r.v_invariant && r.internally_stable && r.externally_antistable);
        assert!(max_abs(&(r.external_block.clone() - DMatrix::identity(2, 2))) <= 1e-12);
        assert_eq!(r.unreachable_dim, 2);
    }

    #[test]
    fn huge_gamma_is_not_admissible() {
        let (p, lifted) = p3_setup(7);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 1e3).unwrap()).unwrap();
        let r = cl.analyze_stability().unwrap();
        assert!(!r.admissible);
        assert!(!r.internally_stable);
        assert!(r.v_invariant);
    }

    #[test]
    fn regulator_closed_form() {
        let (p, lifted) = p3_setup(8);
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&lifted, 0.05).unwrap()).unwrap();
        let reg = cl.solve_regulator().unwrap();
        assert!(reg.max_residual() <= 1e-10);
        assert!(reg.tracker_sum <= 1e-10);
        assert!(reg.p_norm <= 1e-10);
        let (x_eq, z_eq) = reg.equilibrium(p.theta0());
        let state = stack_rows(&DMatrix::from_column_slice(6, 1, x_eq.as_slice()), &DMatrix::from_column_slice(6, 1, z_eq.as_slice()));
        let state = state.column(0).clone_owned();
        assert!((cl.step(&state) - &state).amax() <= 1e-9);
        let star = p.optimal_solution();
        for i in 0..3 {
            assert!((x_eq.rows(2 * i, 2) - &star).amax() <= 1e-12);
        }
    }

    #[test]
    fn regulator_identity_problem() {
        let p = QuadraticProblem::new(vec![dmatrix![1.0]], vec![dmatrix![1.0]], dvector![5.0]).unwrap();
        let w = WeightPair::metropolis(&Graph::new(1, &[]).unwrap()).unwrap();
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&w.lift(1), 0.1).unwrap()).unwrap();
        let reg = cl.solve_regulator().unwrap();
        assert_eq!(reg.pi_x, dmatrix![1.0]);
        assert_eq!(reg.pi_z, dmatrix![0.0]);
        let (x, z) = reg.equilibrium(p.theta0());
        assert_eq!((x[0], z[0]), (5.0, 0.0));
    }

    #[test]
    fn regulator_two_agent_equilibrium() {
        let p = QuadraticProblem::new(vec![dmatrix![2.0], dmatrix![1.0]], vec![dmatrix![1.0], dmatrix![0.0]], dvector![3.0])
            .unwrap();
        let w = WeightPair::metropolis(&Graph::complete(2).unwrap()).unwrap();
        let cl = ClosedLoopSystem::assemble(&p, &GainSet::gradient_tracking(&w.lift(1), 0.1).unwrap()).unwrap();
        let (x, _) = cl.solve_regulator().unwrap().equilibrium(p.theta0());
        assert!((x - dvector![2.0, 2.0]).amax() <= 1e-14);
    }

    #[test]
    fn regulator_refuses_mismatched_gains() {
        let (p, lifted) = p3_setup(9);
        let gains = GainSet::local_newton(&p, &lifted, 0.5).unwrap();
        let cl = ClosedLoopSystem::assemble(&p, &gains).unwrap();
        assert!(matches!(cl.solve_regulator(), Err(Error::GainMismatch(_))));
    }

    #[test]
    fn local_newton_report() {
        let (p, lifted) = p3_setup(10);
        let r = local_newton_counterexample(&p, &lifted, 0.5).unwrap();
        assert!(r.stability.internally_stable);
        assert!(r.least_squares_residual > 1e-3);
        assert!(r.control_residual <= 1e-10);
        assert!(r.limit_error > 1e-3);
    }

    #[test]
    fn critical_stepsize_scalar_agent() {
        // N = 1: F = [[1 − γc, −γ], [0, 1]], admissible iff |1 − γc| < 1.
        let c = 2.5_f64;
        let p = QuadraticProblem::new(vec![dmatrix![c]], vec![dmatrix![1.0]], dvector![1.0]).unwrap();
        let lifted = WeightPair::metropolis(&Graph::new(1, &[]).unwrap()).unwrap().lift(1);
        let s = find_critical_stepsize(&p, &lifted, 10.0).unwrap();
        assert!((s.gamma_star - 2.0 / c).abs() <= 1e-4);
        assert!(s.interval_pattern && !s.hi_admissible);
        assert!(gt_admissible(&p, &lifted, 0.5 * s.gamma_star).unwrap());
        assert!(!gt_admissible(&p, &lifted, s.gamma_star * (1.0 + 1e-3)).unwrap());
    }

    #[test]
    fn critical_stepsize_flags_admissible_upper_bracket() {
        let (p, lifted) = p3_setup(11);
        let s = find_critical_stepsize(&p, &lifted, 1e-4).unwrap();
        assert!(s.hi_admissible);
        assert_eq!(s.gamma_star, 1e-4);
    }
}
