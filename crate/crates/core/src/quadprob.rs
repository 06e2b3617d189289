//! Ensembles of local quadratic costs `f_i(θ) = ½(θ − Γ_iθ₀)ᵀ C_i (θ − Γ_iθ₀)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::lingebra::{block_diagonal, solve_linear, stack_rows};
use crate::{Error, Real, Result};

/// Minimum eigenvalue a local curvature matrix must exceed.
pub const SPD_TOL: f64 = 1e-10;
/// Absolute symmetry tolerance, scaled by `max(1, max|C_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem<T: Real> {
    c: Vec<DMatrix<T>>,
    gamma: Vec<DMatrix<T>>,
    theta0: DVector<T>,
    q: Vec<DMatrix<T>>,
    sigma: DMatrix<T>,
    c_block: DMatrix<T>,
    q_stacked: DMatrix<T>,
}

impl<T: Real> QuadraticProblem<T> {
    /// Validates the data and precomputes `Q_i = −C_iΓ_i`, the block forms
    /// and `Σ = (Σ_i C_i)⁻¹ Σ_i C_iΓ_i`.
    pub fn new(c: Vec<DMatrix<T>>, gamma: Vec<DMatrix<T>>, theta0: DVector<T>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::Dimension("at least one agent is required".into()));
        }
        if gamma.len() != c.len() {
            return Err(Error::Dimension(format!("{} curvature matrices but {} offset maps", c.len(), gamma.len())));
        }
        let d = c[0].nrows();
        let p = theta0.len();
        if d == 0 || p == 0 {
            return Err(Error::Dimension("decision and offset dimensions must be positive".into()));
        }
        for (i, (ci, gi)) in c.iter().zip(&gamma).enumerate() {
            if ci.shape() != (d, d) {
                return Err(Error::Dimension(format!("C_{i} is {:?}, expected ({d}, {d})", ci.shape())));
            }
            if gi.shape() != (d, p) {
                return Err(Error::Dimension(format!("Gamma_{i} is {:?}, expected ({d}, {p})", gi.shape())));
            }
            check_spd(i, ci)?;
        }

        let q: Vec<DMatrix<T>> = c.iter().zip(&gamma).map(|(ci, gi)| -(ci * gi)).collect();
        let c_sum = c.iter().fold(DMatrix::zeros(d, d), |acc, ci| acc + ci);
        let cg_sum = q.iter().fold(DMatrix::zeros(d, p), |acc, qi| acc - qi);
        let sigma = solve_linear(&c_sum, &cg_sum)?;
        let c_block = block_diagonal(&c);
        let q_stacked = q.iter().skip(1).fold(q[0].clone(), |acc, qi| stack_rows(&acc, qi));
        Ok(Self { c, gamma, theta0, q, sigma, c_block, q_stacked })
    }

    /// Seeded random instance: `C_i = M_iM_iᵀ + d·I` with standard-normal
    /// `M_i`; `Γ_i` and `θ₀` standard normal.
    pub fn random(n_agents: usize, d: usize, p: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize| {
            DMatrix::<T>::from_fn(rows, cols, |_, _| T::lit(StandardNormal.sample(&mut rng)))
        };
        let mut c = Vec::with_capacity(n_agents);
        let mut gamma = Vec::with_capacity(n_agents);
        for _ in 0..n_agents {
            let m = normal(d, d);
            let ci = &m * m.transpose() + DMatrix::identity(d, d) * T::from_usize(d).unwrap();
            c.push(ci);
            gamma.push(normal(d, p));
        }
        let theta0 = normal(p, 1).column(0).clone_owned();
        Self::new(c, gamma, theta0)
    }

    pub fn n_agents(&self) -> usize {
        self.c.len()
    }

    pub fn dim(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn offset_dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn curvature(&self, i: usize) -> &DMatrix<T> {
        &self.c[i]
    }

    pub fn curvatures(&self) -> &[DMatrix<T>] {
        &self.c
    }

    pub fn offset_map(&self, i: usize) -> &DMatrix<T> {
        &self.gamma[i]
    }

    pub fn offset_maps(&self) -> &[DMatrix<T>] {
        &self.gamma
    }

    pub fn q(&self, i: usize) -> &DMatrix<T> {
        &self.q[i]
    }

    pub fn theta0(&self) -> &DVector<T> {
        &self.theta0
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    /// `diag(C_1, …, C_N)`.
    pub fn c_block(&self) -> &DMatrix<T> {
        &self.c_block
    }

    /// `col(Q_1, …, Q_N)`.
    pub fn q_stacked(&self) -> &DMatrix<T> {
        &self.q_stacked
    }

    /// `θ* = Σθ₀`.
    pub fn optimal_solution(&self) -> DVector<T> {
        &self.sigma * &self.theta0
    }

    /// Constant term `Q_iθ₀` of the local gradient.
    pub fn gradient_offset(&self, i: usize) -> DVector<T> {
        &self.q[i] * &self.theta0
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.n_agents() {
            return Err(Error::AgentOutOfRange { index: i, n_agents: self.n_agents() });
        }
        Ok(())
    }

    fn check_len(&self, v: &DVector<T>, len: usize, what: &str) -> Result<()> {
        if v.len() != len {
            return Err(Error::Dimension(format!("{what} has length {}, expected {len}", v.len())));
        }
        Ok(())
    }

    /// `∇f_i(x_i) = C_i x_i + Q_iθ₀`.
    pub fn local_gradient(&self, i: usize, x_i: &DVector<T>) -> Result<DVector<T>> {
        self.check_agent(i)?;
        self.check_len(x_i, self.dim(), "x_i")?;
        Ok(&self.c[i] * x_i + self.gradient_offset(i))
    }

    /// `y = Cx + Qθ₀` for the stacked estimate `x`.
    pub fn stacked_output(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_len(x, self.n_agents() * self.dim(), "x")?;
        Ok(&self.c_block * x + &self.q_stacked * &self.theta0)
    }

    pub fn local_cost(&self, i: usize, theta: &DVector<T>) -> Result<T> {
        self.check_agent(i)?;
        self.check_len(theta, self.dim(), "theta")?;
        let e = theta - &self.gamma[i] * &self.theta0;
        Ok(e.dot(&(&self.c[i] * &e)) * T::lit(0.5))
    }

    pub fn total_cost(&self, theta: &DVector<T>) -> Result<T> {
        (0..self.n_agents()).try_fold(T::zero(), |acc, i| Ok(acc + self.local_cost(i, theta)?))
    }

    /// `Σ_i ∇f_i(θ)`.
    pub fn total_gradient(&self, theta: &DVector<T>) -> Result<DVector<T>> {
        (0..self.n_agents()).try_fold(DVector::zeros(self.dim()), |acc, i| Ok(acc + self.local_gradient(i, theta)?))
    }
}

fn check_spd<T: Real>(index: usize, c: &DMatrix<T>) -> Result<()> {
    let scale = c.iter().fold(T::one(), |a, v| a.max(v.abs()));
    let asymmetry = crate::lingebra::max_abs(&(c - c.transpose()));
    if asymmetry > T::lit(SYMMETRY_TOL) * scale {
        return Err(Error::NotSymmetric { index, asymmetry: asymmetry.as_f64() });
    }
    let min_eigenvalue = SymmetricEigen::new(c.clone())
        .eigenvalues
        .iter()
        .fold(T::max_value().unwrap(), |a, v| a.min(*v));
    if min_eigenvalue <= T::lit(SPD_TOL) {
        return Err(Error::NotPositiveDefinite { index, min_eigenvalue: min_eigenvalue.as_f64() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar(v: f64) -> DMatrix<f64> {
        dmatrix![v]
    }

    fn identity_problem() -> QuadraticProblem<f64> {
        QuadraticProblem::new(vec![scalar(1.0)], vec![scalar(1.0)], dvector![5.0]).unwrap()
    }

    fn two_agent() -> QuadraticProblem<f64> {
        QuadraticProblem::new(vec![scalar(2.0), scalar(1.0)], vec![scalar(1.0), scalar(0.0)], dvector![3.0]).unwrap()
    }

    #[test]
    fn identity_problem_solution() {
        let p = identity_problem();
        assert_eq!(p.sigma()[(0, 0)], 1.0);
        assert_eq!(p.optimal_solution()[0], 5.0);
        assert_eq!(p.total_cost(&dvector![5.0]).unwrap(), 0.0);
    }

    #[test]
    fn two_agent_solution_matches_scalar_calculus() {
        // f₁ + f₂ = (θ − 3)² + θ²/2, derivative 3θ − 6 vanishes at θ = 2.
        let p = two_agent();
        assert_abs_diff_eq!(p.sigma()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.optimal_solution()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.total_cost(&dvector![2.0]).unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_invalid_curvature() {
        let err = QuadraticProblem::new(vec![dmatrix![1.0, 2.0; 0.0, 1.0]], vec![DMatrix::identity(2, 1)], dvector![1.0]);
        assert!(matches!(err, Err(Error::NotSymmetric { index: 0, .. })));
        let err = QuadraticProblem::new(vec![dmatrix![1.0, 2.0; 2.0, 1.0]], vec![DMatrix::identity(2, 1)], dvector![1.0]);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { index: 0, .. })));
        let err = QuadraticProblem::new(vec![scalar(1.0)], vec![DMatrix::identity(1, 2)], dvector![1.0]);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn local_gradient_values() {
        let p = QuadraticProblem::new(vec![scalar(2.0)], vec![scalar(1.0)], dvector![3.0]).unwrap();
        assert_eq!(p.local_gradient(0, &dvector![5.0]).unwrap()[0], 4.0);
        let q = QuadraticProblem::<f64>::random(3, 2, 2, 11).unwrap();
        for i in 0..3 {
            let center = q.offset_map(i) * q.theta0();
            assert!(q.local_gradient(i, &center).unwrap().norm() < 1e-12);
        }
        assert!(matches!(p.local_gradient(1, &dvector![0.0]), Err(Error::AgentOutOfRange { .. })));
    }

    #[test]
    fn local_gradient_matches_finite_differences() {
        let p = QuadraticProblem::<f64>::random(4, 3, 2, 5).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            let x = dvector![0.3, -1.2, 0.7];
            let g = p.local_gradient(i, &x).unwrap();
            for k in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (p.local_cost(i, &xp).unwrap() - p.local_cost(i, &xm).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "agent {i} coord {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn stacked_output_consistency() {
        let p = QuadraticProblem::<f64>::random(3, 2, 2, 2).unwrap();
        let x = DVector::from_fn(6, |k, _| (k as f64) * 0.37 - 1.0);
        let y = p.stacked_output(&x).unwrap();
        for i in 0..3 {
            let gi = p.local_gradient(i, &x.rows(2 * i, 2).clone_owned()).unwrap();
            assert!((y.rows(2 * i, 2) - gi).amax() <= 1e-14);
        }
        // Gradients at the consensual optimum sum to zero.
        let star = p.optimal_solution();
        let x_star = DVector::from_fn(6, |k, _| star[k % 2]);
        let y = p.stacked_output(&x_star).unwrap();
        let sum = (0..3).fold(DVector::zeros(2), |acc: DVector<f64>, i| acc + y.rows(2 * i, 2));
        assert!(sum.norm() <= 1e-10);
        let single = identity_problem();
        assert_eq!(single.stacked_output(&dvector![2.0]).unwrap(), single.local_gradient(0, &dvector![2.0]).unwrap());
    }

    #[test]
    fn random_problem_is_deterministic_and_valid() {
        let a = QuadraticProblem::<f64>::random(3, 2, 2, 42).unwrap();
        let b = QuadraticProblem::<f64>::random(3, 2, 2, 42).unwrap();
        assert_eq!(a, b);
        for c in a.curvatures() {
            let min = SymmetricEigen::new(c.clone()).eigenvalues.min();
            assert!(min > 0.5 * 2.0);
        }
    }

    #[test]
    fn sigma_invariant_and_optimality() {
        for seed in 0..10 {
            let p = QuadraticProblem::<f64>::random(4, 2, 3, seed).unwrap();
            let c_sum = p.curvatures().iter().fold(DMatrix::zeros(2, 2), |a, c| a + c);
            let cg = p.curvatures().iter().zip(p.offset_maps()).fold(DMatrix::zeros(2, 3), |a, (c, g)| a + c * g);
            assert!((&c_sum * p.sigma() - cg).amax() <= 1e-10);
            let star = p.optimal_solution();
            assert!(p.total_gradient(&star).unwrap().norm() <= 1e-10);
            let best = p.total_cost(&star).unwrap();
            for k in 0..100 {
                let theta = &star + DVector::from_fn(2, |j, _| ((k * 7 + j * 3) % 11) as f64 * 0.1 - 0.5);
                assert!(best <= p.total_cost(&theta).unwrap() + 1e-12);
            }
        }
    }
}
