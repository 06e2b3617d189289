use gtlab_core::closedloop::{self, ClosedLoopSystem, GainSet};
use gtlab_core::lingebra::{self, greedy_match_distance};
use gtlab_core::netgraph::{Graph, WeightPair};
use gtlab_core::quadprob::QuadraticProblem;
use gtlab_core::simulator::{self, Form, InitSpec, InitialEstimate, RunOptions, Stepsize};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_pair(n: usize, seed: u64) -> WeightPair<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Graph::random_connected(n, 0.3, &mut rng).unwrap();
    WeightPair::random_normalized(&g, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metropolis_is_symmetric_and_doubly_stochastic(n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::random_connected(n, 0.4, &mut rng).unwrap();
        let w = WeightPair::<f64>::metropolis(&g).unwrap();
        prop_assert!((&w.a - w.a.transpose()).amax() <= 1e-15);
        for i in 0..n {
            prop_assert!((w.a.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((w.a.column(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(w.a[(i, j)] > 0.0, g.has_edge(i, j));
            }
        }
    }

    #[test]
    fn normalized_pair_is_row_and_column_stochastic(n in 2usize..8, seed in any::<u64>()) {
        let w = random_pair(n, seed);
        for i in 0..n {
            prop_assert!((w.a.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((w.a_tilde.column(i).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn lifting_commutes_with_products(n in 2usize..6, d in 1usize..4, seed in any::<u64>()) {
        let w = random_pair(n, seed);
        let lifted = w.lift(d);
        let product = (&w.a * &w.a_tilde).kronecker(&DMatrix::identity(d, d));
        prop_assert!((&lifted.a * &lifted.a_tilde - product).amax() <= 1e-14);
    }

    #[test]
    fn optimum_zeroes_total_gradient(n in 1usize..6, d in 1usize..4, p in 1usize..4, seed in any::<u64>()) {
        let prob = QuadraticProblem::<f64>::random(n, d, p, seed).unwrap();
        let g = prob.total_gradient(&prob.optimal_solution()).unwrap();
        let scale = 1.0 + prob.curvatures().iter().map(|c| c.amax()).sum::<f64>();
        prop_assert!(g.amax() <= 1e-10 * scale);
    }

    #[test]
    fn conservation_holds_for_any_column_stochastic_pair(n in 2usize..6, seed in any::<u64>()) {
        let w = random_pair(n, seed);
        let prob = QuadraticProblem::<f64>::random(n, 2, 2, seed).unwrap();
        let init = InitSpec { x0: InitialEstimate::Random { seed }, ..Default::default() };
        let options = RunOptions { t_max: 200, stop_tol: 0.0, form: Form::S };
        // Small stepsize keeps every instance bounded over the horizon.
        let traj = simulator::run(&prob, &w, &Stepsize::Scalar(0.01), &init, &options).unwrap();
        prop_assert!(traj.conservation_residual.iter().all(|r| *r <= 1e-12));
    }
}

#[test]
fn stalling_schur_instance_terminates_and_matches() {
    // Open-loop matrix on which an unbounded Schur iteration never converges.
    let seed = 0x5eed_0000 + 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Graph::random_connected(5, 0.3, &mut rng).unwrap();
    let w = WeightPair::random_normalized(&g, &mut rng).unwrap();
    let prob = QuadraticProblem::random(5, 2, 1, seed).unwrap();
    let cl = ClosedLoopSystem::assemble(&prob, &GainSet::gradient_tracking(&w.lift(2), 0.05).unwrap()).unwrap();
    let f0 = lingebra::spectrum(&cl.f0).unwrap();
    let mut union = lingebra::spectrum(&cl.gains.k_x).unwrap().eigenvalues;
    union.extend(lingebra::spectrum(&cl.gains.phi).unwrap().eigenvalues);
    assert!(greedy_match_distance(&f0.eigenvalues, &union).unwrap() <= 1e-8);
    let trace: f64 = (0..20).map(|i| cl.f0[(i, i)]).sum();
    assert!((f0.sum().re - trace).abs() <= 1e-10);
}

#[test]
fn single_precision_pipeline() {
    let g = Graph::cycle(4).unwrap();
    let w = WeightPair::<f32>::metropolis(&g).unwrap();
    let prob = QuadraticProblem::<f32>::random(4, 2, 2, 3).unwrap();
    // Threshold from the double-precision copy of the same instance.
    let prob64 = QuadraticProblem::<f64>::random(4, 2, 2, 3).unwrap();
    let w64 = WeightPair::<f64>::metropolis(&g).unwrap();
    let gamma_star = closedloop::find_critical_stepsize(&prob64, &w64.lift(2), 2.0).unwrap().gamma_star;
    let gamma = (0.5 * gamma_star) as f32;
    let cl = ClosedLoopSystem::assemble(&prob, &GainSet::gradient_tracking(&w.lift(2), gamma).unwrap()).unwrap();
    assert_eq!(cl.state_dim() - cl.reachable.dim(), 2);
    assert!(cl.analyze_stability().unwrap().admissible);
    let options = RunOptions { t_max: 5000, stop_tol: 1e-4, form: Form::Z };
    let traj = simulator::run(&prob, &w, &Stepsize::Scalar(gamma), &InitSpec::default(), &options).unwrap();
    assert!(traj.final_optimality_error() < 1e-4);
}

#[test]
fn run_is_deterministic() {
    let w = random_pair(5, 42);
    let prob = QuadraticProblem::<f64>::random(5, 2, 2, 42).unwrap();
    let init = InitSpec { x0: InitialEstimate::Random { seed: 1 }, ..Default::default() };
    let options = RunOptions { t_max: 500, stop_tol: 0.0, form: Form::Z };
    let a = simulator::run(&prob, &w, &Stepsize::Scalar(0.05), &init, &options).unwrap();
    let b = simulator::run(&prob, &w, &Stepsize::Scalar(0.05), &init, &options).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_states_csv(&mut ca).unwrap();
    b.write_states_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}
