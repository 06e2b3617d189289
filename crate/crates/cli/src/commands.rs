use std::fs::{self, File};
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use gtlab_core::checks::{self, CheckStatus, SuiteInput};
use gtlab_core::closedloop::{self, ClosedLoopSystem};
use gtlab_core::io::{self, GraphFile, ProblemFile, WeightsFile};
use gtlab_core::simulator::{self, Form, InitialEstimate, RunOptions, Trajectory};
use gtlab_core::{Error, GainSet, Graph, InitSpec, QuadraticProblem, Stepsize, WeightPair};
use rayon::prelude::*;

use crate::config::{Experiment, GainSpec};
use crate::report::{self, *};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_ANALYSIS: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;
pub const EXIT_REGULATOR_INFEASIBLE: u8 = 5;

const REGULATOR_TOL: f64 = 1e-10;
/// Final error above which a run from a nonzero tracker sum is called biased.
const BIAS_THRESHOLD: f64 = 1e-3;

fn prepare_out(e: &Experiment) -> Result<()> {
    fs::create_dir_all(&e.out).with_context(|| format!("creating {}", e.out.display()))
}

fn gains_label(g: &GainSpec) -> String {
    match g {
        GainSpec::Gamma(v) => format!("gradient tracking, gamma = {v}"),
        GainSpec::Lambda(l) => format!("gradient tracking, diagonal Lambda ({} entries)", l.len()),
        GainSpec::LocalNewton { beta } => format!("K_z = 0, K_y = -{beta} C^-1"),
    }
}

pub fn gen(e: &Experiment) -> Result<u8> {
    prepare_out(e)?;
    io::write_json(&e.out.join("problem.json"), &ProblemFile::from_problem(&e.problem))?;
    io::write_json(&e.out.join("weights.json"), &WeightsFile::from_weights(&e.weights))?;
    io::write_json(&e.out.join("graph.json"), &GraphFile::from_graph(&e.graph))?;
    let r = GenReport {
        n_agents: e.problem.n_agents(),
        d: e.problem.dim(),
        p: e.problem.offset_dim(),
        edges: GraphFile::from_graph(&e.graph).edges,
        theta_star: e.problem.optimal_solution().iter().copied().collect(),
        sigma: rows(e.problem.sigma()),
        a: rows(&e.weights.a),
        a_tilde: rows(&e.weights.a_tilde),
    };
    report::write(&e.out, "gen_report.json", &r)?;
    report::print_section("generated instance", &r)?;
    Ok(EXIT_OK)
}

pub fn analyze(e: &Experiment) -> Result<u8> {
    prepare_out(e)?;
    let gains = e.gains()?;
    let cl = ClosedLoopSystem::assemble(&e.problem, &gains)?;
    let stability = cl.analyze_stability()?;
    let mismatch = gains.gain_mismatch();
    let regulator = match cl.solve_regulator() {
        Ok(sol) => RegulatorBlock::solved(&sol, mismatch, REGULATOR_TOL),
        Err(Error::GainMismatch(_)) => {
            let (_, residual) = cl.regulator_least_squares()?;
            RegulatorBlock {
                status: RegulatorStatus::Infeasible,
                gain_mismatch: mismatch,
                fixed_point_residual: None,
                output_residual: None,
                complement_residual: None,
                p_norm: None,
                tracker_sum: None,
                least_squares_residual: Some(residual),
            }
        }
        Err(err) => return Err(err.into()),
    };
    let exit_code = if !stability.admissible {
        EXIT_ANALYSIS
    } else {
        match regulator.status {
            RegulatorStatus::Solved => EXIT_OK,
            RegulatorStatus::ResidualsTooLarge => EXIT_ANALYSIS,
            RegulatorStatus::Infeasible => EXIT_REGULATOR_INFEASIBLE,
        }
    };
    let r = AnalysisReport {
        gains: gains_label(&e.config.gains),
        stability: StabilityBlock::from(&stability),
        reachability: ReachabilityBlock {
            state_dim: cl.state_dim(),
            reachable_dim: stability.reachable_dim,
            unreachable_dim: stability.unreachable_dim,
        },
        regulator,
        exit_code,
    };
    report::write(&e.out, "analysis.json", &r)?;
    report::print_section("stability", &r.stability)?;
    report::print_section("reachability", &r.reachability)?;
    report::print_section("regulator", &r.regulator)?;
    println!("admissible: {}, exit code {exit_code}", r.stability.admissible);
    Ok(exit_code)
}

fn write_csvs(e: &Experiment, traj: Option<&Trajectory<f64>>) -> Result<()> {
    let mut states = BufWriter::new(File::create(e.out.join("trajectory.csv"))?);
    let mut summary = BufWriter::new(File::create(e.out.join("summary.csv"))?);
    match traj {
        Some(t) => {
            t.write_states_csv(&mut states)?;
            t.write_summary_csv(&mut summary)?;
        }
        None => {
            simulator::write_states_header(&mut states, e.problem.dim())?;
            simulator::write_summary_header(&mut summary)?;
        }
    }
    states.flush()?;
    summary.flush()?;
    Ok(())
}

fn local_newton_unsupported(e: &Experiment) -> anyhow::Error {
    anyhow::anyhow!(
        "gains '{}' have no distributed gradient tracking form; use `analyze` for this configuration",
        gains_label(&e.config.gains)
    )
}

pub fn simulate(e: &Experiment) -> Result<u8> {
    prepare_out(e)?;
    let stepsize = e.stepsize().ok_or_else(|| local_newton_unsupported(e))?;
    let (_, z0) = e.init.resolve(&e.problem)?;
    let d = e.problem.dim();
    let imbalance = (0..e.problem.n_agents())
        .fold(nalgebra::DVector::zeros(d), |acc, i| acc + z0.rows(i * d, d))
        .norm();
    let noise_level = e.config.noise.as_ref().map(|n| n.level);

    if e.config.t_max == 0 {
        write_csvs(e, None)?;
        let r = SimulationReport {
            status: "EMPTY".into(),
            steps: 0,
            final_optimality_error: None,
            final_consensus_error: None,
            max_conservation_residual: None,
            initial_tracker_imbalance: imbalance,
            noise_level,
            exit_code: EXIT_OK,
        };
        report::write(&e.out, "simulation.json", &r)?;
        report::print_section("simulation", &r)?;
        return Ok(EXIT_OK);
    }

    let result = match &e.config.noise {
        Some(n) => simulator::noise_probe(&e.problem, &e.weights, &stepsize, &e.init, n.level, e.config.t_max, n.seed),
        None => {
            let options = RunOptions { t_max: e.config.t_max, stop_tol: e.config.stop_tol, form: Form::Z };
            simulator::run(&e.problem, &e.weights, &stepsize, &e.init, &options)
        }
    };
    let traj = match result {
        Ok(t) => t,
        Err(Error::Diverged { last_good_step, norm }) => {
            write_csvs(e, None)?;
            let r = SimulationReport {
                status: "DIVERGED".into(),
                steps: last_good_step,
                final_optimality_error: None,
                final_consensus_error: None,
                max_conservation_residual: None,
                initial_tracker_imbalance: imbalance,
                noise_level,
                exit_code: EXIT_DIVERGED,
            };
            report::write(&e.out, "simulation.json", &r)?;
            report::print_section("simulation", &r)?;
            eprintln!("error: diverged after step {last_good_step} (|x| = {norm:.3e})");
            return Ok(EXIT_DIVERGED);
        }
        Err(err) => return Err(err.into()),
    };
    write_csvs(e, Some(&traj))?;

    let final_error = traj.final_optimality_error();
    let (status, exit_code) = if noise_level.is_some() {
        ("NOISY", EXIT_OK)
    } else if final_error <= e.config.stop_tol {
        ("CONVERGED", EXIT_OK)
    } else if imbalance > 1e-12 && final_error > BIAS_THRESHOLD {
        ("BIASED", EXIT_ANALYSIS)
    } else {
        ("NOT_CONVERGED", EXIT_ANALYSIS)
    };
    let r = SimulationReport {
        status: status.into(),
        steps: traj.final_step(),
        final_optimality_error: Some(final_error),
        final_consensus_error: traj.consensus_error.last().copied(),
        max_conservation_residual: Some(traj.conservation_residual.iter().copied().fold(0.0, f64::max)),
        initial_tracker_imbalance: imbalance,
        noise_level,
        exit_code,
    };
    report::write(&e.out, "simulation.json", &r)?;
    report::print_section("simulation", &r)?;
    Ok(exit_code)
}

fn sweep_point(e: &Experiment, gamma: f64) -> Result<SweepRow> {
    let lifted = e.weights.lift(e.problem.dim());
    let cl = ClosedLoopSystem::assemble(&e.problem, &GainSet::gradient_tracking(&lifted, gamma)?)?;
    let stability = cl.analyze_stability()?;
    let options = RunOptions { t_max: e.config.sweep.t_max, stop_tol: e.config.stop_tol, form: Form::Z };
    let (final_error, status) = match simulator::run(&e.problem, &e.weights, &Stepsize::Scalar(gamma), &e.init, &options) {
        Ok(t) => {
            let err = t.final_optimality_error();
            (Some(err), if err <= e.config.stop_tol { "converged" } else { "not_converged" })
        }
        Err(Error::Diverged { .. }) => (None, "diverged"),
        Err(err) => return Err(err.into()),
    };
    Ok(SweepRow {
        gamma,
        subdominant_radius: stability.subdominant_radius,
        admissible: stability.admissible,
        final_error,
        status: status.into(),
    })
}

pub fn sweep(e: &Experiment) -> Result<u8> {
    prepare_out(e)?;
    let lifted = e.weights.lift(e.problem.dim());
    let search = closedloop::find_critical_stepsize(&e.problem, &lifted, e.config.sweep.bracket_hi)?;
    let grid: Vec<f64> = match &e.config.sweep.grid {
        Some(g) => g.clone(),
        None => [0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.01, 1.1, 1.5, 2.0].iter().map(|f| f * search.gamma_star).collect(),
    };
    let rows: Vec<SweepRow> = grid.par_iter().map(|g| sweep_point(e, *g)).collect::<Result<_>>()?;

    let mut csv = BufWriter::new(File::create(e.out.join("sweep.csv"))?);
    writeln!(csv, "gamma,subdominant_radius,admissible,final_error,status")?;
    for r in &rows {
        let err = r.final_error.map_or_else(String::new, |v| format!("{v:.16e}"));
        writeln!(csv, "{:.16e},{:.16e},{},{err},{}", r.gamma, r.subdominant_radius, r.admissible, r.status)?;
    }
    csv.flush()?;

    let r = SweepReport {
        gamma_star: search.gamma_star,
        gamma_reject: search.gamma_reject,
        bracket_hi: search.bracket_hi,
        hi_admissible: search.hi_admissible,
        interval_pattern: search.interval_pattern,
        bisection_steps: search.bisection_steps,
        rows,
    };
    report::write(&e.out, "sweep.json", &r)?;
    println!("== stepsize threshold ==");
    println!("gamma_star = {:.9} (bisection tolerance {:.0e})", r.gamma_star, closedloop::BISECTION_TOL);
    if r.hi_admissible {
        println!("note: bracket_hi is itself admissible; the threshold may be larger");
    }
    println!("{:>14} {:>12} {:>10} {:>14} status", "gamma", "radius", "admissible", "final_error");
    for row in &r.rows {
        let err = row.final_error.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        println!("{:>14.6e} {:>12.6} {:>10} {:>14} {}", row.gamma, row.subdominant_radius, row.admissible, err, row.status);
    }
    Ok(EXIT_OK)
}

fn suite(label: &str, input: &SuiteInput<'_, f64>) -> Vec<VerifyEntry> {
    checks::instance_suite(input)
        .into_iter()
        .map(|outcome| VerifyEntry { instance: label.to_string(), outcome })
        .collect()
}

pub fn verify(e: &Experiment) -> Result<u8> {
    prepare_out(e)?;
    let v = &e.config.verify;
    let fallback = Stepsize::Scalar(v.gamma);
    let stepsize = e.stepsize().unwrap_or(fallback);
    let gains = e.gains()?;
    let configured = SuiteInput {
        problem: &e.problem,
        weights: &e.weights,
        gains: &gains,
        stepsize: &stepsize,
        init: &e.init,
        steps: v.steps,
        seed: v.seed,
    };
    let mut entries = suite("configured", &configured);

    let random: Vec<Vec<VerifyEntry>> = (0..v.random_instances as u64)
        .into_par_iter()
        .map(|k| -> Result<Vec<VerifyEntry>> {
            let seed = v.seed.wrapping_mul(1_000_003).wrapping_add(k);
            let n = 3 + (k % 4) as usize;
            let d = 1 + (k % 2) as usize;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let graph = Graph::random_connected(n, 0.3, &mut rng)?;
            let weights = WeightPair::random_normalized(&graph, &mut rng)?;
            let problem = QuadraticProblem::random(n, d, 2, seed)?;
            let lifted = weights.lift(d);
            // Half the threshold keeps the iterates bounded, so absolute tolerances apply.
            let gamma_star = closedloop::find_critical_stepsize(&problem, &lifted, e.config.sweep.bracket_hi)?.gamma_star;
            let gamma = v.gamma.min(0.5 * gamma_star);
            let step = Stepsize::Scalar(gamma);
            let gains = GainSet::gradient_tracking(&lifted, gamma)?;
            let init = InitSpec { x0: InitialEstimate::Random { seed }, ..InitSpec::default() };
            let input = SuiteInput {
                problem: &problem,
                weights: &weights,
                gains: &gains,
                stepsize: &step,
                init: &init,
                steps: v.steps,
                seed,
            };
            Ok(suite(&format!("random-{k}"), &input))
        })
        .collect::<Result<_>>()?;
    entries.extend(random.into_iter().flatten());

    let count = |s: CheckStatus| entries.iter().filter(|c| c.outcome.status == s).count();
    let r = VerifyReport {
        passed: count(CheckStatus::Pass),
        failed: count(CheckStatus::Fail),
        expected_infeasible: count(CheckStatus::ExpectedInfeasible),
        checks: entries,
    };
    report::write(&e.out, "verify.json", &r)?;
    for c in &r.checks {
        let tag = match c.outcome.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::ExpectedInfeasible => "XINF",
        };
        println!(
            "{tag} {:<12} {:<32} value {:.3e} tol {:.0e}  {}",
            c.instance, c.outcome.name, c.outcome.value, c.outcome.tolerance, c.outcome.detail
        );
    }
    println!("verify: {} passed, {} failed, {} expected infeasible", r.passed, r.failed, r.expected_infeasible);
    if r.failed > 0 {
        let failures: Vec<String> =
            r.checks.iter().filter(|c| !c.outcome.passed()).map(|c| format!("{}/{}", c.instance, c.outcome.name)).collect();
        eprintln!("failed properties: {}", failures.join(", "));
        return Ok(EXIT_ANALYSIS);
    }
    Ok(EXIT_OK)
}
