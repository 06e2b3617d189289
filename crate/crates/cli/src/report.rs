//! Machine-readable report blocks. Field order is fixed by declaration, so
//! identical inputs give byte-identical files.

use std::path::Path;

use anyhow::{Context, Result};
use gtlab_core::checks::CheckOutcome;
use gtlab_core::lingebra::modulus;
use gtlab_core::{RegulatorSolution, StabilityReport};
use nalgebra::DMatrix;
use serde::Serialize;

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    gtlab_core::io::matrix_to_rows(m)
}

#[derive(Debug, Serialize)]
pub struct GenReport {
    pub n_agents: usize,
    pub d: usize,
    pub p: usize,
    pub edges: Vec<[usize; 2]>,
    pub theta_star: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    pub a_tilde: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct StabilityBlock {
    pub admissible: bool,
    pub eigenvalues_inside: usize,
    pub eigenvalues_on_circle: usize,
    pub eigenvalues_outside: usize,
    pub unit_cluster: usize,
    pub unit_deviation: f64,
    pub subdominant_radius: f64,
    pub spectral_radius: f64,
    pub invariance_residual: f64,
    pub v_invariant: bool,
    pub internally_stable: bool,
    pub externally_antistable: bool,
    pub internal_spectral_radius: f64,
    pub external_block: Vec<Vec<f64>>,
    /// `[re, im, |λ|]`, sorted by decreasing modulus.
    pub eigenvalues: Vec<[f64; 3]>,
}

impl From<&StabilityReport> for StabilityBlock {
    fn from(r: &StabilityReport) -> Self {
        Self {
            admissible: r.admissible,
            eigenvalues_inside: r.counts.inside,
            eigenvalues_on_circle: r.counts.on_circle,
            eigenvalues_outside: r.counts.outside,
            unit_cluster: r.unit_cluster,
            unit_deviation: r.unit_deviation,
            subdominant_radius: r.subdominant_radius,
            spectral_radius: r.spectrum.spectral_radius(),
            invariance_residual: r.invariance_residual,
            v_invariant: r.v_invariant,
            internally_stable: r.internally_stable,
            externally_antistable: r.externally_antistable,
            internal_spectral_radius: r.internal_spectrum.spectral_radius(),
            external_block: rows(&r.external_block),
            eigenvalues: r.spectrum.eigenvalues.iter().map(|l| [l.re, l.im, modulus(l)]).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ReachabilityBlock {
    pub state_dim: usize,
    pub reachable_dim: usize,
    pub unreachable_dim: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatorStatus {
    Solved,
    ResidualsTooLarge,
    /// `K_z ≠ K_y`: no optimal equilibrium exists.
    Infeasible,
}

#[derive(Debug, Serialize)]
pub struct RegulatorBlock {
    pub status: RegulatorStatus,
    pub gain_mismatch: f64,
    pub fixed_point_residual: Option<f64>,
    pub output_residual: Option<f64>,
    pub complement_residual: Option<f64>,
    pub p_norm: Option<f64>,
    pub tracker_sum: Option<f64>,
    /// Least-squares residual of the fixed-point and output equations.
    pub least_squares_residual: Option<f64>,
}

impl RegulatorBlock {
    pub fn solved(sol: &RegulatorSolution, mismatch: f64, tol: f64) -> Self {
        let ok = sol.max_residual() <= tol && sol.p_norm <= tol;
        Self {
            status: if ok { RegulatorStatus::Solved } else { RegulatorStatus::ResidualsTooLarge },
            gain_mismatch: mismatch,
            fixed_point_residual: Some(sol.fixed_point_residual),
            output_residual: Some(sol.output_residual),
            complement_residual: Some(sol.complement_residual),
            p_norm: Some(sol.p_norm),
            tracker_sum: Some(sol.tracker_sum),
            least_squares_residual: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub gains: String,
    pub stability: StabilityBlock,
    pub reachability: ReachabilityBlock,
    pub regulator: RegulatorBlock,
    pub exit_code: u8,
}

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub status: String,
    pub steps: usize,
    pub final_optimality_error: Option<f64>,
    pub final_consensus_error: Option<f64>,
    pub max_conservation_residual: Option<f64>,
    pub initial_tracker_imbalance: f64,
    pub noise_level: Option<f64>,
    pub exit_code: u8,
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub subdominant_radius: f64,
    pub admissible: bool,
    pub final_error: Option<f64>,
    pub status: String,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub gamma_star: f64,
    pub gamma_reject: Option<f64>,
    pub bracket_hi: f64,
    pub hi_admissible: bool,
    pub interval_pattern: bool,
    pub bisection_steps: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Serialize)]
pub struct VerifyEntry {
    pub instance: String,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub passed: usize,
    pub failed: usize,
    pub expected_infeasible: usize,
    pub checks: Vec<VerifyEntry>,
}

pub fn write<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    gtlab_core::io::write_json(&path, value).with_context(|| format!("writing {}", path.display()))
}

/// Prints a report section: a title line and the JSON block.
pub fn print_section<T: Serialize>(title: &str, value: &T) -> Result<()> {
    println!("== {title} ==");
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
