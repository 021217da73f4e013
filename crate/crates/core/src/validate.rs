//! Self-check suite: closed-form eigensystem against dense diagonalization,
//! probability budget of dissipative runs, the loss-exponent lower bound,
//! small-drive asymptotics and `tau`-independence of `tau0`, and a
//! tolerance-convergence check of a reference transfer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adiabatic::{adiabatic_coupling_ratio, omega0_from_balancing, tau0};
use crate::dynamics::{evolve, norm_history_check, SimConfig};
use crate::eigensystem::{compare_with_numeric, eigenvectors_from_rabi, ValidationStatus};
use crate::lossmodel::beta;
use crate::model::{hamiltonian_from_rabi, CMatrix5, CqedParams, PulseSchedule};
use crate::search::linspace;

/// Builds `H` from `(Omega_1, Omega_2, g)`.
pub type HamiltonianBuilder = fn(f64, f64, f64) -> CMatrix5;

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Relative tolerance of the reference run.
    pub rel_tol: f64,
    pub eigen_samples: usize,
    pub budget_runs: usize,
    pub bound_samples: usize,
    /// Hamiltonian used as the numeric reference of the eigensystem check.
    pub hamiltonian: HamiltonianBuilder,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0x00c0_ffee,
            rel_tol: 1e-9,
            eigen_samples: 500,
            budget_runs: 12,
            bound_samples: 10_000,
            hamiltonian: hamiltonian_from_rabi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

pub fn eigensystem_check(rng: &mut ChaCha8Rng, samples: usize, build: HamiltonianBuilder) -> Check {
    const TOL: f64 = 1e-10;
    let (mut worst_value, mut worst_residual, mut failures, mut degenerate) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..samples {
        let o1 = log_uniform(rng, 1e-3, 10.0);
        let o2 = log_uniform(rng, 1e-3, 10.0);
        let g = log_uniform(rng, 1e-2, 10.0);
        let es = match eigenvectors_from_rabi(o1, o2, g) {
            Ok(es) => es,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let v = compare_with_numeric(&build(o1, o2, g), &es, TOL);
        worst_value = worst_value.max(v.max_eigenvalue_error);
        worst_residual = worst_residual.max(v.max_residual);
        match v.status {
            ValidationStatus::Fail => failures += 1,
            ValidationStatus::Degenerate => degenerate += 1,
            ValidationStatus::Pass => {}
        }
    }
    check(
        "eigensystem",
        failures == 0,
        format!(
            "{samples} samples, {failures} failed, {degenerate} degenerate; eigenvalue err {worst_value:.2e}, residual {worst_residual:.2e}"
        ),
    )
}

pub fn budget_check(rng: &mut ChaCha8Rng, runs: usize, cfg: &SimConfig) -> Check {
    let (mut worst, mut rising, mut errors) = (0.0f64, 0, 0);
    for _ in 0..runs {
        let g = log_uniform(rng, 1.0, 50.0);
        let c = log_uniform(rng, 10.0, 1000.0);
        let tau = log_uniform(rng, 0.2, 3.0);
        let outcome = CqedParams::from_cooperativity(g, c).and_then(|p| {
            let w = omega0_from_balancing(&p, tau)? * log_uniform(rng, 0.5, 2.0);
            evolve(&p, &PulseSchedule::new(w, tau)?, cfg)
        });
        match outcome {
            Ok(r) => {
                worst = worst.max(r.budget_error());
                if !norm_history_check(&r) {
                    rising += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    check(
        "probability_budget",
        errors == 0 && rising == 0 && worst < 1e-6,
        format!("{runs} runs, {errors} errors, {rising} with rising norm; worst budget error {worst:.2e}"),
    )
}

pub fn bound_check(rng: &mut ChaCha8Rng, samples: usize) -> Check {
    let mut worst = f64::INFINITY;
    let mut errors = 0;
    for _ in 0..samples {
        let g = log_uniform(rng, 0.1, 300.0);
        let c = log_uniform(rng, 1.0, 1e4);
        let tau = log_uniform(rng, 1e-3, 1e2);
        let w = log_uniform(rng, 1e-3, 1e3);
        let b = CqedParams::from_cooperativity(g, c).and_then(|p| beta(&p, tau, w));
        match b {
            Ok(b) => worst = worst.min(b.beta / (2.0 / c.sqrt())),
            Err(_) => errors += 1,
        }
    }
    check(
        "loss_exponent_bound",
        errors == 0 && worst >= 1.0 - 1e-12,
        format!("{samples} samples, smallest beta / (2/sqrt(C)) = {worst:.15}"),
    )
}

pub fn small_drive_check() -> Check {
    let p = CqedParams::new(1.0, 0.0, 0.0).expect("valid parameters");
    let mut ok = true;
    let mut parts = Vec::new();
    for (ratio, band) in [(0.05, 0.05), (0.01, 0.02)] {
        match tau0(&p, ratio) {
            Ok(t0) => {
                let v = 2.0 * ratio * t0;
                ok &= (v - 1.0).abs() <= band;
                parts.push(format!("2 Omega_0 tau0 = {v:.6} at Omega_0/g = {ratio}"));
            }
            Err(e) => {
                ok = false;
                parts.push(e.to_string());
            }
        }
    }
    check("tau0_small_drive_limit", ok, parts.join("; "))
}

pub fn tau_independence_check() -> Check {
    let p = CqedParams::new(1.3, 0.0, 0.0).expect("valid parameters");
    let omega0 = 0.7;
    let reference = match tau0(&p, omega0) {
        Ok(t) => t,
        Err(e) => return check("tau0_tau_independence", false, e.to_string()),
    };
    let mut worst = 0.0f64;
    for tau in [0.3, 1.0, 4.0, 25.0] {
        let s = PulseSchedule::new(omega0, tau).expect("valid schedule");
        let peak = linspace(s.t_start(), s.t_end(), 30_001)
            .into_iter()
            .filter_map(|t| adiabatic_coupling_ratio(t, &p, &s).ok())
            .fold(0.0, f64::max);
        worst = worst.max((peak * tau / reference - 1.0).abs());
    }
    check(
        "tau0_tau_independence",
        worst < 1e-5,
        format!("tau0 = {reference:.12}; largest relative gap of sampled peak * tau = {worst:.2e}"),
    )
}

pub fn reference_run_check(rel_tol: f64) -> Check {
    let p = CqedParams::new(1.0, 0.0, 0.0).expect("valid parameters");
    let s = PulseSchedule::new(1.0, 1000.0 / 15.0).expect("valid schedule");
    let base = SimConfig { sample_count: 2, ..SimConfig::default() };
    let run = |tol: f64| evolve(&p, &s, &SimConfig { rel_tol: tol, abs_tol: base.abs_tol.min(tol * 1e-3), ..base });
    match (run(rel_tol), run(rel_tol / 10.0)) {
        (Ok(a), Ok(b)) => {
            let delta = (a.fidelity - b.fidelity).abs();
            check(
                "reference_run",
                a.fidelity > 0.999 && b.fidelity > 0.999 && delta < 1e-6,
                format!("fidelity {:.9} at rel_tol {rel_tol:e}; change at rel_tol/10 {delta:.2e}", a.fidelity),
            )
        }
        (Err(e), _) | (_, Err(e)) => check("reference_run", false, e.to_string()),
    }
}

pub fn run_suite(opts: &SuiteOptions) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cfg = SimConfig { sample_count: 200, ..SimConfig::default() };
    Report {
        checks: vec![
            eigensystem_check(&mut rng, opts.eigen_samples, opts.hamiltonian),
            budget_check(&mut rng, opts.budget_runs, &cfg),
            bound_check(&mut rng, opts.bound_samples),
            small_drive_check(),
            tau_independence_check(),
            reference_run_check(opts.rel_tol),
        ],
    }
}
