//! `cmat`: single simulations, speed-limit reports, parameter sweeps and the
//! self-check suite for cavity-mediated adiabatic transfer.
//!
//! Exit codes: 0 ok, 1 validation failure, 2 config error, 3 runtime failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmat_core::adiabatic::{tau0, thresholds};
use cmat_core::dynamics::{evolve, SimResult};
use cmat_core::lossmodel::beta;
use cmat_core::model::{hamiltonian_from_rabi, CMatrix5};
use cmat_core::sweep::{self, Format, SweepResult, SweepSummary};
use cmat_core::validate::{run_suite, SuiteOptions};
use cmat_core::{Binding, BasisIndex, CmatError, SpeedLimitReport, SweepMode};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "cmat", version, about = "Cavity-mediated adiabatic transfer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (sweep results, or the trajectory with --trajectory).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Sweep file format, or report format on stdout.
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    /// Treat failed sweep cells as an error.
    #[arg(long, global = true)]
    strict: bool,
    /// Write the sampled trajectory of `simulate` to --out as CSV.
    #[arg(long, global = true)]
    trajectory: bool,
    /// Seed of the randomized checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config field, e.g. `--set params.g=20`.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one transfer and report fidelity, losses and thresholds.
    Simulate,
    /// Report the adiabatic and cavity-suppression speed limits.
    SpeedLimit,
    /// Run the sweep described by the `sweep` section of the config.
    Sweep,
    /// Run the self-check suite.
    Validate {
        /// Relative tolerance of the reference run.
        #[arg(long)]
        rel_tol: Option<f64>,
        /// Flip the sign of one coupling in the reference Hamiltonian.
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

enum Failure {
    Validation(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<CmatError> for Failure {
    fn from(e: CmatError) -> Self {
        match e {
            CmatError::InvalidParameter { .. } | CmatError::UndefinedCooperativity { .. } => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    if common.config.is_none() && common.overrides.is_empty() {
        return Err(Failure::Config("--config <PATH> is required for this command".into()));
    }
    Ok(config::load(common.config.as_deref(), &common.overrides)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn binding_label(b: Binding) -> &'static str {
    match b {
        Binding::AdiabaticLimited => "adiabatic-limited",
        Binding::CavitySuppressionLimited => "cavity-suppression-limited",
    }
}

#[derive(Serialize)]
struct SimulateReport {
    g: f64,
    kappa: f64,
    gamma: f64,
    cooperativity: Option<f64>,
    omega0: f64,
    omega0_source: &'static str,
    tau: f64,
    halfwidth: f64,
    fidelity: f64,
    norm_final: f64,
    success_probability: f64,
    i_a: f64,
    i_cav: f64,
    budget_error: f64,
    beta: Option<f64>,
    predicted_loss: Option<f64>,
    upper_bound: Option<f64>,
    tau0: f64,
    tau_over_tau0: f64,
    speed_limit: Option<SpeedLimitReport>,
    steps: usize,
}

fn trajectory_csv(r: &SimResult) -> String {
    let mut out = String::from("t");
    for b in BasisIndex::ALL {
        write!(out, ",pop_{}", b.label()).expect("writing to a String");
    }
    out.push_str(",norm\n");
    for s in &r.samples {
        write!(out, "{:?}", s.t).expect("writing to a String");
        for a in &s.amps {
            write!(out, ",{:?}", a.norm_sqr()).expect("writing to a String");
        }
        writeln!(out, ",{:?}", s.norm).expect("writing to a String");
    }
    out
}

fn cmd_simulate(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let p = cfg.params()?;
    let (s, source) = cfg.pulse(&p)?;
    if common.trajectory && common.out.is_none() {
        return Err(Failure::Config("--trajectory needs --out <PATH>".into()));
    }
    let r = evolve(&p, &s, &cfg.sim)?;
    let t0 = tau0(&p, s.omega0())?;
    let loss = if p.kappa() > 0.0 || p.gamma() > 0.0 { beta(&p, s.tau(), s.omega0()).ok() } else { None };
    let report = SimulateReport {
        g: p.g(),
        kappa: p.kappa(),
        gamma: p.gamma(),
        cooperativity: p.cooperativity().ok(),
        omega0: s.omega0(),
        omega0_source: source.label(),
        tau: s.tau(),
        halfwidth: s.halfwidth(),
        fidelity: r.fidelity,
        norm_final: r.norm_final,
        success_probability: r.success_probability,
        i_a: r.i_a,
        i_cav: r.i_cav,
        budget_error: r.budget_error(),
        beta: loss.map(|l| l.beta),
        predicted_loss: loss.map(|l| l.p_pl),
        upper_bound: p.upper_bound().ok(),
        tau0: t0,
        tau_over_tau0: s.tau() / t0,
        speed_limit: thresholds(&p, &cfg.factors).ok(),
        steps: r.steps,
    };

    if common.trajectory {
        let path = common.out.as_deref().expect("checked above");
        write_file(path, &trajectory_csv(&r))?;
    }

    if common.format == Some(OutFormat::Json) {
        return print_json(&report);
    }
    let c = report.cooperativity.map_or("undefined".to_string(), |c| format!("{c}"));
    println!("rates                 g = {}  kappa = {}  gamma = {}  (C = {c})", report.g, report.kappa, report.gamma);
    println!(
        "pulse                 Omega_0 = {} ({})  tau = {}  window = +/-{} tau",
        report.omega0, report.omega0_source, report.tau, report.halfwidth
    );
    println!("fidelity              {:.9}", report.fidelity);
    println!("norm                  {:.9}", report.norm_final);
    println!("success probability   {:.9}", report.success_probability);
    println!("I_a                   {:.9}", report.i_a);
    println!("I_cav                 {:.9}", report.i_cav);
    println!("budget error          {:.2e}", report.budget_error);
    if let (Some(b), Some(pl)) = (report.beta, report.predicted_loss) {
        println!("loss model            beta = {b:.9}  1 - exp(-beta) = {pl:.9}  simulated loss = {:.9}", 1.0 - r.norm_final);
    }
    if let Some(ub) = report.upper_bound {
        println!("upper bound           exp(-2/sqrt C) = {ub:.9}");
    }
    println!("tau0                  {:.9}  (tau / tau0 = {:.4})", report.tau0, report.tau_over_tau0);
    if let Some(sl) = report.speed_limit {
        println!(
            "thresholds            tau_a = {:.6}  tau_c = {:.6}  binding = {}",
            sl.tau_a,
            sl.tau_c,
            binding_label(sl.binding)
        );
    }
    if let Some(path) = common.out.as_deref().filter(|_| common.trajectory) {
        println!("trajectory            {}", path.display());
    }
    Ok(())
}

fn cmd_speed_limit(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let p = cfg.params()?;
    let rep = thresholds(&p, &cfg.factors)?;
    if common.format == Some(OutFormat::Json) {
        return print_json(&rep);
    }
    println!("cooperativity         C = {}", rep.cooperativity);
    println!("factors               F_adi = {}  F_cp = {}", cfg.factors.f_adi(), cfg.factors.f_cp());
    println!("tau_a                 {:.15e}", rep.tau_a);
    println!("tau_c                 {:.15e}", rep.tau_c);
    println!("kappa*                {:.15}", rep.kappa_star);
    println!("g*                    {:.15}", rep.g_star);
    println!("binding               {}", binding_label(rep.binding));
    println!("max speed             1/max(tau_a, tau_c) = {:.9}", rep.max_speed());
    if rep.binding == Binding::AdiabaticLimited {
        println!("note                  adiabatic-limited: the maximal speed 8 gamma sqrt(C) / F_adi^2 grows as gamma sqrt(C)");
    } else {
        println!("note                  cavity-suppression-limited: raising g beyond g* makes the adiabatic limit bind");
    }
    Ok(())
}

fn sweep_notes(r: &SweepResult) -> Vec<String> {
    let mut notes = Vec::new();
    match r.spec.mode {
        SweepMode::DissipationFreeMap => {
            let f_adi = r.spec.factors.f_adi();
            let worst = r
                .cells()
                .filter_map(|c| c.outcome)
                .filter(|o| o.tau0.is_some_and(|t0| 1.0 >= f_adi * t0))
                .map(|o| o.fidelity)
                .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.min(f))));
            match worst {
                Some(w) => notes.push(format!("worst fidelity with tau >= F_adi tau0: {w:.6}")),
                None => notes.push("no cell satisfies tau >= F_adi tau0".into()),
            }
        }
        SweepMode::TruncationStudy => {
            let col = r.fidelity_column();
            let drops: Vec<String> = r.grid[0]
                .windows(2)
                .zip(col.windows(2))
                .filter(|(_, f)| matches!((f[0], f[1]), (Some(a), Some(b)) if b <= a))
                .map(|(c, _)| format!("{}", c[1].x))
                .collect();
            if drops.is_empty() {
                notes.push("fidelity column monotone: yes".into());
            } else {
                notes.push(format!("fidelity column monotone: no (drops at T/tau = {})", drops.join(", ")));
            }
        }
        SweepMode::SuccessMap | SweepMode::FidelityMap => {}
    }
    notes
}

fn print_summary(s: &SweepSummary) {
    println!("cells                 {} ({} failed)", s.cells, s.failures);
    if let (Some(lo), Some(hi)) = (s.min_normalized_success_probability, s.max_normalized_success_probability) {
        println!("normalized P_s        min {lo:.6}  max {hi:.6}");
    }
    if let (Some(lo), Some(hi)) = (s.min_fidelity, s.max_fidelity) {
        println!("fidelity              min {lo:.6}  max {hi:.6}");
    }
    if let Some(g) = s.crossover_g {
        println!("crossover g*          {g:.6} (tau_a = tau_c)");
    }
    if let Some(g) = s.numeric_crossover_g {
        println!("numeric crossover     {g:.6} (F_adi tau0 and F_cp contours)");
    }
}

fn cmd_sweep(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let spec = cfg.sweep()?;
    let out = common.out.as_deref().ok_or_else(|| Failure::Config("sweep needs --out <PATH>".into()))?;
    let format = match common.format {
        Some(OutFormat::Json) => Format::Json,
        Some(OutFormat::Csv) | None => Format::Csv,
    };
    let result = sweep::run(spec)?;
    let written = sweep::emit(&result, out, format)?;
    let summary = result.summary();
    print_summary(&summary);
    for note in sweep_notes(&result) {
        println!("{note}");
    }
    for path in &written {
        println!("wrote                 {}", path.display());
    }
    if summary.failures > 0 {
        for cell in result.cells().filter(|c| c.error.is_some()) {
            eprintln!("cell ({}, {}) failed: {}", cell.x, cell.y, cell.error.as_deref().unwrap_or_default());
        }
        if common.strict {
            return Err(Failure::Runtime(format!("{} sweep cells failed", summary.failures)));
        }
    }
    Ok(())
}

fn flipped_hamiltonian(o1: f64, o2: f64, g: f64) -> CMatrix5 {
    let mut h = hamiltonian_from_rabi(o1, o2, g);
    h[(2, 4)] = -h[(2, 4)];
    h[(4, 2)] = -h[(4, 2)];
    h
}

fn cmd_validate(common: &Common, rel_tol: Option<f64>, inject_sign_flip: bool) -> Result<(), Failure> {
    let mut opts = SuiteOptions::default();
    if let Some(seed) = common.seed {
        opts.seed = seed;
    }
    if let Some(tol) = rel_tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Failure::Config(format!("--rel-tol must lie in (0, 1), got {tol}")));
        }
        opts.rel_tol = tol;
    }
    if inject_sign_flip {
        opts.hamiltonian = flipped_hamiltonian;
    }
    let report = run_suite(&opts);
    if common.format == Some(OutFormat::Json) {
        print_json(&report)?;
    } else {
        println!("{:<24} {:<6} detail", "check", "result");
        for c in &report.checks {
            println!("{:<24} {:<6} {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        }
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("failing invariants: {}", report.failing().join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate => cmd_simulate(&cli.common),
        Command::SpeedLimit => cmd_speed_limit(&cli.common),
        Command::Sweep => cmd_sweep(&cli.common),
        Command::Validate { rel_tol, inject_sign_flip } => cmd_validate(&cli.common, rel_tol, inject_sign_flip),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
