//! Analytic photon-loss model and the pulse-amplitude optimizer.
//!
//! In the adiabatic, weak-drive limit the no-loss probability is
//! `exp(-beta)` with `beta = kappa tau Omega_0^2 / g^2 + 2 gamma / (tau Omega_0^2)`.
//! The two terms trade off against each other, so `beta >= 2 / sqrt(C)` with
//! equality exactly on the balancing condition.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::omega0_from_balancing;
use crate::dynamics::{evolve, SimConfig, SimResult};
use crate::error::{CmatError, Result};
use crate::model::{CqedParams, PulseSchedule};
use crate::search::{argmax, linspace, try_golden_max};

/// Search range of `log10(Omega_0 / g)`.
pub const LOG_RANGE: (f64, f64) = (-3.0, 1.0);
/// Coarse grid points over [`LOG_RANGE`].
pub const GRID_POINTS: usize = 41;
/// Relative precision in `Omega_0` of the refinement.
pub const OMEGA0_RTOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPrediction {
    pub beta: f64,
    pub p_pl: f64,
    /// `kappa tau Omega_0^2 / g^2`
    pub beta_cavity: f64,
    /// `2 gamma / (tau Omega_0^2)`
    pub beta_spont: f64,
    /// `exp(-2/sqrt(C))` when the cooperativity is defined.
    pub upper_bound: Option<f64>,
}

pub fn beta(p: &CqedParams, tau: f64, omega0: f64) -> Result<LossPrediction> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CmatError::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(CmatError::invalid("omega0", format!("must be finite and > 0, got {omega0}")));
    }
    let x = tau * omega0 * omega0;
    let beta_cavity = p.kappa() * x / (p.g() * p.g());
    let beta_spont = 2.0 * p.gamma() / x;
    let beta = beta_cavity + beta_spont;
    Ok(LossPrediction {
        beta,
        p_pl: -(-beta).exp_m1(),
        beta_cavity,
        beta_spont,
        upper_bound: p.upper_bound().ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    SuccessProbability,
    Fidelity,
}

impl Objective {
    pub fn value(self, r: &SimResult) -> f64 {
        match self {
            Objective::SuccessProbability => r.success_probability,
            Objective::Fidelity => r.fidelity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPulse {
    pub omega0: f64,
    pub value: f64,
    pub result: SimResult,
    pub evaluations: usize,
}

fn probe(p: &CqedParams, tau: f64, omega0: f64, cfg: &SimConfig) -> Result<SimResult> {
    let wrap = |e: CmatError| CmatError::Probe {
        omega0,
        tau,
        g: p.g(),
        kappa: p.kappa(),
        gamma: p.gamma(),
        source: Box::new(e),
    };
    let s = PulseSchedule::new(omega0, tau).map_err(wrap)?;
    evolve(p, &s, cfg).map_err(wrap)
}

/// Maximizes `objective` over `Omega_0` at fixed `tau`: a 41-point grid in
/// `log10(Omega_0/g)` on `[-3, 1]`, evaluated in parallel, then sequential
/// golden-section refinement around the best grid point.
pub fn optimize_omega0(p: &CqedParams, tau: f64, objective: Objective, cfg: &SimConfig) -> Result<OptimizedPulse> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CmatError::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    cfg.validate()?;
    let g = p.g();
    let to_omega0 = |x: f64| g * 10f64.powf(x);

    let xs = linspace(LOG_RANGE.0, LOG_RANGE.1, GRID_POINTS);
    let grid: Vec<SimResult> = xs
        .par_iter()
        .map(|&x| probe(p, tau, to_omega0(x), cfg))
        .collect::<Result<_>>()?;

    let mut cache: HashMap<u64, SimResult> = HashMap::new();
    let values: Vec<f64> = grid.iter().map(|r| objective.value(r)).collect();
    for (x, r) in xs.iter().zip(grid) {
        cache.insert(to_omega0(*x).to_bits(), r);
    }

    let k = argmax(&values).unwrap_or(0);
    let lo = xs[k.saturating_sub(1)];
    let hi = xs[(k + 1).min(xs.len() - 1)];
    let xtol = (1.0 + OMEGA0_RTOL).log10();

    let (x_ref, v_ref) = try_golden_max::<CmatError, _>(
        |x| {
            let w = to_omega0(x);
            if let Some(r) = cache.get(&w.to_bits()) {
                return Ok(objective.value(r));
            }
            let r = probe(p, tau, w, cfg)?;
            let v = objective.value(&r);
            cache.insert(w.to_bits(), r);
            Ok(v)
        },
        lo,
        hi,
        xtol,
    )?;

    let (omega0, value) = if v_ref > values[k] { (to_omega0(x_ref), v_ref) } else { (to_omega0(xs[k]), values[k]) };
    let evaluations = cache.len();
    let result = cache.remove(&omega0.to_bits()).expect("optimum was evaluated");
    Ok(OptimizedPulse { omega0, value, result, evaluations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub omega0: f64,
    pub tau_omega0_sq: f64,
    pub beta: f64,
}

/// `beta` over `n` log-spaced `Omega_0` values spanning one decade of
/// `tau Omega_0^2` on each side of the balancing point. For odd `n` the
/// middle row is the balancing point itself.
pub fn balancing_optimality_scan(p: &CqedParams, tau: f64, n: usize) -> Result<Vec<BetaRow>> {
    if n < 3 {
        return Err(CmatError::invalid("n", format!("must be >= 3, got {n}")));
    }
    let w_bal = omega0_from_balancing(p, tau)?;
    linspace(-0.5, 0.5, n)
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let omega0 = if 2 * k + 1 == n { w_bal } else { w_bal * 10f64.powf(e) };
            let b = beta(p, tau, omega0)?;
            Ok(BetaRow { omega0, tau_omega0_sq: tau * omega0 * omega0, beta: b.beta })
        })
        .collect()
}
