//! No-jump evolution under the non-Hermitian effective Hamiltonian.
//!
//! The unnormalized state obeys `d psi/dt = -i H_eff psi = (M - V) psi`
//! and starts in `|u,g,0>` at the left edge of the pulse window. The two
//! loss integrals ride along as extra ODE components, so that
//! `norm + I_a + I_cav = 1` holds up to integrator error.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{CmatError, Result};
use crate::integrator::{self, Options};
use crate::model::{generator, BasisIndex, CqedParams, PulseSchedule, StateVector};
use crate::search::linspace;

/// Slack allowed per sample by [`norm_history_check`].
pub const NORM_SLACK: f64 = 1e-10;

const STATE_DIM: usize = 12;
const IA: usize = 10;
const ICAV: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSimConfig")]
pub struct SimConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step; `None` means `tau / 100`.
    pub max_step: Option<f64>,
    pub sample_count: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimConfig {
    #[serde(default = "default_rel_tol")]
    rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    abs_tol: f64,
    #[serde(default)]
    max_step: Option<f64>,
    #[serde(default = "default_sample_count")]
    sample_count: usize,
}

fn default_rel_tol() -> f64 {
    1e-9
}

fn default_abs_tol() -> f64 {
    1e-12
}

fn default_sample_count() -> usize {
    1000
}

impl TryFrom<RawSimConfig> for SimConfig {
    type Error = CmatError;

    fn try_from(raw: RawSimConfig) -> Result<Self> {
        let cfg = SimConfig {
            rel_tol: raw.rel_tol,
            abs_tol: raw.abs_tol,
            max_step: raw.max_step,
            sample_count: raw.sample_count,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_step: None,
            sample_count: default_sample_count(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(CmatError::invalid("rel_tol", format!("must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol < 1.0) {
            return Err(CmatError::invalid("abs_tol", format!("must lie in (0, 1), got {}", self.abs_tol)));
        }
        if let Some(h) = self.max_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(CmatError::invalid("max_step", format!("must be finite and > 0, got {h}")));
            }
        }
        if self.sample_count < 2 {
            return Err(CmatError::invalid("sample_count", format!("must be >= 2, got {}", self.sample_count)));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub amps: [C64; 5],
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Unnormalized state at the end of the window.
    pub final_state: StateVector,
    /// Probability of no photon loss.
    pub norm_final: f64,
    /// Overlap of the normalized final state with `|g,u,0>`.
    pub fidelity: f64,
    /// `norm_final * fidelity`.
    pub success_probability: f64,
    /// `(1 - I_a - I_cav) * fidelity`, for cross-checking.
    pub success_probability_budget: f64,
    /// Probability lost through spontaneous emission.
    pub i_a: f64,
    /// Probability lost through cavity decay.
    pub i_cav: f64,
    pub samples: Vec<Sample>,
    pub steps: usize,
}

impl SimResult {
    /// `|norm + I_a + I_cav - 1|`.
    pub fn budget_error(&self) -> f64 {
        (self.norm_final + self.i_a + self.i_cav - 1.0).abs()
    }
}

fn unpack(y: &[f64; STATE_DIM]) -> [C64; 5] {
    std::array::from_fn(|k| C64::new(y[2 * k], y[2 * k + 1]))
}

/// Integrates the no-jump evolution across the pulse window.
pub fn evolve(p: &CqedParams, s: &PulseSchedule, cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let g = p.g();
    let (gamma, kappa) = (p.gamma(), p.kappa());
    let decay = [0.0, 0.0, gamma, gamma, kappa];

    let rhs = |t: f64, y: &[f64; STATE_DIM], dy: &mut [f64; STATE_DIM]| {
        let (o1, o2) = s.rabi(t);
        let m = generator(o1, o2, g);
        for r in 0..5 {
            let (mut re, mut im) = (-decay[r] * y[2 * r], -decay[r] * y[2 * r + 1]);
            for c in 0..5 {
                let mrc = m[(r, c)];
                if mrc != 0.0 {
                    re += mrc * y[2 * c];
                    im += mrc * y[2 * c + 1];
                }
            }
            dy[2 * r] = re;
            dy[2 * r + 1] = im;
        }
        let pop = |k: usize| y[2 * k] * y[2 * k] + y[2 * k + 1] * y[2 * k + 1];
        dy[IA] = 2.0 * gamma * (pop(2) + pop(3));
        dy[ICAV] = 2.0 * kappa * pop(4);
    };

    let mut y0 = [0.0; STATE_DIM];
    y0[2 * BasisIndex::UG0.index()] = 1.0;

    let (t0, t1) = (s.t_start(), s.t_end());
    let sample_times = linspace(t0, t1, cfg.sample_count);
    let opts = Options {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        max_step: cfg.max_step.unwrap_or(s.tau() / 100.0),
        max_steps: 200_000_000,
    };

    let mut samples = Vec::with_capacity(cfg.sample_count);
    let (y, stats) = integrator::integrate(rhs, t0, t1, y0, &opts, &sample_times, |t, y| {
        let amps = unpack(y);
        let norm = amps.iter().map(|a| a.norm_sqr()).sum();
        samples.push(Sample { t, amps, norm });
    })?;

    let final_state = StateVector { amps: unpack(&y) };
    if final_state.amps.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(CmatError::IntegrationFailure { t: t1, reason: "non-finite state".into() });
    }
    let norm_final = final_state.squared_norm();
    let target = final_state.population(BasisIndex::GU0);
    let fidelity = if norm_final > 0.0 { (target / norm_final).min(1.0) } else { 0.0 };
    let (i_a, i_cav) = (y[IA], y[ICAV]);

    Ok(SimResult {
        final_state,
        norm_final,
        fidelity,
        success_probability: norm_final * fidelity,
        success_probability_budget: (1.0 - i_a - i_cav) * fidelity,
        i_a,
        i_cav,
        samples,
        steps: stats.accepted,
    })
}

/// Probability that at least one photon was lost, `1 - <psi|psi>`.
pub fn photon_loss_probability(r: &SimResult) -> f64 {
    1.0 - r.norm_final
}

/// True when the recorded norm never rises by more than [`NORM_SLACK`]
/// between consecutive samples.
pub fn norm_history_check(r: &SimResult) -> bool {
    r.samples.windows(2).all(|w| w[1].norm <= w[0].norm + NORM_SLACK)
}
