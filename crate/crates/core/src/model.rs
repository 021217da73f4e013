//! Basis convention, control pulses and the five-level Hamiltonians.
//!
//! The single-excitation subspace is spanned by
//! `|u,g,0>`, `|g,u,0>`, `|e,g,0>`, `|g,e,0>`, `|g,g,1>` (atom 1, atom 2,
//! cavity photon number), always in that order.

use std::ops::Index;

use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{CmatError, Result};

pub type CMatrix5 = Matrix5<C64>;
pub type CVector5 = Vector5<C64>;

/// Default half-width of the simulated window in units of `tau`.
pub const DEFAULT_HALFWIDTH: f64 = 7.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisIndex {
    /// `|u>_1 |g>_2 |0>_c`
    UG0,
    /// `|g>_1 |u>_2 |0>_c`
    GU0,
    /// `|e>_1 |g>_2 |0>_c`
    EG0,
    /// `|g>_1 |e>_2 |0>_c`
    GE0,
    /// `|g>_1 |g>_2 |1>_c`
    GG1,
}

impl BasisIndex {
    pub const ALL: [BasisIndex; 5] = [
        BasisIndex::UG0,
        BasisIndex::GU0,
        BasisIndex::EG0,
        BasisIndex::GE0,
        BasisIndex::GG1,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            BasisIndex::UG0 => "ug0",
            BasisIndex::GU0 => "gu0",
            BasisIndex::EG0 => "eg0",
            BasisIndex::GE0 => "ge0",
            BasisIndex::GG1 => "gg1",
        }
    }
}

/// Cavity-QED rates: atom-cavity coupling `g`, cavity amplitude decay
/// `kappa` and atomic polarization decay `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCqedParams")]
pub struct CqedParams {
    g: f64,
    kappa: f64,
    gamma: f64,
}

#[derive(Deserialize)]
struct RawCqedParams {
    g: f64,
    kappa: f64,
    gamma: f64,
}

impl TryFrom<RawCqedParams> for CqedParams {
    type Error = CmatError;

    fn try_from(raw: RawCqedParams) -> Result<Self> {
        CqedParams::new(raw.g, raw.kappa, raw.gamma)
    }
}

impl CqedParams {
    pub fn new(g: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(CmatError::invalid("g", format!("must be finite and > 0, got {g}")));
        }
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(CmatError::invalid("kappa", format!("must be finite and >= 0, got {kappa}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(CmatError::invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
        }
        Ok(CqedParams { g, kappa, gamma })
    }

    /// Rates for a given cooperativity with `gamma = 1`, choosing
    /// `kappa = g^2 / (2 C)`.
    pub fn from_cooperativity(g: f64, cooperativity: f64) -> Result<Self> {
        if !(cooperativity.is_finite() && cooperativity > 0.0) {
            return Err(CmatError::invalid(
                "cooperativity",
                format!("must be finite and > 0, got {cooperativity}"),
            ));
        }
        CqedParams::new(g, g * g / (2.0 * cooperativity), 1.0)
    }

    /// Converts absolute rates into units of `gamma`.
    pub fn from_absolute(g: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(CmatError::invalid("gamma", "absolute units need gamma > 0"));
        }
        CqedParams::new(g / gamma, kappa / gamma, 1.0)
    }

    /// Same coupling with both decay channels switched off.
    pub fn lossless(&self) -> Self {
        CqedParams { g: self.g, kappa: 0.0, gamma: 0.0 }
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn has_decay(&self) -> bool {
        self.kappa > 0.0 || self.gamma > 0.0
    }

    /// `C = g^2 / (2 kappa gamma)`.
    pub fn cooperativity(&self) -> Result<f64> {
        if self.kappa > 0.0 && self.gamma > 0.0 {
            Ok(self.g * self.g / (2.0 * self.kappa * self.gamma))
        } else {
            Err(CmatError::UndefinedCooperativity { kappa: self.kappa, gamma: self.gamma })
        }
    }

    /// Success-probability ceiling `exp(-2/sqrt(C))` of adiabatic transfer.
    pub fn upper_bound(&self) -> Result<f64> {
        Ok((-2.0 / self.cooperativity()?.sqrt()).exp())
    }
}

/// Counter-intuitive pulse pair `Omega_i(t) = omega0 * f_i(t)` simulated on
/// `t in [-halfwidth * tau, halfwidth * tau]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPulseSchedule")]
pub struct PulseSchedule {
    omega0: f64,
    tau: f64,
    halfwidth: f64,
}

#[derive(Deserialize)]
struct RawPulseSchedule {
    omega0: f64,
    tau: f64,
    #[serde(default = "default_halfwidth")]
    halfwidth: f64,
}

fn default_halfwidth() -> f64 {
    DEFAULT_HALFWIDTH
}

impl TryFrom<RawPulseSchedule> for PulseSchedule {
    type Error = CmatError;

    fn try_from(raw: RawPulseSchedule) -> Result<Self> {
        PulseSchedule::with_halfwidth(raw.omega0, raw.tau, raw.halfwidth)
    }
}

impl PulseSchedule {
    pub fn new(omega0: f64, tau: f64) -> Result<Self> {
        PulseSchedule::with_halfwidth(omega0, tau, DEFAULT_HALFWIDTH)
    }

    pub fn with_halfwidth(omega0: f64, tau: f64, halfwidth: f64) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(CmatError::invalid("omega0", format!("must be finite and > 0, got {omega0}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(CmatError::invalid("tau", format!("must be finite and > 0, got {tau}")));
        }
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(CmatError::invalid(
                "halfwidth",
                format!("must be finite and > 0, got {halfwidth}"),
            ));
        }
        if !(2.0 * halfwidth * tau).is_finite() {
            return Err(CmatError::invalid("halfwidth", "pulse window overflows"));
        }
        Ok(PulseSchedule { omega0, tau, halfwidth })
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn t_start(&self) -> f64 {
        -self.halfwidth * self.tau
    }

    pub fn t_end(&self) -> f64 {
        self.halfwidth * self.tau
    }

    /// Total simulated duration `T = 2 * halfwidth * tau`.
    pub fn duration(&self) -> f64 {
        2.0 * self.halfwidth * self.tau
    }

    /// `(Omega_1(t), Omega_2(t))`.
    pub fn rabi(&self, t: f64) -> (f64, f64) {
        let (f1, f2) = shape(t / self.tau);
        (self.omega0 * f1, self.omega0 * f2)
    }

    /// `(dOmega_1/dt, dOmega_2/dt)` from the closed-form derivatives.
    pub fn rabi_rate(&self, t: f64) -> (f64, f64) {
        let (f1, f2) = shape(t / self.tau);
        (self.omega0 * f1 * f2 * f2 / self.tau, -self.omega0 * f1 * f1 * f2 / self.tau)
    }
}

/// Pulse envelopes `f1 = e^{x}/sqrt(e^{2x}+1)`, `f2 = 1/sqrt(e^{2x}+1)` at
/// `x = t/tau`, evaluated without overflow for large `|x|`.
pub fn pulse_f(t: f64, tau: f64) -> Result<(f64, f64)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CmatError::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    if t.is_nan() {
        return Err(CmatError::invalid("t", "must not be NaN"));
    }
    Ok(shape(t / tau))
}

pub(crate) fn shape(x: f64) -> (f64, f64) {
    // e = exp(-|x|) never overflows
    let e = (-x.abs()).exp();
    let r = (1.0 + e * e).sqrt().recip();
    if x > 0.0 {
        (r, e * r)
    } else {
        (e * r, r)
    }
}

/// Normalized-state container over [`BasisIndex`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub amps: [C64; 5],
}

impl StateVector {
    pub fn basis(state: BasisIndex) -> Self {
        let mut amps = [C64::new(0.0, 0.0); 5];
        amps[state.index()] = C64::new(1.0, 0.0);
        StateVector { amps }
    }

    pub fn from_vector(v: &CVector5) -> Self {
        StateVector { amps: [v[0], v[1], v[2], v[3], v[4]] }
    }

    pub fn to_vector(&self) -> CVector5 {
        CVector5::from_column_slice(&self.amps)
    }

    pub fn squared_norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn population(&self, state: BasisIndex) -> f64 {
        self.amps[state.index()].norm_sqr()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn normalized(&self) -> Option<StateVector> {
        let n = self.squared_norm().sqrt();
        (n > 0.0).then(|| StateVector { amps: self.amps.map(|a| a / n) })
    }
}

impl Index<BasisIndex> for StateVector {
    type Output = C64;

    fn index(&self, state: BasisIndex) -> &C64 {
        &self.amps[state.index()]
    }
}

/// Real antisymmetric generator `M` with `H/hbar = i M`.
pub fn generator(omega1: f64, omega2: f64, g: f64) -> Matrix5<f64> {
    #[rustfmt::skip]
    let m = Matrix5::new(
        0.0,    0.0,    -omega1, 0.0,     0.0,
        0.0,    0.0,    0.0,     -omega2, 0.0,
        omega1, 0.0,    0.0,     0.0,     g,
        0.0,    omega2, 0.0,     0.0,     g,
        0.0,    0.0,    -g,      -g,      0.0,
    );
    m
}

pub fn hamiltonian_from_rabi(omega1: f64, omega2: f64, g: f64) -> CMatrix5 {
    generator(omega1, omega2, g).map(|x| C64::new(0.0, x))
}

/// `H(t)/hbar` in the five-state basis.
pub fn hamiltonian(t: f64, p: &CqedParams, s: &PulseSchedule) -> CMatrix5 {
    let (o1, o2) = s.rabi(t);
    hamiltonian_from_rabi(o1, o2, p.g)
}

/// Decay operator `V = diag(0, 0, gamma, gamma, kappa)`.
pub fn decay_diagonal(p: &CqedParams) -> [f64; 5] {
    [0.0, 0.0, p.gamma, p.gamma, p.kappa]
}

/// `H_eff(t)/hbar = H(t)/hbar - i V`.
pub fn effective_hamiltonian(t: f64, p: &CqedParams, s: &PulseSchedule) -> CMatrix5 {
    let mut h = hamiltonian(t, p, s);
    for (k, v) in decay_diagonal(p).into_iter().enumerate() {
        h[(k, k)] -= C64::new(0.0, v);
    }
    h
}

/// `N0 = g^2 Omega_1^2 + g^2 Omega_2^2 + Omega_1^2 Omega_2^2`.
pub fn dark_norm(omega1: f64, omega2: f64, g: f64) -> f64 {
    let (a, b, g2) = (omega1 * omega1, omega2 * omega2, g * g);
    g2 * a + g2 * b + a * b
}

pub fn darkstate_from_rabi(omega1: f64, omega2: f64, g: f64) -> Result<StateVector> {
    let n0 = dark_norm(omega1, omega2, g);
    if !(n0 > 0.0) {
        return Err(CmatError::DegenerateState);
    }
    let n = n0.sqrt();
    let re = |x: f64| C64::new(x / n, 0.0);
    Ok(StateVector {
        amps: [re(g * omega2), re(g * omega1), re(0.0), re(0.0), re(-omega1 * omega2)],
    })
}

/// Zero-energy dark state of `H(t)`.
pub fn darkstate(t: f64, p: &CqedParams, s: &PulseSchedule) -> Result<StateVector> {
    let (o1, o2) = s.rabi(t);
    darkstate_from_rabi(o1, o2, p.g)
}

pub fn cavity_population_from_rabi(omega1: f64, omega2: f64, g: f64) -> Result<f64> {
    let n0 = dark_norm(omega1, omega2, g);
    if !(n0 > 0.0) {
        return Err(CmatError::DegenerateState);
    }
    Ok(omega1 * omega1 * omega2 * omega2 / n0)
}

/// Photon population of the dark state.
pub fn cavity_population(t: f64, p: &CqedParams, s: &PulseSchedule) -> Result<f64> {
    let (o1, o2) = s.rabi(t);
    cavity_population_from_rabi(o1, o2, p.g)
}
