//! Adiabatic time constant `tau0` and the two speed limits that bound the
//! pulse time constant once the photon-loss balancing condition is imposed.

use serde::{Deserialize, Serialize};

use crate::eigensystem::{branch_vector, squared_frequencies, CoeffPair};
use crate::error::{CmatError, Result};
use crate::model::{dark_norm, shape, CqedParams, PulseSchedule, DEFAULT_HALFWIDTH};
use crate::search::scan_then_refine;

/// Points in the coarse `tau0` scan over `s = t / tau`.
pub const TAU0_SCAN_POINTS: usize = 4001;
/// Absolute tolerance in `s` of the golden-section refinement.
pub const TAU0_XTOL: f64 = 1e-10;

/// Safety factors of the adiabatic condition (`f_adi`) and of the
/// cavity-population suppression `Omega_0 / g < f_cp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFactors")]
pub struct AdiabaticFactors {
    f_adi: f64,
    f_cp: f64,
}

#[derive(Deserialize)]
struct RawFactors {
    #[serde(default = "default_f_adi")]
    f_adi: f64,
    #[serde(default = "default_f_cp")]
    f_cp: f64,
}

fn default_f_adi() -> f64 {
    8.0
}

fn default_f_cp() -> f64 {
    0.5
}

impl TryFrom<RawFactors> for AdiabaticFactors {
    type Error = CmatError;

    fn try_from(raw: RawFactors) -> Result<Self> {
        AdiabaticFactors::new(raw.f_adi, raw.f_cp)
    }
}

impl Default for AdiabaticFactors {
    fn default() -> Self {
        AdiabaticFactors { f_adi: default_f_adi(), f_cp: default_f_cp() }
    }
}

impl AdiabaticFactors {
    pub fn new(f_adi: f64, f_cp: f64) -> Result<Self> {
        if !(f_adi.is_finite() && f_adi > 0.0) {
            return Err(CmatError::invalid("f_adi", format!("must be finite and > 0, got {f_adi}")));
        }
        if !(f_cp > 0.0 && f_cp < 1.0) {
            return Err(CmatError::invalid("f_cp", format!("must lie in (0, 1), got {f_cp}")));
        }
        Ok(AdiabaticFactors { f_adi, f_cp })
    }

    pub fn f_adi(&self) -> f64 {
        self.f_adi
    }

    pub fn f_cp(&self) -> f64 {
        self.f_cp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    /// The adiabatic condition sets the minimum `tau`.
    AdiabaticLimited,
    /// Suppression of the cavity population sets the minimum `tau`.
    CavitySuppressionLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitReport {
    pub cooperativity: f64,
    pub tau_a: f64,
    pub tau_c: f64,
    pub kappa_star: f64,
    pub g_star: f64,
    pub binding: Binding,
}

impl SpeedLimitReport {
    /// Shortest admissible pulse time constant.
    pub fn min_tau(&self) -> f64 {
        self.tau_a.max(self.tau_c)
    }

    pub fn max_speed(&self) -> f64 {
        self.min_tau().recip()
    }
}

/// `|<phi_1| d/dt |D>| / |omega_1|` for the dark state at time `t`.
/// Adiabatic following requires this to be much smaller than one.
pub fn adiabatic_coupling_ratio(t: f64, p: &CqedParams, s: &PulseSchedule) -> Result<f64> {
    coupling_ratio(t / s.tau(), s.omega0(), p.g()).map(|r| r / s.tau())
}

/// Coupling ratio at `tau = 1` and dimensionless time `x = t / tau`.
fn coupling_ratio(x: f64, omega0: f64, g: f64) -> Result<f64> {
    let (f1, f2) = shape(x);
    let (o1, o2) = (omega0 * f1, omega0 * f2);
    let n0 = dark_norm(o1, o2, g);
    let (w1sq, _) = squared_frequencies(o1, o2, g);
    if !(n0 > 0.0 && w1sq > 0.0) {
        return Err(CmatError::SingularGap);
    }
    let w1 = w1sq.sqrt();
    let (a1, b1) = CoeffPair::Sum.coefficients(w1, o1, o2, g);
    let n1 = branch_vector(CoeffPair::Sum, w1, o1, o2, g).norm_squared();
    let (df1, df2) = (f1 * f2 * f2, -f1 * f1 * f2);
    Ok(g * omega0 * omega0 * (a1 * df1 * f2 + b1 * f1 * df2).abs() / ((n0 * n1).sqrt() * w1))
}

/// Adiabatic time constant: the largest nonadiabatic coupling over the pulse,
/// in the `tau`-independent variable `s = t / tau` on `[-7.5, 7.5]`.
pub fn tau0(p: &CqedParams, omega0: f64) -> Result<f64> {
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(CmatError::invalid("omega0", format!("must be finite and > 0, got {omega0}")));
    }
    let g = p.g();
    let bracket = |s: f64| coupling_ratio(s, omega0, g).unwrap_or(0.0);
    let (_, best) = scan_then_refine(bracket, -DEFAULT_HALFWIDTH, DEFAULT_HALFWIDTH, TAU0_SCAN_POINTS, TAU0_XTOL);
    Ok(best)
}

/// Speed limits `tau_a`, `tau_c` and the crossover rates `kappa*`, `g*`.
pub fn thresholds(p: &CqedParams, f: &AdiabaticFactors) -> Result<SpeedLimitReport> {
    let c = p.cooperativity()?;
    let (g, gamma) = (p.g(), p.gamma());
    let (fa, fc) = (f.f_adi(), f.f_cp());
    let tau_a = fa * fa / (8.0 * gamma * c.sqrt());
    let tau_c = 2.0 * gamma * c.sqrt() / (fc * fc * g * g);
    let kappa_star = 8.0 * gamma / (fa * fc).powi(2);
    let g_star = 4.0 * gamma * c.sqrt() / (fa * fc);
    let binding = if tau_a >= tau_c { Binding::AdiabaticLimited } else { Binding::CavitySuppressionLimited };
    Ok(SpeedLimitReport { cooperativity: c, tau_a, tau_c, kappa_star, g_star, binding })
}

/// Peak Rabi frequency satisfying `tau Omega_0^2 = g sqrt(2 gamma / kappa)`.
pub fn omega0_from_balancing(p: &CqedParams, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CmatError::invalid("tau", format!("must be finite and > 0, got {tau}")));
    }
    if !(p.kappa() > 0.0 && p.gamma() > 0.0) {
        return Err(CmatError::UndefinedCooperativity { kappa: p.kappa(), gamma: p.gamma() });
    }
    Ok((p.g() * (2.0 * p.gamma() / p.kappa()).sqrt() / tau).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lossmodel::beta;
    use crate::search::linspace;
    use proptest::prelude::*;

    fn lossless(g: f64) -> CqedParams {
        CqedParams::new(g, 0.0, 0.0).unwrap()
    }

    /// Literal transcription of the `tau0` bracket with exponentials.
    fn bracket_oracle(s: f64, omega0: f64, g: f64) -> f64 {
        let e = s.exp();
        let o1 = omega0 * e / (e * e + 1.0).sqrt();
        let o2 = omega0 / (e * e + 1.0).sqrt();
        let (a, b, g2) = (o1 * o1, o2 * o2, g * g);
        let w1sq = 0.5 * (2.0 * g2 + a + b - (4.0 * g2 * g2 + (a - b).powi(2)).sqrt());
        let a1 = b - w1sq + 2.0 * g2;
        let b1 = -a + w1sq - 2.0 * g2;
        let n0 = g2 * a + g2 * b + a * b;
        let n1 = (a1 * o1).powi(2) + (b1 * o2).powi(2) + w1sq * (a1 * a1 + b1 * b1) + g2 * (a1 + b1).powi(2);
        g * omega0 * omega0 * (a1 - b1 * e * e).abs() * e / (w1sq.sqrt() * (n0 * n1).sqrt() * (1.0 + e * e).powi(2))
    }

    #[test]
    fn small_drive_ratio_approaches_asymptotic_form() {
        let (g, omega0, tau) = (1.0, 0.01, 3.0);
        let s = PulseSchedule::new(omega0, tau).unwrap();
        for x in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let t = x * tau;
            let full = adiabatic_coupling_ratio(t, &lossless(g), &s).unwrap();
            let asym = x.exp() / (1.0 + (2.0 * x).exp()) / (omega0 * tau);
            assert!((full / asym - 1.0).abs() < 0.05, "x={x}: {full} vs {asym}");
        }
    }

    #[test]
    fn symmetric_point_closed_form() {
        for (g, omega0, tau) in [(1.0, 1.0, 1.0), (2.5, 0.3, 4.0), (0.4, 7.0, 0.2)] {
            let s = PulseSchedule::new(omega0, tau).unwrap();
            let r = adiabatic_coupling_ratio(0.0, &lossless(g), &s).unwrap();
            let w = omega0 / 2f64.sqrt();
            let closed = g / (2.0 * tau * w * (2.0 * g * g + w * w).sqrt());
            assert!((r - closed).abs() < 1e-10 * closed);
        }
    }

    #[test]
    fn ratio_scales_inversely_with_tau() {
        let p = lossless(1.3);
        let a = adiabatic_coupling_ratio(0.7, &p, &PulseSchedule::new(2.0, 1.0).unwrap()).unwrap();
        let b = adiabatic_coupling_ratio(7.0, &p, &PulseSchedule::new(2.0, 10.0).unwrap()).unwrap();
        assert!((a / b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_matches_derivative_overlap() {
        // |<phi_1| dD/dt>| by central differences of the dark state
        let p = lossless(1.1);
        let s = PulseSchedule::new(0.8, 2.0).unwrap();
        let t = 0.9;
        let h = 1e-5;
        let dp = crate::model::darkstate(t + h, &p, &s).unwrap();
        let dm = crate::model::darkstate(t - h, &p, &s).unwrap();
        let ddt: Vec<_> = dp.amps.iter().zip(&dm.amps).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let es = crate::eigensystem::eigenvectors(t, &p, &s).unwrap();
        let phi = es.vector(crate::eigensystem::Branch::Plus1);
        let overlap: num_complex::Complex64 = phi.amps.iter().zip(&ddt).map(|(a, b)| a.conj() * b).sum();
        let fd = overlap.norm() / es.frequency(crate::eigensystem::Branch::Plus1);
        let r = adiabatic_coupling_ratio(t, &p, &s).unwrap();
        assert!((fd / r - 1.0).abs() < 1e-7, "{fd} vs {r}");
    }

    #[test]
    fn singular_gap_is_reported() {
        assert!(matches!(coupling_ratio(0.0, 0.0, 1.0), Err(CmatError::SingularGap)));
    }

    #[test]
    fn tau0_small_drive_limit() {
        let p = lossless(1.0);
        let omega0 = 0.01;
        let t0 = tau0(&p, omega0).unwrap();
        assert!((t0 * 2.0 * omega0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn tau0_is_tau_independent() {
        let p = lossless(1.0);
        let omega0 = 0.7;
        let t0 = tau0(&p, omega0).unwrap();
        for tau in [1.0, 10.0] {
            let s = PulseSchedule::new(omega0, tau).unwrap();
            let f = |t: f64| adiabatic_coupling_ratio(t, &p, &s).unwrap() * tau;
            let (_, best) = scan_then_refine(f, -7.5 * tau, 7.5 * tau, TAU0_SCAN_POINTS, TAU0_XTOL * tau);
            assert!((best / t0 - 1.0).abs() < 1e-10, "tau={tau}: {best} vs {t0}");
        }
    }

    #[test]
    fn tau0_matches_dense_grid() {
        for (g, omega0) in [(1.0, 1.0), (1.0, 0.05), (0.5, 4.0)] {
            let grid = linspace(-7.5, 7.5, 1_000_001);
            let oracle = grid.iter().map(|&s| bracket_oracle(s, omega0, g)).fold(0.0, f64::max);
            let t0 = tau0(&lossless(g), omega0).unwrap();
            assert!((t0 / oracle - 1.0).abs() < 1e-6, "{t0} vs {oracle}");
            assert!(t0 >= oracle * (1.0 - 1e-12));
        }
    }

    #[test]
    fn tau0_non_increasing_in_drive() {
        let p = lossless(1.0);
        let mut last = f64::INFINITY;
        for x in linspace(-2.0, 1.0, 31) {
            let t0 = tau0(&p, 10f64.powf(x)).unwrap();
            assert!(t0 <= last * (1.0 + 1e-12), "Omega0/g=10^{x}: {t0} > {last}");
            last = t0;
        }
    }

    #[test]
    fn crossover_values() {
        let p = CqedParams::from_cooperativity(20.0, 200.0).unwrap();
        let r = thresholds(&p, &AdiabaticFactors::default()).unwrap();
        assert!((r.g_star - 200f64.sqrt()).abs() < 1e-12);
        assert!((r.kappa_star - 0.5).abs() < 1e-15);
        assert_eq!(r.binding, Binding::AdiabaticLimited);
        let r = thresholds(&CqedParams::from_cooperativity(5.0, 200.0).unwrap(), &AdiabaticFactors::default()).unwrap();
        assert_eq!(r.binding, Binding::CavitySuppressionLimited);
        let at = thresholds(&CqedParams::from_cooperativity(r.g_star, 200.0).unwrap(), &AdiabaticFactors::default())
            .unwrap();
        assert!((at.tau_a - at.tau_c).abs() < 1e-12 * at.tau_a);
    }

    #[test]
    fn thresholds_require_cooperativity() {
        let p = CqedParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            thresholds(&p, &AdiabaticFactors::default()),
            Err(CmatError::UndefinedCooperativity { .. })
        ));
        assert!(omega0_from_balancing(&p, 1.0).is_err());
        assert!(omega0_from_balancing(&CqedParams::new(1.0, 1.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn factor_validation() {
        assert!(AdiabaticFactors::new(0.0, 0.5).is_err());
        assert!(AdiabaticFactors::new(8.0, 1.0).is_err());
        assert!(AdiabaticFactors::new(8.0, 0.0).is_err());
        let f: AdiabaticFactors = serde_json::from_str("{}").unwrap();
        assert_eq!(f, AdiabaticFactors::default());
    }

    #[test]
    fn balancing_examples() {
        let p = CqedParams::new(1.0, 1.0, 1.0).unwrap();
        let w = omega0_from_balancing(&p, 2f64.sqrt()).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
        let w2 = omega0_from_balancing(&p, 2.0 * 2f64.sqrt()).unwrap();
        assert!((w2 / w - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn binding_agrees_with_direct_comparison(
            g in 0.1f64..500.0, kappa in 1e-3f64..100.0, gamma in 1e-3f64..10.0,
            f_adi in 1.0f64..20.0, f_cp in 0.01f64..0.99,
        ) {
            let p = CqedParams::new(g, kappa, gamma).unwrap();
            let f = AdiabaticFactors::new(f_adi, f_cp).unwrap();
            let r = thresholds(&p, &f).unwrap();
            prop_assert_eq!(r.binding == Binding::AdiabaticLimited, r.tau_a >= r.tau_c);
            // kappa* is the cavity decay at g = g* for the same cooperativity
            let kappa_at_gstar = r.g_star * r.g_star / (2.0 * gamma * r.cooperativity);
            prop_assert!((kappa_at_gstar / r.kappa_star - 1.0).abs() < 1e-12);
        }

        #[test]
        fn balancing_minimizes_loss(g in 0.5f64..300.0, kappa in 1e-2f64..50.0, tau in 1e-2f64..50.0) {
            let p = CqedParams::new(g, kappa, 1.0).unwrap();
            let w = omega0_from_balancing(&p, tau).unwrap();
            let b = beta(&p, tau, w).unwrap();
            let c = p.cooperativity().unwrap();
            prop_assert!((b.beta - 2.0 / c.sqrt()).abs() < 1e-12 * b.beta);
        }
    }
}
