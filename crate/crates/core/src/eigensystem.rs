//! Closed-form instantaneous eigenpairs of `H(t)`.
//!
//! Besides the zero-energy dark state the spectrum holds two symmetric
//! pairs `±omega_1`, `±omega_2` with `|omega_1| <= |omega_2|`. Each pair has
//! its own coefficient formula for the excited-state amplitudes; the
//! `omega_1` formula is built from `(A1, B1)` and the `omega_2` formula from
//! `(A2, B2)`. Using a pair on the other branch breaks down at
//! `Omega_1 = Omega_2`, where it collapses to the zero vector.

use nalgebra::SymmetricEigen;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{CmatError, Result};
use crate::model::{
    dark_norm, darkstate_from_rabi, hamiltonian_from_rabi, CMatrix5, CVector5, CqedParams,
    PulseSchedule, StateVector,
};

/// Relative threshold below which a coefficient pair is treated as vanished.
pub const DEGENERACY_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Zero,
    Plus1,
    Minus1,
    Plus2,
    Minus2,
}

impl Branch {
    /// Storage order used by [`EigenSystem`].
    pub const ALL: [Branch; 5] = [Branch::Zero, Branch::Plus1, Branch::Minus1, Branch::Plus2, Branch::Minus2];

    pub const fn index(self) -> usize {
        self as usize
    }
}

/// Which amplitude ratio `(x3, x4)` is used for a non-zero eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffPair {
    /// `(A1, B1) = (Omega_2^2 - w^2 + 2g^2, -Omega_1^2 + w^2 - 2g^2)`
    Sum,
    /// `(A2, B2) = (Omega_2^2 - w^2, Omega_1^2 - w^2)`
    Difference,
}

impl CoeffPair {
    pub fn coefficients(self, omega: f64, omega1: f64, omega2: f64, g: f64) -> (f64, f64) {
        let (w2, a, b, g2) = (omega * omega, omega1 * omega1, omega2 * omega2, g * g);
        match self {
            CoeffPair::Sum => (b - w2 + 2.0 * g2, -a + w2 - 2.0 * g2),
            CoeffPair::Difference => (b - w2, a - w2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

/// Squared norms of the unnormalized eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub n0: f64,
    pub n1: f64,
    pub n2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    /// Eigenfrequencies in [`Branch::ALL`] order.
    pub omega: [f64; 5],
    /// Unit eigenvectors in [`Branch::ALL`] order.
    pub vectors: [StateVector; 5],
    pub coeffs: Coefficients,
    pub norms: Norms,
    /// Set when a branch vector came from numeric diagonalization because
    /// its closed form degenerated.
    pub numeric_fallback: bool,
}

impl EigenSystem {
    pub fn frequency(&self, b: Branch) -> f64 {
        self.omega[b.index()]
    }

    pub fn vector(&self, b: Branch) -> &StateVector {
        &self.vectors[b.index()]
    }
}

/// `(omega_1^2, omega_2^2)`. The smaller root uses `omega_1^2 omega_2^2 = N0`
/// to avoid cancellation when the pulses are weak.
pub fn squared_frequencies(omega1: f64, omega2: f64, g: f64) -> (f64, f64) {
    let (a, b, g2) = (omega1 * omega1, omega2 * omega2, g * g);
    let sum = 2.0 * g2 + a + b;
    let disc = (4.0 * g2 * g2 + (a - b) * (a - b)).sqrt();
    let w2sq = 0.5 * (sum + disc);
    let w1sq = if w2sq > 0.0 { dark_norm(omega1, omega2, g) / w2sq } else { 0.0 };
    (w1sq, w2sq)
}

pub fn eigenvalues_from_rabi(omega1: f64, omega2: f64, g: f64) -> [f64; 5] {
    let (w1sq, w2sq) = squared_frequencies(omega1, omega2, g);
    let (w1, w2) = (w1sq.sqrt(), w2sq.sqrt());
    [0.0, w1, -w1, w2, -w2]
}

/// Eigenfrequencies of `H(t)` in [`Branch::ALL`] order.
pub fn eigenvalues(t: f64, p: &CqedParams, s: &PulseSchedule) -> [f64; 5] {
    let (o1, o2) = s.rabi(t);
    eigenvalues_from_rabi(o1, o2, p.g())
}

/// Unnormalized `(A Omega_1, B Omega_2, i w A, i w B, g (A + B))`.
pub fn branch_vector(pair: CoeffPair, omega: f64, omega1: f64, omega2: f64, g: f64) -> CVector5 {
    let (a, b) = pair.coefficients(omega, omega1, omega2, g);
    CVector5::new(
        C64::new(a * omega1, 0.0),
        C64::new(b * omega2, 0.0),
        C64::new(0.0, omega * a),
        C64::new(0.0, omega * b),
        C64::new(g * (a + b), 0.0),
    )
}

/// True when `pair` has collapsed for eigenvalue `omega` at relative level `eps`.
pub fn pair_breaks_down(pair: CoeffPair, omega: f64, omega1: f64, omega2: f64, g: f64, eps: f64) -> bool {
    let (a, b) = pair.coefficients(omega, omega1, omega2, g);
    let scale = omega1 * omega1 + omega2 * omega2 + g * g;
    a.abs() + b.abs() < eps * scale
}

/// Rotates the global phase so that the largest component is real positive.
/// Near-ties resolve to the lowest index.
pub fn fix_phase(v: &mut CVector5) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).copied().unwrap();
    let phase = pivot.conj() / pivot.norm();
    v.iter_mut().for_each(|z| *z *= phase);
}

/// Eigenvalues in ascending order with matching unit eigenvectors.
pub fn numeric_spectrum(h: &CMatrix5) -> ([f64; 5], [CVector5; 5]) {
    let eig = SymmetricEigen::new(*h);
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = std::array::from_fn(|k| eig.eigenvalues[order[k]]);
    let vectors = std::array::from_fn(|k| eig.eigenvectors.column(order[k]).into_owned());
    (values, vectors)
}

pub fn eigenvectors_from_rabi(omega1: f64, omega2: f64, g: f64) -> Result<EigenSystem> {
    let dark = darkstate_from_rabi(omega1, omega2, g).map_err(|_| {
        CmatError::DegenerateSpectrum("both Rabi frequencies vanish; zero eigenvalue is threefold".into())
    })?;
    let omega = eigenvalues_from_rabi(omega1, omega2, g);
    let (w1, w2) = (omega[Branch::Plus1.index()], omega[Branch::Plus2.index()]);
    let (a1, b1) = CoeffPair::Sum.coefficients(w1, omega1, omega2, g);
    let (a2, b2) = CoeffPair::Difference.coefficients(w2, omega1, omega2, g);

    let raw1 = branch_vector(CoeffPair::Sum, w1, omega1, omega2, g);
    let raw2 = branch_vector(CoeffPair::Difference, w2, omega1, omega2, g);
    let norms = Norms { n0: dark_norm(omega1, omega2, g), n1: raw1.norm_squared(), n2: raw2.norm_squared() };

    let guard1 = pair_breaks_down(CoeffPair::Sum, w1, omega1, omega2, g, DEGENERACY_EPS) || !(norms.n1 > 0.0);
    let guard2 =
        pair_breaks_down(CoeffPair::Difference, w2, omega1, omega2, g, DEGENERACY_EPS) || !(norms.n2 > 0.0);
    let numeric = (guard1 || guard2).then(|| numeric_spectrum(&hamiltonian_from_rabi(omega1, omega2, g)).1);

    // ascending numeric order is (-w2, -w1, 0, w1, w2)
    let make = |branch: Branch| -> CVector5 {
        let mut v = match (branch, &numeric) {
            (Branch::Plus1, Some(n)) if guard1 => n[3],
            (Branch::Minus1, Some(n)) if guard1 => n[1],
            (Branch::Plus2, Some(n)) if guard2 => n[4],
            (Branch::Minus2, Some(n)) if guard2 => n[0],
            (Branch::Plus1 | Branch::Minus1, _) => {
                branch_vector(CoeffPair::Sum, omega[branch.index()], omega1, omega2, g).unscale(norms.n1.sqrt())
            }
            (Branch::Plus2 | Branch::Minus2, _) => {
                branch_vector(CoeffPair::Difference, omega[branch.index()], omega1, omega2, g)
                    .unscale(norms.n2.sqrt())
            }
            (Branch::Zero, _) => unreachable!(),
        };
        fix_phase(&mut v);
        v
    };

    let vectors = [
        dark,
        StateVector::from_vector(&make(Branch::Plus1)),
        StateVector::from_vector(&make(Branch::Minus1)),
        StateVector::from_vector(&make(Branch::Plus2)),
        StateVector::from_vector(&make(Branch::Minus2)),
    ];
    Ok(EigenSystem {
        omega,
        vectors,
        coeffs: Coefficients { a1, b1, a2, b2 },
        norms,
        numeric_fallback: numeric.is_some(),
    })
}

/// Instantaneous eigensystem of `H(t)`.
pub fn eigenvectors(t: f64, p: &CqedParams, s: &PulseSchedule) -> Result<EigenSystem> {
    let (o1, o2) = s.rabi(t);
    eigenvectors_from_rabi(o1, o2, p.g())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationStatus {
    Pass,
    Fail,
    /// Two analytic eigenvalues coincide within tolerance, so eigenvectors
    /// cannot be paired unambiguously.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenValidation {
    pub status: ValidationStatus,
    pub max_eigenvalue_error: f64,
    /// Largest `sin` of the angle between paired analytic and numeric vectors.
    pub max_subspace_angle: f64,
    /// Largest `||H phi - omega phi||` of the analytic pairs.
    pub max_residual: f64,
    /// `(A2, B2)` would vanish on the `omega_1` branch at this instant.
    pub difference_pair_fails_on_branch1: bool,
    /// `(A1, B1)` would vanish on the `omega_2` branch at this instant.
    pub sum_pair_fails_on_branch2: bool,
    /// Decay rates were supplied but only the Hermitian part was checked.
    pub decay_ignored: bool,
    pub tol: f64,
}

impl EigenValidation {
    pub fn passed(&self) -> bool {
        self.status != ValidationStatus::Fail
    }
}

/// Compares an analytic eigensystem with a numeric diagonalization of `h`.
pub fn compare_with_numeric(h: &CMatrix5, es: &EigenSystem, tol: f64) -> EigenValidation {
    let (values, vectors) = numeric_spectrum(h);

    let mut analytic = es.omega;
    analytic.sort_by(f64::total_cmp);
    let max_eigenvalue_error =
        analytic.iter().zip(&values).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);

    let max_residual = Branch::ALL
        .iter()
        .map(|&b| {
            let v = es.vector(b).to_vector();
            (h * v - v * C64::new(es.frequency(b), 0.0)).norm()
        })
        .fold(0.0, f64::max);

    let degenerate = analytic.windows(2).any(|w| (w[1] - w[0]).abs() < tol);

    let max_subspace_angle = if degenerate {
        f64::NAN
    } else {
        Branch::ALL
            .iter()
            .map(|&b| {
                let target = es.frequency(b);
                let k = (0..5).min_by(|&i, &j| (values[i] - target).abs().total_cmp(&(values[j] - target).abs())).unwrap();
                let v = es.vector(b).to_vector();
                let n = vectors[k];
                (v - n * n.dotc(&v)).norm()
            })
            .fold(0.0, f64::max)
    };

    let status = if max_eigenvalue_error >= tol || max_residual >= tol {
        ValidationStatus::Fail
    } else if degenerate {
        ValidationStatus::Degenerate
    } else if max_subspace_angle < tol {
        ValidationStatus::Pass
    } else {
        ValidationStatus::Fail
    };

    EigenValidation {
        status,
        max_eigenvalue_error,
        max_subspace_angle,
        max_residual,
        difference_pair_fails_on_branch1: false,
        sum_pair_fails_on_branch2: false,
        decay_ignored: false,
        tol,
    }
}

/// Diagonalizes `H(t)` numerically and checks the closed forms against it.
pub fn validate_against_numeric(t: f64, p: &CqedParams, s: &PulseSchedule, tol: f64) -> Result<EigenValidation> {
    if !(tol > 0.0) {
        return Err(CmatError::invalid("tol", format!("must be > 0, got {tol}")));
    }
    let (o1, o2) = s.rabi(t);
    let g = p.g();
    let es = eigenvectors_from_rabi(o1, o2, g)?;
    let mut report = compare_with_numeric(&hamiltonian_from_rabi(o1, o2, g), &es, tol);
    let (w1, w2) = (es.frequency(Branch::Plus1), es.frequency(Branch::Plus2));
    report.difference_pair_fails_on_branch1 = pair_breaks_down(CoeffPair::Difference, w1, o1, o2, g, tol);
    report.sum_pair_fails_on_branch2 = pair_breaks_down(CoeffPair::Sum, w2, o1, o2, g, tol);
    report.decay_ignored = p.has_decay();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian;
    use proptest::prelude::*;

    #[test]
    fn symmetric_point_frequencies() {
        let (o, g) = (0.7, 1.9);
        let w = eigenvalues_from_rabi(o, o, g);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - o).abs() < 1e-14 && (w[2] + o).abs() < 1e-14);
        let w2 = (2.0 * g * g + o * o).sqrt();
        assert!((w[3] - w2).abs() < 1e-14 && (w[4] + w2).abs() < 1e-14);
    }

    #[test]
    fn empty_pulse_frequencies() {
        let w = eigenvalues_from_rabi(0.0, 0.0, 2.0);
        assert_eq!(&w[..3], &[0.0, 0.0, -0.0]);
        assert!((w[3] - 2f64.sqrt() * 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_point_vectors_have_no_photon() {
        let (o, g) = (1.2, 0.8);
        let es = eigenvectors_from_rabi(o, o, g).unwrap();
        assert!((es.coeffs.a1 - 2.0 * g * g).abs() < 1e-14);
        assert!((es.coeffs.b1 + 2.0 * g * g).abs() < 1e-14);
        for b in [Branch::Plus1, Branch::Minus1] {
            let v = es.vector(b);
            assert!(v.amps[4].norm() < 1e-15);
            assert!((v.amps[0] + v.amps[1]).norm() < 1e-15);
            assert!((v.amps[2] + v.amps[3]).norm() < 1e-15);
        }
        assert!(!es.numeric_fallback);
    }

    #[test]
    fn zero_branch_is_darkstate() {
        let es = eigenvectors_from_rabi(0.3, 1.7, 2.2).unwrap();
        assert_eq!(es.vectors[0], darkstate_from_rabi(0.3, 1.7, 2.2).unwrap());
        assert_eq!(es.norms.n0, dark_norm(0.3, 1.7, 2.2));
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        assert!(matches!(eigenvectors_from_rabi(0.0, 0.0, 1.0), Err(CmatError::DegenerateSpectrum(_))));
    }

    #[test]
    fn phase_convention() {
        let es = eigenvectors_from_rabi(0.4, 2.5, 1.0).unwrap();
        for v in &es.vectors[1..] {
            let max = v.amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let pivot = v.amps.iter().find(|z| z.norm() >= max * (1.0 - 1e-9)).unwrap();
            assert!(pivot.im.abs() < 1e-15 && pivot.re > 0.0);
        }
    }

    #[test]
    fn wrong_pair_breaks_down_at_symmetric_point() {
        let p = CqedParams::new(1.0, 0.0, 0.0).unwrap();
        let s = PulseSchedule::new(1.5, 1.0).unwrap();
        let report = validate_against_numeric(0.0, &p, &s, 1e-8).unwrap();
        assert_eq!(report.status, ValidationStatus::Pass);
        assert!(report.difference_pair_fails_on_branch1);
        assert!(report.sum_pair_fails_on_branch2);
        assert!(!report.decay_ignored);
        // the collapsed vectors really are zero
        let w = eigenvalues(0.0, &p, &s);
        let (o1, o2) = s.rabi(0.0);
        assert!(branch_vector(CoeffPair::Difference, w[1], o1, o2, 1.0).norm() < 1e-12);
        assert!(branch_vector(CoeffPair::Sum, w[3], o1, o2, 1.0).norm() < 1e-12);
        // off the symmetric point the flags clear
        let report = validate_against_numeric(1.0, &p, &s, 1e-8).unwrap();
        assert!(!report.difference_pair_fails_on_branch1 && !report.sum_pair_fails_on_branch2);
    }

    #[test]
    fn decay_rates_are_flagged() {
        let p = CqedParams::new(1.0, 0.5, 0.5).unwrap();
        let s = PulseSchedule::new(1.0, 1.0).unwrap();
        let report = validate_against_numeric(0.4, &p, &s, 1e-8).unwrap();
        assert!(report.decay_ignored && report.passed());
        assert!(validate_against_numeric(0.4, &p, &s, 0.0).is_err());
    }

    #[test]
    fn sign_flip_is_detected() {
        let (o1, o2, g) = (0.9, 0.4, 1.3);
        let es = eigenvectors_from_rabi(o1, o2, g).unwrap();
        let mut h = hamiltonian_from_rabi(o1, o2, g);
        h[(2, 4)] = -h[(2, 4)];
        h[(4, 2)] = -h[(4, 2)];
        let report = compare_with_numeric(&h, &es, 1e-8);
        assert_eq!(report.status, ValidationStatus::Fail);
    }

    #[test]
    fn fallback_matches_closed_form() {
        let (o1, o2, g) = (0.9, 0.4, 1.3);
        let es = eigenvectors_from_rabi(o1, o2, g).unwrap();
        let (values, vectors) = numeric_spectrum(&hamiltonian_from_rabi(o1, o2, g));
        for (branch, k) in [(Branch::Minus2, 0), (Branch::Minus1, 1), (Branch::Plus1, 3), (Branch::Plus2, 4)] {
            assert!((values[k] - es.frequency(branch)).abs() < 1e-12);
            let mut n = vectors[k];
            fix_phase(&mut n);
            assert!((n - es.vector(branch).to_vector()).norm() < 1e-10);
        }
    }

    #[test]
    fn frequencies_are_continuous_along_pulse() {
        let p = CqedParams::new(1.0, 0.0, 0.0).unwrap();
        let s = PulseSchedule::new(2.0, 1.0).unwrap();
        let max_jump = |n: usize| {
            let ts: Vec<f64> = (0..=n).map(|k| -7.5 + 15.0 * k as f64 / n as f64).collect();
            ts.windows(2)
                .map(|w| {
                    let (a, b) = (eigenvalues(w[0], &p, &s), eigenvalues(w[1], &p, &s));
                    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (max_jump(100), max_jump(1000));
        assert!(fine < coarse / 5.0, "{coarse} -> {fine}");
    }

    proptest! {
        #[test]
        fn closed_forms_match_numeric(o1 in 0.0f64..10.0, o2 in 0.0f64..10.0, g in 0.05f64..10.0) {
            prop_assume!(o1 + o2 > 1e-3);
            let es = eigenvectors_from_rabi(o1, o2, g).unwrap();
            let h = hamiltonian_from_rabi(o1, o2, g);
            let report = compare_with_numeric(&h, &es, 1e-9);
            prop_assert!(report.passed(), "{:?}", report);
            prop_assert!(report.max_residual < 1e-10 * h.norm().max(1.0));
            // orthonormality when nondegenerate
            if report.status == ValidationStatus::Pass {
                for j in 0..5 {
                    for k in 0..5 {
                        let ip = es.vectors[j].inner(&es.vectors[k]).norm();
                        let want = if j == k { 1.0 } else { 0.0 };
                        prop_assert!((ip - want).abs() < 1e-10);
                    }
                }
            }
        }

        #[test]
        fn spectrum_identities(o1 in 0.0f64..20.0, o2 in 0.0f64..20.0, g in 0.01f64..20.0) {
            let w = eigenvalues_from_rabi(o1, o2, g);
            prop_assert_eq!(w[1], -w[2]);
            prop_assert_eq!(w[3], -w[4]);
            prop_assert!(0.0 <= w[1] && w[1] <= w[3]);
            let sum = 2.0 * g * g + o1 * o1 + o2 * o2;
            prop_assert!((w[1] * w[1] + w[3] * w[3] - sum).abs() <= 1e-12 * sum);
        }

        #[test]
        fn expectation_values_match(t in -5.0f64..5.0, omega0 in 0.1f64..5.0, g in 0.1f64..5.0) {
            let p = CqedParams::new(g, 0.0, 0.0).unwrap();
            let s = PulseSchedule::new(omega0, 1.0).unwrap();
            let h = hamiltonian(t, &p, &s);
            let es = eigenvectors(t, &p, &s).unwrap();
            for b in Branch::ALL {
                let v = es.vector(b).to_vector();
                let e = v.dotc(&(h * v));
                prop_assert!((e.re - es.frequency(b)).abs() < 1e-10 && e.im.abs() < 1e-10);
            }
        }
    }
}
