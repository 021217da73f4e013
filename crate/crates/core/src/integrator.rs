//! Adaptive Dormand–Prince 5(4) integrator for small real systems, with the
//! fourth-order continuous extension used for output at fixed sample times.

use crate::error::CmatError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (w, k) in terms {
        if *w != 0.0 {
            for i in 0..N {
                out[i] += h * w * k[i];
            }
        }
    }
    out
}

fn scaled_rms<const N: usize>(v: &[f64; N], scale: &[f64; N]) -> f64 {
    (v.iter().zip(scale).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / N as f64).sqrt()
}

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t1 > t0`.
///
/// `sample_times` must be sorted; each time inside `[t0, t1]` is reported
/// through `on_sample` in order, interpolated from the continuous extension.
/// Returns the state at `t1`.
pub fn integrate<const N: usize, F, S>(
    mut rhs: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &Options,
    sample_times: &[f64],
    mut on_sample: S,
) -> Result<([f64; N], Stats), CmatError>
where
    F: FnMut(f64, &[f64; N], &mut [f64; N]),
    S: FnMut(f64, &[f64; N]),
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(CmatError::invalid("rel_tol/abs_tol", "tolerances must be > 0"));
    }
    if !(opts.max_step > 0.0) {
        return Err(CmatError::invalid("max_step", "must be > 0"));
    }
    if !(t1 > t0) {
        return Err(CmatError::invalid("t1", "integration interval must be non-empty"));
    }

    let mut stats = Stats::default();
    let mut eval = |t: f64, y: &[f64; N], stats: &mut Stats| {
        let mut dy = [0.0; N];
        rhs(t, y, &mut dy);
        stats.rhs_evals += 1;
        dy
    };

    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        if sample_times[next_sample] == t0 {
            on_sample(t0, &y0);
        }
        next_sample += 1;
    }

    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = eval(t, &y, &mut stats);

    let scale = |a: &[f64; N], b: &[f64; N]| -> [f64; N] {
        std::array::from_fn(|i| opts.abs_tol + opts.rel_tol * a[i].abs().max(b[i].abs()))
    };

    // initial step guess
    let mut h = {
        let sk = scale(&y, &y);
        let d0 = scaled_rms(&y, &sk);
        let d1 = scaled_rms(&k1, &sk);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        let h0 = h0.min(opts.max_step).min(span);
        let y1 = combine(&y, h0, &[(1.0, &k1)]);
        let f1 = eval(t + h0, &y1, &mut stats);
        let diff: [f64; N] = std::array::from_fn(|i| f1[i] - k1[i]);
        let d2 = scaled_rms(&diff, &sk) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6 * span) } else { (0.01 / dm).powf(0.2) };
        (100.0 * h0).min(h1).min(opts.max_step)
    };

    let mut last_rejected = false;
    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(CmatError::IntegrationFailure { t, reason: "step budget exhausted".into() });
        }
        let min_h = 16.0 * f64::EPSILON * t.abs().max(span);
        if h < min_h {
            return Err(CmatError::IntegrationFailure { t, reason: format!("step size underflow (h={h:e})") });
        }
        let last = t + h >= t1;
        let h_step = if last { t1 - t } else { h };

        let k2 = eval(t + C2 * h_step, &combine(&y, h_step, &[(A21, &k1)]), &mut stats);
        let k3 = eval(t + C3 * h_step, &combine(&y, h_step, &[(A31, &k1), (A32, &k2)]), &mut stats);
        let k4 = eval(t + C4 * h_step, &combine(&y, h_step, &[(A41, &k1), (A42, &k2), (A43, &k3)]), &mut stats);
        let k5 = eval(
            t + C5 * h_step,
            &combine(&y, h_step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            &mut stats,
        );
        let k6 = eval(
            t + h_step,
            &combine(&y, h_step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            &mut stats,
        );
        let y_new = combine(&y, h_step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t1 } else { t + h_step };
        let k7 = eval(t_new, &y_new, &mut stats);

        let err_vec: [f64; N] = std::array::from_fn(|i| {
            h_step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let err = scaled_rms(&err_vec, &scale(&y, &y_new));

        if !err.is_finite() {
            stats.rejected += 1;
            last_rejected = true;
            h = h_step * 0.2;
            continue;
        }

        if err <= 1.0 {
            // continuous extension on [t, t_new]
            let mut emit = |ts: f64| {
                let theta = (ts - t) / h_step;
                let theta1 = 1.0 - theta;
                let ys: [f64; N] = std::array::from_fn(|i| {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h_step * k1[i] - ydiff;
                    let r4 = ydiff - h_step * k7[i] - bspl;
                    let r5 = h_step
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                    y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
                });
                on_sample(ts, &ys);
            };
            while next_sample < sample_times.len() && sample_times[next_sample] < t_new {
                emit(sample_times[next_sample]);
                next_sample += 1;
            }
            if next_sample < sample_times.len() && sample_times[next_sample] == t_new {
                on_sample(t_new, &y_new);
                next_sample += 1;
            }

            stats.accepted += 1;
            t = t_new;
            y = y_new;
            k1 = k7;
            let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h_step * fac).min(opts.max_step);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h = h_step * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok((y, stats))
}
