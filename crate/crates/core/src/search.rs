//! One-dimensional maximization: uniform scans and golden-section refinement.

use std::convert::Infallible;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a maximum of `f` on `[lo, hi]`, stopping once
/// the bracket is narrower than `xtol`. Returns the best evaluated point.
pub fn try_golden_max<E, F>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fd > fc { (d, fd) } else { (c, fc) };
    while hi - lo > xtol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c)?;
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d)?;
            if fd > best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    let r: Result<_, Infallible> = try_golden_max(|x| Ok(f(x)), lo, hi, xtol);
    match r {
        Ok(v) => v,
    }
}

/// `n` evenly spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|k| if k == n - 1 { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Index of the largest value; NaN never wins, ties go to the first.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Coarse scan of `n` points followed by golden-section refinement in the
/// cells adjacent to the best scan point.
pub fn scan_then_refine<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, n: usize, xtol: f64) -> (f64, f64) {
    let xs = linspace(lo, hi, n.max(3));
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let k = argmax(&ys).unwrap_or(0);
    let a = xs[k.saturating_sub(1)];
    let b = xs[(k + 1).min(xs.len() - 1)];
    let (x, y) = golden_max(&mut f, a, b, xtol);
    if y >= ys[k] {
        (x, y)
    } else {
        (xs[k], ys[k])
    }
}
