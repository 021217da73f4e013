//! Parameter-space sweeps: success/fidelity maps at fixed cooperativity,
//! the dissipation-free fidelity map, and the window-truncation study.
//!
//! Cells are evaluated in parallel and merged back in grid order, so a
//! given [`SweepSpec`] always produces the same [`SweepResult`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{tau0, thresholds, AdiabaticFactors};
use crate::dynamics::{evolve, SimConfig};
use crate::error::{CmatError, Result};
use crate::lossmodel::{optimize_omega0, Objective};
use crate::model::{CqedParams, PulseSchedule};
use crate::search::linspace;

/// CSV header of the cell table.
pub const CSV_HEADER: &str = "x,y,success_probability,fidelity,norm_final,i_a,i_cav,omega0_opt";

/// Bisection steps used to trace the `tau = F_adi tau0` curve.
const CURVE_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    SuccessMap,
    /// Same simulations as [`SweepMode::SuccessMap`]; fidelity is recorded per cell.
    FidelityMap,
    DissipationFreeMap,
    TruncationStudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAxis")]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub scale: Scale,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    #[serde(default)]
    name: String,
    min: f64,
    max: f64,
    count: usize,
    #[serde(default = "default_scale")]
    scale: Scale,
}

fn default_scale() -> Scale {
    Scale::Log
}

impl TryFrom<RawAxis> for Axis {
    type Error = CmatError;

    fn try_from(raw: RawAxis) -> Result<Self> {
        Axis::new(raw.name, raw.min, raw.max, raw.count, raw.scale)
    }
}

impl Axis {
    pub fn new(name: impl Into<String>, min: f64, max: f64, count: usize, scale: Scale) -> Result<Self> {
        if count < 2 {
            return Err(CmatError::invalid("count", format!("must be >= 2, got {count}")));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(CmatError::invalid("min/max", format!("need finite min < max, got [{min}, {max}]")));
        }
        if scale == Scale::Log && !(min > 0.0) {
            return Err(CmatError::invalid("min", format!("log axis needs min > 0, got {min}")));
        }
        Ok(Axis { name: name.into(), min, max, count, scale })
    }

    pub fn log(name: &str, min: f64, max: f64, count: usize) -> Result<Self> {
        Axis::new(name, min, max, count, Scale::Log)
    }

    pub fn linear(name: &str, min: f64, max: f64, count: usize) -> Result<Self> {
        Axis::new(name, min, max, count, Scale::Linear)
    }

    fn coord(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        }
    }

    fn uncoord(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => u,
            Scale::Log => u.exp(),
        }
    }

    /// Grid values with exact endpoints.
    pub fn values(&self) -> Vec<f64> {
        let n = self.count;
        linspace(self.coord(self.min), self.coord(self.max), n)
            .into_iter()
            .enumerate()
            .map(|(k, u)| match k {
                0 => self.min,
                _ if k == n - 1 => self.max,
                _ => self.uncoord(u),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSweepSpec")]
pub struct SweepSpec {
    pub mode: SweepMode,
    pub fixed_c: Option<f64>,
    pub x_axis: Axis,
    pub y_axis: Option<Axis>,
    pub factors: AdiabaticFactors,
    pub cfg: SimConfig,
    /// `Omega_0 T` of the truncation study.
    pub omega0_t: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepSpec {
    mode: SweepMode,
    #[serde(default)]
    fixed_c: Option<f64>,
    x_axis: Axis,
    #[serde(default)]
    y_axis: Option<Axis>,
    #[serde(default)]
    factors: AdiabaticFactors,
    #[serde(default)]
    cfg: SimConfig,
    #[serde(default = "default_omega0_t")]
    omega0_t: f64,
}

fn default_omega0_t() -> f64 {
    1000.0
}

impl TryFrom<RawSweepSpec> for SweepSpec {
    type Error = CmatError;

    fn try_from(raw: RawSweepSpec) -> Result<Self> {
        let spec = SweepSpec {
            mode: raw.mode,
            fixed_c: raw.fixed_c,
            x_axis: raw.x_axis,
            y_axis: raw.y_axis,
            factors: raw.factors,
            cfg: raw.cfg,
            omega0_t: raw.omega0_t,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepSpec {
    /// Success map over `g/gamma` in `[1, 300]` and `tau gamma` in `[1e-3, 10]`, 41 x 41.
    pub fn success_map(cooperativity: f64) -> Self {
        SweepSpec {
            mode: SweepMode::SuccessMap,
            fixed_c: Some(cooperativity),
            x_axis: Axis::log("g", 1.0, 300.0, 41).expect("valid axis"),
            y_axis: Some(Axis::log("tau", 1e-3, 10.0, 41).expect("valid axis")),
            factors: AdiabaticFactors::default(),
            cfg: SimConfig::default(),
            omega0_t: default_omega0_t(),
        }
    }

    /// Dissipation-free map over `Omega_0 tau` and `g tau` in `[0.1, 100]`, 41 x 41.
    pub fn dissipation_free_map() -> Self {
        SweepSpec {
            mode: SweepMode::DissipationFreeMap,
            fixed_c: None,
            x_axis: Axis::log("omega0_tau", 0.1, 100.0, 41).expect("valid axis"),
            y_axis: Some(Axis::log("g_tau", 0.1, 100.0, 41).expect("valid axis")),
            factors: AdiabaticFactors::default(),
            cfg: SimConfig::default(),
            omega0_t: default_omega0_t(),
        }
    }

    /// Fidelity against `T/tau` in `[5, 20]` at `g = Omega_0`, `Omega_0 T = 1000`.
    pub fn truncation_study() -> Self {
        SweepSpec {
            mode: SweepMode::TruncationStudy,
            fixed_c: None,
            x_axis: Axis::linear("t_over_tau", 5.0, 20.0, 16).expect("valid axis"),
            y_axis: None,
            factors: AdiabaticFactors::default(),
            cfg: SimConfig::default(),
            omega0_t: default_omega0_t(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        match self.mode {
            SweepMode::SuccessMap | SweepMode::FidelityMap => {
                match self.fixed_c {
                    Some(c) if c.is_finite() && c > 0.0 => {}
                    other => return Err(CmatError::invalid("fixed_c", format!("must be finite and > 0, got {other:?}"))),
                }
                if self.x_axis.min <= 0.0 {
                    return Err(CmatError::invalid("x_axis", "g must be > 0"));
                }
                self.positive_y_axis()
            }
            SweepMode::DissipationFreeMap => {
                if self.x_axis.min <= 0.0 {
                    return Err(CmatError::invalid("x_axis", "omega0 tau must be > 0"));
                }
                self.positive_y_axis()
            }
            SweepMode::TruncationStudy => {
                if self.x_axis.min <= 0.0 {
                    return Err(CmatError::invalid("x_axis", "T/tau must be > 0"));
                }
                if !(self.omega0_t.is_finite() && self.omega0_t > 0.0) {
                    return Err(CmatError::invalid("omega0_t", format!("must be finite and > 0, got {}", self.omega0_t)));
                }
                Ok(())
            }
        }
    }

    fn positive_y_axis(&self) -> Result<()> {
        match &self.y_axis {
            None => Err(CmatError::invalid("y_axis", "required for map sweeps")),
            Some(a) if a.min <= 0.0 => Err(CmatError::invalid("y_axis", "values must be > 0")),
            Some(_) => Ok(()),
        }
    }

    fn y_values(&self) -> Vec<f64> {
        match &self.y_axis {
            Some(a) => a.values(),
            None => vec![self.omega0_t],
        }
    }
}

/// Results of one simulated cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub success_probability: f64,
    pub fidelity: f64,
    pub norm_final: f64,
    pub i_a: f64,
    pub i_cav: f64,
    /// Optimized `Omega_0` on the success map, the fixed `Omega_0` otherwise.
    pub omega0_opt: f64,
    /// `P_s / exp(-2/sqrt(C))` when the cooperativity is defined.
    pub normalized_success_probability: Option<f64>,
    /// Adiabatic time constant at `omega0_opt`, for map sweeps.
    pub tau0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub x: f64,
    pub y: f64,
    pub outcome: Option<CellOutcome>,
    pub error: Option<String>,
}

impl Cell {
    fn from_result(x: f64, y: f64, r: Result<CellOutcome>) -> Self {
        match r {
            Ok(o) => Cell { x, y, outcome: Some(o), error: None },
            Err(e) => Cell { x, y, outcome: None, error: Some(e.to_string()) },
        }
    }
}

/// A curve sampled as `(x, y)` points in the sweep's axis units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub x: String,
    pub y: String,
    pub rates: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub version: String,
    pub units: Units,
    pub spec: SweepSpec,
    /// Row-major: `grid[iy][ix]`.
    pub grid: Vec<Vec<Cell>>,
    pub overlays: Vec<Overlay>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub cells: usize,
    pub failures: usize,
    pub min_normalized_success_probability: Option<f64>,
    pub max_normalized_success_probability: Option<f64>,
    pub min_fidelity: Option<f64>,
    pub max_fidelity: Option<f64>,
    /// `g` where the sampled `tau_a` and `tau_c` lines cross.
    pub crossover_g: Option<f64>,
    /// `g` where the numeric `F_adi tau0` and `F_cp` contours cross.
    pub numeric_crossover_g: Option<f64>,
}

impl SweepResult {
    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.grid.iter().flatten()
    }

    pub fn overlay(&self, name: &str) -> Option<&Overlay> {
        self.overlays.iter().find(|o| o.name == name)
    }

    pub fn failures(&self) -> usize {
        self.cells().filter(|c| c.outcome.is_none()).count()
    }

    /// Fidelity column of a one-dimensional sweep, in x order.
    pub fn fidelity_column(&self) -> Vec<Option<f64>> {
        self.grid.first().map(|row| row.iter().map(|c| c.outcome.map(|o| o.fidelity)).collect()).unwrap_or_default()
    }

    pub fn summary(&self) -> SweepSummary {
        let outcomes: Vec<&CellOutcome> = self.cells().filter_map(|c| c.outcome.as_ref()).collect();
        let fold = |vals: &mut dyn Iterator<Item = f64>| {
            vals.fold(None, |acc: Option<(f64, f64)>, v| Some(acc.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v)))))
        };
        let norm = fold(&mut outcomes.iter().filter_map(|o| o.normalized_success_probability));
        let fid = fold(&mut outcomes.iter().map(|o| o.fidelity));
        let crossover_g = match (self.overlay("tau_a"), self.overlay("tau_c")) {
            (Some(a), Some(c)) => intersect(&a.points, &c.points),
            _ => None,
        };
        let numeric_crossover_g = match (self.overlay("f_adi_tau0"), self.overlay("f_cp")) {
            (Some(a), Some(c)) => intersect(&a.points, &c.points),
            _ => None,
        };
        SweepSummary {
            cells: self.cells().count(),
            failures: self.failures(),
            min_normalized_success_probability: norm.map(|v| v.0),
            max_normalized_success_probability: norm.map(|v| v.1),
            min_fidelity: fid.map(|v| v.0),
            max_fidelity: fid.map(|v| v.1),
            crossover_g,
            numeric_crossover_g,
        }
    }
}

/// First crossing of two curves sampled at common x values, interpolated in
/// `ln y` against `ln x`.
fn intersect(a: &[[f64; 2]], b: &[[f64; 2]]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|pa| b.iter().find(|pb| pb[0] == pa[0]).map(|pb| (pa[0], (pa[1] / pb[1]).ln())))
        .collect();
    pairs.windows(2).find_map(|w| {
        let ((x0, d0), (x1, d1)) = (w[0], w[1]);
        if d0 == 0.0 {
            return Some(x0);
        }
        if d0.signum() != d1.signum() {
            let u = d0 / (d0 - d1);
            return Some((x0.ln() + u * (x1.ln() - x0.ln())).exp());
        }
        None
    })
}

/// Evaluates `f` on every grid cell in parallel and returns the cells in
/// row-major order.
fn run_grid<F>(xs: &[f64], ys: &[f64], f: F) -> Vec<Vec<Cell>>
where
    F: Fn(f64, f64) -> Result<CellOutcome> + Sync,
{
    let coords: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let cells: Vec<Cell> = coords.par_iter().map(|&(x, y)| Cell::from_result(x, y, f(x, y))).collect();
    cells.chunks(xs.len()).map(<[Cell]>::to_vec).collect()
}

fn require_mode(spec: &SweepSpec, allowed: &[SweepMode]) -> Result<()> {
    spec.validate()?;
    if allowed.contains(&spec.mode) {
        Ok(())
    } else {
        Err(CmatError::invalid("mode", format!("{:?} is not handled here", spec.mode)))
    }
}

/// Runs whichever sweep `spec.mode` names.
pub fn run(spec: &SweepSpec) -> Result<SweepResult> {
    match spec.mode {
        SweepMode::SuccessMap | SweepMode::FidelityMap => run_success_map(spec),
        SweepMode::DissipationFreeMap => run_dissipation_free_map(spec),
        SweepMode::TruncationStudy => run_truncation_study(spec),
    }
}

/// Success map over `(g/gamma, tau gamma)` at fixed cooperativity, with
/// `kappa = g^2/(2 gamma C)` and `Omega_0` optimized per cell.
pub fn run_success_map(spec: &SweepSpec) -> Result<SweepResult> {
    require_mode(spec, &[SweepMode::SuccessMap, SweepMode::FidelityMap])?;
    let c = spec.fixed_c.expect("validated");
    let xs = spec.x_axis.values();
    let ys = spec.y_values();

    let grid = run_grid(&xs, &ys, |g, tau| {
        let p = CqedParams::from_cooperativity(g, c)?;
        let opt = optimize_omega0(&p, tau, Objective::SuccessProbability, &spec.cfg)?;
        let r = &opt.result;
        let bound = p.upper_bound()?;
        Ok(CellOutcome {
            success_probability: r.success_probability,
            fidelity: r.fidelity,
            norm_final: r.norm_final,
            i_a: r.i_a,
            i_cav: r.i_cav,
            omega0_opt: opt.omega0,
            normalized_success_probability: Some(r.success_probability / bound),
            tau0: Some(tau0(&p, opt.omega0)?),
        })
    });

    let y_axis = spec.y_axis.as_ref().expect("validated");
    let f_adi = spec.factors.f_adi();
    let f_cp = spec.factors.f_cp();
    let mut tau_a = Vec::new();
    let mut tau_c = Vec::new();
    let mut adi = Vec::new();
    let mut cp = Vec::new();
    for (ix, &g) in xs.iter().enumerate() {
        if let Ok(rep) = CqedParams::from_cooperativity(g, c).and_then(|p| thresholds(&p, &spec.factors)) {
            tau_a.push([g, rep.tau_a]);
            tau_c.push([g, rep.tau_c]);
        }
        let column: Vec<(f64, Option<CellOutcome>)> = grid.iter().map(|row| (row[ix].y, row[ix].outcome)).collect();
        if let Some(t) = contour(y_axis, &column, |y, o| o.tau0.map(|t0| y - f_adi * t0)) {
            adi.push([g, t]);
        }
        if let Some(t) = contour(y_axis, &column, |_, o| Some(f_cp - o.omega0_opt / g)) {
            cp.push([g, t]);
        }
    }

    Ok(SweepResult {
        version: env!("CARGO_PKG_VERSION").to_string(),
        units: Units { x: "g/gamma".into(), y: "tau*gamma".into(), rates: "gamma".into() },
        spec: spec.clone(),
        grid,
        overlays: vec![
            Overlay { name: "f_adi_tau0".into(), points: adi },
            Overlay { name: "f_cp".into(), points: cp },
            Overlay { name: "tau_a".into(), points: tau_a },
            Overlay { name: "tau_c".into(), points: tau_c },
        ],
    })
}

/// First upward sign change of `d` along a column, interpolated in the
/// axis coordinate. Failed cells are skipped.
fn contour<D>(axis: &Axis, column: &[(f64, Option<CellOutcome>)], d: D) -> Option<f64>
where
    D: Fn(f64, &CellOutcome) -> Option<f64>,
{
    let pts: Vec<(f64, f64)> =
        column.iter().filter_map(|(y, o)| o.as_ref().and_then(|o| d(*y, o)).map(|v| (*y, v))).collect();
    pts.windows(2).find_map(|w| {
        let ((y0, d0), (y1, d1)) = (w[0], w[1]);
        if d0 < 0.0 && d1 >= 0.0 {
            let (u0, u1) = (axis.coord(y0), axis.coord(y1));
            Some(axis.uncoord(u0 + (u1 - u0) * d0 / (d0 - d1)))
        } else {
            None
        }
    })
}

/// Fidelity map over `(Omega_0 tau, g tau)` with `tau = 1` and no decay.
pub fn run_dissipation_free_map(spec: &SweepSpec) -> Result<SweepResult> {
    require_mode(spec, &[SweepMode::DissipationFreeMap])?;
    let xs = spec.x_axis.values();
    let ys = spec.y_values();

    let grid = run_grid(&xs, &ys, |omega0, g| {
        let p = CqedParams::new(g, 0.0, 0.0)?;
        let r = evolve(&p, &PulseSchedule::new(omega0, 1.0)?, &spec.cfg)?;
        Ok(CellOutcome {
            success_probability: r.success_probability,
            fidelity: r.fidelity,
            norm_final: r.norm_final,
            i_a: r.i_a,
            i_cav: r.i_cav,
            omega0_opt: omega0,
            normalized_success_probability: None,
            tau0: Some(tau0(&p, omega0)?),
        })
    });

    let y_axis = spec.y_axis.as_ref().expect("validated");
    let f_adi = spec.factors.f_adi();
    let mut curve = Vec::new();
    for &omega0 in &xs {
        if let Some(g) = adiabatic_curve(y_axis, omega0, f_adi)? {
            curve.push([omega0, g]);
        }
    }
    let (x_lo, x_hi) = (spec.x_axis.min, spec.x_axis.max);
    let (y_lo, y_hi) = (y_axis.min, y_axis.max);
    let mut overlays = vec![Overlay { name: "f_adi_tau0".into(), points: curve }];
    if (x_lo..=x_hi).contains(&2.0) {
        overlays.push(Overlay { name: "omega0_tau_2".into(), points: vec![[2.0, y_lo], [2.0, y_hi]] });
    }
    if (y_lo..=y_hi).contains(&2.0) {
        overlays.push(Overlay { name: "g_tau_2".into(), points: vec![[x_lo, 2.0], [x_hi, 2.0]] });
    }

    Ok(SweepResult {
        version: env!("CARGO_PKG_VERSION").to_string(),
        units: Units { x: "omega0*tau".into(), y: "g*tau".into(), rates: "1/tau".into() },
        spec: spec.clone(),
        grid,
        overlays,
    })
}

/// `g tau` on the curve `F_adi tau0(g, Omega_0) = tau = 1`, if it lies inside
/// the axis range. `tau0` falls as `g` grows, so the root is bracketed by
/// the axis ends.
fn adiabatic_curve(axis: &Axis, omega0: f64, f_adi: f64) -> Result<Option<f64>> {
    let d = |g: f64| -> Result<f64> { Ok(1.0 - f_adi * tau0(&CqedParams::new(g, 0.0, 0.0)?, omega0)?) };
    let (mut lo, mut hi) = (axis.coord(axis.min), axis.coord(axis.max));
    let (d_lo, d_hi) = (d(axis.min)?, d(axis.max)?);
    if !(d_lo < 0.0 && d_hi >= 0.0) {
        return Ok(None);
    }
    for _ in 0..CURVE_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if d(axis.uncoord(mid))? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(axis.uncoord(0.5 * (lo + hi))))
}

/// Fidelity against the window length `T/tau` at `g = Omega_0 = 1`, fixed
/// `Omega_0 T`, and no decay.
pub fn run_truncation_study(spec: &SweepSpec) -> Result<SweepResult> {
    require_mode(spec, &[SweepMode::TruncationStudy])?;
    let xs = spec.x_axis.values();
    let ys = spec.y_values();
    let omega0_t = spec.omega0_t;

    let grid = run_grid(&xs, &ys, |ratio, _| {
        let p = CqedParams::new(1.0, 0.0, 0.0)?;
        let s = PulseSchedule::with_halfwidth(1.0, omega0_t / ratio, ratio / 2.0)?;
        let r = evolve(&p, &s, &spec.cfg)?;
        Ok(CellOutcome {
            success_probability: r.success_probability,
            fidelity: r.fidelity,
            norm_final: r.norm_final,
            i_a: r.i_a,
            i_cav: r.i_cav,
            omega0_opt: 1.0,
            normalized_success_probability: None,
            tau0: None,
        })
    });

    Ok(SweepResult {
        version: env!("CARGO_PKG_VERSION").to_string(),
        units: Units { x: "T/tau".into(), y: "omega0*T".into(), rates: "omega0".into() },
        spec: spec.clone(),
        grid,
        overlays: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

fn push_float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:?}").expect("writing to a String");
    }
}

/// Cell table as CSV. Failed cells keep their coordinates and leave the
/// result fields empty.
pub fn to_csv(result: &SweepResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for cell in result.cells() {
        push_float(&mut out, Some(cell.x));
        out.push(',');
        push_float(&mut out, Some(cell.y));
        let o = cell.outcome;
        for f in [
            o.map(|o| o.success_probability),
            o.map(|o| o.fidelity),
            o.map(|o| o.norm_final),
            o.map(|o| o.i_a),
            o.map(|o| o.i_cav),
            o.map(|o| o.omega0_opt),
        ] {
            out.push(',');
            push_float(&mut out, f);
        }
        out.push('\n');
    }
    out
}

fn overlay_csv(o: &Overlay) -> String {
    let mut out = String::from("x,y\n");
    for [x, y] in &o.points {
        writeln!(out, "{x:?},{y:?}").expect("writing to a String");
    }
    out
}

/// Path of the sidecar file for overlay `name` next to `path`.
pub fn overlay_path(path: &Path, name: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(format!(".overlay-{name}.csv"));
    PathBuf::from(s)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CmatError::Io { path: path.to_path_buf(), source })
}

/// Writes the result to `path`. CSV output puts each overlay in a sidecar
/// file; JSON output is a single document. Returns every path written.
pub fn emit(result: &SweepResult, path: &Path, format: Format) -> Result<Vec<PathBuf>> {
    match format {
        Format::Json => {
            write(path, &serde_json::to_string_pretty(result)?)?;
            Ok(vec![path.to_path_buf()])
        }
        Format::Csv => {
            write(path, &to_csv(result))?;
            let mut written = vec![path.to_path_buf()];
            for o in &result.overlays {
                let p = overlay_path(path, &o.name);
                write(&p, &overlay_csv(o))?;
                written.push(p);
            }
            Ok(written)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiabatic::thresholds;

    fn fast_cfg() -> SimConfig {
        SimConfig { sample_count: 2, ..SimConfig::default() }
    }

    fn small_success(xs: Axis, ys: Axis) -> SweepSpec {
        SweepSpec { x_axis: xs, y_axis: Some(ys), cfg: fast_cfg(), ..SweepSpec::success_map(200.0) }
    }

    #[test]
    fn axis_values_hit_endpoints() {
        let a = Axis::log("tau", 1e-3, 10.0, 41).unwrap();
        let v = a.values();
        assert_eq!(v.len(), 41);
        assert_eq!(v[0], 1e-3);
        assert_eq!(v[40], 10.0);
        assert!((v[10] - 1e-2).abs() < 1e-15);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn axis_rejects_bad_ranges() {
        assert!(Axis::log("x", 0.0, 1.0, 5).is_err());
        assert!(Axis::linear("x", 1.0, 1.0, 5).is_err());
        assert!(Axis::linear("x", 0.0, 1.0, 1).is_err());
    }

    #[test]
    fn spec_parses_with_defaults_and_rejects_missing_c() {
        let spec: SweepSpec = serde_json::from_str(
            r#"{"mode":"success_map","fixed_c":200,
                "x_axis":{"min":1,"max":300,"count":3},
                "y_axis":{"min":0.001,"max":10,"count":3,"scale":"log"}}"#,
        )
        .unwrap();
        assert_eq!(spec.factors, AdiabaticFactors::default());
        assert_eq!(spec.omega0_t, 1000.0);
        let bad = serde_json::from_str::<SweepSpec>(
            r#"{"mode":"success_map","x_axis":{"min":1,"max":300,"count":3},"y_axis":{"min":1,"max":2,"count":2}}"#,
        );
        assert!(bad.unwrap_err().to_string().contains("fixed_c"));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        assert!(run_truncation_study(&SweepSpec::dissipation_free_map()).is_err());
    }

    #[test]
    fn success_map_cells_at_and_below_thresholds() {
        let c = 200.0;
        let g = 50.0;
        let rep = thresholds(&CqedParams::from_cooperativity(g, c).unwrap(), &AdiabaticFactors::default()).unwrap();
        let tau = 2.0 * rep.min_tau();
        let far_below = rep.min_tau() / 50.0;
        let spec = small_success(Axis::log("g", g, 60.0, 2).unwrap(), Axis::log("tau", far_below, tau, 2).unwrap());
        let r = run_success_map(&spec).unwrap();
        assert_eq!(r.failures(), 0);
        let at = r.grid[1][0].outcome.unwrap();
        let below = r.grid[0][0].outcome.unwrap();
        assert!(at.normalized_success_probability.unwrap() >= 0.99, "{at:?}");
        assert!(below.normalized_success_probability.unwrap() < 0.9, "{below:?}");
        for cell in r.cells() {
            let o = cell.outcome.unwrap();
            for v in [o.success_probability, o.fidelity, o.norm_final, o.i_a, o.i_cav] {
                assert!((0.0..=1.0).contains(&v));
            }
            assert!((o.norm_final + o.i_a + o.i_cav - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn failed_cells_are_recorded_and_the_sweep_continues() {
        let spec = small_success(Axis::log("g", 10.0, 1e200, 2).unwrap(), Axis::log("tau", 0.5, 1.0, 2).unwrap());
        let r = run_success_map(&spec).unwrap();
        assert_eq!(r.failures(), 2);
        assert!(r.grid[0][0].outcome.is_some());
        let bad = &r.grid[0][1];
        assert!(bad.outcome.is_none() && bad.error.as_deref().unwrap().contains("kappa"));
        let csv = to_csv(&r);
        assert!(csv.lines().nth(2).unwrap().ends_with(",,,,,,"), "{csv}");
    }

    #[test]
    fn analytic_overlays_cross_at_g_star() {
        let c: f64 = 200.0;
        let spec = small_success(Axis::log("g", 10.0, 20.0, 2).unwrap(), Axis::log("tau", 0.1, 0.2, 2).unwrap());
        let r = run_success_map(&spec).unwrap();
        let a = r.overlay("tau_a").unwrap();
        let cc = r.overlay("tau_c").unwrap();
        // below g* the cavity line lies above, beyond g* below
        assert!(cc.points[0][1] > a.points[0][1]);
        assert!(cc.points[1][1] < a.points[1][1]);
        let g_star = r.summary().crossover_g.unwrap();
        assert!((g_star - c.sqrt()).abs() < 1e-9, "{g_star}");
    }

    #[test]
    fn numeric_cavity_contour_tracks_analytic_line() {
        let c: f64 = 200.0;
        let g = c.sqrt() / 4.0;
        let rep = thresholds(&CqedParams::from_cooperativity(g, c).unwrap(), &AdiabaticFactors::default()).unwrap();
        let spec = small_success(
            Axis::log("g", g, 2.0 * g, 2).unwrap(),
            Axis::log("tau", rep.tau_c / 30.0, rep.tau_c * 30.0, 11).unwrap(),
        );
        let r = run_success_map(&spec).unwrap();
        let cp = r.overlay("f_cp").unwrap();
        let numeric = cp.points.iter().find(|p| p[0] == g).expect("contour resolved at g*/4")[1];
        let ratio = numeric / rep.tau_c;
        assert!((1.0 / 3.0..=3.0).contains(&ratio), "numeric {numeric} vs analytic {}", rep.tau_c);
    }

    #[test]
    fn dissipation_free_map_adiabatic_region() {
        let spec = SweepSpec {
            x_axis: Axis::log("omega0_tau", 0.1, 100.0, 7).unwrap(),
            y_axis: Some(Axis::log("g_tau", 0.1, 100.0, 7).unwrap()),
            cfg: fast_cfg(),
            ..SweepSpec::dissipation_free_map()
        };
        let r = run_dissipation_free_map(&spec).unwrap();
        assert_eq!(r.failures(), 0);
        let f_adi = spec.factors.f_adi();
        let mut above = 0;
        for cell in r.cells() {
            let o = cell.outcome.unwrap();
            if 1.0 >= f_adi * o.tau0.unwrap() {
                above += 1;
                assert!(o.fidelity >= 0.99, "({}, {}) fidelity {}", cell.x, cell.y, o.fidelity);
            }
        }
        assert!(above >= 10);
        let corner = &r.grid[0][0];
        assert_eq!((corner.x, corner.y), (0.1, 0.1));
        assert!(corner.outcome.unwrap().fidelity < 0.9);
        let far = r.grid[6][6].outcome.unwrap();
        assert!(far.fidelity > 0.999);
        assert!(r.overlay("omega0_tau_2").is_some() && r.overlay("g_tau_2").is_some());
    }

    #[test]
    fn adiabatic_curve_satisfies_threshold() {
        let spec = SweepSpec {
            x_axis: Axis::log("omega0_tau", 10.0, 100.0, 3).unwrap(),
            y_axis: Some(Axis::log("g_tau", 0.1, 1000.0, 2).unwrap()),
            cfg: fast_cfg(),
            ..SweepSpec::dissipation_free_map()
        };
        let r = run_dissipation_free_map(&spec).unwrap();
        let curve = r.overlay("f_adi_tau0").unwrap();
        assert_eq!(curve.points.len(), 3);
        for [omega0, g] in &curve.points {
            let t0 = tau0(&CqedParams::new(*g, 0.0, 0.0).unwrap(), *omega0).unwrap();
            assert!((8.0 * t0 - 1.0).abs() < 1e-9);
        }
    }

    fn truncation_fidelities() -> Vec<f64> {
        let spec = SweepSpec {
            x_axis: Axis::linear("t_over_tau", 5.0, 20.0, 16).unwrap(),
            cfg: fast_cfg(),
            ..SweepSpec::truncation_study()
        };
        let r = run_truncation_study(&spec).unwrap();
        r.fidelity_column().into_iter().map(Option::unwrap).collect()
    }

    #[test]
    fn truncation_study_converges() {
        let fid = truncation_fidelities();
        assert_eq!(fid.len(), 16);
        assert!(fid[10] > 0.999);
        assert!((fid[10] - fid[15]).abs() < 1e-4);
        // coarse trend over the 5-unit spacing
        assert!(fid[0] < fid[5] && fid[5] < fid[10] && fid[10] < fid[15], "{fid:?}");
    }

    #[test]
    fn truncation_fidelity_rings_at_unit_spacing() {
        // edge truncation leaves an oscillating residual, so fidelity is not
        // monotone in T/tau at unit spacing: it dips at T/tau = 8 and 10
        let fid = truncation_fidelities();
        let monotone = fid[..=10].windows(2).all(|w| w[1] > w[0]);
        assert!(!monotone, "{fid:?}");
        assert!(fid[3] < fid[2] && fid[5] < fid[4], "{fid:?}");
    }

    #[test]
    fn emit_csv_layout_and_sidecars() {
        let spec = small_success(Axis::log("g", 20.0, 40.0, 2).unwrap(), Axis::log("tau", 0.5, 1.0, 2).unwrap());
        let r = run(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        let written = emit(&r, &path, Format::Csv).unwrap();
        assert_eq!(written.len(), 1 + r.overlays.len());
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], CSV_HEADER);
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        let o = r.grid[0][0].outcome.unwrap();
        assert_eq!(first, vec![20.0, 0.5, o.success_probability, o.fidelity, o.norm_final, o.i_a, o.i_cav, o.omega0_opt]);
        assert!(overlay_path(&path, "tau_c").exists());
    }

    #[test]
    fn emit_json_round_trips_bit_exactly() {
        let spec = SweepSpec {
            x_axis: Axis::log("omega0_tau", 1.0, 10.0, 2).unwrap(),
            y_axis: Some(Axis::log("g_tau", 1.0, 10.0, 2).unwrap()),
            cfg: fast_cfg(),
            ..SweepSpec::dissipation_free_map()
        };
        let r = run(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.json");
        emit(&r, &path, Format::Json).unwrap();
        let back: SweepResult = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, r);
        for (a, b) in back.cells().zip(r.cells()) {
            assert_eq!(a.outcome.unwrap().fidelity.to_bits(), b.outcome.unwrap().fidelity.to_bits());
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let spec = small_success(Axis::log("g", 5.0, 40.0, 3).unwrap(), Axis::log("tau", 0.2, 2.0, 2).unwrap());
        let a = serde_json::to_string(&run(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&run(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn emit_reports_path_on_io_error() {
        let spec = SweepSpec { cfg: fast_cfg(), ..SweepSpec::truncation_study() };
        let r = SweepResult {
            version: String::new(),
            units: Units { x: String::new(), y: String::new(), rates: String::new() },
            spec,
            grid: vec![],
            overlays: vec![],
        };
        let path = Path::new("/nonexistent-dir/out.csv");
        let err = emit(&r, path, Format::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }
}
