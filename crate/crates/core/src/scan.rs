//! Parameter grids, parallel scans and derivative-free maximization over
//! waiting times.
//!
//! Grid points are evaluated in parallel and collected in index order, so a
//! scan is deterministic regardless of thread count. Refinement (golden
//! section in 1-D, Nelder-Mead in 2-D) is sequential.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{FisherReport, Flag};

pub const TAU_TOL: f64 = 1e-4;
pub const MAX_ITERATIONS: usize = 500;
/// A local minimum of `F_{2|1}` below this fraction of the scan maximum is
/// flagged as near zero.
pub const NEAR_ZERO_FRACTION: f64 = 0.05;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn new(name: impl Into<String>, min: f64, max: f64, count: usize, spacing: Spacing) -> Result<Self> {
        let axis = Self {
            name: name.into(),
            min,
            max,
            count,
            spacing,
        };
        axis.validate()?;
        Ok(axis)
    }

    pub fn linear(name: impl Into<String>, min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(name, min, max, count, Spacing::Linear)
    }

    pub fn log(name: impl Into<String>, min: f64, max: f64, count: usize) -> Result<Self> {
        Self::new(name, min, max, count, Spacing::Log)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidArgument(format!("axis {}: {why}", self.name)));
        if self.count < 2 {
            return bad("needs at least 2 points");
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return bad("bounds must be finite");
        }
        if !(self.min < self.max) {
            return bad("min must be below max");
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return bad("log spacing needs min > 0");
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                if i == 0 {
                    return self.min;
                }
                if i + 1 == self.count {
                    return self.max;
                }
                match self.spacing {
                    Spacing::Linear => self.min + t * (self.max - self.min),
                    Spacing::Log => (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .map(|x| x.clamp(self.min, self.max))
            .collect()
    }
}

/// One evaluated grid point. `value` is `None` when evaluation failed; the
/// failure is then recorded as a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord<T> {
    pub point: Vec<f64>,
    pub value: Option<T>,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid<T> {
    pub axes: Vec<Axis>,
    pub records: Vec<ScanRecord<T>>,
}

impl<T> ScanGrid<T> {
    pub fn values(&self) -> impl Iterator<Item = Option<&T>> {
        self.records.iter().map(|r| r.value.as_ref())
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.value.is_none()).count()
    }
}

fn record<T>(point: Vec<f64>, r: Result<T>) -> ScanRecord<T> {
    match r {
        Ok(v) => ScanRecord {
            point,
            value: Some(v),
            flags: Vec::new(),
        },
        Err(e) => ScanRecord {
            point,
            value: None,
            flags: vec![Flag::EvaluationFailed { message: e.to_string() }],
        },
    }
}

/// Evaluates `f` at every point of `axis`; failures are recorded, not fatal.
pub fn scan_1d<T, F>(f: F, axis: &Axis) -> Result<ScanGrid<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    axis.validate()?;
    let records = axis
        .points()
        .into_par_iter()
        .map(|x| record(vec![x], f(x)))
        .collect();
    Ok(ScanGrid {
        axes: vec![axis.clone()],
        records,
    })
}

/// Evaluates `f` on the product grid, first axis varying slowest.
pub fn scan_2d<T, F>(f: F, a: &Axis, b: &Axis) -> Result<ScanGrid<T>>
where
    T: Send,
    F: Fn(f64, f64) -> Result<T> + Sync,
{
    a.validate()?;
    b.validate()?;
    let pb = b.points();
    let points: Vec<(f64, f64)> = a
        .points()
        .into_iter()
        .flat_map(|x| pb.iter().map(move |&y| (x, y)))
        .collect();
    let records = points
        .into_par_iter()
        .map(|(x, y)| record(vec![x, y], f(x, y)))
        .collect();
    Ok(ScanGrid {
        axes: vec![a.clone(), b.clone()],
        records,
    })
}

/// Interior indices that are strict local maxima of `values`.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .collect()
}

/// Interior indices that are local minima of `values`.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        .collect()
}

/// Flags local minima of `F_{2|1}` lying below `fraction` of the scan maximum.
/// Returns the flagged indices.
pub fn flag_near_zero(scan: &mut ScanGrid<FisherReport>, fraction: f64) -> Vec<usize> {
    let values: Vec<f64> = scan
        .records
        .iter()
        .map(|r| r.value.as_ref().map_or(f64::NAN, |v| v.f21))
        .collect();
    let top = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let hits: Vec<usize> = local_minima(&values)
        .into_iter()
        .filter(|&i| values[i] <= fraction * top)
        .collect();
    for &i in &hits {
        scan.records[i].flags.push(Flag::NearZero);
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grid,
    GoldenSection,
    NelderMead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub flags: Vec<Flag>,
}

/// Index of the largest finite value; ties go to the lowest index.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Golden-section maximization of `f` on `[a, b]` down to width `tol`.
/// Returns `(x, f(x), iterations)`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64, usize) {
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        // ties move toward the smaller argument
        if fc >= fd || fd.is_nan() {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd || fd.is_nan() {
        (c, fc, iterations)
    } else {
        (d, fd, iterations)
    }
}

/// Grid pre-scan of `f` on `axis`, then golden-section refinement around the
/// best grid point. A maximum on the grid boundary is returned as is, flagged.
pub fn maximize_1d<F>(f: F, axis: &Axis) -> Result<OptResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let scan = scan_1d(&f, axis)?;
    let xs = axis.points();
    let values: Vec<f64> = scan.records.iter().map(|r| r.value.unwrap_or(f64::NAN)).collect();
    let best = argmax(&values)
        .ok_or_else(|| Error::InvalidArgument("no grid point could be evaluated".into()))?;
    if best == 0 || best == xs.len() - 1 {
        return Ok(OptResult {
            point: vec![xs[best]],
            value: values[best],
            method: Method::Grid,
            iterations: 0,
            converged: false,
            flags: vec![Flag::Boundary],
        });
    }
    let g = |x: f64| f(x).unwrap_or(f64::NAN);
    let (x, v, iterations) = golden_section(g, xs[best - 1], xs[best + 1], TAU_TOL);
    let (point, value) = if v >= values[best] { (x, v) } else { (xs[best], values[best]) };
    Ok(OptResult {
        point: vec![point],
        value,
        method: Method::GoldenSection,
        iterations,
        converged: iterations < MAX_ITERATIONS,
        flags: Vec::new(),
    })
}

fn clamp_nonnegative(p: [f64; 2]) -> [f64; 2] {
    [p[0].max(0.0), p[1].max(0.0)]
}

/// Nelder-Mead maximization of `f` over `τ_g, τ_e ≥ 0`, starting from the
/// simplex `{start, start + step·e₁, start + step·e₂}`. Converges when the
/// simplex diameter drops below `1e-4`.
pub fn maximize_2d<F>(f: F, start: [f64; 2], step: f64) -> Result<OptResult>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) || start.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("bad starting simplex".into()));
    }
    // minimize the negated objective; failures count as +inf
    let cost = |p: [f64; 2]| match f(p[0], p[1]) {
        Ok(v) if v.is_finite() => -v,
        _ => f64::INFINITY,
    };
    let start = clamp_nonnegative(start);
    let mut simplex: Vec<([f64; 2], f64)> = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ]
    .into_iter()
    .map(|p| (p, cost(p)))
    .collect();
    if !simplex[0].1.is_finite() {
        return Err(Error::InvalidArgument("objective undefined at start".into()));
    }
    let order = |s: &mut Vec<([f64; 2], f64)>| {
        s.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.0[0].total_cmp(&b.0[0]))
                .then(a.0[1].total_cmp(&b.0[1]))
        })
    };
    let diameter = |s: &[([f64; 2], f64)]| {
        let mut d: f64 = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                d = d.max((s[i].0[0] - s[j].0[0]).hypot(s[i].0[1] - s[j].0[1]));
            }
        }
        d
    };
    let mut iterations = 0;
    order(&mut simplex);
    while diameter(&simplex) >= TAU_TOL && iterations < MAX_ITERATIONS {
        iterations += 1;
        let (best, second, worst) = (simplex[0], simplex[1], simplex[2]);
        let centroid = [(best.0[0] + second.0[0]) / 2.0, (best.0[1] + second.0[1]) / 2.0];
        let along = |t: f64| {
            clamp_nonnegative([
                centroid[0] + t * (worst.0[0] - centroid[0]),
                centroid[1] + t * (worst.0[1] - centroid[1]),
            ])
        };
        let reflected = along(-1.0);
        let fr = cost(reflected);
        if fr < best.1 {
            let expanded = along(-2.0);
            let fe = cost(expanded);
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < second.1 {
            simplex[2] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst.1 {
                let p = along(-0.5);
                (p, cost(p))
            } else {
                let p = along(0.5);
                (p, cost(p))
            };
            if fc < worst.1.min(fr) {
                simplex[2] = (contracted, fc);
            } else {
                for v in simplex.iter_mut().skip(1) {
                    let p = [
                        best.0[0] + 0.5 * (v.0[0] - best.0[0]),
                        best.0[1] + 0.5 * (v.0[1] - best.0[1]),
                    ];
                    *v = (p, cost(p));
                }
            }
        }
        order(&mut simplex);
    }
    let converged = diameter(&simplex) < TAU_TOL;
    let (point, c) = simplex[0];
    let mut flags = Vec::new();
    if !converged {
        flags.push(Flag::NotConverged);
    }
    if point.iter().any(|&x| x == 0.0) {
        flags.push(Flag::Boundary);
    }
    Ok(OptResult {
        point: point.to_vec(),
        value: -c,
        method: Method::NelderMead,
        iterations,
        converged,
        flags,
    })
}

/// Best uniform waiting time (`F*`) and best outcome-conditioned pair (`F#`)
/// for an objective `f(τ_g, τ_e)`.
///
/// `F*` refines a 1-D grid scan of the diagonal. `F#` runs Nelder-Mead from
/// whichever of the diagonal optimum and the best 2-D grid point is better,
/// so `F# ≥ F*` always holds.
pub fn feedback_optimum<F>(f: F, axis: &Axis, grid_2d: usize) -> Result<(OptResult, OptResult)>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let uniform = maximize_1d(|t| f(t, t), axis)?;
    let t_star = uniform.point[0];
    let mut start = [t_star, t_star];
    let mut start_value = uniform.value;
    let coarse = Axis::new(axis.name.clone(), axis.min, axis.max, grid_2d, axis.spacing)?;
    let scan = scan_2d(&f, &coarse, &coarse)?;
    for r in &scan.records {
        if let Some(v) = r.value {
            if v > start_value {
                start_value = v;
                start = [r.point[0], r.point[1]];
            }
        }
    }
    let step = (0.1 * start[0].max(start[1])).max(10.0 * TAU_TOL);
    let feedback = maximize_2d(&f, start, step)?;
    Ok((uniform, feedback))
}
