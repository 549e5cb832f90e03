//! Fisher information of outcome distributions and of Markov outcome chains.
//!
//! For a first-order chain with stationary start the information in `N`
//! outcomes splits as `F_1 + (N − 1) F_{2|1}`: `F_1` is the information in the
//! stationary distribution and `F_{2|1}` (the information rate) is the
//! stationary average of the information in each column of `P(k|k')`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{stationary, validate_distribution, TransitionMatrix};
use crate::channels::EPS_P;
use crate::error::{Error, Result};

/// Derivative magnitudes at or below this are treated as zero.
pub const EPS_D: f64 = 1e-8;
pub const DEFAULT_STEP: f64 = 1e-5;
/// Largest number of sequences the enumeration oracle will sum over.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    Central,
    AnalyticIfAvailable,
}

/// The parameter being estimated and how to differentiate with respect to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub value: f64,
    /// Relative finite-difference step.
    pub step: f64,
    pub mode: DerivativeMode,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, value: f64) -> Result<Self> {
        Self::with_step(name, value, DEFAULT_STEP)
    }

    pub fn with_step(name: impl Into<String>, value: f64, step: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("parameter value {value}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("derivative step {step}")));
        }
        Ok(Self {
            name: name.into(),
            value,
            step,
            mode: DerivativeMode::Central,
        })
    }

    pub fn analytic(mut self) -> Self {
        self.mode = DerivativeMode::AnalyticIfAvailable;
        self
    }

    /// Absolute step `δ = h · max(|θ|, 1)`.
    pub fn delta(&self) -> f64 {
        self.step * self.value.abs().max(1.0)
    }
}

/// Values that can be differentiated by central differences.
pub trait Differentiable: Sized {
    fn central(plus: &Self, minus: &Self, delta: f64) -> Self;
    fn all_finite(&self) -> bool;
}

impl Differentiable for f64 {
    fn central(plus: &Self, minus: &Self, delta: f64) -> Self {
        (plus - minus) / (2.0 * delta)
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl Differentiable for Vec<f64> {
    fn central(plus: &Self, minus: &Self, delta: f64) -> Self {
        plus.iter()
            .zip(minus)
            .map(|(a, b)| (a - b) / (2.0 * delta))
            .collect()
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl Differentiable for DMatrix<f64> {
    fn central(plus: &Self, minus: &Self, delta: f64) -> Self {
        (plus - minus) / (2.0 * delta)
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl Differentiable for DVector<f64> {
    fn central(plus: &Self, minus: &Self, delta: f64) -> Self {
        (plus - minus) / (2.0 * delta)
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// `[f(θ+δ) − f(θ−δ)] / 2δ`.
pub fn d_theta<T, F>(f: F, p: &ParamSpec) -> Result<T>
where
    T: Differentiable,
    F: Fn(f64) -> Result<T>,
{
    let delta = p.delta();
    let plus = f(p.value + delta)?;
    let minus = f(p.value - delta)?;
    if !plus.all_finite() || !minus.all_finite() {
        return Err(Error::NonFinite(format!(
            "evaluation of {} near {}",
            p.name, p.value
        )));
    }
    let d = T::central(&plus, &minus, delta);
    if !d.all_finite() {
        return Err(Error::NonFinite("derivative".into()));
    }
    Ok(d)
}

/// Diagnostics attached to reports and scan records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Flag {
    /// An outcome with vanishing probability but nonzero derivative; its
    /// probability was floored at `EPS_P`.
    SingularTerm { outcome: usize, prev: Option<usize> },
    /// Fisher information at a local minimum close to zero within a scan.
    NearZero,
    /// An optimizer ended on the boundary of its search domain.
    Boundary,
    /// An optimizer hit its iteration limit.
    NotConverged,
    /// The evaluation at this point failed.
    EvaluationFailed { message: String },
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::SingularTerm { outcome, prev: Some(p) } => write!(f, "singular({outcome}|{p})"),
            Flag::SingularTerm { outcome, prev: None } => write!(f, "singular({outcome})"),
            Flag::NearZero => write!(f, "near-zero"),
            Flag::Boundary => write!(f, "boundary"),
            Flag::NotConverged => write!(f, "not-converged"),
            Flag::EvaluationFailed { .. } => write!(f, "failed"),
        }
    }
}

/// Fisher information of one distribution, with the outcomes whose
/// probability had to be floored.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTerm {
    pub value: f64,
    pub singular: Vec<usize>,
}

/// `Σ_ω (∂p_ω)² / p_ω`.
pub fn fi_of_distribution(p: &[f64], dp: &[f64]) -> Result<FisherTerm> {
    validate_distribution(p, p.len())?;
    if dp.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: dp.len(),
        });
    }
    if dp.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("probability derivative".into()));
    }
    let drift: f64 = dp.iter().sum();
    if drift.abs() > EPS_D {
        return Err(Error::InvalidArgument(format!(
            "probability derivatives sum to {drift:.3e}"
        )));
    }
    let mut value = 0.0;
    let mut singular = Vec::new();
    for (omega, (&pi, &di)) in p.iter().zip(dp).enumerate() {
        if pi > EPS_P {
            value += di * di / pi;
        } else if di.abs() > EPS_D {
            value += di * di / EPS_P;
            singular.push(omega);
        }
    }
    Ok(FisherTerm { value, singular })
}

/// Per-column Fisher informations `F_{2|1=k'}` and their `q`-weighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFisher {
    pub by_prev: Vec<f64>,
    pub total: f64,
    pub flags: Vec<Flag>,
}

pub fn f_conditional(
    p: &TransitionMatrix,
    dp: &DMatrix<f64>,
    q: &[f64],
) -> Result<ConditionalFisher> {
    let n = p.n_outcomes();
    if dp.nrows() != n || dp.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dp.nrows(),
        });
    }
    validate_distribution(q, n)?;
    let mut by_prev = Vec::with_capacity(n);
    let mut flags = Vec::new();
    for prev in 0..n {
        let col = p.column(prev);
        let dcol: Vec<f64> = dp.column(prev).iter().copied().collect();
        let term = fi_of_distribution(&col, &dcol)?;
        flags.extend(term.singular.into_iter().map(|outcome| Flag::SingularTerm {
            outcome,
            prev: Some(prev),
        }));
        by_prev.push(term.value);
    }
    let total = by_prev.iter().zip(q).map(|(f, w)| f * w).sum();
    Ok(ConditionalFisher {
        by_prev,
        total,
        flags,
    })
}

/// `F_1 + (N − 1) F_{2|1}`.
pub fn f_sequential(f1: f64, f21: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
    }
    Ok(f1 + (n as f64 - 1.0) * f21)
}

/// Fisher-information bundle at one parameter value and waiting-time schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub theta: f64,
    /// Waiting time γτ after each outcome.
    pub tau: Vec<f64>,
    pub stationary: Vec<f64>,
    pub f1: f64,
    pub f21: f64,
    pub f21_by_prev: Vec<f64>,
    /// Benchmark information (the thermal Fisher information for thermometry).
    pub f_reference: Option<f64>,
    pub flags: Vec<Flag>,
}

impl FisherReport {
    /// `|F_{2|1} − Σ q_{k'} F_{2|1=k'}|`.
    pub fn convexity_defect(&self) -> f64 {
        let mix: f64 = self
            .stationary
            .iter()
            .zip(&self.f21_by_prev)
            .map(|(q, f)| q * f)
            .sum();
        (self.f21 - mix).abs()
    }

    pub fn sequential(&self, n: usize) -> Result<f64> {
        f_sequential(self.f1, self.f21, n)
    }
}

/// A parametric family of outcome chains: `θ ↦ (P_θ, initial distribution)`.
pub trait ChainModel {
    fn chain(&self, theta: f64) -> Result<(TransitionMatrix, Vec<f64>)>;
}

impl<F> ChainModel for F
where
    F: Fn(f64) -> Result<(TransitionMatrix, Vec<f64>)>,
{
    fn chain(&self, theta: f64) -> Result<(TransitionMatrix, Vec<f64>)> {
        self(theta)
    }
}

/// `F_1`, `F_{2|1}` and `F_{2|1=k'}` of a chain family by central differences.
///
/// The weights `q` and `F_1` come from the stationary distribution of `P_θ`.
pub fn chain_fisher<M: ChainModel + ?Sized>(model: &M, p: &ParamSpec) -> Result<FisherReport> {
    let (tm, _) = model.chain(p.value)?;
    let q = stationary(&tm)?.into_vec();
    let dp = d_theta(|t| Ok(model.chain(t)?.0.entries().clone()), p)?;
    let dq = d_theta(|t| Ok(stationary(&model.chain(t)?.0)?.into_vec()), p)?;
    let f1 = fi_of_distribution(&q, &dq)?;
    let cond = f_conditional(&tm, &dp, &q)?;
    let mut flags: Vec<Flag> = f1
        .singular
        .into_iter()
        .map(|outcome| Flag::SingularTerm { outcome, prev: None })
        .collect();
    flags.extend(cond.flags);
    Ok(FisherReport {
        theta: p.value,
        tau: tm.waiting_times().map(<[f64]>::to_vec).unwrap_or_default(),
        stationary: q,
        f1: f1.value,
        f21: cond.total,
        f21_by_prev: cond.by_prev,
        f_reference: None,
        flags,
    })
}

struct Triple {
    minus: (TransitionMatrix, Vec<f64>),
    center: (TransitionMatrix, Vec<f64>),
    plus: (TransitionMatrix, Vec<f64>),
}

impl Triple {
    fn start(&self, k: usize) -> [f64; 3] {
        [self.minus.1[k], self.center.1[k], self.plus.1[k]]
    }

    fn hop(&self, acc: [f64; 3], next: usize, prev: usize) -> [f64; 3] {
        [
            acc[0] * self.minus.0.prob(next, prev),
            acc[1] * self.center.0.prob(next, prev),
            acc[2] * self.plus.0.prob(next, prev),
        ]
    }
}

fn enumerate_from(t: &Triple, n_out: usize, remaining: usize, last: usize, acc: [f64; 3], delta: f64) -> f64 {
    if remaining == 0 {
        let d = (acc[2] - acc[0]) / (2.0 * delta);
        return if acc[1] > 0.0 {
            d * d / acc[1]
        } else if d.abs() > EPS_D {
            d * d / EPS_P
        } else {
            0.0
        };
    }
    (0..n_out)
        .map(|next| enumerate_from(t, n_out, remaining - 1, next, t.hop(acc, next, last), delta))
        .sum()
}

/// Fisher information of the full length-`n` sequence distribution, summed
/// over all `|Ω|^n` sequences with a central difference of each sequence
/// probability.
pub fn enumerate_fi<M: ChainModel + Sync + ?Sized>(model: &M, p: &ParamSpec, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be >= 1".into()));
    }
    let delta = p.delta();
    let t = Triple {
        minus: model.chain(p.value - delta)?,
        center: model.chain(p.value)?,
        plus: model.chain(p.value + delta)?,
    };
    let n_out = t.center.0.n_outcomes();
    let total = (n_out as u64).checked_pow(n as u32);
    if total.map_or(true, |x| x > ENUMERATION_LIMIT) {
        return Err(Error::EnumerationGuard {
            outcomes: n_out,
            length: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    for side in [&t.minus, &t.center, &t.plus] {
        validate_distribution(&side.1, n_out)?;
    }
    // Partition by the first (up to) two outcomes; partial sums are merged in
    // index order so the result does not depend on scheduling.
    let prefix = n.min(2);
    let chunks: Vec<(usize, usize)> = if prefix == 1 {
        (0..n_out).map(|a| (a, usize::MAX)).collect()
    } else {
        (0..n_out).flat_map(|a| (0..n_out).map(move |b| (a, b))).collect()
    };
    let partial: Vec<f64> = chunks
        .par_iter()
        .map(|&(a, b)| {
            let acc = t.start(a);
            if b == usize::MAX {
                enumerate_from(&t, n_out, 0, a, acc, delta)
            } else {
                let acc = t.hop(acc, b, a);
                enumerate_from(&t, n_out, n - 2, b, acc, delta)
            }
        })
        .collect();
    let value: f64 = partial.iter().sum();
    if !value.is_finite() {
        return Err(Error::NonFinite("enumerated Fisher information".into()));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(theta: f64) -> ParamSpec {
        ParamSpec::new("theta", theta).unwrap()
    }

    /// Two-state chain with P(1|0) = a(θ), P(0|1) = b(θ), stationary start.
    fn toy(theta: f64) -> Result<(TransitionMatrix, Vec<f64>)> {
        let a = 0.2 + 0.1 * theta.sin();
        let b = 0.5 * (-theta).exp();
        let tm = TransitionMatrix::from_columns(&[vec![1.0 - a, a], vec![b, 1.0 - b]])?;
        let q = stationary(&tm)?.into_vec();
        Ok((tm, q))
    }

    #[test]
    fn derivative_of_square() {
        let d: f64 = d_theta(|t| Ok(t * t), &spec(1.0)).unwrap();
        assert!((d - 2.0).abs() < 1e-8);
    }

    #[test]
    fn derivative_of_exponential() {
        let d: f64 = d_theta(|t| Ok((-3.0 * t).exp()), &spec(1.0)).unwrap();
        assert!((d + 3.0 * (-3.0f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn derivative_of_matrix() {
        let d: DMatrix<f64> = d_theta(
            |t| Ok(DMatrix::from_row_slice(1, 2, &[t * t, t.sin()])),
            &spec(0.5),
        )
        .unwrap();
        assert!((d[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((d[(0, 1)] - 0.5f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn derivative_reports_non_finite() {
        let r: Result<f64> = d_theta(|t| Ok(if t > 1.0 { f64::NAN } else { t }), &spec(1.0));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn param_spec_validation() {
        assert!(ParamSpec::with_step("x", 1.0, 0.0).is_err());
        assert!(ParamSpec::new("x", f64::NAN).is_err());
        assert_eq!(spec(250.0).delta(), 250.0 * DEFAULT_STEP);
        assert_eq!(spec(0.01).delta(), DEFAULT_STEP);
    }

    #[test]
    fn binary_fisher_information() {
        let c = 0.3;
        let f = fi_of_distribution(&[0.5, 0.5], &[c, -c]).unwrap();
        assert!((f.value - 4.0 * c * c).abs() < 1e-15);
        assert!(f.singular.is_empty());
    }

    #[test]
    fn thermal_fisher_information_from_distribution() {
        // q0 = (1+n)/(1+Dn), q_i = n/(1+Dn); dq0 = (1−D)/(1+Dn)², dq_i = 1/(1+Dn)²
        for (d, want) in [(2usize, 1.0 / 18.0), (4, 0.06)] {
            let n = 1.0;
            let z = 1.0 + d as f64 * n;
            let mut q = vec![(1.0 + n) / z];
            let mut dq = vec![(1.0 - d as f64) / (z * z)];
            for _ in 1..d {
                q.push(n / z);
                dq.push(1.0 / (z * z));
            }
            let f = fi_of_distribution(&q, &dq).unwrap();
            assert!((f.value - want).abs() < 1e-14, "D={d}: {}", f.value);
        }
    }

    #[test]
    fn zero_probability_terms() {
        let f = fi_of_distribution(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(f.value, 0.0);
        let f = fi_of_distribution(&[1.0, 0.0], &[-1e-3, 1e-3]).unwrap();
        assert_eq!(f.singular, vec![1]);
        assert!(f.value.is_finite() && f.value > 0.0);
    }

    #[test]
    fn rejects_unbalanced_derivative() {
        assert!(fi_of_distribution(&[0.5, 0.5], &[0.1, 0.1]).is_err());
        assert!(fi_of_distribution(&[0.7, 0.7], &[0.1, -0.1]).is_err());
    }

    #[test]
    fn iid_chain_has_no_memory() {
        let col = vec![0.3, 0.7];
        let tm = TransitionMatrix::from_columns(&[col.clone(), col.clone()]).unwrap();
        let d = DMatrix::from_row_slice(2, 2, &[0.2, 0.2, -0.2, -0.2]);
        let cond = f_conditional(&tm, &d, &col).unwrap();
        let single = fi_of_distribution(&col, &[0.2, -0.2]).unwrap().value;
        assert!((cond.total - single).abs() < 1e-15);
        assert!(cond.by_prev.iter().all(|&f| (f - single).abs() < 1e-15));
    }

    #[test]
    fn sequential_decomposition_arithmetic() {
        assert_eq!(f_sequential(0.05, 0.08, 1).unwrap(), 0.05);
        assert!((f_sequential(0.05, 0.08, 11).unwrap() - 0.85).abs() < 1e-15);
        assert!((f_sequential(0.2, 0.2, 7).unwrap() - 1.4).abs() < 1e-15);
        assert!(f_sequential(0.1, 0.1, 0).is_err());
    }

    #[test]
    fn enumeration_of_single_outcome_is_initial_fisher() {
        let p = spec(0.7);
        let e = enumerate_fi(&toy, &p, 1).unwrap();
        let r = chain_fisher(&toy, &p).unwrap();
        assert!((e - r.f1).abs() <= 1e-6 * r.f1);
    }

    #[test]
    fn enumeration_matches_decomposition() {
        let p = spec(0.7);
        let r = chain_fisher(&toy, &p).unwrap();
        for n in 2..=10 {
            let e = enumerate_fi(&toy, &p, n).unwrap();
            let d = r.sequential(n).unwrap();
            assert!((e - d).abs() <= 1e-6 * d, "n={n}: {e} vs {d}");
        }
        assert!(r.convexity_defect() < 1e-12);
    }

    #[test]
    fn enumeration_guard() {
        let r = enumerate_fi(&toy, &spec(0.7), 24);
        assert!(matches!(r, Err(Error::EnumerationGuard { .. })));
    }

    #[test]
    fn flags_render_compactly() {
        let f = Flag::SingularTerm { outcome: 1, prev: Some(0) };
        assert_eq!(f.to_string(), "singular(1|0)");
        assert_eq!(Flag::NearZero.to_string(), "near-zero");
    }
}
