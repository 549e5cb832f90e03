//! Estimators on sampled outcome records and Monte-Carlo checks of the
//! Cramér-Rao rate `Var(θ̂) ≥ 1/(N F_{2|1})`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{sample_with, stream, InitTag, TransitionMatrix, Trajectory};
use crate::error::{Error, Result};
use crate::fisher::{chain_fisher, ChainModel, ParamSpec};
use crate::scan::golden_section;

/// Model probabilities below this make an observed transition impossible.
pub const IMPOSSIBLE_P: f64 = 1e-300;
const PRESCAN_POINTS: usize = 41;
/// Largest failed fraction of Monte-Carlo trajectories that is tolerated.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// `C(k|k')`: how often outcome `k'` was followed by `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    counts: DMatrix<u64>,
    first: usize,
    total: u64,
}

impl TransitionCounts {
    pub fn n_outcomes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn count(&self, next: usize, prev: usize) -> u64 {
        self.counts[(next, prev)]
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    pub fn first(&self) -> usize {
        self.first
    }

    /// Number of transitions, `N − 1`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn visits(&self, prev: usize) -> u64 {
        self.counts.column(prev).sum()
    }

    /// `P̂(·|k') = C(·|k') / Σ_k C(k|k')`, `None` for unvisited `k'`.
    pub fn column_estimate(&self, prev: usize) -> Option<Vec<f64>> {
        let visits = self.visits(prev);
        (visits > 0).then(|| {
            self.counts
                .column(prev)
                .iter()
                .map(|&c| c as f64 / visits as f64)
                .collect()
        })
    }

    /// `log p(ω₁) + Σ C(k|k') log P(k|k')`.
    pub fn log_likelihood(&self, p: &TransitionMatrix, init: &[f64]) -> Result<f64> {
        let n = self.n_outcomes();
        if p.n_outcomes() != n || init.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.n_outcomes(),
            });
        }
        let p0 = init[self.first];
        if p0 < IMPOSSIBLE_P {
            return Err(Error::ZeroProbability {
                outcome: self.first,
                probability: p0,
            });
        }
        let mut ll = p0.ln();
        for prev in 0..n {
            for next in 0..n {
                let c = self.count(next, prev);
                if c == 0 {
                    continue;
                }
                let pk = p.prob(next, prev);
                if pk < IMPOSSIBLE_P {
                    return Err(Error::ImpossibleTransition {
                        from: prev,
                        to: next,
                        probability: pk,
                    });
                }
                ll += c as f64 * pk.ln();
            }
        }
        Ok(ll)
    }
}

fn check_outcomes(traj: &Trajectory, n_outcomes: usize) -> Result<()> {
    match traj.outcomes.iter().find(|&&k| k >= n_outcomes) {
        Some(&k) => Err(Error::InvalidArgument(format!(
            "outcome {k} out of range for {n_outcomes} outcomes"
        ))),
        None => Ok(()),
    }
}

pub fn count_transitions(traj: &Trajectory, n_outcomes: usize) -> Result<TransitionCounts> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 outcomes to count transitions".into()));
    }
    check_outcomes(traj, n_outcomes)?;
    let mut counts = DMatrix::zeros(n_outcomes, n_outcomes);
    for w in traj.outcomes.windows(2) {
        counts[(w[1], w[0])] += 1;
    }
    Ok(TransitionCounts {
        counts,
        first: traj.outcomes[0],
        total: (traj.len() - 1) as u64,
    })
}

/// Outcome frequencies of a single record.
pub fn empirical_distribution(traj: &Trajectory, n_outcomes: usize) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    check_outcomes(traj, n_outcomes)?;
    let mut freq = vec![0.0; n_outcomes];
    for &k in &traj.outcomes {
        freq[k] += 1.0;
    }
    let n = traj.len() as f64;
    freq.iter_mut().for_each(|f| *f /= n);
    Ok(freq)
}

/// Keeps outcomes `1, Δ+1, 2Δ+1, …`.
pub fn subsample(traj: &Trajectory, delta: usize) -> Result<Trajectory> {
    if delta == 0 {
        return Err(Error::InvalidArgument("subsampling spacing must be >= 1".into()));
    }
    Ok(Trajectory {
        outcomes: traj.outcomes.iter().step_by(delta).copied().collect(),
        seed: traj.seed,
        init: traj.init,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: f64,
    /// The estimate sits on the bracket boundary.
    pub boundary: bool,
}

fn prescan_points(lo: f64, hi: f64) -> Vec<f64> {
    let last = (PRESCAN_POINTS - 1) as f64;
    let log = lo > 0.0 && hi / lo > 10.0;
    (0..PRESCAN_POINTS)
        .map(|i| {
            let t = i as f64 / last;
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .map(|x| x.clamp(lo, hi))
        .collect()
}

fn check_bracket(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    Ok(())
}

/// Maximum-likelihood estimate of `θ` on `[lo, hi]`: grid pre-scan of the
/// log-likelihood, then golden-section refinement to `1e-6·max(|θ|, 1)`.
pub fn mle<M: ChainModel + ?Sized>(traj: &Trajectory, model: &M, lo: f64, hi: f64) -> Result<Estimate> {
    check_bracket(lo, hi)?;
    let (p0, _) = model.chain(0.5 * (lo + hi))?;
    let counts = count_transitions(traj, p0.n_outcomes())?;
    mle_from_counts(&counts, model, lo, hi)
}

pub fn mle_from_counts<M: ChainModel + ?Sized>(
    counts: &TransitionCounts,
    model: &M,
    lo: f64,
    hi: f64,
) -> Result<Estimate> {
    check_bracket(lo, hi)?;
    let ll = |theta: f64| -> Result<f64> {
        let (p, init) = model.chain(theta)?;
        counts.log_likelihood(&p, &init)
    };
    let xs = prescan_points(lo, hi);
    let mut first_error = None;
    let values: Vec<f64> = xs
        .iter()
        .map(|&x| match ll(x) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                first_error.get_or_insert(e);
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    if values[best] == f64::NEG_INFINITY {
        return Err(first_error.unwrap_or_else(|| Error::EstimatorFailure("likelihood undefined on bracket".into())));
    }
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(xs.len() - 1)];
    let scale = xs[best].abs().max(1.0);
    let f = |x: f64| ll(x).unwrap_or(f64::NEG_INFINITY);
    let (x, v, _) = golden_section(f, a, b, 1e-6 * scale);
    let theta = if v >= values[best] { x } else { xs[best] };
    let edge = 1e-6 * scale;
    Ok(Estimate {
        theta,
        boundary: theta - lo <= edge || hi - theta <= edge,
    })
}

/// Solves `g(θ) = target` by bisection for a `g` monotone on `[lo, hi]`.
pub fn invert_monotone<G: Fn(f64) -> Result<f64>>(g: G, target: f64, lo: f64, hi: f64) -> Result<Estimate> {
    check_bracket(lo, hi)?;
    let (glo, ghi) = (g(lo)?, g(hi)?);
    let increasing = ghi > glo;
    let (min, max) = if increasing { (glo, ghi) } else { (ghi, glo) };
    if target <= min || target >= max {
        let at_lo = (target <= min) == increasing;
        return Ok(Estimate {
            theta: if at_lo { lo } else { hi },
            boundary: true,
        });
    }
    let (mut a, mut b) = (lo, hi);
    let tol = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if (g(mid)? < target) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Estimate {
        theta: 0.5 * (a + b),
        boundary: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EstimatorKind {
    /// Full maximum likelihood over the bracket.
    Mle,
    /// Inverts `θ ↦ P_θ(next|prev)` at the counted frequency `P̂(next|prev)`.
    TransitionInversion { next: usize, prev: usize },
    /// Inverts `θ ↦ q_θ(outcome)` at the empirical frequency of `outcome`.
    EmpiricalInversion { outcome: usize },
}

/// Applies an estimator to one record.
pub fn estimate<M: ChainModel + ?Sized>(
    kind: EstimatorKind,
    traj: &Trajectory,
    model: &M,
    lo: f64,
    hi: f64,
) -> Result<Estimate> {
    let n = model.chain(0.5 * (lo + hi))?.0.n_outcomes();
    match kind {
        EstimatorKind::Mle => mle(traj, model, lo, hi),
        EstimatorKind::TransitionInversion { next, prev } => {
            let counts = count_transitions(traj, n)?;
            let col = counts.column_estimate(prev).ok_or_else(|| {
                Error::EstimatorFailure(format!("outcome {prev} never followed by another"))
            })?;
            let target = *col
                .get(next)
                .ok_or_else(|| Error::InvalidArgument(format!("outcome {next} out of range")))?;
            invert_monotone(|t| Ok(model.chain(t)?.0.prob(next, prev)), target, lo, hi)
        }
        EstimatorKind::EmpiricalInversion { outcome } => {
            let freq = empirical_distribution(traj, n)?;
            let target = *freq
                .get(outcome)
                .ok_or_else(|| Error::InvalidArgument(format!("outcome {outcome} out of range")))?;
            invert_monotone(|t| Ok(model.chain(t)?.1[outcome]), target, lo, hi)
        }
    }
}

/// Settings of a Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub theta0: f64,
    pub estimator: EstimatorKind,
    pub n_per_trajectory: usize,
    pub n_trajectories: usize,
    pub seed: u64,
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub theta0: f64,
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub n_trajectories: usize,
    pub n_per_trajectory: usize,
    pub failures: usize,
    pub boundary_hits: usize,
    pub f21: f64,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
    /// `1 / (N F_{2|1})`.
    pub predicted_bound: f64,
    /// `σ̂² N F_{2|1}`.
    pub ratio: f64,
    /// Sampling standard error of `ratio`, `ratio·√(2/(n−1))`.
    pub ratio_std_error: f64,
}

/// Samples `n_trajectories` independent records at `θ₀`, estimates `θ` on
/// each and compares the spread with the Cramér-Rao rate.
///
/// Record `i` draws from RNG stream `(seed, i)`, so results do not depend on
/// scheduling. Failures below 1% of records are skipped and counted.
pub fn monte_carlo<M: ChainModel + Sync + ?Sized>(model: &M, cfg: &McConfig) -> Result<McReport> {
    if cfg.n_trajectories < 2 {
        return Err(Error::InvalidArgument("need at least 2 trajectories for a variance".into()));
    }
    if cfg.n_per_trajectory < 2 {
        return Err(Error::InvalidArgument("need at least 2 outcomes per trajectory".into()));
    }
    let (lo, hi) = cfg.bracket;
    check_bracket(lo, hi)?;
    let (p, init) = model.chain(cfg.theta0)?;
    let f21 = chain_fisher(model, &ParamSpec::new("theta", cfg.theta0)?)?.f21;
    let results: Vec<Result<Estimate>> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            let outcomes = sample_with(&p, cfg.n_per_trajectory, &init, &mut rng)?;
            let traj = Trajectory {
                outcomes,
                seed: cfg.seed,
                init: InitTag::Stationary,
            };
            estimate(cfg.estimator, &traj, model, lo, hi)
        })
        .collect();
    let estimates: Vec<Estimate> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failures = cfg.n_trajectories - estimates.len();
    if failures as f64 > MAX_FAILURE_FRACTION * cfg.n_trajectories as f64 || estimates.len() < 2 {
        let first = results.iter().find_map(|r| r.as_ref().err()).map(|e| e.to_string());
        return Err(Error::EstimatorFailure(format!(
            "{failures} of {} trajectories failed{}",
            cfg.n_trajectories,
            first.map(|e| format!(" (first: {e})")).unwrap_or_default()
        )));
    }
    let m = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.theta).sum::<f64>() / m;
    let variance = estimates.iter().map(|e| (e.theta - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let n = cfg.n_per_trajectory as f64;
    let ratio = variance * n * f21;
    Ok(McReport {
        theta0: cfg.theta0,
        estimator: cfg.estimator,
        seed: cfg.seed,
        n_trajectories: cfg.n_trajectories,
        n_per_trajectory: cfg.n_per_trajectory,
        failures,
        boundary_hits: estimates.iter().filter(|e| e.boundary).count(),
        f21,
        mean,
        variance,
        bias: mean - cfg.theta0,
        predicted_bound: 1.0 / (n * f21),
        ratio,
        ratio_std_error: ratio * (2.0 / (m - 1.0)).sqrt(),
    })
}
