//! The outcome Markov chain.
//!
//! `P(k|k')` is stored column-stochastic: column `k'` is the distribution of
//! the next outcome given the previous outcome `k'`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{outcome_probabilities, step, Measurement, MeasureEvolveStep};
use crate::error::{Error, Result};
use crate::qcore::DensityMatrix;

pub const ENTRY_TOL: f64 = 1e-12;
pub const COLUMN_TOL: f64 = 1e-10;
/// Transitions more likely than this count as edges of the support graph.
pub const SUPPORT_TOL: f64 = 1e-12;
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    waiting: Option<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(mut entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: entries.ncols(),
            });
        }
        for x in entries.iter_mut() {
            if !x.is_finite() {
                return Err(Error::NonFinite("transition probability".into()));
            }
            if *x < -ENTRY_TOL || *x > 1.0 + ENTRY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "transition probability {x} outside [0, 1]"
                )));
            }
            *x = x.clamp(0.0, 1.0);
        }
        for (j, col) in entries.column_iter().enumerate() {
            let s: f64 = col.sum();
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(Error::InvalidArgument(format!("column {j} sums to {s}")));
            }
        }
        Ok(Self {
            entries,
            waiting: None,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let mut m = DMatrix::zeros(n, n);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            for (i, &x) in col.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        Self::new(m)
    }

    pub fn with_waiting(mut self, waiting: Vec<f64>) -> Result<Self> {
        if waiting.len() != self.n_outcomes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_outcomes(),
                found: waiting.len(),
            });
        }
        self.waiting = Some(waiting);
        Ok(self)
    }

    pub fn n_outcomes(&self) -> usize {
        self.entries.nrows()
    }

    /// `P(next | prev)`.
    pub fn prob(&self, next: usize, prev: usize) -> f64 {
        self.entries[(next, prev)]
    }

    pub fn column(&self, prev: usize) -> Vec<f64> {
        self.entries.column(prev).iter().copied().collect()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn waiting_times(&self) -> Option<&[f64]> {
        self.waiting.as_deref()
    }

    /// `P^steps`, the transition matrix between outcomes `steps` rounds apart.
    pub fn power(&self, steps: usize) -> Result<Self> {
        let n = self.n_outcomes();
        let mut acc = DMatrix::identity(n, n);
        let mut base = self.entries.clone();
        let mut e = steps;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        Self::new(acc)
    }
}

/// Builds `P(k|k')` by running one measure-evolve round from each outcome.
///
/// For a POVM the effects must be projectors onto mutually orthogonal
/// subspaces; the round then starts from the uniform state on the subspace
/// of `k'`. Whether the result is independent of the state inside that
/// subspace is a property of the dynamics, not of this function.
pub fn transition_matrix(s: &MeasureEvolveStep) -> Result<TransitionMatrix> {
    let m = s.measurement();
    if let Measurement::Povm(p) = m {
        if !p.is_subspace_orthogonal() {
            return Err(Error::NotSubspaceOrthogonal);
        }
    }
    let n = m.n_outcomes();
    let start = DensityMatrix::maximally_mixed(m.dim());
    let mut columns = Vec::with_capacity(n);
    for prev in 0..n {
        let after = step(&start, s, prev)?;
        columns.push(outcome_probabilities(&after, m)?);
    }
    TransitionMatrix::from_columns(&columns)?.with_waiting(s.waiting_times().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    q: Vec<f64>,
}

impl StationaryDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }

    /// `‖q − P q‖∞`.
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        let q = DVector::from_column_slice(&self.q);
        (p.entries() * &q - &q).amax()
    }
}

fn clip_normalize(v: &DVector<f64>) -> Option<Vec<f64>> {
    let sum: f64 = v.sum();
    if sum == 0.0 || !sum.is_finite() {
        return None;
    }
    let mut q: Vec<f64> = v.iter().map(|x| x / sum).collect();
    if q.iter().any(|&x| x < -ENTRY_TOL) {
        return None;
    }
    q.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);
    Some(q)
}

/// Multiplicity of the eigenvalue 1 of `P`, computed as the number of closed
/// communicating classes of the graph `k' → k` for `P(k|k') > SUPPORT_TOL`.
pub fn unit_eigenvalue_multiplicity(p: &TransitionMatrix) -> usize {
    let n = p.n_outcomes();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|from| (0..n).map(|to| from == to || p.prob(to, from) > SUPPORT_TOL).collect())
        .collect();
    for mid in 0..n {
        for from in 0..n {
            if reach[from][mid] {
                for to in 0..n {
                    if reach[mid][to] {
                        reach[from][to] = true;
                    }
                }
            }
        }
    }
    // a state is recurrent when everything it reaches leads back to it
    let recurrent: Vec<usize> = (0..n)
        .filter(|&i| (0..n).all(|j| !reach[i][j] || reach[j][i]))
        .collect();
    recurrent
        .iter()
        .filter(|&&i| recurrent.iter().all(|&j| j >= i || !reach[i][j]))
        .count()
}

/// The unique `q` with `q = P q`.
pub fn stationary(p: &TransitionMatrix) -> Result<StationaryDistribution> {
    let n = p.n_outcomes();
    let multiplicity = unit_eigenvalue_multiplicity(p);
    if multiplicity != 1 {
        return Err(Error::DegenerateStationary { multiplicity });
    }
    if n == 1 {
        return Ok(StationaryDistribution { q: vec![1.0] });
    }

    // Shifted inverse iteration towards the unit eigenvalue.
    let shift = 1.0 + 1e-9;
    let shifted = p.entries() - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..4 {
        match lu.solve(&x) {
            Some(y) if y.amax() > 0.0 && y.amax().is_finite() => {
                let norm = y.amax();
                x = y / norm;
            }
            _ => break,
        }
    }
    let candidate = clip_normalize(&x).map(|q| StationaryDistribution { q });
    if let Some(dist) = &candidate {
        if dist.residual(p) <= 1e-14 {
            return Ok(dist.clone());
        }
    }

    // Fallback: (P − I) q = 0 with the last row replaced by normalization.
    let mut a = p.entries() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let solved = a
        .lu()
        .solve(&rhs)
        .and_then(|v| clip_normalize(&v))
        .map(|q| StationaryDistribution { q });
    let best = match (candidate, solved) {
        (Some(a), Some(b)) => {
            if a.residual(p) <= b.residual(p) {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(Error::DegenerateStationary { multiplicity }),
    };
    let residual = best.residual(p);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::InvalidArgument(format!(
            "stationary solve residual {residual:.3e}"
        )));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitTag {
    Stationary,
    Specified,
}

/// How the first outcome of a trajectory is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Stationary,
    Specified(Vec<f64>),
}

impl Initial {
    pub fn resolve(&self, p: &TransitionMatrix) -> Result<Vec<f64>> {
        match self {
            Initial::Stationary => Ok(stationary(p)?.into_vec()),
            Initial::Specified(v) => {
                validate_distribution(v, p.n_outcomes())?;
                Ok(v.clone())
            }
        }
    }

    pub fn tag(&self) -> InitTag {
        match self {
            Initial::Stationary => InitTag::Stationary,
            Initial::Specified(_) => InitTag::Specified,
        }
    }
}

pub(crate) fn validate_distribution(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.len(),
        });
    }
    if p.iter().any(|&x| !x.is_finite() || x < -ENTRY_TOL) {
        return Err(Error::InvalidArgument("distribution has invalid entries".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > COLUMN_TOL {
        return Err(Error::InvalidArgument(format!("distribution sums to {s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub outcomes: Vec<usize>,
    pub seed: u64,
    pub init: InitTag,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Independent RNG stream `index` derived from a root seed.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn draw(cum: &[f64], u: f64) -> usize {
    let total = *cum.last().unwrap();
    let target = u * total;
    match cum.iter().position(|&c| target < c) {
        Some(k) => k,
        // u·total can round up to total; take the last outcome with mass.
        None => {
            let mut k = cum.len() - 1;
            while k > 0 && cum[k] == cum[k - 1] {
                k -= 1;
            }
            k
        }
    }
}

/// Samples `n` outcomes from the chain with an explicit RNG.
pub fn sample_with<R: Rng + ?Sized>(
    p: &TransitionMatrix,
    n: usize,
    init: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("trajectory length must be >= 1".into()));
    }
    validate_distribution(init, p.n_outcomes())?;
    let columns: Vec<Vec<f64>> = (0..p.n_outcomes())
        .map(|j| cumulative(&p.column(j)))
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut current = draw(&cumulative(init), rng.gen());
    out.push(current);
    for _ in 1..n {
        current = draw(&columns[current], rng.gen());
        out.push(current);
    }
    Ok(out)
}

/// Reproducible trajectory of length `n` for a given seed.
pub fn sample(p: &TransitionMatrix, n: usize, init: &Initial, seed: u64) -> Result<Trajectory> {
    let dist = init.resolve(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Trajectory {
        outcomes: sample_with(p, n, &dist, &mut rng)?,
        seed,
        init: init.tag(),
    })
}

/// `P(ω_{1:N}) = p(ω₁) Π P(ω_{n+1}|ω_n)`, returned with its logarithm.
pub fn sequence_probability(
    p: &TransitionMatrix,
    init: &[f64],
    outcomes: &[usize],
) -> Result<(f64, f64)> {
    validate_distribution(init, p.n_outcomes())?;
    let n = p.n_outcomes();
    let first = *outcomes
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    if let Some(bad) = outcomes.iter().find(|&&k| k >= n) {
        return Err(Error::InvalidArgument(format!("outcome {bad} >= {n}")));
    }
    let mut log = init[first].ln();
    let mut prob = init[first];
    for w in outcomes.windows(2) {
        let t = p.prob(w[1], w[0]);
        prob *= t;
        log += t.ln();
    }
    Ok((prob, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> TransitionMatrix {
        // P(1|0) = a, P(0|1) = b
        TransitionMatrix::from_columns(&[vec![1.0 - a, a], vec![b, 1.0 - b]]).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_columns() {
        assert!(TransitionMatrix::from_columns(&[vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
        assert!(TransitionMatrix::from_columns(&[vec![1.1, -0.1], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn two_state_closed_form() {
        let (a, b) = (0.3, 0.05);
        let q = stationary(&two_state(a, b)).unwrap();
        let want = [b / (a + b), a / (a + b)];
        for (got, want) in q.probabilities().iter().zip(want) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_is_degenerate() {
        let p = TransitionMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(stationary(&p), Err(Error::DegenerateStationary { multiplicity: 3 }));
    }

    #[test]
    fn periodic_chain_has_unique_fixed_point() {
        let p = two_state(1.0, 1.0);
        let q = stationary(&p).unwrap();
        assert!((q.probabilities()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn nearly_identity_chain_still_solves() {
        let p = two_state(1e-6, 3e-6);
        let q = stationary(&p).unwrap();
        assert!((q.probabilities()[0] - 0.75).abs() < 1e-9);
        assert!(q.residual(&p) <= 1e-10);
    }

    #[test]
    fn stationary_of_random_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 2..7 {
            let cols: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / s).collect()
                })
                .collect();
            let p = TransitionMatrix::from_columns(&cols).unwrap();
            let q = stationary(&p).unwrap();
            assert!(q.residual(&p) <= 1e-12);
            assert!((q.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn absorbing_chain_gives_constant_trajectory() {
        let p = TransitionMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let t = sample(&p, 50, &Initial::Specified(vec![0.0, 1.0, 0.0]), 3).unwrap();
        assert!(t.outcomes.iter().all(|&k| k == 1));
        assert_eq!(t.init, InitTag::Specified);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = two_state(0.3, 0.6);
        let a = sample(&p, 1000, &Initial::Stationary, 42).unwrap();
        let b = sample(&p, 1000, &Initial::Stationary, 42).unwrap();
        let c = sample(&p, 1000, &Initial::Stationary, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.outcomes, c.outcomes);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let x: u64 = stream(9, 0).gen();
        let y: u64 = stream(9, 1).gen();
        assert_ne!(x, y);
        assert_eq!(x, stream(9, 0).gen::<u64>());
    }

    #[test]
    fn sample_rejects_zero_length() {
        assert!(sample(&two_state(0.1, 0.1), 0, &Initial::Stationary, 1).is_err());
    }

    #[test]
    fn single_outcome_probability_is_initial_weight() {
        let p = two_state(0.2, 0.4);
        let (prob, log) = sequence_probability(&p, &[0.25, 0.75], &[1]).unwrap();
        assert_eq!(prob, 0.75);
        assert!((log - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sequence_probabilities_are_normalized() {
        let p = two_state(0.2, 0.4);
        let init = [0.3, 0.7];
        let mut total = 0.0;
        for code in 0..8usize {
            let seq: Vec<usize> = (0..3).map(|b| (code >> b) & 1).collect();
            total += sequence_probability(&p, &init, &seq).unwrap().0;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_converges_to_stationary_projector() {
        let p = two_state(0.3, 0.1);
        let q = stationary(&p).unwrap();
        let big = p.power(200).unwrap();
        for j in 0..2 {
            for (i, &qi) in q.probabilities().iter().enumerate() {
                assert!((big.prob(i, j) - qi).abs() < 1e-12);
            }
        }
        assert_eq!(p.power(1).unwrap(), p);
    }
}
