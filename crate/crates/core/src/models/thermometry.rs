//! Thermometry with a `D`-level probe: a ground state `e₀` and a
//! `(D−1)`-fold degenerate excited level, thermalized by a flat-spectrum
//! bosonic bath with mean occupation `n̄`.
//!
//! Populations obey the rate equation `ṗ = W p` with rate `n̄` out of the
//! ground state into each excited state and `n̄ + 1` back. Two relaxation
//! factors control everything:
//! `f = exp(−τ(Dn̄ + 1))` and `g = exp(−τ(n̄ + 1))`.
//!
//! The waiting time may depend on the last outcome: `τ_g` after a ground
//! outcome and `τ_e` after an excited one. The probe gap only fixes what `n̄`
//! means and never enters the numerics, so the Hamiltonian is taken as zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{stationary, transition_matrix, TransitionMatrix};
use crate::channels::{MeasureEvolveStep, Povm, ProjectiveBasis};
use crate::error::{Error, Result};
use crate::fisher::{
    chain_fisher, d_theta, f_conditional, fi_of_distribution, ChainModel, Flag, FisherReport,
    ParamSpec,
};
use crate::qcore::expm::expm;
use crate::qcore::{c, liouvillian, CMatrix, HamiltonianSpec, Superoperator};

/// Waiting times at or below this count as "no evolution".
const TAU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermoMeasurement {
    /// Projective measurement in the energy eigenbasis, `D` outcomes.
    Full,
    /// Ground state versus the whole excited subspace, 2 outcomes.
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermometryModel {
    levels: usize,
    nbar: f64,
    measurement: ThermoMeasurement,
    tau_g: f64,
    tau_e: f64,
}

/// Thermal populations and relaxation factors at one waiting time.
///
/// The same struct holds the `n̄`-derivatives of every field when built by
/// [`ThermoRates::derivative`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoRates {
    pub q0: f64,
    pub qe: f64,
    pub qi: f64,
    pub f: f64,
    pub g: f64,
    pub x: f64,
    pub y: f64,
}

impl ThermoRates {
    pub fn new(levels: usize, nbar: f64, tau: f64) -> Self {
        let d = levels as f64;
        let z = 1.0 + d * nbar;
        let q0 = (1.0 + nbar) / z;
        let qe = (d - 1.0) * nbar / z;
        let f = (-tau * (d * nbar + 1.0)).exp();
        let g = (-tau * (nbar + 1.0)).exp();
        let x = qe * (1.0 - f);
        Self {
            q0,
            qe,
            qi: nbar / z,
            f,
            g,
            x,
            y: q0 * (1.0 - f),
        }
    }

    pub fn derivative(levels: usize, nbar: f64, tau: f64) -> Self {
        let r = Self::new(levels, nbar, tau);
        let d = levels as f64;
        let z2 = (1.0 + d * nbar).powi(2);
        let dq0 = (1.0 - d) / z2;
        let dqe = (d - 1.0) / z2;
        let df = -d * tau * r.f;
        let dg = -tau * r.g;
        Self {
            q0: dq0,
            qe: dqe,
            qi: 1.0 / z2,
            f: df,
            g: dg,
            x: dqe * (1.0 - r.f) - r.qe * df,
            y: dq0 * (1.0 - r.f) - r.q0 * df,
        }
    }

    /// Same populations with the relaxation factor `f` replaced; `x` and `y`
    /// follow so that columns stay normalized.
    pub fn with_f(self, f: f64) -> Self {
        Self { f, x: self.qe * (1.0 - f), y: self.q0 * (1.0 - f), ..self }
    }
}

/// `(D−1) / (n̄(1+n̄)(1+Dn̄)²)`: Fisher information of one thermal sample.
pub fn thermal_fi(levels: usize, nbar: f64) -> Result<f64> {
    check_params(levels, nbar)?;
    let d = levels as f64;
    Ok((d - 1.0) / (nbar * (1.0 + nbar) * (1.0 + d * nbar).powi(2)))
}

fn check_params(levels: usize, nbar: f64) -> Result<()> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 levels, got {levels}")));
    }
    if !(nbar > 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("occupation must be positive, got {nbar}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid waiting time {tau}")));
    }
    Ok(())
}

/// `(∂x)² / (x(1−x))`: information in the outcome following a ground outcome.
pub fn f21_ground_closed(levels: usize, nbar: f64, tau: f64) -> f64 {
    let r = ThermoRates::new(levels, nbar, tau);
    let d = ThermoRates::derivative(levels, nbar, tau);
    d.x * d.x / (r.x * (1.0 - r.x))
}

/// Information in the outcome following an excited outcome, full basis.
pub fn f21_excited_closed(levels: usize, nbar: f64, tau: f64) -> f64 {
    let r = ThermoRates::new(levels, nbar, tau);
    let d = ThermoRates::derivative(levels, nbar, tau);
    let m = levels as f64;
    let stay = d.y - (m - 2.0) * d.g;
    let mut total = d.y * d.y / r.y + stay * stay / ((m - 1.0) * (1.0 - r.y + (m - 2.0) * r.g));
    if levels > 2 {
        let hop = d.y + d.g;
        total += (m - 2.0) / (m - 1.0) * hop * hop / (1.0 - r.y - r.g);
    }
    total
}

/// `(∂y)² / (y(1−y))`: information after an excited outcome, coarse basis.
pub fn f21_excited_coarse_closed(levels: usize, nbar: f64, tau: f64) -> f64 {
    let r = ThermoRates::new(levels, nbar, tau);
    let d = ThermoRates::derivative(levels, nbar, tau);
    d.y * d.y / (r.y * (1.0 - r.y))
}

/// Stationary distribution of a feedback schedule, solved numerically, next
/// to the closed forms for the ground and per-level excited populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackStationary {
    pub numeric: Vec<f64>,
    /// `(1+n̄)(1−f_e) / (1 + Dn̄ − (D−1)n̄f_g − (1+n̄)f_e)`.
    pub closed_q0: f64,
    /// `n̄(1−f_g) / (1 + Dn̄ − (D−1)n̄f_g − (1+n̄)f_e)`.
    pub closed_qi: f64,
    /// The closed forms laid out like `numeric`.
    pub closed: Vec<f64>,
}

impl FeedbackStationary {
    /// Largest deviation of the numeric solution from the closed forms.
    pub fn closed_form_gap(&self) -> f64 {
        self.numeric
            .iter()
            .zip(&self.closed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl ThermometryModel {
    /// Full-basis model with waiting time 1 after every outcome.
    pub fn new(levels: usize, nbar: f64) -> Result<Self> {
        check_params(levels, nbar)?;
        Ok(Self {
            levels,
            nbar,
            measurement: ThermoMeasurement::Full,
            tau_g: 1.0,
            tau_e: 1.0,
        })
    }

    pub fn coarse(mut self) -> Self {
        self.measurement = ThermoMeasurement::Coarse;
        self
    }

    pub fn with_measurement(mut self, m: ThermoMeasurement) -> Self {
        self.measurement = m;
        self
    }

    pub fn with_nbar(&self, nbar: f64) -> Result<Self> {
        check_params(self.levels, nbar)?;
        Ok(Self { nbar, ..self.clone() })
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        self.with_schedule(tau, tau)
    }

    /// Waiting time `tau_g` after a ground outcome, `tau_e` after an excited one.
    pub fn with_schedule(&self, tau_g: f64, tau_e: f64) -> Result<Self> {
        check_tau(tau_g)?;
        check_tau(tau_e)?;
        Ok(Self {
            tau_g,
            tau_e,
            ..self.clone()
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn nbar(&self) -> f64 {
        self.nbar
    }

    pub fn measurement(&self) -> ThermoMeasurement {
        self.measurement
    }

    pub fn schedule(&self) -> (f64, f64) {
        (self.tau_g, self.tau_e)
    }

    pub fn n_outcomes(&self) -> usize {
        match self.measurement {
            ThermoMeasurement::Full => self.levels,
            ThermoMeasurement::Coarse => 2,
        }
    }

    fn waiting(&self) -> Vec<f64> {
        let mut w = vec![self.tau_e; self.n_outcomes()];
        w[0] = self.tau_g;
        w
    }

    fn is_uniform(&self) -> bool {
        self.tau_g == self.tau_e
    }

    /// Thermal outcome distribution `(q₀, q_i, …)`, or `(q₀, q_e)` when coarse.
    pub fn thermal(&self) -> Vec<f64> {
        let r = ThermoRates::new(self.levels, self.nbar, 0.0);
        self.lump(r.q0, r.qi, r.qe)
    }

    fn thermal_derivative(&self) -> Vec<f64> {
        let d = ThermoRates::derivative(self.levels, self.nbar, 0.0);
        self.lump(d.q0, d.qi, d.qe)
    }

    fn lump(&self, ground: f64, per_level: f64, subspace: f64) -> Vec<f64> {
        match self.measurement {
            ThermoMeasurement::Full => {
                let mut v = vec![per_level; self.levels];
                v[0] = ground;
                v
            }
            ThermoMeasurement::Coarse => vec![ground, subspace],
        }
    }

    /// Transition matrix from the closed-form rates (`derivative = false`) or
    /// its `n̄`-derivative (`derivative = true`).
    fn closed_matrix(&self, derivative: bool) -> DMatrix<f64> {
        let rates = |tau| {
            if derivative {
                ThermoRates::derivative(self.levels, self.nbar, tau)
            } else {
                ThermoRates::new(self.levels, self.nbar, tau)
            }
        };
        let one = if derivative { 0.0 } else { 1.0 };
        self.assemble(&rates(self.tau_g), &rates(self.tau_e), one)
    }

    fn assemble(&self, rg: &ThermoRates, re: &ThermoRates, one: f64) -> DMatrix<f64> {
        match self.measurement {
            ThermoMeasurement::Coarse => {
                DMatrix::from_row_slice(2, 2, &[one - rg.x, re.y, rg.x, one - re.y])
            }
            ThermoMeasurement::Full => {
                let d = self.levels;
                let m = (d - 1) as f64;
                let hop = (one - re.y - re.g) / m;
                DMatrix::from_fn(d, d, |k, prev| match (k, prev) {
                    (0, 0) => one - rg.x,
                    (_, 0) => rg.x / m,
                    (0, _) => re.y,
                    _ if k == prev => re.g + hop,
                    _ => hop,
                })
            }
        }
    }

    /// `P(k|k')` from the closed-form relaxation factors.
    pub fn transition(&self) -> Result<TransitionMatrix> {
        TransitionMatrix::new(self.closed_matrix(false))?.with_waiting(self.waiting())
    }

    /// Closed-form `P(k|k')` built from caller-supplied rates for the ground
    /// and excited columns.
    pub fn transition_with_rates(&self, rg: &ThermoRates, re: &ThermoRates) -> Result<TransitionMatrix> {
        TransitionMatrix::new(self.assemble(rg, re, 1.0))?.with_waiting(self.waiting())
    }

    /// `∂P(k|k')/∂n̄` in closed form.
    pub fn transition_derivative(&self) -> DMatrix<f64> {
        self.closed_matrix(true)
    }

    /// Population rate matrix on the `D` energy levels (columns sum to zero).
    pub fn w_matrix(&self) -> DMatrix<f64> {
        let d = self.levels;
        let n = self.nbar;
        DMatrix::from_fn(d, d, |k, prev| match (k, prev) {
            (0, 0) => -((d - 1) as f64) * n,
            (_, 0) => n,
            (0, _) => n + 1.0,
            _ if k == prev => -(n + 1.0),
            _ => 0.0,
        })
    }

    /// `P(k|k')` from the matrix exponential of the rate matrix.
    pub fn transition_from_rates(&self) -> Result<TransitionMatrix> {
        let w: CMatrix = self.w_matrix().map(c);
        let pg = expm(&(&w * c(self.tau_g)))?.map(|z| z.re);
        let pe = expm(&(&w * c(self.tau_e)))?.map(|z| z.re);
        let d = self.levels;
        let entries = match self.measurement {
            ThermoMeasurement::Full => {
                DMatrix::from_fn(d, d, |k, prev| if prev == 0 { pg[(k, 0)] } else { pe[(k, prev)] })
            }
            ThermoMeasurement::Coarse => {
                let up: f64 = (1..d).map(|k| pg[(k, 0)]).sum();
                let down = pe[(0, 1)];
                DMatrix::from_row_slice(2, 2, &[1.0 - up, down, up, 1.0 - down])
            }
        };
        TransitionMatrix::new(entries)?.with_waiting(self.waiting())
    }

    /// Lindblad generator of the probe: for each excited level, decay at
    /// rate `n̄+1` via `|e₀⟩⟨e_i|` and excitation at rate `n̄` via `|e_i⟩⟨e₀|`.
    pub fn lindbladian(&self) -> Result<Superoperator> {
        let d = self.levels;
        let mut jumps = Vec::with_capacity(2 * (d - 1));
        for i in 1..d {
            let mut down = CMatrix::zeros(d, d);
            down[(0, i)] = c(1.0);
            let up = down.transpose();
            jumps.push((1.0 + self.nbar, down));
            jumps.push((self.nbar, up));
        }
        liouvillian(&HamiltonianSpec::zero(d), &jumps)
    }

    /// `P(k|k')` by collapsing the density matrix and propagating with the
    /// full Lindbladian.
    pub fn transition_from_lindbladian(&self) -> Result<TransitionMatrix> {
        let d = self.levels;
        let measurement = match self.measurement {
            ThermoMeasurement::Full => ProjectiveBasis::computational(d).into(),
            ThermoMeasurement::Coarse => {
                Povm::coarse_grained(d, &[vec![0], (1..d).collect()])?.into()
            }
        };
        let step = MeasureEvolveStep::from_generator(measurement, &self.lindbladian()?, self.waiting())?;
        transition_matrix(&step)
    }

    fn check_schedule(&self) -> Result<()> {
        if self.tau_g <= TAU_FLOOR && self.tau_e <= TAU_FLOOR {
            return Err(Error::DegenerateStationary {
                multiplicity: self.n_outcomes(),
            });
        }
        Ok(())
    }

    /// Stationary outcome distribution: thermal for a uniform schedule,
    /// otherwise the numeric solution of `q = Pq`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.check_schedule()?;
        if self.is_uniform() {
            Ok(self.thermal())
        } else {
            Ok(stationary(&self.transition()?)?.into_vec())
        }
    }

    pub fn feedback_stationary(&self) -> Result<FeedbackStationary> {
        let numeric = self.stationary()?;
        let rg = ThermoRates::new(self.levels, self.nbar, self.tau_g);
        let re = ThermoRates::new(self.levels, self.nbar, self.tau_e);
        let n = self.nbar;
        let d = self.levels as f64;
        let den = 1.0 + d * n - (d - 1.0) * n * rg.f - (1.0 + n) * re.f;
        let closed_q0 = (1.0 + n) * (1.0 - re.f) / den;
        let closed_qi = n * (1.0 - rg.f) / den;
        Ok(FeedbackStationary {
            numeric,
            closed_q0,
            closed_qi,
            closed: self.lump(closed_q0, closed_qi, 1.0 - closed_q0),
        })
    }

    fn stationary_derivative(&self) -> Result<Vec<f64>> {
        if self.is_uniform() {
            Ok(self.thermal_derivative())
        } else {
            let p = ParamSpec::new("nbar", self.nbar)?;
            d_theta(|n| self.with_nbar(n)?.stationary(), &p)
        }
    }

    /// Fisher report for `n̄` with closed-form transition derivatives.
    pub fn fisher(&self) -> Result<FisherReport> {
        let tm = self.transition()?;
        let q = self.stationary()?;
        let dq = self.stationary_derivative()?;
        let f1 = fi_of_distribution(&q, &dq)?;
        let cond = f_conditional(&tm, &self.transition_derivative(), &q)?;
        let mut flags: Vec<Flag> = f1
            .singular
            .into_iter()
            .map(|outcome| Flag::SingularTerm { outcome, prev: None })
            .collect();
        flags.extend(cond.flags);
        Ok(FisherReport {
            theta: self.nbar,
            tau: self.waiting(),
            stationary: q,
            f1: f1.value,
            f21: cond.total,
            f21_by_prev: cond.by_prev,
            f_reference: Some(thermal_fi(self.levels, self.nbar)?),
            flags,
        })
    }

    /// Fisher report for `n̄` by central differences through the Lindbladian.
    pub fn fisher_numeric(&self) -> Result<FisherReport> {
        self.check_schedule()?;
        let model = |n: f64| {
            let m = self.with_nbar(n)?;
            let tm = m.transition_from_lindbladian()?;
            let q = stationary(&tm)?.into_vec();
            Ok((tm, q))
        };
        let mut report = chain_fisher(&model, &ParamSpec::new("nbar", self.nbar)?)?;
        report.f_reference = Some(thermal_fi(self.levels, self.nbar)?);
        Ok(report)
    }
}

/// `θ = n̄`, closed-form transitions, stationary start.
impl ChainModel for ThermometryModel {
    fn chain(&self, theta: f64) -> Result<(TransitionMatrix, Vec<f64>)> {
        let m = self.with_nbar(theta)?;
        Ok((m.transition()?, m.stationary()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::enumerate_fi;

    fn model(levels: usize, nbar: f64, tau: f64) -> ThermometryModel {
        ThermometryModel::new(levels, nbar).unwrap().with_tau(tau).unwrap()
    }

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn zero_wait_is_identity() {
        let tm = model(4, 1.0, 0.0).transition().unwrap();
        assert_eq!(tm.entries(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn four_level_spot_values() {
        let tm = model(4, 1.0, 1.0).transition().unwrap();
        let e5 = (-5.0f64).exp();
        assert!((tm.prob(0, 0) - (1.0 - 0.6 * (1.0 - e5))).abs() < 1e-15);
        assert!((tm.prob(0, 0) - 0.40404).abs() < 1e-5);
        assert!((tm.prob(2, 0) - 0.19865).abs() < 1e-5);
        let cg = model(4, 1.0, 1.0).coarse().transition().unwrap();
        assert!((cg.prob(0, 1) - 0.4 * (1.0 - e5)).abs() < 1e-15);
        assert!((cg.prob(0, 1) - 0.39731).abs() < 1e-5);
        assert!((cg.prob(1, 0) - 3.0 * tm.prob(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn two_level_spot_value() {
        let tm = model(2, 1.0, 1.0).transition().unwrap();
        let want = 1.0 - (1.0 - (-3.0f64).exp()) / 3.0;
        assert!((tm.prob(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn rate_matrix_two_levels() {
        let w = model(2, 1.0, 1.0).w_matrix();
        assert_eq!(w, DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]));
    }

    #[test]
    fn rate_matrix_annihilates_thermal_state() {
        for d in 2..=6 {
            for n in [0.1, 1.0, 10.0] {
                let m = model(d, n, 1.0);
                let w = m.w_matrix();
                let q = nalgebra::DVector::from_vec(m.thermal());
                assert!((&w * q).amax() < 1e-14);
                for col in w.column_iter() {
                    assert!(col.sum().abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn three_routes_agree() {
        for d in [2, 3, 5] {
            for n in [0.1, 1.0, 10.0] {
                for tau in [0.01, 0.5, 2.0, 20.0] {
                    let m = model(d, n, tau);
                    let a = m.transition().unwrap();
                    let w = m.transition_from_rates().unwrap();
                    let l = m.transition_from_lindbladian().unwrap();
                    assert!(max_diff(a.entries(), w.entries()) < 1e-10, "W d={d} n={n} t={tau}");
                    assert!(max_diff(a.entries(), l.entries()) < 1e-10, "L d={d} n={n} t={tau}");
                }
            }
        }
    }

    #[test]
    fn feedback_routes_agree() {
        for meas in [ThermoMeasurement::Full, ThermoMeasurement::Coarse] {
            let m = model(4, 1.0, 1.0)
                .with_measurement(meas)
                .with_schedule(0.3, 2.5)
                .unwrap();
            let a = m.transition().unwrap();
            assert!(max_diff(a.entries(), m.transition_from_rates().unwrap().entries()) < 1e-10);
            assert!(max_diff(a.entries(), m.transition_from_lindbladian().unwrap().entries()) < 1e-10);
        }
    }

    #[test]
    fn analytic_derivative_matches_central_difference() {
        for meas in [ThermoMeasurement::Full, ThermoMeasurement::Coarse] {
            let m = model(4, 0.7, 0.8).with_measurement(meas).with_schedule(0.8, 1.9).unwrap();
            let p = ParamSpec::new("nbar", m.nbar()).unwrap();
            let numeric = d_theta(|n| Ok(m.with_nbar(n)?.transition()?.entries().clone()), &p).unwrap();
            assert!(max_diff(&numeric, &m.transition_derivative()) < 1e-9);
        }
    }

    #[test]
    fn rate_derivatives_match_central_difference() {
        let (d, n, t) = (5, 0.4, 1.3);
        let p = ParamSpec::new("nbar", n).unwrap();
        let an = ThermoRates::derivative(d, n, t);
        let get = |r: ThermoRates| vec![r.q0, r.qe, r.qi, r.f, r.g, r.x, r.y];
        let fd: Vec<f64> = d_theta(|m| Ok(get(ThermoRates::new(d, m, t))), &p).unwrap();
        for (a, b) in get(an).iter().zip(&fd) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn thermal_fisher_values() {
        assert!((thermal_fi(2, 1.0).unwrap() - 1.0 / 18.0).abs() < 1e-15);
        assert!((thermal_fi(4, 1.0).unwrap() - 0.06).abs() < 1e-15);
        assert!(thermal_fi(1, 1.0).is_err());
        assert!(thermal_fi(3, 0.0).is_err());
    }

    #[test]
    fn thermal_fisher_is_first_outcome_information() {
        for d in 2..=6 {
            for n in [0.1, 1.0, 10.0] {
                let r = model(d, n, 1.0).fisher().unwrap();
                let th = thermal_fi(d, n).unwrap();
                assert!((r.f1 - th).abs() <= 1e-10 * th.max(1.0));
            }
        }
    }

    #[test]
    fn long_wait_recovers_iid_information() {
        for d in [2, 4] {
            let r = model(d, 1.0, 30.0).fisher().unwrap();
            let th = thermal_fi(d, 1.0).unwrap();
            assert!((r.f21 / th - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_form_column_information() {
        for d in [2, 3, 4, 6] {
            for tau in [0.2, 1.0, 3.0] {
                let r = model(d, 1.0, tau).fisher().unwrap();
                let g = f21_ground_closed(d, 1.0, tau);
                let e = f21_excited_closed(d, 1.0, tau);
                assert!((r.f21_by_prev[0] - g).abs() <= 1e-12 * g);
                assert!((r.f21_by_prev[1] - e).abs() <= 1e-12 * e, "d={d} tau={tau}");
                let q = r.stationary[0];
                assert!((r.f21 - (q * g + (1.0 - q) * e)).abs() <= 1e-12 * r.f21);
            }
        }
    }

    #[test]
    fn ground_conditioned_spot_value() {
        let e5 = (-5.0f64).exp();
        let x = 0.6 * (1.0 - e5);
        // dq_e = 3/25, df = −4e⁻⁵ at n̄ = 1, τ = 1
        let dx = 0.12 * (1.0 - e5) + 0.6 * 4.0 * e5;
        let want = dx * dx / (x * (1.0 - x));
        let r = model(4, 1.0, 1.0).fisher().unwrap();
        assert!((r.f21_by_prev[0] - want).abs() < 1e-14);
    }

    #[test]
    fn analytic_and_numeric_reports_agree() {
        for (d, n, tg, te) in [(2, 1.0, 1.0, 1.0), (4, 0.5, 0.7, 0.7), (3, 2.0, 0.4, 1.5)] {
            for meas in [ThermoMeasurement::Full, ThermoMeasurement::Coarse] {
                let m = ThermometryModel::new(d, n)
                    .unwrap()
                    .with_measurement(meas)
                    .with_schedule(tg, te)
                    .unwrap();
                let a = m.fisher().unwrap();
                let b = m.fisher_numeric().unwrap();
                assert!((a.f21 - b.f21).abs() <= 1e-6 * a.f21);
                assert!((a.f1 - b.f1).abs() <= 1e-6 * a.f1);
                assert!(a.convexity_defect() < 1e-14);
            }
        }
    }

    #[test]
    fn coarse_graining_keeps_ground_term_and_loses_excited_information() {
        for tau in [0.05, 0.3, 1.0, 4.0] {
            let full = model(4, 1.0, tau).fisher().unwrap();
            let cg = model(4, 1.0, tau).coarse().fisher().unwrap();
            assert!((full.f21_by_prev[0] - cg.f21_by_prev[0]).abs() <= 1e-12 * full.f21_by_prev[0]);
            assert!(cg.f21_by_prev[1] <= full.f21_by_prev[1]);
            assert!(cg.f21 <= full.f21);
            let closed = f21_excited_coarse_closed(4, 1.0, tau);
            assert!((cg.f21_by_prev[1] - closed).abs() <= 1e-12 * closed);
        }
    }

    #[test]
    fn feedback_stationary_closed_forms() {
        for d in [2, 4] {
            for meas in [ThermoMeasurement::Full, ThermoMeasurement::Coarse] {
                let m = ThermometryModel::new(d, 0.8)
                    .unwrap()
                    .with_measurement(meas)
                    .with_schedule(0.4, 2.0)
                    .unwrap();
                let s = m.feedback_stationary().unwrap();
                assert!(s.closed_form_gap() < 1e-12);
                let res = stationary(&m.transition().unwrap()).unwrap().residual(&m.transition().unwrap());
                assert!(res < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_schedule_is_thermal() {
        let m = model(5, 0.3, 0.9);
        let tm = m.transition().unwrap();
        let q = stationary(&tm).unwrap();
        for (a, b) in q.probabilities().iter().zip(m.thermal()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_schedule_is_rejected() {
        assert!(matches!(
            model(3, 1.0, 0.0).fisher(),
            Err(Error::DegenerateStationary { .. })
        ));
        assert!(model(3, 1.0, 1.0).with_schedule(-1.0, 1.0).is_err());
        assert!(ThermometryModel::new(1, 1.0).is_err());
        assert!(ThermometryModel::new(3, -0.5).is_err());
    }

    #[test]
    fn enumeration_matches_decomposition() {
        let m = model(2, 0.5, 1.0);
        let r = m.fisher().unwrap();
        let p = ParamSpec::new("nbar", 0.5).unwrap();
        for n in [1, 4, 8] {
            let e = enumerate_fi(&m, &p, n).unwrap();
            let want = r.sequential(n).unwrap();
            assert!((e - want).abs() <= 1e-6 * want, "n={n}");
        }
    }
}
