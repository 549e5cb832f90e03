//! Identity and oracle suites behind `seqfisher verify`.

use serde::Serialize;
use serde_json::json;

use seqfisher::chain::{stream, TransitionMatrix};
use seqfisher::channels::{collision_povm, joint_outcome_probabilities, outcome_probabilities, ProjectiveBasis};
use seqfisher::fisher::{enumerate_fi, ChainModel, ParamSpec};
use seqfisher::models::{thermal_fi, RabiBasis, RabiModel, ThermoRates, ThermometryModel};
use seqfisher::qcore::{random, CMatrix};
use seqfisher::Result;

use crate::commands::{json_only, DEFAULT_SEED};
use crate::config::Params;
use crate::output::Payload;
use crate::{Failure, Outcome};

const SUITES: [&str; 4] = ["identities", "stationarity", "oracle", "collision"];
const LEVELS: [usize; 5] = [2, 3, 4, 5, 6];
const NBARS: [f64; 3] = [0.1, 1.0, 10.0];
const TAUS: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0];
const DEFAULT_N_MAX: usize = 8;
const COLLISION_SAMPLES: usize = 100;

#[derive(Debug, Serialize)]
struct Check {
    suite: &'static str,
    name: &'static str,
    passed: bool,
    /// Largest deviation seen, compared against `tolerance`.
    worst: Option<f64>,
    tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn check(suite: &'static str, name: &'static str, tolerance: f64, worst: Result<f64>) -> Check {
    match worst {
        Ok(w) => Check { suite, name, passed: w <= tolerance, worst: Some(w), tolerance, error: None },
        Err(e) => Check { suite, name, passed: false, worst: None, tolerance, error: Some(e.to_string()) },
    }
}

fn thermo_grid() -> impl Iterator<Item = (usize, f64, f64)> {
    LEVELS
        .into_iter()
        .flat_map(|d| NBARS.into_iter().flat_map(move |n| TAUS.into_iter().map(move |t| (d, n, t))))
}

/// Closed-form transitions, optionally with `f` scaled by `1 + perturb`.
fn closed_form(m: &ThermometryModel, tau: f64, perturb: f64) -> Result<TransitionMatrix> {
    let r = ThermoRates::new(m.levels(), m.nbar(), tau);
    let r = r.with_f(r.f * (1.0 + perturb));
    m.transition_with_rates(&r, &r)
}

fn max_gap(a: &TransitionMatrix, b: &TransitionMatrix) -> f64 {
    (a.entries() - b.entries()).amax()
}

fn identities(perturb: f64) -> Vec<Check> {
    let (mut rates, mut lindblad) = (Ok(0.0_f64), Ok(0.0_f64));
    for (d, n, t) in thermo_grid() {
        let step = (|| -> Result<(f64, f64)> {
            let m = ThermometryModel::new(d, n)?.with_tau(t)?;
            let a = closed_form(&m, t, perturb)?;
            Ok((max_gap(&a, &m.transition_from_rates()?), max_gap(&a, &m.transition_from_lindbladian()?)))
        })();
        match step {
            Ok((w, l)) => {
                rates = rates.map(|x| x.max(w));
                lindblad = lindblad.map(|x| x.max(l));
            }
            Err(e) => {
                rates = Err(e.clone());
                lindblad = Err(e);
                break;
            }
        }
    }
    let feedback = (|| {
        let mut worst: f64 = 0.0;
        for d in LEVELS {
            for (tg, te) in [(0.1, 3.0), (2.0, 0.4), (0.7, 0.7)] {
                let s = ThermometryModel::new(d, 1.3)?.with_schedule(tg, te)?.feedback_stationary()?;
                worst = worst.max(s.closed_form_gap());
            }
        }
        Ok(worst)
    })();
    vec![
        check("identities", "analytic-vs-rate-matrix", 1e-10, rates),
        check("identities", "analytic-vs-lindblad", 1e-10, lindblad),
        check("identities", "feedback-stationary-closed-form", 1e-12, feedback),
    ]
}

fn stationarity(perturb: f64) -> Vec<Check> {
    let thermal = (|| {
        let mut worst: f64 = 0.0;
        for (d, n, t) in thermo_grid() {
            let m = ThermometryModel::new(d, n)?;
            let p = closed_form(&m, t, perturb)?;
            let q = m.thermal();
            for (k, qk) in q.iter().enumerate() {
                let pq: f64 = (0..d).map(|prev| p.prob(k, prev) * q[prev]).sum();
                worst = worst.max((qk - pq).abs());
            }
        }
        Ok(worst)
    })();
    let spot = (|| Ok((thermal_fi(2, 1.0)? - 1.0 / 18.0).abs().max((thermal_fi(4, 1.0)? - 0.06).abs())))();
    vec![
        check("stationarity", "thermal-state-is-stationary", 1e-10, thermal),
        check("stationarity", "thermal-fisher-spot-values", 1e-15, spot),
    ]
}

/// Largest relative gap between enumerated information and `F_1 + (N−1) F_{2|1}`.
fn decomposition_gap<M: ChainModel + Sync>(model: &M, theta: f64, f1: f64, f21: f64, n_max: usize) -> Result<f64> {
    let p = ParamSpec::new("theta", theta)?;
    let mut worst: f64 = 0.0;
    for n in 1..=n_max {
        let e = enumerate_fi(model, &p, n)?;
        let d = f1 + (n as f64 - 1.0) * f21;
        worst = worst.max((e - d).abs() / d);
    }
    Ok(worst)
}

fn oracle(n_max: usize) -> Vec<Check> {
    let thermo = (|| {
        let mut worst: f64 = 0.0;
        for n in [0.5, 1.0] {
            let m = ThermometryModel::new(2, n)?.with_tau(1.0)?;
            let r = m.fisher()?;
            worst = worst.max(decomposition_gap(&m, n, r.f1, r.f21, n_max)?);
        }
        Ok(worst)
    })();
    let rabi = (|| {
        let mut worst: f64 = 0.0;
        for omega in [0.2, 1.0] {
            let m = RabiModel::new(omega, RabiBasis::Computational, 1.0)?;
            let r = m.fisher()?;
            worst = worst.max(decomposition_gap(&m, omega, r.f1, r.f21, n_max)?);
        }
        Ok(worst)
    })();
    vec![
        check("oracle", "enumeration-thermometry", 1e-6, thermo),
        check("oracle", "enumeration-rabi", 1e-6, rabi),
    ]
}

fn collision(seed: u64) -> Vec<Check> {
    let mut rng = stream(seed, 0);
    let aux = ProjectiveBasis::computational(2);
    let run = (|| -> Result<(f64, f64)> {
        let (mut completeness, mut probabilities): (f64, f64) = (0.0, 0.0);
        for _ in 0..COLLISION_SAMPLES {
            let u = random::unitary(4, &mut rng);
            let rho_c = random::density_matrix(2, &mut rng);
            let rho_s = random::density_matrix(2, &mut rng);
            let povm = collision_povm(&u, &rho_c, &aux)?;
            let sum: CMatrix = povm.effects().iter().sum();
            let defect = (sum - CMatrix::identity(2, 2)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            completeness = completeness.max(defect);
            let system = outcome_probabilities(&rho_s, &povm.into())?;
            let joint = joint_outcome_probabilities(&u, &rho_s, &rho_c, &aux)?;
            for (a, b) in system.iter().zip(&joint) {
                probabilities = probabilities.max((a - b).abs());
            }
        }
        Ok((completeness, probabilities))
    })();
    let (c, p) = match run {
        Ok((c, p)) => (Ok(c), Ok(p)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    vec![
        check("collision", "collision-povm-completeness", 1e-12, c),
        check("collision", "collision-probabilities", 1e-12, p),
    ]
}

fn selected(p: &Params) -> std::result::Result<Vec<&'static str>, Failure> {
    let requested = p.suite.clone().unwrap_or_else(|| vec!["all".into()]);
    let mut out = Vec::new();
    for name in &requested {
        if name == "all" {
            out.extend(SUITES);
        } else if let Some(s) = SUITES.iter().find(|s| *s == name) {
            out.push(*s);
        } else {
            return Err(Failure::Usage(format!(
                "unknown suite {name:?}; choose from all, {}",
                SUITES.join(", ")
            )));
        }
    }
    out.sort_by_key(|s| SUITES.iter().position(|x| x == s));
    out.dedup();
    Ok(out)
}

pub fn run(p: &Params) -> std::result::Result<Outcome, Failure> {
    json_only(p, "verify")?;
    let suites = selected(p)?;
    let n_max = p.n_max.unwrap_or(DEFAULT_N_MAX);
    if n_max == 0 {
        return Err(Failure::Usage("--n-max must be at least 1".into()));
    }
    let perturb = p.perturb_f.unwrap_or(0.0);
    if !perturb.is_finite() {
        return Err(Failure::Usage("perturbation must be finite".into()));
    }
    let seed = p.seed.unwrap_or(DEFAULT_SEED);
    let mut checks = Vec::new();
    for s in &suites {
        checks.extend(match *s {
            "identities" => identities(perturb),
            "stationarity" => stationarity(perturb),
            "oracle" => oracle(n_max),
            _ => collision(seed),
        });
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let doc = json!({
        "command": "verify",
        "suites": suites,
        "n_max": n_max,
        "seed": seed,
        "passed": failed.is_empty(),
        "checks": checks,
    });
    let failure = (!failed.is_empty()).then(|| format!("failed identities: {}", failed.join(", ")));
    Ok(Outcome { payload: Payload::Json(doc), failure })
}
