//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seqfisher::channels::{
    collision_povm, joint_outcome_probabilities, outcome_probabilities, ProjectiveBasis,
};
use seqfisher::estimate::{monte_carlo, EstimatorKind, McConfig};
use seqfisher::fisher::{enumerate_fi, ChainModel, ParamSpec};
use seqfisher::models::rabi::{critical_omega, spectrum_is_real};
use seqfisher::models::{thermal_fi, RabiBasis, RabiModel, ThermometryModel};
use seqfisher::qcore::{random, CMatrix};
use seqfisher::scan::{feedback_optimum, local_maxima, maximize_1d, scan_1d, Axis};

const LEVELS: [usize; 5] = [2, 3, 4, 5, 6];
const NBARS: [f64; 3] = [0.1, 1.0, 10.0];
const TAUS: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0];

/// Relative slack for inequalities that become equalities in the long-wait
/// limit, where both sides agree only to rounding.
const TIE_SLACK: f64 = 1e-14;

/// Grid maximum of `F_{2|1}/F_th` for `D = 4`, `n̄ = 1` on the default
/// 200-point log grid over `γτ ∈ [0.05, 20]`, frozen after first derivation.
const BASELINE_ARGMAX_TAU: f64 = 0.32334195656611964;
const BASELINE_MAX_RATIO: f64 = 3.0393794801531278;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tau_axis() -> Axis {
    Axis::log("gtau", 0.05, 20.0, 200).unwrap()
}

fn max_entry_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).amax()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for d in LEVELS {
        for n in NBARS {
            for t in TAUS {
                let m = ThermometryModel::new(d, n).unwrap().with_tau(t).unwrap();
                let a = m.transition().unwrap();
                let w = m.transition_from_rates().unwrap();
                let l = m.transition_from_lindbladian().unwrap();
                worst = worst
                    .max(max_entry_diff(a.entries(), w.entries()))
                    .max(max_entry_diff(a.entries(), l.entries()));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("max entry difference {worst:.2e} over 105 grid points in {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in LEVELS {
        for n in NBARS {
            for t in TAUS {
                let m = ThermometryModel::new(d, n).unwrap().with_tau(t).unwrap();
                let p = m.transition().unwrap();
                let q = nalgebra::DVector::from_vec(m.thermal());
                worst = worst.max((&q - p.entries() * &q).amax());
            }
        }
    }
    check(worst <= 1e-10, format!("max |q - Pq| {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let spot = (thermal_fi(2, 1.0).unwrap() - 1.0 / 18.0).abs() < 1e-15
        && (thermal_fi(4, 1.0).unwrap() - 0.06).abs() < 1e-15;
    let mut worst: f64 = 0.0;
    for d in [2, 4] {
        let r = ThermometryModel::new(d, 1.0).unwrap().with_tau(30.0).unwrap().fisher().unwrap();
        worst = worst.max((r.f21 / r.f_reference.unwrap() - 1.0).abs());
    }
    check(
        spot && worst <= 1e-6,
        format!("thermal spot values exact: {spot}; |F21/Fth - 1| at gtau=30: {worst:.2e}"),
    )
}

fn relative_gap<M: ChainModel + Sync>(model: &M, theta: f64, f1: f64, f21: f64) -> f64 {
    let p = ParamSpec::new("theta", theta).unwrap();
    (1..=8)
        .map(|n| {
            let e = enumerate_fi(model, &p, n).unwrap();
            let d = f1 + (n as f64 - 1.0) * f21;
            (e - d).abs() / d
        })
        .fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for n in [0.5, 1.0] {
        let m = ThermometryModel::new(2, n).unwrap().with_tau(1.0).unwrap();
        let r = m.fisher().unwrap();
        worst = worst.max(relative_gap(&m, n, r.f1, r.f21));
    }
    for omega in [0.2, 1.0] {
        let m = RabiModel::new(omega, RabiBasis::Computational, 1.0).unwrap();
        let r = m.fisher().unwrap();
        worst = worst.max(relative_gap(&m, omega, r.f1, r.f21));
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-6 && elapsed < Duration::from_secs(60),
        format!("max relative gap {worst:.2e} for N<=8 in {elapsed:.2?}"),
    )
}

fn criterion_5() -> Outcome {
    let m = ThermometryModel::new(4, 1.0).unwrap();
    let scan = scan_1d(|t| m.with_tau(t)?.fisher(), &tau_axis()).unwrap();
    let mut best = (0.0, f64::NEG_INFINITY);
    for r in &scan.records {
        let v = r.value.as_ref().unwrap();
        let ratio = v.f21 / v.f_reference.unwrap();
        if ratio > best.1 {
            best = (r.point[0], ratio);
        }
    }
    let frozen = (best.0 - BASELINE_ARGMAX_TAU).abs() <= 1e-12
        && (best.1 - BASELINE_MAX_RATIO).abs() <= 1e-9 * BASELINE_MAX_RATIO;
    check(
        best.1 > 1.0 && frozen,
        format!("grid max F21/Fth = {:.6} at gtau = {:.6}; matches baseline: {frozen}", best.1, best.0),
    )
}

fn criterion_6() -> Outcome {
    let axis = tau_axis();
    let mut ok = true;
    let mut ratios = Vec::new();
    let mut detail = Vec::new();
    for d in 3..=6 {
        for n in [0.3, 1.0, 3.0] {
            let m = ThermometryModel::new(d, n).unwrap();
            let th = thermal_fi(d, n).unwrap();
            let (star, sharp) =
                feedback_optimum(|a, b| Ok(m.with_schedule(a, b)?.fisher()?.f21), &axis, 25).unwrap();
            ok &= sharp.value >= star.value - 1e-10 && star.value >= th;
            if n == 1.0 {
                ratios.push(sharp.value / star.value);
                detail.push(format!("D={d}: {:.4}", sharp.value / star.value));
            }
        }
    }
    let monotone = ratios.windows(2).all(|w| w[1] >= w[0]);
    check(
        ok && monotone,
        format!("F# >= F* >= Fth everywhere: {ok}; F#/F* at nbar=1 {}", detail.join(", ")),
    )
}

fn criterion_7() -> Outcome {
    let axis = tau_axis();
    let mut ground_gap: f64 = 0.0;
    let mut dominated = true;
    for n in [0.1, 1.0] {
        let full = ThermometryModel::new(4, n).unwrap();
        let coarse = full.clone().coarse();
        for t in axis.points() {
            let f = full.with_tau(t).unwrap().fisher().unwrap();
            let c = coarse.with_tau(t).unwrap().fisher().unwrap();
            ground_gap = ground_gap.max((f.f21_by_prev[0] - c.f21_by_prev[0]).abs());
            dominated &= c.f21 <= f.f21 * (1.0 + TIE_SLACK);
        }
    }
    let coarse = ThermometryModel::new(4, 0.1).unwrap().coarse();
    let th = thermal_fi(4, 0.1).unwrap();
    let worst = axis
        .points()
        .into_iter()
        .map(|t| coarse.with_tau(t).unwrap().fisher().unwrap().f21_by_prev[1] / th)
        .fold(0.0, f64::max);
    check(
        ground_gap <= 1e-12 && dominated && worst <= 1.0,
        format!(
            "ground-term gap {ground_gap:.2e}; coarse <= full: {dominated}; max coarse excited term / Fth at nbar=0.1: {worst:.12}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let real_low = spectrum_is_real(0.05).unwrap();
    let complex_high = !spectrum_is_real(1.0).unwrap();
    let (a, b) = critical_omega(0.05, 1.0, 1e-4).unwrap();
    let bracketed = a >= 0.115 && b <= 0.135;
    let sigma_x = [0.3, 1.0, 4.0]
        .iter()
        .flat_map(|&t| [0.2, 1.0].map(|o| (o, t)))
        .map(|(o, t)| RabiModel::new(o, RabiBasis::SigmaX, t).unwrap().fisher().unwrap().f21)
        .fold(0.0, f64::max);
    let axis = Axis::linear("gtau", 0.025, 10.0, 400).unwrap();
    let m = RabiModel::new(1.0, RabiBasis::Computational, 1.0).unwrap();
    let scan = scan_1d(|t| Ok(m.with_tau(t)?.fisher()?.f21), &axis).unwrap();
    let values: Vec<f64> = scan.records.iter().map(|r| r.value.unwrap()).collect();
    let maxima = local_maxima(&values).len();
    check(
        real_low && complex_high && bracketed && sigma_x <= 1e-10 && maxima >= 2,
        format!(
            "real at 0.05: {real_low}; complex at 1.0: {complex_high}; transition in [{a:.5}, {b:.5}]; sigma_x F21 max {sigma_x:.1e}; {maxima} local maxima"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let aux = ProjectiveBasis::computational(2);
    let (mut completeness, mut probabilities): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let u = random::unitary(4, &mut rng);
        let rho_c = random::density_matrix(2, &mut rng);
        let rho_s = random::density_matrix(2, &mut rng);
        let povm = collision_povm(&u, &rho_c, &aux).unwrap();
        let sum: CMatrix = povm.effects().iter().sum();
        completeness = completeness.max((sum - CMatrix::identity(2, 2)).iter().map(|z| z.norm()).fold(0.0, f64::max));
        let system = outcome_probabilities(&rho_s, &povm.into()).unwrap();
        let joint = joint_outcome_probabilities(&u, &rho_s, &rho_c, &aux).unwrap();
        for (a, b) in system.iter().zip(&joint) {
            probabilities = probabilities.max((a - b).abs());
        }
    }
    check(
        completeness <= 1e-12 && probabilities <= 1e-12,
        format!("completeness defect {completeness:.2e}; probability gap {probabilities:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let base = ThermometryModel::new(2, 1.0).unwrap();
    let star = maximize_1d(|t| Ok(base.with_tau(t)?.fisher()?.f21), &tau_axis()).unwrap();
    let model = base.with_tau(star.point[0]).unwrap();
    let run = |estimator| {
        let cfg = McConfig {
            theta0: 1.0,
            estimator,
            n_per_trajectory: 10_000,
            n_trajectories: 500,
            seed: 20_240_611,
            bracket: (0.01, 100.0),
        };
        monte_carlo(&model, &cfg).unwrap()
    };
    let mle = run(EstimatorKind::Mle);
    let inversion = run(EstimatorKind::TransitionInversion { next: 0, prev: 0 });
    let empirical = run(EstimatorKind::EmpiricalInversion { outcome: 0 });
    let in_band = (0.9..=1.1).contains(&mle.ratio);
    let bound = [&mle, &inversion, &empirical]
        .iter()
        .all(|r| r.ratio >= 1.0 - 3.0 * r.ratio_std_error);
    let elapsed = start.elapsed();
    check(
        in_band && bound && elapsed < Duration::from_secs(300),
        format!(
            "gtau* = {:.4}; ratio MLE {:.4} +/- {:.4}, inversion {:.4}, empirical {:.4}; {elapsed:.2?}",
            star.point[0], mle.ratio, mle.ratio_std_error, inversion.ratio, empirical.ratio
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("analytic, rate-matrix and Lindblad transitions agree", criterion_1),
        ("thermal state is stationary", criterion_2),
        ("long waits recover the thermal Fisher information", criterion_3),
        ("enumeration matches F1 + (N-1) F21", criterion_4),
        ("sequential enhancement over the thermal bound", criterion_5),
        ("feedback dominance and ordering in D", criterion_6),
        ("coarse-grained measurement bounds", criterion_7),
        ("Rabi spectral transition and basis facts", criterion_8),
        ("collision POVM completeness and probabilities", criterion_9),
        ("Monte-Carlo Cramer-Rao rate", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        if !out.pass {
            failed += 1;
        }
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {:>2}. {name}: {}", i + 1, out.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
