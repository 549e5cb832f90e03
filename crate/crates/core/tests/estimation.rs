use seqfisher::chain::{sample_with, stream, InitTag, Trajectory};
use seqfisher::estimate::{
    count_transitions, empirical_distribution, monte_carlo, subsample, EstimatorKind, McConfig,
};
use seqfisher::models::ThermometryModel;

fn model() -> ThermometryModel {
    ThermometryModel::new(2, 1.0).unwrap().with_tau(0.4).unwrap()
}

fn record(m: &ThermometryModel, n: usize, seed: u64, index: u64) -> Trajectory {
    let p = m.transition().unwrap();
    let mut rng = stream(seed, index);
    Trajectory {
        outcomes: sample_with(&p, n, &m.thermal(), &mut rng).unwrap(),
        seed,
        init: InitTag::Stationary,
    }
}

fn config(estimator: EstimatorKind, n: usize, trajectories: usize) -> McConfig {
    McConfig {
        theta0: 1.0,
        estimator,
        n_per_trajectory: n,
        n_trajectories: trajectories,
        seed: 99,
        bracket: (0.01, 100.0),
    }
}

#[test]
fn empirical_distribution_is_unbiased_for_the_stationary_state() {
    let m = ThermometryModel::new(3, 0.8).unwrap().with_tau(0.3).unwrap();
    let ground: Vec<f64> = (0..500)
        .map(|i| empirical_distribution(&record(&m, 400, 17, i), 3).unwrap()[0])
        .collect();
    let k = ground.len() as f64;
    let mean = ground.iter().sum::<f64>() / k;
    let var = ground.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let q0 = m.thermal()[0];
    assert!((mean - q0).abs() < 4.0 * (var / k).sqrt(), "{mean} vs {q0}");
}

#[test]
fn widely_spaced_outcomes_are_nearly_independent() {
    let m = model();
    let t = subsample(&record(&m, 400_000, 3, 0), 40).unwrap();
    assert_eq!(t.len(), 10_000);
    let c = count_transitions(&t, 2).unwrap();
    let q = m.thermal();
    for prev in 0..2 {
        let visits = c.visits(prev) as f64;
        let col = c.column_estimate(prev).unwrap();
        for next in 0..2 {
            let sigma = (q[next] * (1.0 - q[next]) / visits).sqrt();
            assert!((col[next] - q[next]).abs() < 4.0 * sigma);
        }
    }
}

#[test]
fn mle_bias_shrinks_with_record_length() {
    let m = model();
    let short = monte_carlo(&m, &config(EstimatorKind::Mle, 1_000, 300)).unwrap();
    let long = monte_carlo(&m, &config(EstimatorKind::Mle, 10_000, 300)).unwrap();
    assert!(long.bias.abs() < short.bias.abs(), "{} vs {}", long.bias, short.bias);
    assert_eq!(long.failures, 0);
}

#[test]
fn no_estimator_beats_the_rate_bound() {
    let m = model();
    for kind in [
        EstimatorKind::Mle,
        EstimatorKind::TransitionInversion { next: 0, prev: 0 },
        EstimatorKind::TransitionInversion { next: 1, prev: 1 },
        EstimatorKind::EmpiricalInversion { outcome: 0 },
    ] {
        let r = monte_carlo(&m, &config(kind, 2_000, 300)).unwrap();
        assert!(r.ratio >= 1.0 - 3.0 * r.ratio_std_error, "{kind:?}: {}", r.ratio);
    }
}

#[test]
fn empirical_estimator_is_less_efficient_than_mle() {
    let m = model();
    let mle = monte_carlo(&m, &config(EstimatorKind::Mle, 2_000, 300)).unwrap();
    let ed = monte_carlo(&m, &config(EstimatorKind::EmpiricalInversion { outcome: 0 }, 2_000, 300)).unwrap();
    assert!(ed.variance > mle.variance);
}
