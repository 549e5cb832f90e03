use seqfisher::models::rabi::rabi_spectrum;
use seqfisher::models::{RabiBasis, RabiModel};
use seqfisher::scan::{flag_near_zero, local_maxima, local_minima, scan_1d, Axis, NEAR_ZERO_FRACTION};
use seqfisher::fisher::Flag;

fn f21(omega: f64, basis: RabiBasis, tau: f64) -> f64 {
    RabiModel::new(omega, basis, tau).unwrap().fisher().unwrap().f21
}

fn grid() -> Vec<f64> {
    Axis::linear("gtau", 0.05, 10.0, 200).unwrap().points()
}

fn sigma_y_wins(omega: f64) -> usize {
    grid()
        .into_iter()
        .filter(|&t| f21(omega, RabiBasis::SigmaY, t) >= f21(omega, RabiBasis::Computational, t))
        .count()
}

#[test]
fn strong_drive_scan_has_dips_and_several_peaks() {
    let axis = Axis::linear("gtau", 0.025, 10.0, 400).unwrap();
    let m = RabiModel::new(1.0, RabiBasis::Computational, 1.0).unwrap();
    let mut scan = scan_1d(|t| m.with_tau(t)?.fisher(), &axis).unwrap();
    let values: Vec<f64> = scan.records.iter().map(|r| r.value.as_ref().unwrap().f21).collect();
    let top = values.iter().copied().fold(0.0, f64::max);
    assert!(local_maxima(&values).len() >= 2);
    assert!(local_minima(&values).iter().any(|&i| values[i] < 0.1 * top));
    let flagged = flag_near_zero(&mut scan, NEAR_ZERO_FRACTION);
    assert!(!flagged.is_empty());
    assert!(scan.records[flagged[0]].flags.contains(&Flag::NearZero));
}

#[test]
fn weak_drive_has_real_spectrum_and_fewer_oscillations() {
    assert!(rabi_spectrum(0.05).unwrap().iter().all(|z| z.im.abs() < 1e-12));
    let weak: Vec<f64> = grid().into_iter().map(|t| f21(0.05, RabiBasis::Computational, t)).collect();
    let strong: Vec<f64> = grid().into_iter().map(|t| f21(1.0, RabiBasis::Computational, t)).collect();
    assert!(local_maxima(&weak).len() < local_maxima(&strong).len());
}

#[test]
fn sigma_y_basis_is_better_at_strong_drive() {
    assert!(sigma_y_wins(1.0) > grid().len() / 2);
}

/// Long waits make outcomes independent draws from the steady state, where
/// `z = 1/(1+8Ω²)` and `y = −4Ω/(1+8Ω²)`; each basis then carries the
/// information of a single binary outcome.
#[test]
fn long_wait_information_matches_steady_state_bloch_vector() {
    for omega in [0.2, 1.0] {
        let s = 1.0 + 8.0 * omega * omega;
        let z = 1.0 / s;
        let dz = -16.0 * omega / (s * s);
        let y = -4.0 * omega / s;
        let dy = -4.0 * (1.0 - 8.0 * omega * omega) / (s * s);
        let comp = dz * dz / (1.0 - z * z);
        let sy = dy * dy / (1.0 - y * y);
        let got_comp = f21(omega, RabiBasis::Computational, 40.0);
        let got_y = f21(omega, RabiBasis::SigmaY, 40.0);
        assert!((got_comp - comp).abs() < 1e-6 * comp, "omega={omega}: {got_comp} vs {comp}");
        assert!((got_y - sy).abs() < 1e-6 * sy, "omega={omega}: {got_y} vs {sy}");
    }
}

/// At weak drive the computational basis wins on most of the grid, as the
/// steady-state values above already show (7.9 against 3.9 at Ω = 0.2).
#[test]
#[ignore = "sigma_y does not dominate the computational basis at weak drive"]
fn sigma_y_basis_is_better_at_weak_drive() {
    assert!(sigma_y_wins(0.2) > grid().len() / 2);
}

#[test]
fn bloch_angles_reproduce_named_bases() {
    let named = f21(1.0, RabiBasis::SigmaY, 1.3);
    let angles = f21(
        1.0,
        RabiBasis::Bloch { polar: std::f64::consts::FRAC_PI_2, azimuth: std::f64::consts::FRAC_PI_2 },
        1.3,
    );
    assert!((named - angles).abs() < 1e-12);
    let comp = f21(1.0, RabiBasis::Computational, 1.3);
    let north = f21(1.0, RabiBasis::Bloch { polar: 0.0, azimuth: 0.0 }, 1.3);
    assert!((comp - north).abs() < 1e-9 * comp);
}
