use std::f64::consts::PI;

use tbeam_core::array::{DesiredLevel, ReceiveArray, Sector, SectorSpec, TransmitArray};
use tbeam_core::design::{design_joint, DesignSettings};
use tbeam_core::doa::{
    estimate_esprit_paired, estimate_esprit_shift, esprit_eigenvalues, music_spectrum, scan_grid,
    EspritVariant, MusicSubspace, PhaseProfile,
};
use tbeam_core::numerics::{CMatrix, RngStream};
use tbeam_core::sim::{accumulate_halves, simulate, virtual_steering, TargetScene};
use tbeam_core::Error;

struct Setup {
    tx: TransmitArray,
    rx: ReceiveArray,
    w: CMatrix,
    sectors: Vec<Sector>,
}

fn example1() -> Setup {
    let tx = TransmitArray::half_wavelength(10).unwrap();
    let spec = SectorSpec::from_bounds(
        &[(-10.0, 10.0)],
        DesiredLevel::Linear(10f64.powf(1.5) / (4.0 * PI)),
    )
    .unwrap();
    let d = design_joint(&spec, &tx, 2, 10.0, &DesignSettings::default(), &mut RngStream::new(1, 0))
        .unwrap();
    let rx = ReceiveArray::random(10, 9.0, &mut RngStream::new(42, 0)).unwrap();
    Setup { tx, rx, w: d.matrix.matrix(), sectors: spec.sectors().to_vec() }
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

#[test]
fn two_waveform_profile_has_closed_form() {
    let s = example1();
    let p = PhaseProfile::paired(&s.w, &s.tx, &s.sectors, 0.01).unwrap();
    let w1 = s.w.column(0);
    for t in [-9.5, -4.0, 0.0, 3.3, 9.9] {
        let d = s.tx.steering_conj(t).unwrap();
        // c2 = exp(-j 2 pi d (M-1) sin) conj(c1)
        let direct = 2.0 * d.dotc(&w1).arg() + 2.0 * PI * 0.5 * 9.0 * t.to_radians().sin();
        let v = p.value_at(t).unwrap();
        // interpolation between 0.01 degree samples
        assert!(wrap(v - direct).abs() < 1e-3, "{t}: {v} vs {direct}");
    }
    for seg in p.segments() {
        assert!(!seg.degenerate);
        assert!(seg.phase.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
    }
}

#[test]
fn noise_free_phase_matches_profile() {
    let s = example1();
    let p = PhaseProfile::paired(&s.w, &s.tx, &s.sectors, 0.01).unwrap();
    for theta in [-7.0, -5.0, 2.0, 8.0] {
        let scene = TargetScene::new(vec![theta], 1.0, 0.0, 20).unwrap();
        let snap = simulate(&scene, &s.w, &s.tx, &s.rx, &mut RngStream::new(3, 0)).unwrap();
        let (g1, g2) = accumulate_halves(&snap).unwrap();
        let n = g1.nrows();
        let mut v = CMatrix::zeros(2 * n, g1.ncols());
        v.rows_mut(0, n).copy_from(&g1);
        v.rows_mut(n, n).copy_from(&g2);
        let sel1: Vec<usize> = (0..n).collect();
        let sel2: Vec<usize> = (n..2 * n).collect();
        let lam = esprit_eigenvalues(&v, &sel1, &sel2, 1, EspritVariant::LeastSquares).unwrap()[0];
        // exact profile value from the coefficient sums
        let r = s.w.tr_mul(&s.tx.steering(theta).unwrap());
        let exact = r[0].arg() - r[1].arg();
        assert!(wrap(-lam.arg() - exact).abs() < 1e-8);
        assert!((lam.norm() - 1.0).abs() < 1e-8);
        assert!(wrap(p.value_at(theta).unwrap() - exact).abs() < 1e-6);
    }
}

fn music_scorer<'a>(sub: &'a MusicSubspace, s: &'a Setup) -> impl Fn(f64) -> f64 + 'a {
    move |t| sub.pseudospectrum(&virtual_steering(&s.w, &s.tx, &s.rx, t).unwrap())
}

#[test]
fn noise_free_single_target_esprit() {
    let s = example1();
    let p = PhaseProfile::paired(&s.w, &s.tx, &s.sectors, 0.01).unwrap();
    for theta in [-5.0, -9.0, 0.5, 6.25] {
        let scene = TargetScene::new(vec![theta], 1.0, 0.0, 20).unwrap();
        let snap = simulate(&scene, &s.w, &s.tx, &s.rx, &mut RngStream::new(3, 0)).unwrap();
        let sub = MusicSubspace::new(snap.data(), 1).unwrap();
        let f = music_scorer(&sub, &s);
        let est = estimate_esprit_paired(&snap, 1, &p, EspritVariant::LeastSquares, Some(&f)).unwrap();
        assert!((est.angles[0] - theta).abs() <= 0.05, "{theta}: {:?}", est.angles);
        assert!(!est.any_clamped());
        let tls = estimate_esprit_paired(&snap, 1, &p, EspritVariant::TotalLeastSquares, Some(&f)).unwrap();
        assert!((tls.angles[0] - theta).abs() <= 0.05);
    }
}

#[test]
fn noise_free_two_targets_agree_with_dense_music() {
    let s = example1();
    let p = PhaseProfile::paired(&s.w, &s.tx, &s.sectors, 0.01).unwrap();
    let scene = TargetScene::new(vec![-5.0, 5.0], 1.0, 0.0, 50).unwrap();
    let snap = simulate(&scene, &s.w, &s.tx, &s.rx, &mut RngStream::new(8, 0)).unwrap();
    let sub = MusicSubspace::new(snap.data(), 2).unwrap();
    let f = music_scorer(&sub, &s);
    let est = estimate_esprit_paired(&snap, 2, &p, EspritVariant::LeastSquares, Some(&f)).unwrap();
    let dense: Vec<f64> = (0..=2000).map(|i| -10.0 + 0.01 * i as f64).collect();
    let oracle = music_spectrum(&snap, &s.tx, &s.rx, 2, &dense).unwrap().estimate(2);
    assert_eq!(est.angles.len(), 2);
    for (e, o) in est.angles.iter().zip(&oracle.angles) {
        assert!((e - o).abs() <= 0.1, "esprit {:?} vs music {:?}", est.angles, oracle.angles);
    }
    for (e, t) in est.angles.iter().zip([-5.0, 5.0]) {
        assert!((e - t).abs() <= 0.1);
    }
}

#[test]
fn noise_free_music_peaks_at_target() {
    let s = example1();
    let scan = scan_grid(&s.sectors, 0.05, 0.5);
    let scene = TargetScene::new(vec![-3.35], 1.0, 0.0, 10).unwrap();
    let snap = simulate(&scene, &s.w, &s.tx, &s.rx, &mut RngStream::new(1, 0)).unwrap();
    let spec = music_spectrum(&snap, &s.tx, &s.rx, 1, &scan).unwrap();
    assert!(spec.regularized);
    let est = spec.estimate(1);
    assert!((est.angles[0] + 3.35).abs() < 1e-9);
}

#[test]
fn traditional_virtual_steering_is_a_filled_virtual_array() {
    let tx = TransmitArray::half_wavelength(10).unwrap();
    let rx = ReceiveArray::ula(10).unwrap();
    let w = CMatrix::identity(10, 10).scale(1.0);
    for t in [-30.0, 0.0, 12.0] {
        let u = virtual_steering(&w, &tx, &rx, t).unwrap();
        let direct = tx.steering(t).unwrap().kronecker(&rx.steering(t).unwrap());
        assert!((u - direct).norm() < 1e-12);
    }
}

#[test]
fn shift_esprit_for_the_scaled_identity() {
    let tx = TransmitArray::half_wavelength(10).unwrap();
    let rx = ReceiveArray::random(10, 9.0, &mut RngStream::new(42, 0)).unwrap();
    let w = CMatrix::identity(10, 10);
    let sectors = [Sector::new(-10.0, 10.0).unwrap()];
    let p = PhaseProfile::shift(&w, &tx, &sectors, 0.01).unwrap();
    assert!(p.is_monotonic());
    let scene = TargetScene::new(vec![-5.0, 5.0], 1.0, 0.0, 30).unwrap();
    let snap = simulate(&scene, &w, &tx, &rx, &mut RngStream::new(2, 0)).unwrap();
    let est = estimate_esprit_shift(&snap, 2, &p, EspritVariant::LeastSquares, None).unwrap();
    assert!((est.angles[0] + 5.0).abs() < 0.02 && (est.angles[1] - 5.0).abs() < 0.02);
}

#[test]
fn too_few_snapshots_are_reported() {
    let s = example1();
    let p = PhaseProfile::paired(&s.w, &s.tx, &s.sectors, 0.01).unwrap();
    let one = TargetScene::new(vec![2.0], 1.0, 0.0, 1).unwrap();
    let snap = simulate(&one, &s.w, &s.tx, &s.rx, &mut RngStream::new(0, 0)).unwrap();
    let r = estimate_esprit_paired(&snap, 2, &p, EspritVariant::LeastSquares, None);
    assert!(matches!(r, Err(Error::InsufficientSnapshots(_))));
    // rank one data cannot support two sources
    let quiet = TargetScene::new(vec![2.0], 1.0, 0.0, 10).unwrap();
    let snap = simulate(&quiet, &s.w, &s.tx, &s.rx, &mut RngStream::new(0, 0)).unwrap();
    let r = estimate_esprit_paired(&snap, 2, &p, EspritVariant::LeastSquares, None);
    assert!(matches!(r, Err(Error::InsufficientSnapshots(_))));
}

#[test]
fn out_of_sector_phase_is_clamped() {
    let s = example1();
    let narrow = [Sector::new(-1.0, 1.0).unwrap()];
    let p = PhaseProfile::paired(&s.w, &s.tx, &narrow, 0.01).unwrap();
    // find a phase not covered by the narrow profile
    let covered: Vec<f64> = p.segments()[0].phase.clone();
    let (lo, hi) = covered.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi - lo < PI);
    let outside = wrap(hi + 0.5 * (2.0 * PI - (hi - lo)));
    let lam = tbeam_core::numerics::c64::from_polar(1.0, -outside);
    let est = tbeam_core::doa::invert_phases(&[lam], &p, None).unwrap();
    assert!(est.any_clamped());
    assert!(est.angles[0] >= -1.0 && est.angles[0] <= 1.0);
}

mod properties {
    use super::*;
    use proptest::prelude::*;
    use tbeam_core::doa::PhaseProfile;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monotonic_profile_inverts_its_own_values(theta in -89.0f64..89.0) {
            let tx = TransmitArray::half_wavelength(4).unwrap();
            let w = CMatrix::identity(4, 4);
            let p = PhaseProfile::shift(&w, &tx, &[Sector::new(-90.0, 90.0).unwrap()], 0.05).unwrap();
            prop_assert!(p.is_monotonic());
            let psi = p.value_at(theta).unwrap();
            let c = p.candidates(psi);
            prop_assert!(c.iter().any(|t| (t - theta).abs() < 1e-6), "{theta} not in {c:?}");
        }
    }
}
