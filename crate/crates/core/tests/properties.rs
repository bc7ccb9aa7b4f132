use chirp_mix::effham::{attenuation_factor, coupling_integrals, pair_field, sweep_midpoint};
use chirp_mix::propagate::{
    mixing_buildup, spin_propagate, transfer_efficiency, two_spin_propagate, SpinSystem,
};
use chirp_mix::scan::{offset_scan, ScanConfig};
use chirp_mix::spinops::{exp_hermitian, expm_unitary, kron, Axis, Mat4, ProductOperator, C64};
use chirp_mix::waveform::{
    chirp, hz_to_rad, phase_advance, supercycle, ChirpParams, CompositeTable, PulseWaveform,
    DEFAULT_DWELL,
};
use proptest::prelude::*;

fn hermitian(entries: &[f64]) -> Mat4 {
    let a = Mat4::from_fn(|r, c| C64::new(entries[4 * r + c], entries[16 + 4 * r + c]));
    (a + a.adjoint()) * C64::from(0.5)
}

/// Plain power series, summed until the terms vanish.
fn taylor_exp(h: &Mat4, t: f64) -> Mat4 {
    let x = h * C64::new(0.0, -t);
    let mut term = Mat4::identity();
    let mut sum = Mat4::identity();
    for k in 1..80 {
        term = term * x / C64::from(k as f64);
        sum += term;
    }
    sum
}

fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn short_chirp() -> PulseWaveform {
    // 8 kHz sweep, 4 kHz rf: a few hundred samples
    let p = ChirpParams::from_khz(8.0, 4.0, 4.0).unwrap();
    chirp(&p, 1e-6).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_matches_series_and_composes(entries in prop::collection::vec(-1.0f64..1.0, 32)) {
        let h = hermitian(&entries);
        let u = exp_hermitian(&h, 0.37);
        prop_assert!(max_abs(&(u - taylor_exp(&h, 0.37))) < 1e-9);
        let split = exp_hermitian(&h, 0.2) * exp_hermitian(&h, 0.17);
        prop_assert!(max_abs(&(u - split)) < 1e-9);
        let checked = expm_unitary(&h, 0.37).unwrap();
        prop_assert!(checked.is_unitary());
    }

    #[test]
    fn chirp_lasts_the_sweep_time(
        a_khz in 5.0f64..60.0,
        w1_khz in 1.0f64..30.0,
        divisor in 4.0f64..64.0,
        fraction in 0.1f64..1.0,
    ) {
        let p = ChirpParams::from_khz(a_khz, w1_khz, divisor).unwrap();
        let dwell = fraction * 0.1 / p.sweep_half_width;
        let w = chirp(&p, dwell).unwrap();
        prop_assert!(w.dwell <= dwell);
        prop_assert!((w.duration() - p.duration()).abs() <= w.dwell);
    }

    #[test]
    fn phase_advance_is_exactly_invertible(d in -100.0f64..100.0, e in -10.0f64..10.0) {
        let w = phase_advance(&short_chirp(), e);
        prop_assert_eq!(phase_advance(&phase_advance(&w, d), -d), w);
    }

    #[test]
    fn supercycle_quadruples_samples(a_khz in 2.0f64..10.0, w1_khz in 1.0f64..5.0) {
        let p = ChirpParams::from_khz(a_khz, w1_khz, 8.0).unwrap();
        let w = chirp(&p, 1e-6).unwrap();
        let sc = supercycle(&w);
        prop_assert_eq!(sc.len(), 4 * w.len());
        prop_assert_eq!(sc.duration(), 4.0 * w.duration());
    }

    #[test]
    fn midpoint_tilt_matches_attenuation(
        w1_khz in 0.5f64..50.0,
        delta_khz in -60.0f64..60.0,
        center_khz in -10.0f64..10.0,
    ) {
        let w1 = hz_to_rad(w1_khz * 1e3);
        let p = ChirpParams::new(hz_to_rad(100e3), w1 * w1 / 16.0, w1).unwrap();
        let (c, d) = (center_khz * 1e3, delta_khz * 1e3);
        let sys = SpinSystem::from_hz(c - 0.5 * d, c + 0.5 * d, 10.0).unwrap();
        let weight = pair_field(&p, &sys, sweep_midpoint(&p, &sys)).zero_quantum_weight();
        prop_assert!((weight - attenuation_factor(w1, sys.delta()).unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eta_is_invariant_under_offset_translation(
        nu_i in -20e3f64..20e3,
        nu_s in -20e3f64..20e3,
        shift in -20e3f64..20e3,
    ) {
        let p = ChirpParams::from_khz(30.0, 10.0, 16.0).unwrap();
        let base = SpinSystem::from_hz(nu_i, nu_s, 33.0).unwrap();
        let moved = SpinSystem::from_hz(nu_i + shift, nu_s + shift, 33.0).unwrap();
        let a = coupling_integrals(&p, &base, DEFAULT_DWELL).unwrap();
        let b = coupling_integrals(&p.with_center(hz_to_rad(shift)), &moved, DEFAULT_DWELL).unwrap();
        prop_assert_eq!(a.eta.len(), b.eta.len());
        let worst = a.eta.iter().zip(&b.eta).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-6, "eta moved by {}", worst);
    }

    #[test]
    fn uncoupled_pair_factorizes(
        nu_i in -25e3f64..25e3,
        nu_s in -25e3f64..25e3,
        a_khz in 10.0f64..40.0,
        w1_khz in 3.0f64..15.0,
        divisor in 5.0f64..40.0,
    ) {
        let p = ChirpParams::from_khz(a_khz, w1_khz, divisor).unwrap();
        let w = chirp(&p, 0.09 / p.sweep_half_width).unwrap();
        let w = phase_advance(&w, 0.3);
        let sys = SpinSystem::from_hz(nu_i, nu_s, 0.0).unwrap();
        let full = two_spin_propagate(&w, &sys);
        let product = kron(&spin_propagate(&w, sys.omega_i), &spin_propagate(&w, sys.omega_s));
        prop_assert!(max_abs(&(full.matrix - product)) < 1e-8);
        prop_assert!(full.is_unitary());
    }

    /// Relabeling the spins maps I -> S transfer onto S -> I transfer under
    /// the original propagator. (Forward and reverse transfer themselves
    /// differ slightly: a one-way sweep is not time-symmetric.)
    #[test]
    fn swapping_offsets_reverses_the_transfer(
        nu_i in -20e3f64..20e3,
        nu_s in -20e3f64..20e3,
        cycles in 1u32..30,
    ) {
        let p = ChirpParams::from_khz(30.0, 10.0, 16.0).unwrap();
        let sc = supercycle(&chirp(&p, DEFAULT_DWELL).unwrap());
        let sys = SpinSystem::from_hz(nu_i, nu_s, 33.0).unwrap();
        let u = two_spin_propagate(&sc, &sys).pow(cycles);
        let iz = ProductOperator::I(Axis::Z).matrix();
        let sz = ProductOperator::S(Axis::Z).matrix();
        let reverse = (iz * u.conjugate(&sz)).trace().re;
        let swapped = transfer_efficiency(&two_spin_propagate(&sc, &sys.swapped()).pow(cycles)).unwrap();
        prop_assert!((reverse - swapped).abs() < 1e-9, "{} vs {}", reverse, swapped);
        let forward = transfer_efficiency(&u).unwrap();
        prop_assert!((forward - swapped).abs() < 0.05, "{} vs {}", forward, swapped);
    }
}

fn dipsi_scan(grid_points: usize, budget: f64) -> ScanConfig {
    let w1 = hz_to_rad(10e3);
    ScanConfig {
        nu_min: -15e3,
        nu_max: 15e3,
        grid_points,
        coupling_hz: 33.0,
        time_budget: budget,
        sequence: CompositeTable::dipsi2()
            .waveform(w1, DEFAULT_DWELL)
            .unwrap(),
        description: "DIPSI-2".into(),
    }
}

#[test]
fn scan_does_not_depend_on_worker_count() {
    let cfg = dipsi_scan(5, 0.1);
    let serial = offset_scan(&cfg, Some(1)).unwrap();
    let parallel = offset_scan(&cfg, Some(4)).unwrap();
    assert_eq!(serial, parallel);
    let mut a = Vec::new();
    let mut b = Vec::new();
    serial.write_csv(&mut a).unwrap();
    parallel.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn larger_budget_never_lowers_a_best_efficiency() {
    let budgets = [0.01, 0.05, 0.1, 0.3];
    let maps: Vec<_> = budgets
        .iter()
        .map(|b| offset_scan(&dipsi_scan(4, *b), None).unwrap())
        .collect();
    for pair in maps.windows(2) {
        for (lo, hi) in pair[0]
            .best_efficiency
            .iter()
            .flatten()
            .zip(pair[1].best_efficiency.iter().flatten())
        {
            assert!(hi >= lo, "{hi} < {lo}");
        }
    }
}

#[test]
fn buildup_agrees_with_powers_of_the_cycle() {
    let p = ChirpParams::from_khz(30.0, 10.0, 16.0).unwrap();
    let sc = supercycle(&chirp(&p, DEFAULT_DWELL).unwrap());
    let sys = SpinSystem::from_hz(-5e3, 10e3, 33.0).unwrap();
    let curve = mixing_buildup(&sys, &sc, 12);
    let cycle = two_spin_propagate(&sc, &sys);
    let direct = transfer_efficiency(&cycle.pow(12)).unwrap();
    assert!((curve.efficiencies[12] - direct).abs() < 1e-10);
    assert!((curve.mixing_times[12] - 12.0 * sc.duration()).abs() < 1e-15);
}
