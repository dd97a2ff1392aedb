use std::f64::consts::PI;

use ioncool::linalg::{
    alignment_phase, dagger, matrix_exp, max_abs, phase_aligned_distance, spectral_norm, unitarity_defect,
    CMatrix, C64, ONE,
};
use ioncool::pulse::*;
use ioncool::quantum::{build_fock_operators, sigma_y, tensor_spin_fock};
use ioncool::sector::SectorOp;
use ioncool::SystemParams;

fn small() -> SystemParams {
    SystemParams::default().with_n_fock(24)
}

/// Phase-aligned spectral distance on input states with at most `levels` phonons.
fn low_level_distance(u: &CMatrix, v: &CMatrix, levels: usize) -> f64 {
    let n = u.nrows() / 2;
    let cols: Vec<usize> = (0..levels).flat_map(|k| [k, n + k]).collect();
    let pick = |m: &CMatrix| CMatrix::from_shape_fn((2 * n, cols.len()), |(r, c)| m[[r, cols[c]]]);
    let (a, b) = (pick(u), pick(v));
    let phase = C64::from_polar(1.0, alignment_phase(&a, &b));
    spectral_norm(&(&a * phase - &b))
}

#[test]
fn free_hamiltonian_spectrum() {
    let p = small();
    let h = hamiltonian(&p, HamiltonianKind::Free, 0.0).unwrap();
    for k in 0..p.n_fock {
        assert!((h[[k, k]].re - p.nu * k as f64).abs() < 1e-6);
        assert!((h[[p.n_fock + k, p.n_fock + k]].re - p.nu * k as f64).abs() < 1e-6);
    }
}

#[test]
fn pulse_hamiltonian_coupling_element() {
    let p = small();
    let h = hamiltonian(&p, HamiltonianKind::Pulse, 0.0).unwrap();
    // <e,0| H |g,1>
    assert!((h[[0, p.n_fock + 1]].re - p.coupling()).abs() < 1e-3);
    let weak = SystemParams { eta: 1e-300, ..p };
    let free = hamiltonian(&weak, HamiltonianKind::Free, 0.0).unwrap();
    let pulse = hamiltonian(&weak, HamiltonianKind::Pulse, 0.7).unwrap();
    assert!(max_abs(&(&pulse - &free)) < 1e-200);
}

#[test]
fn carrier_blocks_match_dense_exponential() {
    let p = SystemParams {
        delta: 2.0 * PI * 3e5,
        ..small()
    };
    for &(theta, duration) in &[(0.0, 0.004), (1.3, -0.01), (4.5, 0.02)] {
        let t = duration / p.nu;
        for dynamics in [Dynamics::Impulsive, Dynamics::Full] {
            let report = PulseCompiler::new(p).carrier(theta, t, 1.0, dynamics);
            let dense = dense_carrier(&p, theta, t, dynamics).unwrap();
            assert!(max_abs(&(report.matrix() - &dense)) < 1e-10, "{theta} {duration} {dynamics:?}");
            assert!(report.u.unitarity_defect() < 1e-12);
        }
    }
}

#[test]
fn carrier_inverse_and_zero() {
    let p = small();
    let t = 0.01 / p.nu;
    let fwd = carrier_propagator(&p, 0.3, t, true).unwrap().u;
    let back = carrier_propagator(&p, 0.3, -t, true).unwrap().u;
    let id = back.dot(&fwd);
    assert!(max_abs(&(id.to_dense() - SectorOp::identity(p.n_fock).to_dense())) < 1e-10);
    let tiny = carrier_propagator(&p, 0.0, 1e-30, true).unwrap().matrix();
    assert!(max_abs(&(tiny - SectorOp::identity(p.n_fock).to_dense())) < 1e-13);
    assert!(carrier_propagator(&p, 0.0, 0.0, true).is_err());
}

#[test]
fn full_and_impulsive_carrier_gap_is_small_but_nonzero() {
    let p = SystemParams::default().with_n_fock(40);
    let t = 0.01 / p.nu;
    let imp = carrier_propagator(&p, 0.0, t, true).unwrap().matrix();
    let full = carrier_propagator(&p, 0.0, t, false).unwrap().matrix();
    let gap = low_level_distance(&imp, &full, 6);
    // Free rotation over ν t = 0.01 on the lowest levels.
    assert!(gap > 1e-4 && gap < 0.2, "gap {gap}");
}

#[test]
fn exact_demi_matches_dense_three_factor_product() {
    // Oracle: the literal three-exponential product at a much larger dense
    // cutoff, compared on low-lying input states.
    let p = SystemParams::default().with_n_fock(20);
    let big = SystemParams::default().with_n_fock(90);
    let t_p = 0.04 / p.nu;
    let t_f = 0.3 / p.nu;
    for dynamics in [Dynamics::Impulsive, Dynamics::Full] {
        let dense = dense_carrier(&big, PI / 2.0, t_p, dynamics)
            .unwrap()
            .dot(&matrix_exp(&hamiltonian(&big, HamiltonianKind::Free, 0.0).unwrap(), t_f).unwrap())
            .dot(&dense_carrier(&big, PI / 2.0, -t_p, dynamics).unwrap());
        let exact = PulseCompiler::new(p).demi(t_p, t_f, None, 1.0, 1.0, dynamics).unwrap();
        let n = p.n_fock;
        let nb = big.n_fock;
        // The guard band is allowed to differ from the untruncated product.
        for s in 0..2 {
            for r in 0..n - p.guard_levels {
                for s2 in 0..2 {
                    for c in 0..8 {
                        let want = dense[[s * nb + r, s2 * nb + c]];
                        let got = exact.matrix()[[s * n + r, s2 * n + c]];
                        assert!((want - got).norm() < 1e-9, "{dynamics:?} ({s},{r}) ({s2},{c})");
                    }
                }
            }
        }
    }
}

#[test]
fn demi_with_zero_flight_is_identity() {
    let p = small();
    let report = demi_pulse_exact(&p, 0.03 / p.nu, 0.0, true).unwrap();
    assert!(max_abs(&(report.matrix() - SectorOp::identity(p.n_fock).to_dense())) < 1e-12);
}

#[test]
fn analytic_demi_without_kick_is_free_evolution() {
    let p = small();
    let t_f = 0.4 / p.nu;
    let analytic = demi_pulse_analytic(&p, 0.0, t_f).unwrap().matrix();
    let free = matrix_exp(&hamiltonian(&p, HamiltonianKind::Free, 0.0).unwrap(), t_f).unwrap();
    assert!(max_abs(&(analytic - free)) < 1e-12);
}

#[test]
fn analytic_demi_rejects_detuning() {
    let p = SystemParams { delta: 1.0, ..small() };
    assert!(matches!(
        demi_pulse_analytic(&p, 1e-9, 1e-8),
        Err(ioncool::Error::Unsupported(_))
    ));
}

#[test]
fn analytic_demi_small_point_matches_exact() {
    let p = SystemParams::default();
    let t_p = 0.002 / p.nu;
    let t_f = 0.05 / p.nu;
    let a = demi_pulse_analytic(&p, t_p, t_f).unwrap().matrix();
    let e = demi_pulse_exact(&p, t_p, t_f, true).unwrap().matrix();
    assert!(phase_aligned_distance(&a, &e) < 1e-8);
}

#[test]
fn negative_kick_swaps_half_pulse_order() {
    let p = small();
    let (t_p, t_f) = (0.03 / p.nu, 0.2 / p.nu);
    let pos = demi_pulse_exact(&p, t_p, t_f, true).unwrap().matrix();
    let neg = demi_pulse_exact(&p, -t_p, t_f, true).unwrap().matrix();
    let a_neg = demi_pulse_analytic(&p, -t_p, t_f).unwrap().matrix();
    assert!(phase_aligned_distance(&neg, &a_neg) < 1e-9);
    assert!(phase_aligned_distance(&pos, &neg) > 1e-2);
}

#[test]
fn analytic_demi_displaces_position_along_sigma_y() {
    // Heisenberg x(t) = x cos νt + p sin νt + √2 λ sin(νt) σy for the
    // generator ν (a†a + λ P σy); first order in νt the shift is the
    // coupling coefficient ν t_f λ times √2.
    let p = SystemParams::default().with_n_fock(40);
    let t_p = 0.02 / p.nu;
    let t_f = 0.3 / p.nu;
    let lambda = p.coupling() * t_p;
    let phase = p.nu * t_f;
    let u = demi_pulse_analytic(&p, t_p, t_f).unwrap().matrix();
    let ops = build_fock_operators(p.n_fock).unwrap();
    let id2 = ioncool::linalg::identity(2);
    let x = tensor_spin_fock(&id2, &ops.x_tilde).unwrap();
    let px = tensor_spin_fock(&id2, &ops.p_tilde).unwrap();
    let sy = tensor_spin_fock(&sigma_y(), &ioncool::linalg::identity(p.n_fock)).unwrap();
    let heis = dagger(&u).dot(&x).dot(&u);
    let expected = &x * C64::new(phase.cos(), 0.0)
        + &px * C64::new(phase.sin(), 0.0)
        + &sy * C64::new(2f64.sqrt() * lambda * phase.sin(), 0.0);
    let n = p.n_fock;
    for s in 0..2 {
        for s2 in 0..2 {
            for r in 0..20 {
                for c in 0..20 {
                    let d = heis[[s * n + r, s2 * n + c]] - expected[[s * n + r, s2 * n + c]];
                    assert!(d.norm() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn full_demi_gap_grows_with_pulse_length() {
    let p = SystemParams::default();
    let t_f = 0.2 / p.nu;
    let gaps: Vec<f64> = [1e-3, 1e-2, 1e-1]
        .iter()
        .map(|x| {
            let t_p = x / p.nu;
            let a = demi_pulse_analytic(&p, t_p, t_f).unwrap().matrix();
            let e = demi_pulse_exact(&p, t_p, t_f, false).unwrap().matrix();
            low_level_distance(&a, &e, 4)
        })
        .collect();
    assert!(gaps[0] < gaps[1] && gaps[1] < gaps[2], "{gaps:?}");
}

#[test]
fn noisy_demi_halves_stay_unitary() {
    let p = small();
    let compiler = PulseCompiler::new(p);
    let report = compiler
        .demi(0.03 / p.nu, 0.2 / p.nu, Some(0.031 / p.nu), 0.99, 1.02, Dynamics::Full)
        .unwrap();
    assert!(report.u.unitarity_defect() < 1e-9);
    let clean = compiler.demi(0.03 / p.nu, 0.2 / p.nu, None, 1.0, 1.0, Dynamics::Full).unwrap();
    let d = low_level_distance(&report.matrix(), &clean.matrix(), 4);
    assert!(d > 1e-4 && d < 0.5);
}

#[test]
fn sideband_identity_and_basis_action() {
    let s = ideal_red_sideband(12).unwrap();
    let q = quadrature_sideband(12).unwrap();
    assert!(max_abs(&(&s - &q)) < 1e-12);
    // |g,1> (index 12 + 1) -> |e,0> (index 0); |g,0> is dark.
    assert!((s[[0, 13]] - ONE).norm() < 1e-15);
    assert!(s.column(12).iter().all(|z| z.norm() == 0.0));
}

#[test]
fn trotter_zero_angle_is_identity() {
    let p = small();
    let u = trotter_red_sideband(&p, 0.0, 8).unwrap();
    assert_eq!(u.matrix(), SectorOp::identity(p.n_fock).to_dense());
    assert_eq!(u.method, PropagatorMethod::Trotter);
}

#[test]
fn trotter_is_first_order_and_unitary() {
    let p = SystemParams::default().with_n_fock(30);
    let errors: Vec<f64> = [8, 16, 32, 64]
        .iter()
        .map(|&n| trotter_error(&p, PI, n, 4).unwrap())
        .collect();
    for w in errors.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.4..=0.6).contains(&ratio), "{errors:?}");
    }
    let u = trotter_red_sideband(&p, PI, 16).unwrap().matrix();
    assert!(unitarity_defect(&u) < 1e-9);
}

#[test]
fn standing_wave_identity_is_exact_without_free_evolution() {
    let p = SystemParams::default().with_n_fock(20);
    for &t in &[0.0, 1e-9, 3e-8, 1e-6] {
        assert!(standing_wave_emulation_check(&p, t).unwrap() < 1e-9);
    }
    assert_eq!(standing_wave_emulation_check(&p, 0.0).unwrap(), 0.0);
    let sweep: Vec<f64> = [1e-11, 1e-10, 1e-9]
        .iter()
        .map(|&t| standing_wave_distance(&p, t, true).unwrap())
        .collect();
    assert!(sweep[0] < sweep[1] && sweep[1] < sweep[2], "{sweep:?}");
}

#[test]
fn coupling_propagator_is_invariant_under_rabi_rescaling() {
    let p = SystemParams::default().with_n_fock(30);
    let (t_p, t_f) = (0.03 / p.nu, 0.2 / p.nu);
    let base = demi_coupling_propagator(&p, t_p, t_f).unwrap();
    let k: f64 = 10.0;
    let scaled = SystemParams {
        omega: p.omega * k,
        ..p
    };
    let rescaled = demi_coupling_propagator(&scaled, t_p / k.sqrt(), t_f / k.sqrt()).unwrap();
    assert!(phase_aligned_distance(&base, &rescaled) < 1e-8);
    assert!(unitarity_defect(&base) < 1e-9);
}

#[test]
fn pulse_spec_round_trips_and_validates() {
    let pulses = vec![
        PulseSpec::carrier(0.0, 1e-8),
        PulseSpec::free(2e-8),
        PulseSpec::demi(-1e-9, 3e-8),
        PulseSpec::DemiPulse {
            t_p: 1e-9,
            t_f: 1e-8,
            t_p_close: Some(1.1e-9),
            rabi_scale_open: 0.98,
            rabi_scale_close: 1.01,
        },
    ];
    let text = serde_json::to_string(&pulses).unwrap();
    let back: Vec<PulseSpec> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, pulses);
    assert!(pulses.iter().all(|p| p.validate().is_ok()));
    assert!(PulseSpec::carrier(7.0, 1e-8).validate().is_err());
    assert!(PulseSpec::demi(1e-9, -1e-8).validate().is_err());
    assert!((PulseSpec::demi(-1e-9, 3e-8).duration() - 3.2e-8).abs() < 1e-20);
    assert_eq!(PulseSpec::demi(1e-9, 3e-8).pulse_count(), 2);
}
