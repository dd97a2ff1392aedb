use proptest::prelude::*;

use ioncool::chain::{ChainKind, ChainModel, ChainOptions};
use ioncool::control::{bfgs_search, BfgsOptions, Objective};
use ioncool::cycles::CycleFile;
use ioncool::engine::{reinitialize_spin, CoolingCycle, CoolingSequence};
use ioncool::linalg::{dagger, hermiticity_defect, max_abs, min_eigenvalue, phase_aligned_distance, trace, unitarity_defect, ONE};
use ioncool::noise::{perturb_cycle, sample_rng, Correlation, NoiseSpec, NoiseTarget};
use ioncool::pulse::*;
use ioncool::quantum::{apply_unitary, thermal_state};
use ioncool::SystemParams;

fn params() -> SystemParams {
    SystemParams::default().with_n_fock(16)
}

fn pulse_strategy() -> impl Strategy<Value = PulseSpec> {
    prop_oneof![
        (0.0..std::f64::consts::TAU, -0.03..0.03f64)
            .prop_filter("nonzero", |(_, d)| d.abs() > 1e-6)
            .prop_map(|(theta, d)| PulseSpec::carrier(theta, d / params().nu)),
        (-0.02..0.02f64, 1e-3..0.3f64)
            .prop_filter("nonzero", |(p, _)| p.abs() > 1e-6)
            .prop_map(|(p, f)| PulseSpec::demi(p / params().nu, f / params().nu)),
        (1e-3..1.0f64).prop_map(|d| PulseSpec::free(d / params().nu)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagators_are_unitary(pulse in pulse_strategy(), impulsive in any::<bool>()) {
        let p = params();
        let u = PulseCompiler::new(p).propagator(&pulse, Dynamics::from_impulsive(impulsive)).unwrap();
        prop_assert!(unitarity_defect(&u.matrix()) < 1e-9);
    }

    #[test]
    fn evolution_preserves_state_invariants(pulses in prop::collection::vec(pulse_strategy(), 1..4), nbar in 0.0..1.0f64) {
        let p = params();
        let compiler = PulseCompiler::new(p);
        let mut state = thermal_state(&p, nbar).unwrap();
        for pulse in &pulses {
            let u = compiler.propagator(pulse, Dynamics::Full).unwrap().matrix();
            state = match apply_unitary(&state, &u) {
                Ok(s) => s,
                // A leak is a reported failure, not a broken invariant.
                Err(e) => { prop_assert!(e.is_truncation()); return Ok(()); }
            };
            prop_assert!((trace(&state.rho) - ONE).norm() < 1e-10);
            prop_assert!(hermiticity_defect(&state.rho) < 1e-10);
            prop_assert!(min_eigenvalue(&state.rho) > -1e-10);
        }
        let once = reinitialize_spin(&state);
        prop_assert!((once.mean_phonons() - state.mean_phonons()).abs() < 1e-12);
        prop_assert!(max_abs(&(reinitialize_spin(&once).rho - &once.rho)) < 1e-15);
    }

    #[test]
    fn analytic_and_exact_demi_agree(kick in 0.05..2.0f64, flight in 0.05..1.0f64) {
        let p = params();
        let t_p = kick / p.coupling();
        let t_f = flight / p.nu;
        let a = demi_pulse_analytic(&p, t_p, t_f).unwrap().matrix();
        let e = demi_pulse_exact(&p, t_p, t_f, true).unwrap().matrix();
        prop_assert!(phase_aligned_distance(&a, &e) < 1e-8);
    }

    #[test]
    fn demi_coupling_survives_rabi_rescaling(k in 1.0..20.0f64, t_p in 1e-3..0.03f64, t_f in 0.01..0.5f64) {
        let p = params();
        let (t_p, t_f) = (t_p / p.nu, t_f / p.nu);
        let base = demi_coupling_propagator(&p, t_p, t_f).unwrap();
        let faster = SystemParams { omega: p.omega * k, ..p };
        let rescaled = demi_coupling_propagator(&faster, t_p / k.sqrt(), t_f / k.sqrt()).unwrap();
        prop_assert!(phase_aligned_distance(&base, &rescaled) < 1e-8);
    }

    #[test]
    fn inverse_carrier_undoes_pulse(theta in 0.0..std::f64::consts::TAU, d in 1e-4..0.05f64) {
        let p = params();
        let c = PulseCompiler::new(p);
        let u = c.carrier(theta, d / p.nu, 1.0, Dynamics::Impulsive).matrix();
        let v = c.carrier(theta, -d / p.nu, 1.0, Dynamics::Impulsive).matrix();
        prop_assert!(max_abs(&(v.dot(&u) - ioncool::linalg::identity(2 * p.n_fock))) < 1e-10);
        prop_assert!(max_abs(&(v - dagger(&u))) < 1e-10);
    }

    #[test]
    fn chains_are_in_equilibrium_with_orthonormal_modes(n in 1usize..30, pinned in any::<bool>()) {
        let kind = if pinned { ChainKind::PinnedEquidistant } else { ChainKind::RegularTrap };
        let m = ChainModel::new(n, kind, 1.0, ChainOptions::default()).unwrap();
        prop_assert!(m.force_residual() < 1e-10);
        prop_assert!(m.positions.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(m.frequencies.windows(2).all(|w| w[1] >= w[0]));
        let gram = m.modes.t().dot(&m.modes);
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - expected).abs() < 1e-10);
            }
        }
        prop_assert!((m.com_frequency() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn noisy_cycles_keep_durations_valid(sigma in 0.0..0.8f64, seed in any::<u64>(), per_pulse in any::<bool>()) {
        let seq = CoolingSequence::new(vec![PulseSpec::carrier(0.0, -1e-9), PulseSpec::demi(2e-9, 3e-8)]);
        let cycle = CoolingCycle::new("p", vec![seq.clone(), seq]);
        let noise = NoiseSpec {
            target: NoiseTarget::Both,
            sigma,
            correlation: if per_pulse { Correlation::PerPulse } else { Correlation::PerCycle },
            n_samples: 1,
            seed,
        };
        let noisy = perturb_cycle(&cycle, &noise, &mut sample_rng(seed, 0, 0)).unwrap();
        noisy.validate().unwrap();
        for (a, b) in cycle.pulses().zip(noisy.pulses()) {
            prop_assert_eq!(a.duration().signum(), b.duration().signum());
        }
    }

    #[test]
    fn cycle_files_round_trip(durations in prop::collection::vec((-0.5..0.5f64, 1e-4..0.05f64, 1e-3..0.5f64), 1..6)) {
        let nu = params().nu;
        let pulses = durations
            .iter()
            .filter(|(c, _, _)| c.abs() > 1e-9)
            .flat_map(|&(c, p, f)| [PulseSpec::carrier(0.0, c / nu), PulseSpec::demi(p / nu, f / nu)])
            .collect::<Vec<_>>();
        prop_assume!(!pulses.is_empty());
        let cycle = CoolingCycle::new("r", vec![CoolingSequence::new(pulses)]);
        let file = CycleFile::from_cycle(&cycle, nu, Default::default());
        let back = CycleFile::from_json(&file.to_json()).unwrap().to_cycle(nu).unwrap();
        for (a, b) in cycle.pulses().zip(back.pulses()) {
            prop_assert!((a.duration() - b.duration()).abs() <= 1e-15 * a.duration().abs());
        }
    }

    #[test]
    fn bfgs_stays_in_bounds(center in prop::collection::vec(-3.0..3.0f64, 3), start in prop::collection::vec(-1.0..1.0f64, 3)) {
        struct Bowl(Vec<f64>);
        impl Objective for Bowl {
            fn bounds(&self) -> &[(f64, f64)] { &[(-1.0, 1.0); 3] }
            fn value(&mut self, x: &[f64]) -> f64 {
                x.iter().zip(&self.0).map(|(a, b)| (a - b).powi(2)).sum()
            }
        }
        let mut bowl = Bowl(center.clone());
        let out = bfgs_search(&mut bowl, &start, &BfgsOptions::default()).unwrap();
        prop_assert!(out.x.iter().all(|x| (-1.0..=1.0).contains(x)));
        prop_assert!(out.value <= out.history[0]);
        for (x, c) in out.x.iter().zip(&center) {
            prop_assert!((x - c.clamp(-1.0, 1.0)).abs() < 1e-5);
        }
    }
}
