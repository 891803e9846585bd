use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ramsey_core::*;

fn even_atoms(max: usize) -> impl Strategy<Value = usize> {
    (1..=max / 2).prop_map(|m| 2 * m)
}

fn regime() -> impl Strategy<Value = DephasingRegime> {
    prop_oneof![
        Just(DephasingRegime::Stationary),
        (0.0f64..20.0, -3.0f64..3.0).prop_map(|(gamma_t, delta_tilde_t)| DephasingRegime::Finite {
            gamma_t,
            delta_tilde_t
        }),
    ]
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distributions_are_normalised(n in even_atoms(16), r in regime(), x in 0.0f64..(2.0 * PI)) {
        let (p, dp) = AnalyticModel::new(GroupSize::from_atoms(n).unwrap(), r).distribution(x).unwrap();
        prop_assert!((p.total() - 1.0).abs() < 1e-10);
        prop_assert!(dp.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn fisher_bounded_by_qfi(n in even_atoms(10), r in regime(), x in 0.0f64..(2.0 * PI)) {
        let model = AnalyticModel::new(GroupSize::from_atoms(n).unwrap(), r);
        let (p, dp) = model.distribution(x).unwrap();
        if let Ok(f) = fisher_information(&p, &dp) {
            let q = model.scaled_qfi(x).unwrap().unwrap();
            prop_assert!(f <= q * (1.0 + 1e-9) + 1e-12, "F = {f}, F_Q = {q}");
        }
    }

    #[test]
    fn stationary_qfi_is_n(n in even_atoms(12), t in 0.1f64..5.0, x in 0.0f64..(2.0 * PI)) {
        let size = GroupSize::from_atoms(n).unwrap();
        let q = qfi(rho_stationary(size, x).entries(), &rho_stationary_derivative(size, t, x)).unwrap();
        prop_assert!((q - n as f64 * t * t).abs() <= 1e-9 * n as f64 * t * t);
    }

    #[test]
    fn fisher_is_periodic(n in even_atoms(12), r in regime(), x in 0.0f64..(2.0 * PI)) {
        let model = AnalyticModel::new(GroupSize::from_atoms(n).unwrap(), r);
        let a = model.distribution(x).unwrap();
        let b = model.distribution(x + 2.0 * PI).unwrap();
        if let (Ok(fa), Ok(fb)) = (fisher_information(&a.0, &a.1), fisher_information(&b.0, &b.1)) {
            prop_assert!((fa - fb).abs() <= 1e-12 * fa.max(1.0));
        }
    }

    #[test]
    fn density_matrices_are_physical(n in even_atoms(8), gamma in 0.0f64..5.0, t in 0.0f64..3.0, d in -2.0f64..2.0, dt in -2.0f64..2.0) {
        let rho = rho_t(GroupSize::from_atoms(n).unwrap(), &DephasingParams::new(gamma, t, d, dt).unwrap());
        prop_assert!(rho.hermiticity_deviation() < 1e-12);
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(rho.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn perfect_gates_reduce_to_analytic(n in even_atoms(10), r in regime(), x in 0.0f64..(2.0 * PI)) {
        let size = GroupSize::from_atoms(n).unwrap();
        let (a, da) = AnalyticModel::new(size, r).distribution(x).unwrap();
        let (b, db) = ReductionModel::new(size, r, GateFidelities::PERFECT).unwrap().distribution(x).unwrap();
        for i in 0..size.dim() {
            prop_assert!((a.probabilities()[i] - b.probabilities()[i]).abs() < 1e-13);
            prop_assert!((da[i] - db[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_matches_engine(n in prop_oneof![Just(2usize), Just(4)], eh in 0.8f64..1.0, em in 0.8f64..1.0, gt in 0.0f64..8.0, dtil in -2.0f64..2.0, x in 0.0f64..(2.0 * PI)) {
        let size = GroupSize::from_atoms(n).unwrap();
        let fid = GateFidelities::new(eh, em).unwrap();
        let regime = DephasingRegime::Finite { gamma_t: gt, delta_tilde_t: dtil };
        let (p, dp) = ReductionModel::new(size, regime, fid).unwrap().distribution(x).unwrap();
        let rho0 = AtomicDensityMatrix::initial(n, eh).unwrap();
        let params = LindbladParams::new(gt, 0.0, x, dtil, 1.0).unwrap();
        let pair = LindbladEngine::default().evolve_with_sensitivity(&rho0, &params).unwrap();
        let (q, dq) = count_distribution_with_derivative(&pair, eh, em).unwrap();
        for i in 0..size.dim() {
            prop_assert!((p.probabilities()[i] - q.probabilities()[i]).abs() < 1e-10);
            prop_assert!((dp[i] - dq[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn engine_matches_closed_form(n in prop_oneof![Just(2usize), Just(4), Just(6)], gamma in 0.0f64..10.0, t in 0.0f64..3.0, d in -2.0f64..2.0, dt in -2.0f64..2.0) {
        let size = GroupSize::from_atoms(n).unwrap();
        let p = DephasingParams::new(gamma, t, d, dt).unwrap();
        let rho = LindbladEngine::default().evolve(&AtomicDensityMatrix::initial(n, 1.0).unwrap(), &p.into()).unwrap();
        let oracle = AtomicDensityMatrix::from_fock(&rho_t(size, &p));
        prop_assert!(max_diff(rho.entries(), oracle.entries()) < 1e-8);
    }

    #[test]
    fn emission_preserves_trace(n in prop_oneof![Just(2usize), Just(4)], eh in 0.5f64..1.0, gamma in 0.0f64..5.0, em in 0.0f64..1.0, t in 0.0f64..4.0) {
        let rho0 = AtomicDensityMatrix::initial(n, eh).unwrap();
        let params = LindbladParams::new(gamma, em, 0.3, 0.1, t).unwrap();
        let pair = LindbladEngine::default().evolve_with_sensitivity(&rho0, &params).unwrap();
        prop_assert!((pair.rho.trace().re - 1.0).abs() < 1e-9);
        prop_assert!(pair.rho.hermiticity_deviation() < 1e-10);
        prop_assert!(pair.drho_domega.trace().norm() < 1e-9);
    }

    #[test]
    fn readout_noise_composes(m in 1usize..8, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        // flip probabilities f and f' compose to f + f' - 2ff', i.e. eta multiplies
        let ab = readout_flip_matrix(m, a).unwrap() * readout_flip_matrix(m, b).unwrap();
        let direct = readout_flip_matrix(m, a * b).unwrap();
        prop_assert!((ab - direct).amax() < 1e-12);
    }

    #[test]
    fn fidelity_rescaling_of_benchmark(n in even_atoms(20), eh in 0.1f64..1.0, em in 0.1f64..1.0, gamma in 0.1f64..5.0) {
        let ideal = ExperimentParams::ideal(n, gamma, 1.0);
        let noisy = ExperimentParams { eta_h: eh, eta_m: em, ..ideal };
        let a = benchmarks(&ideal, 0.1).unwrap().bench_noisy;
        let b = benchmarks(&noisy, 0.1).unwrap().bench_noisy;
        prop_assert!((b / a - 1.0 / (em * eh * eh)).abs() < 1e-12 / (em * eh * eh));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fisher_scales_with_t_squared(n in even_atoms(12), t in 0.2f64..4.0) {
        let model = AnalyticModel::stationary(GroupSize::from_atoms(n).unwrap());
        let a = maximize_f(&model, t, 10.0 * t).unwrap();
        let b = maximize_f(&model, 2.0 * t, 20.0 * t).unwrap();
        prop_assert!((b.fisher / a.fisher - 4.0).abs() < 4e-9);
        prop_assert!(a.dw_cr >= a.dw_qcr.unwrap());
    }

    #[test]
    fn atomic_fisher_bounded_by_qfi(n in prop_oneof![Just(2usize), Just(4), Just(6)], eh in 0.8f64..1.0, em in 0.8f64..1.0, gt in 0.5f64..50.0, et in 0.0f64..1.0) {
        let fid = GateFidelities::new(eh, em).unwrap();
        let rho0 = AtomicDensityMatrix::initial(n, eh).unwrap();
        let frame = LindbladEngine::default().emission_frames(&rho0, et, &[1.0]).unwrap().remove(0);
        let model = AtomicModel::new(n, &frame, gt, 0.0, fid).unwrap();
        let r = maximize_f(&model, 1.0, 1.0).unwrap();
        prop_assert!(r.fisher <= r.qfi.unwrap() * (1.0 + 1e-9));
    }
}
