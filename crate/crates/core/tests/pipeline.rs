//! The closed-form pipelines against literal full-space simulation.

use dephasing::exact::DensityMatrix;
use dephasing::linalg::max_abs_diff;
use dephasing::operational::{conditional_environment_state, joint_probability, MeasurementScheme};
use dephasing::oracle::{integrate_lindblad, measurement_statistics_bruteforce, IntegratorConfig};
use dephasing::split::{system_state, EnvPopulations, ReducedDynamics};
use dephasing::verify::random::{self, CrossCoupling};
use dephasing::{Model, SplitSpec};
use num_complex::Complex;
use rand::Rng;

fn product_state(
    model: &Model,
    split: &SplitSpec,
    rho_s: &DensityMatrix<f64>,
    env: &EnvPopulations<f64>,
) -> DensityMatrix<f64> {
    let layout = split.layout(model).unwrap();
    let q = env.to_full(&split.bath_basis(model));
    let bath = DensityMatrix::diagonal(&q).unwrap();
    DensityMatrix::from_matrix_unchecked(layout.product(rho_s.matrix(), bath.matrix()))
}

#[test]
fn joint_statistics_match_full_space_measurements() {
    let mut rng = random::rng(11);
    let cfg = IntegratorConfig::default();
    for _ in 0..8 {
        let n = rng.gen_range(2..=3);
        let dims = random::dims(&mut rng, n, 3);
        let model = random::model(&mut rng, &dims, 1, CrossCoupling::Generic, 1.0);
        let split = SplitSpec::leading(1, n).unwrap();
        let env = random::env(&mut rng, &dims[1..]);
        let rho_s = random::state(&mut rng, dims[0]);
        let scheme = MeasurementScheme::fourier(dims[0], rng.gen_range(0.1..3.0)).unwrap();
        let (t, tau) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));

        let fast = joint_probability(&model, &split, &env, &rho_s, &scheme, t, tau).unwrap();
        let full = product_state(&model, &split, &rho_s, &env);
        let slow = measurement_statistics_bruteforce(&model, &split, &full, &scheme, t, tau, &cfg).unwrap();
        assert!(fast.max_deviation(&slow.table) < 1e-10, "{}", fast.max_deviation(&slow.table));
        assert!((fast.total() - 1.0).abs() < 1e-12);

        // bath state after the intermediate outcome
        let bath0 = DensityMatrix::diagonal(&env.to_full(&split.bath_basis(&model))).unwrap();
        for cond in &slow.bath_states {
            let pi = &scheme.first().operators()[cond.x];
            let kicked = pi * rho_s.matrix() * pi.adjoint();
            let p = kicked.trace().re;
            let rho_x = DensityMatrix::new(kicked / Complex::new(p, 0.0)).unwrap();
            let (pyx, state) =
                conditional_environment_state(&model, &split, &rho_x, &bath0, &scheme.intermediate().effect(cond.y), t)
                    .unwrap();
            assert!((pyx - cond.p_y_given_x).abs() < 1e-10);
            assert!(max_abs_diff(state.matrix(), cond.state.matrix()) < 1e-10);
        }
    }
}

#[test]
fn reduced_state_matches_integrated_partial_trace_for_every_split() {
    let mut rng = random::rng(12);
    let cfg = IntegratorConfig::default();
    let dims = vec![2, 3, 2];
    let model = random::model(&mut rng, &dims, 1, CrossCoupling::Generic, 1.0);
    let splits = [(vec![0], vec![1, 2]), (vec![1], vec![0, 2]), (vec![2, 0], vec![1]), (vec![1, 2], vec![0])];
    for (system, bath) in splits {
        let split = SplitSpec::new(system, bath, 3).unwrap();
        let layout = split.layout(&model).unwrap();
        let bath_dims: Vec<usize> = split.bath().iter().map(|&j| dims[j]).collect();
        let env = random::env(&mut rng, &bath_dims);
        let rho_s = random::state(&mut rng, layout.system_dim);
        let full = product_state(&model, &split, &rho_s, &env);
        for t in [0.4, 2.5] {
            let integrated = layout.trace_bath(integrate_lindblad(&model, &full, t, &cfg).unwrap().matrix());
            let closed = system_state(&model, &split, &rho_s, &env, t).unwrap();
            assert!(max_abs_diff(&integrated, closed.matrix()) < 1e-9);
        }
    }
}

#[test]
fn bath_without_coupling_leaves_system_markovian() {
    // two decoupled blocks: the reduced coherences are pure exponentials
    let mut rng = random::rng(13);
    let model = random::model(&mut rng, &[2, 2, 3], 1, CrossCoupling::Generic, 1.0);
    let mut gamma = model.gamma().clone();
    let mut h = model.h().clone();
    for j in 1..3 {
        gamma[(0, j)] = 0.0.into();
        gamma[(j, 0)] = 0.0.into();
        h[(0, j)] = 0.0;
        h[(j, 0)] = 0.0;
    }
    let decoupled = Model::new(model.subsystems().to_vec(), h, gamma).unwrap();
    let split = SplitSpec::leading(1, 3).unwrap();
    let env = random::env(&mut rng, &[2, 3]);
    let dynamics = ReducedDynamics::new(&decoupled, &split, env).unwrap();
    let r0 = dynamics.log_derivative(0, 1, 0.0).unwrap();
    for t in [0.3, 1.1, 4.0] {
        assert!((dynamics.log_derivative(0, 1, t).unwrap() - r0).norm() < 1e-12);
    }
}
