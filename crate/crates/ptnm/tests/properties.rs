use proptest::prelude::*;
use ptnm::criteria::{
    default_probes, factorization_residual, lemma1_probe, no_ibtres_residual,
    no_ibtres_residual_factorized, no_sece_index_form, no_sece_residual,
    no_sece_residual_factorized, no_sece_sides,
};
use ptnm::linalg::{
    expm_i, kron, partial_trace, permute_subsystems, trace_norm, ComplexMatrix, LabeledSpace, C64,
};
use ptnm::models::{generate, model_tensor, ModelKind, ModelSpec};
use ptnm::optim::{oracle_random_search, project_density, project_tpcp, OracleSet};
use ptnm::proctensor::{apply, build_one_step, build_two_step, reduce, ProcessTensor};
use ptnm::quantum::{
    apply_map, choi_from_unitary_map, is_trace_preserving, random_density, random_tpcp,
    random_unitary, DensityMatrix, QuantumMap,
};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
    let g = random_unitary(n, seed);
    let d: Vec<f64> = (0..n).map(|k| (k as f64 - 1.3) * 0.7).collect();
    g.matmul(&ComplexMatrix::from_diag(&d))
        .unwrap()
        .matmul(&g.adjoint())
        .unwrap()
        .hermitian_part()
}

fn conj(u: &ComplexMatrix, m: &ComplexMatrix) -> ComplexMatrix {
    u.matmul(m).unwrap().matmul(&u.adjoint()).unwrap()
}

/// `(𝒜 ⊗ id_E)[ρ]` by explicit index sums over the Choi matrix.
fn on_system(choi: &ComplexMatrix, rho: &ComplexMatrix, d: usize, de: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d * de, d * de, |r, c| {
        let (o, e, p, f) = (r / de, r % de, c / de, c % de);
        let mut s = C64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                s += choi[(o * d + i, p * d + j)] * rho[(i * de + e, j * de + f)];
            }
        }
        s
    })
}

fn trace_env(m: &ComplexMatrix, d: usize, de: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |i, j| {
        (0..de).map(|e| m[(i * de + e, j * de + e)]).sum()
    })
}

/// Final system state by stepping the joint state through the model.
fn simulate(
    u1: &ComplexMatrix,
    u0: &ComplexMatrix,
    rho_se: &ComplexMatrix,
    a1: &QuantumMap,
    a0: &QuantumMap,
    d: usize,
    de: usize,
) -> ComplexMatrix {
    let r = on_system(a0.choi(), rho_se, d, de);
    let r = conj(u0, &r);
    let r = on_system(a1.choi(), &r, d, de);
    trace_env(&conj(u1, &r), d, de).hermitian_part()
}

fn random_model(seed: u64) -> ProcessTensor {
    build_two_step(
        &random_unitary(4, seed),
        &random_unitary(4, seed + 1),
        &random_density(4, seed + 2),
        2,
        2,
    )
    .unwrap()
}

fn factorized_model(seed: u64) -> (ProcessTensor, DensityMatrix) {
    let rho_s = random_density(2, seed + 2);
    let rho_se = kron(rho_s.mat(), random_density(2, seed + 3).mat());
    let t = build_two_step(
        &random_unitary(4, seed),
        &random_unitary(4, seed + 1),
        &DensityMatrix::from_matrix(rho_se).unwrap(),
        2,
        2,
    )
    .unwrap();
    (t, rho_s)
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn kron_mixed_product(seed in any::<u64>()) {
        let [a, b, c, e] = [0, 1, 2, 3].map(|k| random_unitary(2, seed.wrapping_add(k)));
        let lhs = kron(&a, &b).matmul(&kron(&c, &e)).unwrap();
        let rhs = kron(&a.matmul(&c).unwrap(), &b.matmul(&e).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-13);
    }

    #[test]
    fn partial_trace_of_a_product(seed in any::<u64>()) {
        let a = random_density(2, seed).mat().clone();
        let b = random_density(3, seed.wrapping_add(1)).mat().clone();
        let space = LabeledSpace::new([("A", 2), ("B", 3)]).unwrap();
        let (ra, _) = partial_trace(&kron(&a, &b), &space, &["B"]).unwrap();
        let (rb, _) = partial_trace(&kron(&a, &b), &space, &["A"]).unwrap();
        prop_assert!(ra.max_abs_diff(&a) < 1e-14);
        prop_assert!(rb.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn permutation_round_trip(seed in any::<u64>()) {
        let m = random_hermitian(12, seed);
        let space = LabeledSpace::new([("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let (p, moved) = permute_subsystems(&m, &space, &["C", "A", "B"]).unwrap();
        let (back, _) = permute_subsystems(&p, &moved, &["A", "B", "C"]).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn trace_norm_bounds_trace(seed in any::<u64>()) {
        let h = random_hermitian(5, seed);
        prop_assert!(trace_norm(&h).unwrap() + 1e-12 >= h.trace().re.abs());
    }

    #[test]
    fn hamiltonian_evolution_is_unitary(seed in any::<u64>(), t in -3.0f64..3.0) {
        let u = expm_i(&random_hermitian(4, seed), t).unwrap();
        prop_assert!(u.unitarity_defect() < 1e-12);
    }

    #[test]
    fn unitary_choi_acts_by_conjugation(seed in any::<u64>()) {
        let u = random_unitary(3, seed);
        let rho = random_density(3, seed.wrapping_add(1));
        let out = apply_map(&choi_from_unitary_map(&u).unwrap(), &rho).unwrap();
        prop_assert!(out.mat().max_abs_diff(&conj(&u, rho.mat())) < 1e-12);
    }

    #[test]
    fn random_channels_are_tpcp(seed in any::<u64>()) {
        let m = random_tpcp(2, 3, seed);
        prop_assert!(is_trace_preserving(&m, 1e-12).0);
        prop_assert!(QuantumMap::new(m.choi().clone(), 2, 3).is_ok());
    }

    #[test]
    fn contraction_matches_direct_simulation(seed in 0u64..1 << 40) {
        let (u1, u0) = (random_unitary(4, seed), random_unitary(4, seed + 1));
        let rho_se = random_density(4, seed + 2);
        let t = build_two_step(&u1, &u0, &rho_se, 2, 2).unwrap();
        let (a1, a0) = (random_tpcp(2, 2, seed + 3), random_tpcp(2, 2, seed + 4));
        let direct = simulate(&u1, &u0, rho_se.mat(), &a1, &a0, 2, 2);
        let out = apply(&t, &[&a1, &a0]).unwrap();
        prop_assert!(trace_norm(&(out.mat() - &direct)).unwrap() < 1e-10);
    }

    #[test]
    fn tensor_traces(seed in 0u64..1 << 40, d_env in 1usize..4) {
        let n = 2 * d_env;
        let rho = random_density(n, seed + 2);
        let u0 = random_unitary(n, seed);
        let t = build_two_step(&random_unitary(n, seed + 1), &u0, &rho, 2, d_env).unwrap();
        let m = build_one_step(&u0, &rho, 2, d_env).unwrap();
        prop_assert!((t.mat().trace().re - 4.0).abs() < 1e-9);
        prop_assert!((m.mat().trace().re - 2.0).abs() < 1e-9);
    }

    #[test]
    fn full_swap_output_ignores_the_late_operation(seed in 0u64..1 << 40) {
        let t = model_tensor(&ModelSpec::new(ModelKind::FullSwap)).unwrap();
        let a0 = random_tpcp(2, 2, seed);
        let reference = apply(&t, &[&QuantumMap::identity(2), &a0]).unwrap();
        let out = apply(&t, &[&random_tpcp(2, 2, seed + 1), &a0]).unwrap();
        prop_assert!(out.mat().max_abs_diff(reference.mat()) < 1e-10);
    }

    #[test]
    fn tpcp_projection_is_feasible_and_idempotent(seed in any::<u64>()) {
        let m = random_hermitian(4, seed);
        let p = project_tpcp(&m, 2, 2).unwrap();
        let map = QuantumMap::new(p.clone(), 2, 2).unwrap();
        prop_assert!(is_trace_preserving(&map, 1e-9).0);
        prop_assert!(project_tpcp(&p, 2, 2).unwrap().max_abs_diff(&p) < 1e-7);
    }

    #[test]
    fn density_projection_is_idempotent(seed in any::<u64>()) {
        let p = project_density(&random_hermitian(3, seed)).unwrap();
        prop_assert!((p.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(project_density(&p).unwrap().max_abs_diff(&p) < 1e-12);
    }
}

proptest! {
    #![proptest_config(cfg(8))]

    #[test]
    fn permutation_form_matches_index_form(seed in 0u64..1 << 40) {
        let t = random_model(seed);
        let (lhs, rhs) = no_sece_sides(&t).unwrap();
        let index = no_sece_index_form(&t).unwrap();
        prop_assert!((&lhs - &rhs).max_abs_diff(&index) < 1e-12);
    }

    #[test]
    fn uncoupled_models_pass_every_condition(seed in 0u64..1 << 40) {
        let mut spec = ModelSpec::new(ModelKind::Uncoupled);
        spec.seed = Some(seed);
        let t = model_tensor(&spec).unwrap();
        prop_assert!(no_ibtres_residual(&t).unwrap().residual <= 1e-10);
        prop_assert!(no_sece_residual(&t).unwrap().residual <= 1e-10);
        prop_assert!(factorization_residual(&t).unwrap().residual <= 1e-10);
    }

    #[test]
    fn oracle_is_deterministic_and_nested(seed in 0u64..1 << 40) {
        let t = random_model(seed);
        for set in [OracleSet::Markov, OracleSet::NoIbtres] {
            let a = oracle_random_search(&t, set, 60, seed).unwrap();
            prop_assert_eq!(a.to_bits(), oracle_random_search(&t, set, 60, seed).unwrap().to_bits());
            prop_assert!(oracle_random_search(&t, set, 120, seed).unwrap() <= a);
        }
    }
}

#[test]
fn factorized_forms_agree_with_full_forms() {
    for seed in 0..20u64 {
        let (t, rho_s) = factorized_model(1000 + 10 * seed);
        let tr = reduce(&t, &rho_s).unwrap();
        let full = no_sece_residual(&t).unwrap().residual;
        let reduced = no_sece_residual_factorized(&tr).unwrap().residual;
        assert!(
            (full - reduced).abs() < 1e-8,
            "seed {seed}: {full} vs {reduced}"
        );
        let full = no_ibtres_residual(&t).unwrap().residual;
        let reduced = no_ibtres_residual_factorized(&tr).unwrap().residual;
        assert!(
            (full - reduced).abs() < 1e-8,
            "seed {seed}: {full} vs {reduced}"
        );
    }
}

#[test]
fn one_step_product_iff_no_correlation_effect() {
    let u0 = random_unitary(4, 5);
    let product = build_one_step(
        &u0,
        &DensityMatrix::from_matrix(kron(random_density(2, 6).mat(), random_density(2, 7).mat()))
            .unwrap(),
        2,
        2,
    )
    .unwrap();
    assert!(factorization_residual(&product).unwrap().passed);
    let correlated = build_one_step(&u0, &random_density(4, 8), 2, 2).unwrap();
    assert!(!factorization_residual(&correlated).unwrap().passed);
}

#[test]
fn identity_process_is_blind_to_probes() {
    let rho_se = DensityMatrix::from_matrix(kron(
        random_density(2, 1).mat(),
        &ComplexMatrix::unit(2, 0, 0),
    ))
    .unwrap();
    let id = ComplexMatrix::identity(4);
    let t = build_two_step(&id, &id, &rho_se, 2, 2).unwrap();
    let probes: Vec<_> = default_probes(2, 3).into_iter().take(10).collect();
    assert!(lemma1_probe(&t, &probes).unwrap().residual <= 1e-10);
}

#[test]
fn partial_swap_limits() {
    let mut spec = ModelSpec::new(ModelKind::PartialSwap);
    spec.theta = Some(0.0);
    let m = generate(&spec).unwrap();
    assert!(m.u0.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    assert!(m.u1.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    spec.theta = Some(std::f64::consts::FRAC_PI_2);
    let swap = ComplexMatrix::from_real(
        4,
        4,
        &[
            1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 1.,
        ],
    )
    .unwrap();
    assert!(generate(&spec).unwrap().u0.max_abs_diff(&swap) < 1e-15);
}

#[test]
fn solely_sece_first_step_erases_the_input() {
    let m = generate(&ModelSpec::new(ModelKind::SolelySece)).unwrap();
    let space = LabeledSpace::new([("S", 2), ("E1", 2), ("E2", 2), ("R", 4)]).unwrap();
    let marginal = |a0: &QuantumMap| {
        let joint = conj(&m.u0, &on_system(a0.choi(), m.rho_se.mat(), 2, 16));
        partial_trace(&joint, &space, &["E2", "R"]).unwrap().0
    };
    let a = marginal(&QuantumMap::identity(2));
    let b = marginal(&random_tpcp(2, 2, 9));
    assert!(a.max_abs_diff(&b) < 1e-10);
    assert!(a.max_abs_diff(&ptnm::models::solely_sece_constant_state(0.5)) < 1e-10);
}
