mod common;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use replica_sync::qa::{
    generate_qa, grad_psi_qa, mercer_truncate, psi_qa, qa_exact_free_energy, qa_mi_mmse, qa_scale_sweep, qa_solve,
    BaseMeasure, KernelKind, KernelSpec, QaInstance, QA_MAX_N,
};
use replica_sync::replica::FixedPointOptions;
use replica_sync::single_letter::EstimatorConfig;

fn random_psd(l: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p = &a * a.transpose();
    let n = p.norm();
    p / n
}

#[test]
fn mercer_linear_kernel_examples() {
    let t = mercer_truncate(&KernelSpec::linear(BaseMeasure::Rademacher), 1, 2).unwrap();
    assert!((t.eigenvalues[0] - 1.0).abs() <= 1e-12);
    for x in [-1.0, 1.0] {
        assert!((t.eigenfunctions(x)[0] - x).abs() <= 1e-12);
    }

    let t = mercer_truncate(&KernelSpec::linear(BaseMeasure::Uniform), 1, 64).unwrap();
    assert!((t.eigenvalues[0] - 1.0 / 3.0).abs() <= 1e-10);
    for x in [-0.7, 0.2, 0.9] {
        assert!((t.eigenfunctions(x)[0] - 3f64.sqrt() * x).abs() <= 1e-8);
    }
    assert!(t.residual <= 1e-10);
}

#[test]
fn mercer_rbf_residual_decreases_with_rank() {
    let k = KernelSpec::rbf(0.5, BaseMeasure::Uniform);
    let full = mercer_truncate(&k, 6, 128).unwrap();
    let res: Vec<f64> = (1..=6).map(|l| full.truncate(l).unwrap().residual).collect();
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
    assert!(full.orthonormality_error() <= 1e-8);
    assert!(full.eigenvalues.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn mercer_rejects_too_few_nodes() {
    assert!(mercer_truncate(&KernelSpec::rbf(0.5, BaseMeasure::Uniform), 6, 20).is_err());
    assert!(mercer_truncate(&KernelSpec::linear(BaseMeasure::Uniform), 0, 64).is_err());
}

#[test]
fn potential_vanishes_at_zero() {
    let t = mercer_truncate(&KernelSpec::rbf(0.5, BaseMeasure::Uniform), 3, 64).unwrap();
    let p = psi_qa(&t, &DMatrix::zeros(3, 3), &EstimatorConfig::new(2000, 64, 1)).unwrap();
    assert!(p.value.abs() <= 1e-12);
}

#[test]
fn zero_padding_leaves_the_potential_unchanged() {
    let full = mercer_truncate(&KernelSpec::rbf(0.5, BaseMeasure::Uniform), 4, 64).unwrap();
    let cfg = EstimatorConfig::new(2000, 64, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = random_psd(3, &mut rng);
    let mut padded = DMatrix::zeros(4, 4);
    padded.view_mut((0, 0), (3, 3)).copy_from(&q);
    let a = psi_qa(&full.truncate(3).unwrap(), &q, &cfg).unwrap();
    let b = psi_qa(&full, &padded, &cfg).unwrap();
    assert!((a.value - b.value).abs() <= 1e-12);
}

#[test]
fn rademacher_linear_kernel_reduces_to_z2() {
    let lam: f64 = 2.0;
    let t = mercer_truncate(&KernelSpec::linear(BaseMeasure::Rademacher).with_scale(lam.sqrt()), 1, 2).unwrap();
    let cfg = EstimatorConfig::new(200_000, 64, 3);
    for q in [0.2, 0.5, 1.0] {
        let p = psi_qa(&t, &DMatrix::from_element(1, 1, lam.sqrt() * q), &cfg).unwrap();
        let o = common::z2_psi(lam, q);
        assert!((p.value - o).abs() <= (3.0 * p.stderr).max(1e-3), "q={q}: {} vs {o}", p.value);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let t = mercer_truncate(&KernelSpec::rbf(0.5, BaseMeasure::Uniform).with_scale(2.0), 3, 64).unwrap();
    let cfg = EstimatorConfig::new(20_000, 64, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = random_psd(3, &mut rng) + DMatrix::identity(3, 3) * 0.3;
    let (g, err) = grad_psi_qa(&t, &q, &cfg).unwrap();
    let h = 1e-4;
    for _ in 0..5 {
        let a = DMatrix::<f64>::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = (&a + a.transpose()) * 0.5;
        let x = &x / x.norm();
        let fd = (psi_qa(&t, &(&q + &x * h), &cfg).unwrap().value - psi_qa(&t, &(&q - &x * h), &cfg).unwrap().value) / (2.0 * h);
        let an = g.component_mul(&x).sum();
        let tol = (4.0 * err * x.abs().sum()).max(1e-3);
        assert!((fd - an).abs() <= tol, "{fd} vs {an}");
    }
}

#[test]
fn weak_kernel_solves_to_zero() {
    let t = mercer_truncate(&KernelSpec::linear(BaseMeasure::Uniform).with_scale(1e-3), 1, 64).unwrap();
    let cfg = EstimatorConfig::new(5000, 64, 5);
    let s = qa_solve(&t, &DMatrix::from_element(1, 1, 0.1), &FixedPointOptions::default(), &cfg).unwrap();
    assert!(s.q_frobenius <= 1e-3, "{}", s.q_frobenius);
}

#[test]
fn overlap_grows_with_kernel_scale() {
    let k = KernelSpec::rbf(0.5, BaseMeasure::Uniform);
    let cfg = EstimatorConfig::new(5000, 64, 6);
    let rows = qa_scale_sweep(&k, &[0.5, 1.0, 2.0], &[1, 2, 3], 64, &FixedPointOptions::default(), &cfg).unwrap();
    let q: Vec<f64> = rows.iter().map(|r| r.solution.levels.last().unwrap().q_frobenius).collect();
    assert!(q.windows(2).all(|w| w[1] >= w[0] - 1e-3), "{q:?}");
}

#[test]
fn kernel_second_moment_two_ways() {
    let k = KernelSpec::new(
        KernelKind::FiniteRank { weights: vec![1.0, 0.5], features: vec![vec![0.0, 1.0], vec![1.0, 0.0, -3.0]] },
        BaseMeasure::Uniform,
    )
    .with_scale(1.5);
    let a = k.second_moment(64);
    let b = k.finite_rank_second_moment(64).unwrap();
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
}

#[test]
fn finite_rank_kernel_has_zero_cauchy_gap() {
    let k = KernelSpec::linear(BaseMeasure::Uniform).with_scale(3.0);
    let cfg = EstimatorConfig::new(5000, 64, 7);
    let s = qa_mi_mmse(&k, &[1, 2, 3], 64, &FixedPointOptions::default(), &cfg).unwrap();
    assert_eq!(s.cauchy_gap, 0.0);
    assert!(s.extrapolation_reliable);
    assert!((s.mi_limit - (0.25 * s.kappa_sq - s.psi_infinity)).abs() <= 1e-12);
    assert!(s.mmse_limit >= -1e-9 && s.mmse_limit <= s.kappa_sq + 1e-9);
}

#[test]
fn qa_noise_has_variance_n() {
    let n = 300;
    let inst = generate_qa(n, &KernelSpec::rbf(0.5, BaseMeasure::Uniform), 8).unwrap();
    let z = inst.noise();
    let v = z.iter().map(|t| t * t).sum::<f64>() / z.len() as f64;
    assert!((v - 1.0).abs() <= 0.05, "{v}");
    let mut sorted = inst.pi_star.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..n).collect::<Vec<_>>());
}

#[test]
fn exact_free_energy_is_relabelling_invariant() {
    let inst = generate_qa(7, &KernelSpec::rbf(0.5, BaseMeasure::Uniform).with_scale(2.0), 9).unwrap();
    let base = qa_exact_free_energy(&inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let mut sigma: Vec<usize> = (0..7).collect();
        sigma.shuffle(&mut rng);
        let r = qa_exact_free_energy(&inst.relabel(&sigma).unwrap()).unwrap();
        assert!((r.free_energy - base.free_energy).abs() <= 1e-10);
        assert!((r.overlap_truth - base.overlap_truth).abs() <= 1e-10);
    }
}

#[test]
fn exact_edge_cases() {
    let k = KernelSpec::linear(BaseMeasure::Rademacher);
    let one = QaInstance::from_parts(k.clone(), vec![1.0], vec![0], &[], 0).unwrap();
    assert_eq!(qa_exact_free_energy(&one).unwrap().free_energy, 0.0);
    assert!(generate_qa(1, &k, 0).is_err());
    let big = generate_qa(QA_MAX_N + 1, &k, 0).unwrap();
    assert!(qa_exact_free_energy(&big).is_err());
    assert!(QaInstance::from_parts(k, vec![1.0, -1.0], vec![0, 0], &[0.0], 0).is_err());
}

#[test]
fn small_instances_track_the_potential_maximum() {
    let lam: f64 = 4.0;
    let k = KernelSpec::linear(BaseMeasure::Rademacher).with_scale(lam.sqrt());
    let n = 8;
    let draws = 40;
    let mean = (0..draws).map(|s| qa_exact_free_energy(&generate_qa(n, &k, 100 + s).unwrap()).unwrap().free_energy).sum::<f64>()
        / draws as f64;
    let target = common::z2_sup_psi(lam);
    assert!((mean - target).abs() <= 0.6 / (n as f64).sqrt(), "{mean} vs {target}");
}
