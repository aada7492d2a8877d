mod common;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use replica_sync::group::{haar_sample, represent, GroupElement, RepChannel};
use replica_sync::linalg::op_norm;
use replica_sync::single_letter::{
    posterior_mean, so2_f, so2_mmse, so2_moment_ratio, state_map, EstimatorConfig, Overlap, SingleLetter,
    SingleLetterDraw,
};

fn catalog(snr: f64) -> Vec<RepChannel> {
    vec![
        RepChannel::so2(1, snr).unwrap(),
        RepChannel::sok(3, snr).unwrap(),
        RepChannel::cyclic_plane(5, 2, snr).unwrap(),
        RepChannel::symmetric(4, snr).unwrap(),
        RepChannel::z2(snr).unwrap(),
    ]
}

#[test]
fn overlap_square_root_and_clipping() {
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.2]);
    let q = Overlap::new(vec![a.clone()]).unwrap();
    let r = &q.sqrt_blocks()[0];
    assert!((r * r - &a).norm() <= 1e-9);

    let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5e-11]);
    let clipped = Overlap::new(vec![nearly]).unwrap();
    assert!(clipped.blocks[0][(1, 1)] >= 0.0);
    assert!(Overlap::new(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3])]).is_err());
    assert!(Overlap::new(vec![DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0])]).is_err());
}

#[test]
fn draw_reconstructs_observation() {
    let ch = [RepChannel::sok(3, 2.0).unwrap()];
    let q = Overlap::scalar(&ch, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = SingleLetterDraw::sample(&ch, &q, &mut rng).unwrap();
    let expect = represent(&ch[0], &d.g_star).unwrap() * q.sqrt_blocks()[0].clone() * 2f64.sqrt() + &d.z_blocks[0];
    assert!((&d.y_blocks[0] - expect).norm() <= 1e-12);
}

#[test]
fn posterior_mean_vanishes_at_zero_overlap() {
    let cfg = EstimatorConfig::new(100, 256, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for ch in catalog(2.0) {
        let chs = [ch.clone()];
        let q = Overlap::zeros(&chs);
        let d = SingleLetterDraw::sample(&chs, &q, &mut rng).unwrap();
        let m = posterior_mean(&chs, &q, &d, &cfg).unwrap();
        // SO(k) uses a sign-symmetrized inner sample, so the mean is exactly zero there too.
        assert!(m[0].norm() <= 1e-12, "{ch}: {}", m[0].norm());
    }
}

#[test]
fn z2_posterior_mean_is_tanh() {
    let (lam, q) = (2.0, 0.7);
    let ch = [RepChannel::z2(lam).unwrap()];
    let ov = Overlap::scalar(&ch, q);
    let cfg = EstimatorConfig::default();
    for (g, z) in [(0usize, 0.3), (1, -1.2), (0, 2.5), (1, 0.0)] {
        let d = SingleLetterDraw::new(&ch, &ov, GroupElement::Residue(g), vec![DMatrix::from_element(1, 1, z)]).unwrap();
        let y = d.y_blocks[0][(0, 0)];
        let m = posterior_mean(&ch, &ov, &d, &cfg).unwrap()[0][(0, 0)];
        assert!((m - ((lam * q).sqrt() * y).tanh()).abs() <= 1e-12);
    }
}

#[test]
fn so2_posterior_concentrates_at_high_snr() {
    let ch = [RepChannel::so2(1, 100.0).unwrap()];
    let q = Overlap::scalar(&ch, 1.0);
    let cfg = EstimatorConfig::new(100, 1024, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200;
    let mut err = 0.0;
    for _ in 0..n {
        let d = SingleLetterDraw::sample(&ch, &q, &mut rng).unwrap();
        let m = posterior_mean(&ch, &q, &d, &cfg).unwrap();
        err += (&m[0] - represent(&ch[0], &d.g_star).unwrap()).norm();
    }
    assert!(err / n as f64 <= 0.15, "{}", err / n as f64);
}

#[test]
fn so2_posterior_mean_matches_fine_quadrature() {
    // Brute-force trapezoid oracle at 10^4 nodes.
    let lam = 3.0;
    let ch = [RepChannel::so2(1, lam).unwrap()];
    let q = Overlap::scalar(&ch, 0.6);
    let cfg = EstimatorConfig::new(100, 512, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let d = SingleLetterDraw::sample(&ch, &q, &mut rng).unwrap();
        let m = posterior_mean(&ch, &q, &d, &cfg).unwrap();
        let b = d.y_blocks[0].clone() * (lam.sqrt() * 0.6f64.sqrt());
        let nodes = 10_000;
        let (mut z, mut acc) = (0.0, DMatrix::<f64>::zeros(2, 2));
        let e: Vec<f64> = (0..nodes)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / nodes as f64;
                let g = represent(&ch[0], &GroupElement::Angle(t)).unwrap();
                g.component_mul(&b).sum()
            })
            .collect();
        let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in e.iter().enumerate() {
            let t = 2.0 * std::f64::consts::PI * i as f64 / nodes as f64;
            let w = (v - mx).exp();
            z += w;
            acc += represent(&ch[0], &GroupElement::Angle(t)).unwrap() * w;
        }
        assert!((&m[0] - acc / z).norm() <= 1e-10);
    }
}

#[test]
fn state_map_vanishes_at_zero() {
    let cfg = EstimatorConfig::new(500, 128, 5);
    for ch in catalog(3.0) {
        let chs = [ch];
        let (f, _) = state_map(&chs, &Overlap::zeros(&chs), &cfg).unwrap();
        assert!(f.blocks[0].norm() <= 1e-12);
    }
}

#[test]
fn z2_state_map_matches_gauss_hermite() {
    let ch = [RepChannel::z2(2.0).unwrap()];
    let cfg = EstimatorConfig::new(200_000, 64, 6);
    let (f, se) = state_map(&ch, &Overlap::scalar(&ch, 0.5), &cfg).unwrap();
    let oracle = common::z2_state(2.0, 0.5);
    assert!((f.blocks[0][(0, 0)] - oracle).abs() <= 4.0 * se[0][(0, 0)], "{} vs {oracle}", f.blocks[0][(0, 0)]);
}

#[test]
fn so2_state_map_matches_bessel_form() {
    let lam = 2.5;
    let ch = [RepChannel::so2(1, lam).unwrap()];
    let cfg = EstimatorConfig::new(100_000, 256, 7);
    for q in [0.2, 0.6, 0.9] {
        let (f, se) = state_map(&ch, &Overlap::scalar(&ch, q), &cfg).unwrap();
        let expect = so2_f(lam * q);
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { expect } else { 0.0 };
                assert!((f.blocks[0][(i, j)] - target).abs() <= 3.0 * se[0][(i, j)] + 1e-12, "q={q} ({i},{j})");
            }
        }
    }
}

#[test]
fn state_map_is_a_contraction_and_nishimori_consistent() {
    let cfg = EstimatorConfig::new(20_000, 256, 8);
    for ch in catalog(2.0) {
        let chs = [ch.clone()];
        let sl = SingleLetter::new(&chs, &cfg).unwrap();
        for q in [0.1, 0.5, 1.0] {
            let s = sl.evaluate(&Overlap::scalar(&chs, q)).unwrap();
            let f = &s.second_moment[0];
            assert!(op_norm(f) <= 1.0 + 1e-9, "{ch}");
            assert!((f - f.transpose()).amax() <= 1e-12);
            let gap = s.nishimori_gap[0];
            assert!(gap.value.abs() <= 4.0 * gap.stderr.max(1e-12), "{ch} q={q}: {} ± {}", gap.value, gap.stderr);
        }
    }
}

#[test]
fn moment_ratio_examples() {
    assert_eq!(so2_moment_ratio(1, 0.0), 0.0);
    for x in [0.0, 0.3, 7.0, 45.0] {
        assert_eq!(so2_moment_ratio(0, x), 1.0);
    }
    let oracle = common::bessel_ratio_series(1, 10.0, 200);
    assert!((so2_moment_ratio(1, 10.0) - oracle).abs() <= 1e-12);
    for x in [0.5, 5.0, 19.0, 25.0, 80.0] {
        let vals: Vec<f64> = (0..=8).map(|j| so2_moment_ratio(j, x)).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]), "{x}: {vals:?}");
        assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn mmse_endpoints_and_monotonicity() {
    assert_eq!(so2_mmse(0.0), 2.0);
    assert_eq!(so2_f(0.0), 0.0);
    let grid: Vec<f64> = (0..=20).map(|i| so2_mmse(0.5 * i as f64)).collect();
    assert!(grid.windows(2).all(|w| w[1] <= w[0]), "{grid:?}");
    let h = 1e-4;
    assert!(((so2_f(h) - so2_f(0.0)) / h - 1.0).abs() <= 1e-3);
}

#[test]
fn so2_mmse_matches_generic_path() {
    let lam = 4.0;
    let ch = [RepChannel::so2(1, lam).unwrap()];
    let cfg = EstimatorConfig::new(100_000, 256, 9);
    for gamma in [0.5, 1.0, 2.0, 4.0] {
        let (f, se) = state_map(&ch, &Overlap::scalar(&ch, gamma / lam), &cfg).unwrap();
        let generic = 2.0 - f.blocks[0].trace();
        let stderr = (se[0][(0, 0)].powi(2) + se[0][(1, 1)].powi(2)).sqrt();
        assert!((generic - so2_mmse(gamma)).abs() <= 3.0 * stderr, "γ={gamma}");
    }
}

#[test]
fn so2_posterior_mean_is_rotation_equivariant() {
    // Posterior means depend on g* only through y; a shared rotation of both
    // leaves the mean equivariant.
    let ch = [RepChannel::so2(1, 2.0).unwrap()];
    let q = Overlap::scalar(&ch, 0.5);
    let cfg = EstimatorConfig::new(100, 512, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let d = SingleLetterDraw::sample(&ch, &q, &mut rng).unwrap();
    let h = haar_sample(&ch[0].group, &mut rng);
    let r = represent(&ch[0], &h).unwrap();
    let g2 = ch[0].group.multiply(&h, &d.g_star).unwrap();
    let d2 = SingleLetterDraw::new(&ch, &q, g2, vec![&r * &d.z_blocks[0]]).unwrap();
    let m1 = posterior_mean(&ch, &q, &d, &cfg).unwrap();
    let m2 = posterior_mean(&ch, &q, &d2, &cfg).unwrap();
    assert!((&r * &m1[0] - &m2[0]).norm() <= 1e-8);
}
