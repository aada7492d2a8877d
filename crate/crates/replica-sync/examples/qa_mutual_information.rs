//! Mutual-information and MMSE limits of kernel quadratic assignment over
//! a grid of kernel scales, with the rank-convergence check.

use replica_sync::qa::{qa_scale_sweep, BaseMeasure, KernelSpec};
use replica_sync::replica::FixedPointOptions;
use replica_sync::single_letter::EstimatorConfig;

fn main() -> replica_sync::Result<()> {
    let kernel = KernelSpec::rbf(0.5, BaseMeasure::Uniform);
    let cfg = EstimatorConfig::new(5000, 64, 9);
    // Steps small enough that only a genuine jump in q* trips the kink flag.
    let scales: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
    let rows = qa_scale_sweep(&kernel, &scales, &[1, 2, 3, 4], 128, &FixedPointOptions::default(), &cfg)?;
    for r in &rows {
        let s = &r.solution;
        println!(
            "scale={:<4.2} q_frob={:.4} psi={:.5} mi={:.5} mmse={:.5} cauchy_gap={:.1e} reliable={} kink={}",
            r.scale, s.levels.last().unwrap().q_frobenius, s.psi_infinity, s.mi_limit, s.mmse_limit, s.cauchy_gap, s.extrapolation_reliable, r.possible_kink
        );
    }
    Ok(())
}
