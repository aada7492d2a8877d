//! Multi-start maximization of the replica potential for a two-channel
//! cyclic-group problem, listing every fixed-point class found.

use replica_sync::group::RepChannel;
use replica_sync::replica::{landscape_scan, FixedPointOptions};
use replica_sync::single_letter::EstimatorConfig;

fn main() -> replica_sync::Result<()> {
    let channels = [RepChannel::cyclic_plane(5, 1, 3.0)?, RepChannel::cyclic_plane(5, 2, 1.5)?];
    let cfg = EstimatorConfig::new(4000, 128, 7);
    let report = landscape_scan(&channels, 6, &FixedPointOptions::default(), &cfg)?;
    for class in &report.classes {
        let s = &class.representative;
        println!("starts={:?} psi={:.5}±{:.1e} converged={}", class.starts, s.psi_value, s.psi_stderr, s.converged);
        for (ch, b) in channels.iter().zip(&s.q_star.blocks) {
            println!("  {ch}: q = [{:.4} {:.4}; {:.4} {:.4}]", b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
        }
    }
    let best = &report.best;
    println!("best: psi={:.5} mi={:.5} mmse={:?}", best.psi_value, best.mi_limit, best.mmse_limits);
    Ok(())
}
