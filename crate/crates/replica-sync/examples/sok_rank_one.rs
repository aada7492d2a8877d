//! Rank-one branch `q = diag(q, 0, …, 0)` of the SO(3) defining
//! representation below and above λ_c = 3.

use replica_sync::replica::{sok_rank_one_branch, FixedPointOptions};
use replica_sync::single_letter::EstimatorConfig;

fn main() -> replica_sync::Result<()> {
    let cfg = EstimatorConfig::new(2000, 512, 3);
    for lam in [1.5, 3.0, 4.5, 6.0, 9.0] {
        let b = sok_rank_one_branch(3, lam, &FixedPointOptions::default(), &cfg)?;
        println!(
            "lambda={lam:>4} q*={:.4} psi={:.5} slope F'(0)={:.3}±{:.3}",
            b.q_star, b.psi_value, b.slope_at_zero, b.slope_stderr
        );
    }
    Ok(())
}
