//! Closed-form SO(2) solution across the threshold λ = 1.

use replica_sync::replica::so2_solve;

fn main() -> replica_sync::Result<()> {
    println!("{:>6} {:>10} {:>10} {:>10}", "lambda", "q*", "mi", "mmse");
    for i in 1..=16 {
        let lam = 0.25 * i as f64;
        let s = so2_solve(lam)?;
        println!("{lam:>6.2} {:>10.6} {:>10.6} {:>10.6}", s.q_star.blocks[0][(0, 0)], s.mi_limit, s.mmse_limits[0]);
    }
    Ok(())
}
