//! Disorder-averaged exact free energy for Z2 at growing N, compared with
//! the replica prediction `sup Ψ`.

use replica_sync::finite::{exact_free_energy, generate_sync};
use replica_sync::group::RepChannel;
use replica_sync::replica::{solve_fixed_point, FixedPointOptions};
use replica_sync::single_letter::{EstimatorConfig, Overlap};

fn main() -> replica_sync::Result<()> {
    let ch = [RepChannel::z2(2.0)?];
    let cfg = EstimatorConfig::new(100_000, 64, 1);
    let sol = solve_fixed_point(&ch, &Overlap::scalar(&ch, 0.5), &FixedPointOptions::default(), &cfg)?;
    println!("replica: sup psi = {:.5}", sol.psi_value);
    let draws = 200;
    for n in [6, 10, 14] {
        let mean: f64 = (0..draws).map(|s| exact_free_energy(&generate_sync(n, &ch, s).unwrap()).unwrap().free_energy).sum::<f64>()
            / draws as f64;
        println!("N={n:>2}: E F_N = {mean:.5}, gap = {:.5}", (mean - sol.psi_value).abs());
    }
    Ok(())
}
