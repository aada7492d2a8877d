//! Classify catalog representations and print their phase-transition
//! thresholds `λ_c = k/ρ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use replica_sync::group::{classify, RepChannel};

fn main() -> replica_sync::Result<()> {
    let channels = [
        RepChannel::so2(1, 1.0)?,
        RepChannel::sok(3, 1.0)?,
        RepChannel::sok(2, 1.0)?,
        RepChannel::cyclic_plane(5, 2, 1.0)?,
        RepChannel::symmetric(5, 1.0)?,
        RepChannel::z2(1.0)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{:<28} {:>4} {:>8} {:>14} {:>10}", "channel", "dim", "rho", "type", "lambda_c");
    for ch in &channels {
        let c = classify(ch, 50_000, &mut rng)?;
        println!("{:<28} {:>4} {:>8.4} {:>14} {:>10.4}", ch.to_string(), ch.dim(), c.rho, format!("{:?}", c.type_tag), c.threshold);
    }
    Ok(())
}
