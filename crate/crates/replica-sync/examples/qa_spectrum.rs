//! Mercer eigenvalues of a Gaussian kernel on Uniform[-1, 1] with
//! truncation residuals.

use replica_sync::qa::{mercer_truncate, BaseMeasure, KernelSpec};

fn main() -> replica_sync::Result<()> {
    let kernel = KernelSpec::rbf(0.5, BaseMeasure::Uniform);
    let full = mercer_truncate(&kernel, 8, 256)?;
    for l in 1..=full.rank {
        let t = full.truncate(l)?;
        println!("L={l}: mu={:.3e} sup residual={:.3e} tail={:.3e}", t.eigenvalues[l - 1], t.residual, t.tail_sum);
    }
    println!("orthonormality error {:.1e}", full.orthonormality_error());
    Ok(())
}
