//! Write a synthetic instance to the binary container and read it back.

use replica_sync::finite::generate_sync;
use replica_sync::group::RepChannel;
use replica_sync::io::{read_instance, write_instance};

fn main() -> replica_sync::Result<()> {
    let inst = generate_sync(50, &[RepChannel::sok(3, 2.0)?, RepChannel::sok(3, 1.0)?], 5)?;
    let path = std::env::temp_dir().join("replica-sync-instance.bin");
    write_instance(&inst, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    let back = read_instance(std::io::BufReader::new(std::fs::File::open(&path)?))?;
    println!("wrote {} bytes to {}", std::fs::metadata(&path)?.len(), path.display());
    println!("n={} pairs={} channels={} identical={}", back.n, back.pairs(), back.channels().len(), back.y == inst.y);
    Ok(())
}
