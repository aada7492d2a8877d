//! Drive the command-line front end in-process. Arguments after `--` are
//! passed through, e.g.
//! `cargo run --example cli_run -- threshold --group sok --k 3 --lambda 2`.

fn main() {
    let mut argv: Vec<String> = std::env::args().collect();
    if argv.len() == 1 {
        argv.extend(["so2", "--lambda", "0.5,1.5,3"].map(String::from));
    }
    std::process::exit(replica_sync::cli::run(argv));
}
