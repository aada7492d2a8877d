fn main() {
    env_logger::init();
    std::process::exit(replica_sync::cli::run(std::env::args_os()));
}
