fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SUBSPLIT_LOG", "warn")).init();
    std::process::exit(subsplit::cli::run(std::env::args_os()));
}
