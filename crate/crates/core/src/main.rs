fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GEOMIND_LOG", "warn")).init();
    std::process::exit(geomind::cli::run(std::env::args_os()));
}
