fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NEUMANN_PLAP_LOG", "warn")).init();
    std::process::exit(neumann_plap::cli::main_with_args(std::env::args_os()));
}
