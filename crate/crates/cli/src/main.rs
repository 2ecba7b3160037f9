fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GRIDEST_LOG")).init();
    std::process::exit(gridest_cli::main_with(std::env::args_os()));
}
