use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(glasslab::cli::main_with(glasslab::cli::Cli::parse()));
}
