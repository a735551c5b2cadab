use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = bermudan_cli::commands::Cli::parse();
    if let Err(err) = bermudan_cli::commands::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(bermudan_cli::exit_code(&err));
    }
}
