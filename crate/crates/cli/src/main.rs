use clap::Parser;

fn main() {
    let cli = revclean_cli::Cli::parse();
    let level = if cli.global.trace { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = revclean_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
