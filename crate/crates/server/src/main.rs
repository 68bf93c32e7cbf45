use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = chatrank_server::cli::Cli::parse();
    if let Err(e) = chatrank_server::commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
