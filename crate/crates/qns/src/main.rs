use clap::Parser;

fn main() {
    let cli = qns::cli::Cli::parse();
    if let Err(e) = qns::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
