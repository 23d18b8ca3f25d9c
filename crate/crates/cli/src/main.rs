use clap::Parser;

fn main() {
    let cli = streampop_cli::Cli::parse();
    if let Err(e) = streampop_cli::run(cli) {
        eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
        std::process::exit(1);
    }
}
