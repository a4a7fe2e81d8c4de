use clap::Parser;

fn main() {
    let cli = varigame_cli::Cli::parse();
    if let Err(e) = varigame_cli::install_interrupt_handler().and_then(|_| varigame_cli::run(cli)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
