use clap::Parser;

fn main() {
    let cli = eikf::cli::Cli::parse();
    std::process::exit(eikf::cli::run(cli));
}
