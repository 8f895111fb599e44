use clap::Parser;

fn main() {
    let cli = headpose_cli::Cli::parse();
    std::process::exit(headpose_cli::run(cli));
}
