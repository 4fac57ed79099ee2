use clap::Parser;

fn main() {
    let cli = rotbench_cli::Cli::parse();
    std::process::exit(rotbench_cli::run_cli(cli));
}
