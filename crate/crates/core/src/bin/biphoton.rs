use clap::Parser;

fn main() -> std::process::ExitCode {
    biphoton::cli::run(biphoton::cli::Cli::parse())
}
