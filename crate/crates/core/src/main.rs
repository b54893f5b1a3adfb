use clap::Parser;

fn main() {
    let cli = regpack::cli::Cli::parse();
    std::process::exit(regpack::cli::main_with(cli));
}
