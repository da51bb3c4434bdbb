use clap::Parser;

fn main() -> anyhow::Result<()> {
    let cli = cacheleak::cli::Cli::parse();
    cacheleak::cli::run(&cli)
}
