use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = semlabel_cli::Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match semlabel_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semlabel: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
