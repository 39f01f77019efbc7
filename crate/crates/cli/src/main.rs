use std::process::ExitCode;

use clap::Parser;
use locsparse::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.resolve().and_then(|(cmd, cfg)| locsparse::run(cmd, &cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
