use std::process::ExitCode;

use clap::Parser;

use pronk::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            if let Some(dir) = &report.out_dir {
                for f in &report.files {
                    println!("  {}", dir.join(f).display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
