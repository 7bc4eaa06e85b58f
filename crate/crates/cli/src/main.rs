use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use vocalis_cli::{exit_code, run, Cli};

const INTERNAL: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(out)) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                for l in out.lines {
                    println!("{l}");
                }
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            let code = exit_code(&e);
            if cli.json {
                eprintln!("{}", json!({ "error": { "code": code, "message": e.to_string() } }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code as u8)
        }
        Err(_) => ExitCode::from(INTERNAL),
    }
}
