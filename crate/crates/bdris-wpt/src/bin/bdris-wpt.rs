//! Binary entry point: delegates to the library CLI and translates errors
//! into the documented exit codes (0 success, 2 config error, 3 solver
//! failure).

use std::process::ExitCode;

fn main() -> ExitCode {
    match bdris_wpt::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(bdris_wpt::cli::exit_code(&err) as u8)
        }
    }
}
