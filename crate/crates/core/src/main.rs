use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ultmax::cli::run(std::env::args_os()) as u8)
}
