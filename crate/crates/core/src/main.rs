use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(camsim::cli::run() as u8)
}
