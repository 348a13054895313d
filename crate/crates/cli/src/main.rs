use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(upg_cli::stdio_run())
}
