use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(msfem_eddy::cli::run(std::env::args_os()) as u8)
}
