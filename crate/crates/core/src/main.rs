use std::process::ExitCode;

fn main() -> ExitCode {
    msrsim::cli::main_with_args(std::env::args_os())
}
