use std::process::ExitCode;

fn main() -> ExitCode {
    lsmech::cli::main_with_args(std::env::args_os())
}
