use std::process::ExitCode;

fn main() -> ExitCode {
    landseg::cli::main_with_args(std::env::args_os())
}
