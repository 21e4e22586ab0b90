use std::process::ExitCode;

fn main() -> ExitCode {
    relplan::cli::main_from(std::env::args_os())
}
