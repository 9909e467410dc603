use std::process::ExitCode;

fn main() -> ExitCode {
    hetmimo::cli::main_with(std::env::args_os())
}
