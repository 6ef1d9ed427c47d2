use std::process::ExitCode;

fn main() -> ExitCode {
    resloc::cli::main_with_args(std::env::args_os())
}
