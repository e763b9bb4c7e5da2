use std::process::ExitCode;

fn main() -> ExitCode {
    smkl::cli::run(std::env::args_os())
}
