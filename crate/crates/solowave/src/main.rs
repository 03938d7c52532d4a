use std::process::ExitCode;

fn main() -> ExitCode {
    solowave::cli::main(std::env::args_os())
}
