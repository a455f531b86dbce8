use std::process::ExitCode;

fn main() -> ExitCode {
    spinesim::cli::main()
}
