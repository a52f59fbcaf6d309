use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(srt_cli::run_main(std::env::args()))
}
