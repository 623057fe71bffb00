use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(onebit_uplink::simharness::main_cli(std::env::args()) as u8)
}
