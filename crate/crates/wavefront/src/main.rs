use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("WAVEFRONT_LOG")).init();
    wavefront::cli::main_with(std::env::args())
}
