fn main() -> std::process::ExitCode {
    sdeig::cli::run(std::env::args_os())
}
