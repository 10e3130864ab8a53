fn main() -> std::process::ExitCode {
    crnlab::cli::main_with_args(std::env::args_os())
}
