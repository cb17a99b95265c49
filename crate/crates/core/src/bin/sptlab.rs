fn main() -> std::process::ExitCode {
    sptlab::cli::main_with_args(std::env::args_os())
}
