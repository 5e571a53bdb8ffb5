fn main() -> std::process::ExitCode {
    lombard_cli::main_with_args(std::env::args_os())
}
