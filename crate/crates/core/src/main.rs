fn main() -> std::process::ExitCode {
    cobpm::cli::main_with_args(std::env::args_os())
}
