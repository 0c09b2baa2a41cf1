fn main() -> std::process::ExitCode {
    synsurp::cli::main_from_env()
}
