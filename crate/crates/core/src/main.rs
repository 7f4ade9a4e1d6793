fn main() -> std::process::ExitCode {
    qspin::cli::main_exit_code()
}
