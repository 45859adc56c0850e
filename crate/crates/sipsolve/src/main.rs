fn main() -> std::process::ExitCode {
    sipsolve::cli::main()
}
