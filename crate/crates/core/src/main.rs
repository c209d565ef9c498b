fn main() -> std::process::ExitCode {
    gcdt::cli::main()
}
