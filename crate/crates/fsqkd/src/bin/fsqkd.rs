fn main() -> std::process::ExitCode {
    fsqkd::cli::main()
}
